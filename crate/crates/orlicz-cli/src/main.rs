mod config;
mod expr;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::exit;

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use orlicz_core::{
    check_hypotheses, lambda_star, luxemburg_norm, luxemburg_norm_tilde, modular, solve_two,
    summary_header, summary_row, write_profile_table, DiscreteFunction, Outcome, Point,
    SolveOptions, SolverReport,
};

use config::{build_experiment, parse_config, CliError, Experiment, Result};
use expr::parse_expr;

#[derive(Parser)]
#[command(
    name = "orlicz",
    about = "Hypothesis checks and two-solution solves for quasilinear Phi-Laplacian problems"
)]
struct Cli {
    /// worker thread cap for lambda rows (0 = rayon default)
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// solver tolerance override
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// sampling seed override
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Dry-run hypothesis verification for the configured profile
    Check { config: PathBuf },
    /// Run the two-stage solve over the configured lambda grid
    Run { config: PathBuf },
    /// Evaluate modulars and Luxemburg norms of a closed-form expression
    Norms { config: PathBuf, expr: String },
}

fn main() {
    let cli = Cli::parse();
    let code = match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    };
    exit(code);
}

fn dispatch(cli: &Cli) -> Result<i32> {
    match &cli.cmd {
        Cmd::Check { config } => cmd_check(&load(config, cli)?),
        Cmd::Run { config } => cmd_run(&load(config, cli)?),
        Cmd::Norms { config, expr } => cmd_norms(&load(config, cli)?, expr),
    }
}

fn load(path: &Path, cli: &Cli) -> Result<Experiment> {
    let text = fs::read_to_string(path)?;
    let mut cfg = parse_config(&text)?;
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if let Some(t) = cli.tol {
        cfg.tol = t;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    build_experiment(cfg)
}

/// Spatial sample points handed to the x-dependent hypothesis scans.
fn sample_points(exp: &Experiment) -> Vec<Point> {
    let (a, b) = exp.config.extent;
    (1..8)
        .map(|k| {
            let x = a + (b - a) * k as f64 / 8.0;
            [x, if exp.config.dim == 2 { x } else { 0.0 }]
        })
        .collect()
}

fn cmd_check(exp: &Experiment) -> Result<i32> {
    let hyp = check_hypotheses(
        &exp.f,
        &exp.phi,
        exp.config.profile,
        exp.config.dim,
        &sample_points(exp),
    )?;
    println!("{}", serde_json::to_string_pretty(&hyp).unwrap());
    match hyp.failure_reason() {
        None => {
            println!("profile holds");
            Ok(0)
        }
        Some(reason) => {
            println!("profile fails: {reason}");
            Ok(1)
        }
    }
}

fn per_row_seed(base: u64, row: usize) -> u64 {
    base.wrapping_add((row as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn cmd_run(exp: &Experiment) -> Result<i32> {
    let cfg = &exp.config;
    fs::create_dir_all(&cfg.output_dir)?;
    let hyp = check_hypotheses(&exp.f, &exp.phi, cfg.profile, cfg.dim, &sample_points(exp))?;
    fs::write(
        cfg.output_dir.join("hypothesis.json"),
        serde_json::to_string_pretty(&hyp).unwrap(),
    )?;

    let lambdas: Vec<f64> = if cfg.lambdas_relative {
        let ls = lambda_star(&exp.phi, &exp.f, exp.mesh.clone(), hyp.f2.t1, 6)?;
        cfg.lambdas.iter().map(|m| m * ls.lambda_star).collect()
    } else {
        cfg.lambdas.clone()
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| CliError::Expr(e.to_string()))?;
    let rows: Vec<(f64, std::result::Result<SolverReport, orlicz_core::Error>)> =
        pool.install(|| {
            lambdas
                .par_iter()
                .enumerate()
                .map(|(i, &lam)| {
                    let opts = SolveOptions {
                        tol: cfg.tol,
                        seed: per_row_seed(cfg.seed, i),
                        ..SolveOptions::default()
                    };
                    (
                        lam,
                        solve_two(&exp.phi, &exp.f, exp.mesh.clone(), lam, cfg.profile, &opts),
                    )
                })
                .collect()
        });

    let mut summary = String::from(&summary_header());
    summary.push('\n');
    let mut all_ok = true;
    for (i, (lam, res)) in rows.iter().enumerate() {
        match res {
            Ok(rep) => {
                fs::write(
                    cfg.output_dir.join(format!("report_{i:02}.json")),
                    serde_json::to_string_pretty(rep).unwrap(),
                )?;
                let mut t = Vec::new();
                write_profile_table(&mut t, rep, &rep.u1, &exp.mesh.nodes)?;
                fs::write(cfg.output_dir.join(format!("u1_{i:02}.tsv")), t)?;
                if let Some(u2) = &rep.u2 {
                    let mut t = Vec::new();
                    write_profile_table(&mut t, rep, u2, &exp.mesh.nodes)?;
                    fs::write(cfg.output_dir.join(format!("u2_{i:02}.tsv")), t)?;
                }
                summary.push_str(&summary_row(rep));
                summary.push('\n');
                let row_ok = matches!(rep.outcome, Outcome::LambdaTooSmall)
                    || (matches!(rep.outcome, Outcome::TwoSolutions)
                        && rep.contract_violation.is_none());
                if let Some(v) = &rep.contract_violation {
                    eprintln!("lambda = {lam}: contract violation: {v}");
                }
                all_ok &= row_ok;
            }
            Err(e) => {
                fs::write(
                    cfg.output_dir.join(format!("error_{i:02}.txt")),
                    format!("lambda = {lam}\n{e}\n"),
                )?;
                summary.push_str(&format!("{lam:.10e}\t-\terror\t-\t-\t-\t-\t-\n"));
                eprintln!("lambda = {lam}: {e}");
                all_ok = false;
            }
        }
    }
    fs::write(cfg.output_dir.join("summary.tsv"), &summary)?;
    print!("{summary}");
    Ok(if all_ok { 0 } else { 1 })
}

fn cmd_norms(exp: &Experiment, expr_src: &str) -> Result<i32> {
    let ex = parse_expr(expr_src)?;
    let u = DiscreteFunction::from_fn(exp.mesh.clone(), |p| ex.eval(p[0], p[1]));
    println!("quantity\tvalue");
    println!("modular_phi\t{:.10e}", modular(&exp.phi, &u, false)?);
    println!("modular_phi_grad\t{:.10e}", modular(&exp.phi, &u, true)?);
    println!(
        "norm_phi\t{:.10e}",
        luxemburg_norm(&exp.phi, &u, false)?.value
    );
    println!(
        "norm_phi_tilde\t{:.10e}",
        luxemburg_norm_tilde(&exp.phi, &u, false)?.value
    );
    println!(
        "norm_w01\t{:.10e}",
        luxemburg_norm(&exp.phi, &u, true)?.value
    );
    Ok(0)
}
