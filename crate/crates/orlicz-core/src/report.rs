//! Text artifacts of a solve: profile tables and the fixed-header summary.

use std::io::Write;

use crate::error::Result;
use crate::solver::{Outcome, SolverReport};

/// Fixed column header of the per-run summary table.
pub const SUMMARY_COLUMNS: [&str; 8] = [
    "lambda",
    "lambda_star",
    "outcome",
    "I_u1",
    "I_u2",
    "c",
    "res_u1",
    "res_u2",
];

pub fn summary_header() -> String {
    SUMMARY_COLUMNS.join("\t")
}

fn fmt(v: f64) -> String {
    format!("{v:.10e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), fmt)
}

/// One tab-separated summary row, deterministically formatted.
pub fn summary_row(r: &SolverReport) -> String {
    let outcome = match r.outcome {
        Outcome::TwoSolutions => {
            if r.contract_violation.is_some() {
                "contract_violation"
            } else {
                "two_solutions"
            }
        }
        Outcome::LambdaTooSmall => "lambda_too_small",
        Outcome::TrivialMinimizer => "trivial_minimizer",
        Outcome::GeometryNotVerified => "geometry_not_verified",
    };
    [
        fmt(r.lambda),
        fmt(r.lambda_star),
        outcome.to_string(),
        fmt(r.i_u1),
        fmt_opt(r.i_u2),
        fmt_opt(r.c),
        fmt(r.residual_norms.0),
        fmt_opt(r.residual_norms.1),
    ]
    .join("\t")
}

/// Tab-separated nodal profile: coordinate columns, then the value.
pub fn write_profile_table(
    w: &mut impl Write,
    report: &SolverReport,
    values: &[f64],
    nodes: &[[f64; 2]],
) -> Result<()> {
    if report.mesh.dim == 1 {
        writeln!(w, "x\tvalue")?;
        for (p, v) in nodes.iter().zip(values) {
            writeln!(w, "{}\t{}", fmt(p[0]), fmt(*v))?;
        }
    } else {
        writeln!(w, "x\ty\tvalue")?;
        for (p, v) in nodes.iter().zip(values) {
            writeln!(w, "{}\t{}\t{}", fmt(p[0]), fmt(p[1]), fmt(*v))?;
        }
    }
    Ok(())
}
