//! Black-box tests of the `orlicz` binary: exit codes, determinism, and the
//! text surfaces of all three verbs.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_orlicz"))
}

fn scratch(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("orlicz-cli-test-{tag}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_cfg(dir: &PathBuf, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

fn reference_cfg(out: &PathBuf) -> String {
    format!(
        "phi.name = power\n\
         phi.p = 4.0\n\
         f.name = pq\n\
         f.p = 3.0\n\
         f.q = 2.0\n\
         mesh.dim = 1\n\
         mesh.extent = 0.0 1.0\n\
         mesh.resolution = 32\n\
         lambdas = 0.5 2.0\n\
         lambdas.relative = true\n\
         profile = T1\n\
         seed = 42\n\
         output_dir = {}\n",
        out.display()
    )
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().unwrap();
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

#[test]
fn run_is_deterministic() {
    let dir = scratch("det");
    let out_a = dir.join("a");
    let out_b = dir.join("b");
    let cfg_a = write_cfg(&dir, "a.cfg", &reference_cfg(&out_a));
    let cfg_b = write_cfg(&dir, "b.cfg", &reference_cfg(&out_b));
    run_ok(bin().arg("run").arg(&cfg_a));
    run_ok(bin().arg("run").arg(&cfg_b));
    let sa = fs::read(out_a.join("summary.tsv")).unwrap();
    let sb = fs::read(out_b.join("summary.tsv")).unwrap();
    assert_eq!(sa, sb, "summary.tsv differs between identical runs");
    let text = String::from_utf8(sa).unwrap();
    assert!(text.contains("lambda_too_small"));
    assert!(text.contains("two_solutions"));
    // one report and one profile table per completed row
    assert!(out_a.join("report_00.json").exists());
    assert!(out_a.join("u1_01.tsv").exists());
    assert!(out_a.join("u2_01.tsv").exists());
    assert!(out_a.join("hypothesis.json").exists());
}

#[test]
fn empty_lambda_grid_is_a_config_error() {
    let dir = scratch("nolambda");
    let out = dir.join("out");
    let body = reference_cfg(&out).replace("lambdas = 0.5 2.0\n", "lambdas =\n");
    let cfg = write_cfg(&dir, "bad.cfg", &body);
    let res = bin().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(res.status.code(), Some(2));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("lambda"), "stderr was: {err}");
}

#[test]
fn unknown_phi_cites_the_catalog() {
    let dir = scratch("badphi");
    let out = dir.join("out");
    let body = reference_cfg(&out).replace("phi.name = power", "phi.name = cubicish");
    let cfg = write_cfg(&dir, "bad.cfg", &body);
    let res = bin().arg("check").arg(&cfg).output().unwrap();
    assert_eq!(res.status.code(), Some(2));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("cubicish") && err.contains("power, powersum"),
        "stderr was: {err}");
}

#[test]
fn check_reports_profile_status_via_exit_code() {
    let dir = scratch("check");
    let out = dir.join("out");
    let good = write_cfg(&dir, "good.cfg", &reference_cfg(&out));
    let res = run_ok(bin().arg("check").arg(&good));
    let text = String::from_utf8_lossy(&res.stdout);
    assert!(text.contains("profile holds"), "stdout was: {text}");

    // exp does not satisfy Delta2, so the reflexive profile T1 must fail
    let body = reference_cfg(&out)
        .replace("phi.name = power\nphi.p = 4.0\n", "phi.name = exp\n");
    let bad = write_cfg(&dir, "bad.cfg", &body);
    let res = bin().arg("check").arg(&bad).output().unwrap();
    assert_eq!(res.status.code(), Some(1));
    let text = String::from_utf8_lossy(&res.stdout);
    assert!(text.contains("profile fails"), "stdout was: {text}");
}

#[test]
fn norms_evaluates_closed_form_expressions() {
    let dir = scratch("norms");
    let out = dir.join("out");
    let body = reference_cfg(&out)
        .replace("phi.p = 4.0", "phi.p = 2.0")
        .replace("mesh.resolution = 32", "mesh.resolution = 128");
    let cfg = write_cfg(&dir, "norms.cfg", &body);
    let res = run_ok(bin().args(["norms"]).arg(&cfg).arg("x*(1-x)"));
    let text = String::from_utf8_lossy(&res.stdout);
    let mut modular_phi = None;
    for line in text.lines() {
        if let Some(v) = line.strip_prefix("modular_phi\t") {
            modular_phi = Some(v.parse::<f64>().unwrap());
        }
    }
    // int (x(1-x))^2 / 2 over (0,1) is 1/60
    let m = modular_phi.expect("modular_phi line missing");
    assert!((m - 1.0 / 60.0).abs() < 1e-4, "modular_phi = {m}");
    for key in ["modular_phi_grad", "norm_phi", "norm_phi_tilde", "norm_w01"] {
        assert!(text.contains(key), "missing {key} in: {text}");
    }
}

#[test]
fn tol_and_seed_flags_override_the_config() {
    let dir = scratch("flags");
    let out = dir.join("out");
    let cfg = write_cfg(&dir, "flags.cfg", &reference_cfg(&out));
    run_ok(bin().args(["--tol", "1e-5", "--seed", "7", "run"]).arg(&cfg));
    let text = fs::read_to_string(out.join("summary.tsv")).unwrap();
    assert!(text.contains("two_solutions"), "summary was: {text}");
}
