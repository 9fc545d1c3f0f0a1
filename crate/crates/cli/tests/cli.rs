use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dcsparse::data::{read_csv, read_truth_csv, read_vector_csv, write_csv};
use dcsparse::{LossKind, Problem};
use nalgebra::{DMatrix, DVector};
use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dcsparse"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_env(args: &[&str], key: &str, value: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dcsparse"))
        .args(args)
        .env(key, value)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn curve_rows(out: &Output) -> Vec<(f64, f64, f64)> {
    String::from_utf8(out.stdout.clone())
        .unwrap()
        .lines()
        .skip(1)
        .map(|line| {
            let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
            (v[0], v[1], v[2])
        })
        .collect()
}

fn synth(dir: &TempDir, name: &str, extra: &[&str]) -> (PathBuf, PathBuf) {
    let data = dir.path().join(format!("{name}.csv"));
    let truth = dir.path().join(format!("{name}.truth.csv"));
    let mut args = vec!["synth", "--out", path_str(&data)];
    args.extend_from_slice(extra);
    let out = run(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    (data, truth)
}

/// `√n·Q` for a seeded QR factor, so that `(1/n)XᵀX = I`.
fn orthonormal_fixture(n: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |i, j| (((i * 31 + j * 17 + 7) % 23) as f64 - 11.0) + 0.01 * (i * j) as f64);
    g.qr().q() * (n as f64).sqrt()
}

#[test]
fn penalty_curve_l1_is_lambda_abs() {
    let out = run(&["penalty-curve", "--penalty", "l1", "--lambda", "0.7", "--min", "-2", "--max", "2", "--points", "41"]);
    assert_eq!(code(&out), 0);
    let rows = curve_rows(&out);
    assert_eq!(rows.len(), 41);
    assert_eq!(rows[0].0, -2.0);
    assert_eq!(rows[40].0, 2.0);
    for (t, v, _) in rows {
        assert!((v - 0.7 * t.abs()).abs() < 1e-15);
    }
}

#[test]
fn penalty_curve_mcp_plateau() {
    let out = run(&["penalty-curve", "--penalty", "mcp", "--lambda", "1", "--gamma", "2"]);
    assert_eq!(code(&out), 0);
    let rows = curve_rows(&out);
    let last = rows.last().unwrap();
    assert_eq!(last.0, 5.0);
    assert!((last.1 - 1.0).abs() < 1e-15);
    assert_eq!(last.2, 0.0);
}

#[test]
fn penalty_curve_scad_derivative_continuous() {
    let out = run(&[
        "penalty-curve", "--penalty", "scad", "--lambda", "1", "--gamma", "3.7", "--min", "0", "--max", "6",
        "--points", "6001",
    ]);
    assert_eq!(code(&out), 0);
    let rows = curve_rows(&out);
    let step = 6.0 / 6000.0;
    for w in rows.windows(2).skip(1) {
        // slopes of p' are at most 1/(γ−1)
        assert!((w[1].2 - w[0].2).abs() <= step / 2.7 + 1e-12, "jump near t = {}", w[0].0);
    }
}

#[test]
fn penalty_curve_rejects_bad_grid() {
    assert_eq!(code(&run(&["penalty-curve", "--lambda", "1", "--min", "2", "--max", "1"])), 1);
    assert_eq!(code(&run(&["penalty-curve", "--lambda", "1", "--points", "1"])), 1);
    assert_eq!(code(&run(&["penalty-curve", "--penalty", "scad", "--lambda", "1", "--gamma", "0.5"])), 1);
    assert_eq!(code(&run(&["penalty-curve", "--penalty", "mcp", "--lambda", "1", "--a", "2"])), 1);
    assert_eq!(code(&run(&["penalty-curve", "--penalty", "nope", "--lambda", "1"])), 1);
}

#[test]
fn synth_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let args = ["--n", "30", "--p", "12", "--s", "3", "--seed", "5", "--rho", "0.2"];
    let (a, at) = synth(&dir, "a", &args);
    let (b, bt) = synth(&dir, "b", &args);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(std::fs::read(&at).unwrap(), std::fs::read(&bt).unwrap());
    let header = std::fs::read_to_string(&at).unwrap();
    assert!(header.starts_with("index,beta_star,in_support,sigma,seed\n"));
}

#[test]
fn synth_noiseless_truth_fits_exactly() {
    let dir = TempDir::new().unwrap();
    let (data, truth) = synth(&dir, "clean", &["--n", "25", "--p", "8", "--s", "2", "--sigma", "0", "--seed", "3"]);
    let problem = read_csv(&data, LossKind::SquaredError).unwrap();
    let record = read_truth_csv(&truth).unwrap();
    let residual = problem.response() - problem.design() * &record.beta_star;
    assert!(residual.amax() < 1e-12);
    assert_eq!(record.support.len(), 2);
}

#[test]
fn synth_rejects_s_above_p() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("bad.csv");
    let out = run(&["synth", "--n", "10", "--p", "3", "--s", "4", "--out", path_str(&data)]);
    assert_eq!(code(&out), 1);
    assert!(!data.exists());
}

#[test]
fn fit_l1_zero_lambda_is_ols() {
    let dir = TempDir::new().unwrap();
    let (data, _) = synth(&dir, "tall", &["--n", "40", "--p", "5", "--s", "2", "--seed", "9"]);
    let beta_path = dir.path().join("beta.csv");
    let out = run(&["fit", path_str(&data), "--penalty", "l1", "--lambda", "0", "--out", path_str(&beta_path)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let beta = read_vector_csv(&beta_path).unwrap();
    let problem = read_csv(&data, LossKind::SquaredError).unwrap();
    // OLS through the normal equations
    let x = problem.design();
    let gram = x.tr_mul(x);
    let ols = gram.cholesky().unwrap().solve(&x.tr_mul(problem.response()));
    assert!((beta - ols).amax() < 1e-8);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("converged=true"));
    assert!(stderr.contains("max_violation="));
    assert!(stderr.contains("objective_trace="));
}

#[test]
fn fit_mcp_matches_firm_threshold() {
    let dir = TempDir::new().unwrap();
    let n = 8;
    let x = orthonormal_fixture(n);
    let z = DVector::from_vec(vec![3.0, 1.5, -1.5, 0.4, -3.2, 2.5, -0.9, 1.2]);
    let y = &x * &z;
    let data = dir.path().join("ortho.csv");
    write_csv(&data, &Problem::new(x, y, LossKind::SquaredError).unwrap()).unwrap();
    let out = run(&["fit", path_str(&data), "--penalty", "mcp", "--gamma", "2", "--lambda", "1"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let beta: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    for (b, zj) in beta.iter().zip(z.iter()) {
        let firm = if zj.abs() > 2.0 {
            *zj
        } else {
            zj.signum() * 2.0 * (zj.abs() - 1.0).max(0.0)
        };
        assert!((b - firm).abs() < 1e-8, "z = {zj}: got {b}, expected {firm}");
    }
}

#[test]
fn fit_rejects_malformed_csv() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("broken.csv");
    std::fs::write(&data, "y,x1\n1,2\n3,oops\n").unwrap();
    let out = run(&["fit", path_str(&data), "--lambda", "0.1"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
    assert_eq!(code(&run(&["fit", "/definitely/missing.csv", "--lambda", "0.1"])), 1);
}

#[test]
fn fit_iteration_cap_exits_two() {
    let dir = TempDir::new().unwrap();
    let (data, _) = synth(&dir, "cap", &["--n", "60", "--p", "80", "--s", "4", "--rho", "0.5", "--seed", "2"]);
    let out = run(&[
        "fit", path_str(&data), "--penalty", "scad", "--lambda", "0.2", "--max-inner-iters", "1",
        "--max-outer-iters", "1",
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("converged=false"));
}

fn metric(report: &str, key: &str) -> String {
    report
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key},")))
        .unwrap_or_else(|| panic!("missing {key} in {report}"))
        .to_owned()
}

#[test]
fn check_pipeline() {
    let dir = TempDir::new().unwrap();
    let (data, truth) = synth(
        &dir,
        "pipe",
        &["--n", "100", "--p", "150", "--s", "3", "--signal-min", "3", "--signal-max", "5", "--seed", "11"],
    );
    let beta = dir.path().join("beta.csv");
    let penalty = ["--penalty", "scad", "--lambda", "0.5", "--gamma", "3.7"];
    let mut fit_args = vec!["fit", path_str(&data), "--out", path_str(&beta)];
    fit_args.extend_from_slice(&penalty);
    assert_eq!(code(&run(&fit_args)), 0);

    let residuals = dir.path().join("residuals.csv");
    let mut check_args = vec![
        "check", path_str(&data), "--fit", path_str(&beta), "--truth", path_str(&truth), "--bounds",
        "--re-samples", "300", "--residuals", path_str(&residuals),
    ];
    check_args.extend_from_slice(&penalty);
    let out = run(&check_args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = String::from_utf8(out.stdout).unwrap();
    assert_eq!(metric(&report, "is_d_stationary"), "true");
    assert_eq!(metric(&report, "estimation_satisfied"), "true");
    assert!(metric(&report, "re_gamma").parse::<f64>().unwrap() > 0.0);
    let per_coord = std::fs::read_to_string(&residuals).unwrap();
    assert_eq!(per_coord.lines().count(), 151);

    // the origin with a tiny λ violates the first-order conditions
    let zero = dir.path().join("zero.csv");
    let mut rows = String::from("index,beta\n");
    for j in 1..=150 {
        rows.push_str(&format!("{j},0\n"));
    }
    std::fs::write(&zero, rows).unwrap();
    let out = run(&["check", path_str(&data), "--fit", path_str(&zero), "--penalty", "l1", "--lambda", "0.001"]);
    assert_eq!(code(&out), 0);
    assert_eq!(metric(&String::from_utf8(out.stdout).unwrap(), "is_d_stationary"), "false");

    let mut no_truth = vec!["check", path_str(&data), "--fit", path_str(&beta), "--bounds"];
    no_truth.extend_from_slice(&penalty);
    assert_eq!(code(&run(&no_truth)), 1);

    let short = dir.path().join("short.csv");
    std::fs::write(&short, "index,beta\n1,0\n2,0\n").unwrap();
    let mut mismatch = vec!["check", path_str(&data), "--fit", path_str(&short)];
    mismatch.extend_from_slice(&penalty);
    assert_eq!(code(&run(&mismatch)), 1);
}

const CONFIG: &str = "\
n = 80
p = 120
s = 3
signal_min = 3
signal_max = 5
rho = 0.2
penalty = scad
gamma = 3.7
lambda = auto
replicates = 10
seed = 99
re_samples = 100
";

#[test]
fn experiment_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("suite.cfg");
    std::fs::write(&config, CONFIG).unwrap();
    let mut outputs = Vec::new();
    for (name, threads) in [("a", "1"), ("b", "3")] {
        let rows = dir.path().join(format!("{name}.csv"));
        let out = run_env(&["experiment", path_str(&config), "--out", path_str(&rows)], "DC_SPARSE_THREADS", threads);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        let summary = std::fs::read_to_string(dir.path().join(format!("{name}.summary.csv"))).unwrap();
        outputs.push((std::fs::read(&rows).unwrap(), summary));
    }
    assert_eq!(outputs[0], outputs[1]);
    let (rows, summary) = &outputs[0];
    assert_eq!(String::from_utf8_lossy(rows).lines().count(), 11);
    assert_eq!(metric(summary, "replicates"), "10");
    assert_eq!(metric(summary, "failures"), "0");
}

#[test]
fn experiment_rejects_bad_configs() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("zero.cfg");
    std::fs::write(&config, CONFIG.replace("replicates = 10", "replicates = 0")).unwrap();
    assert_eq!(code(&run(&["experiment", path_str(&config)])), 1);
    std::fs::write(&config, "n = 10\nwhat = 1\n").unwrap();
    assert_eq!(code(&run(&["experiment", path_str(&config)])), 1);
    assert_eq!(code(&run(&["experiment", "/no/such/config"])), 1);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&run(&["fit"])), 1);
    assert_eq!(code(&run(&["frobnicate"])), 1);
    assert_eq!(code(&run(&["--help"])), 0);
}
