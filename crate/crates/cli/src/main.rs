//! `dcsparse` command-line front end.
//!
//! Exit codes: 0 success, 1 input error, 2 iteration cap reached without
//! convergence.

mod config;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dcsparse::data::{
    generate, read_csv, read_truth_csv, read_vector_csv, write_csv, write_truth_csv, NoiseKind,
    SyntheticSpec, SyntheticTruth,
};
use dcsparse::stationarity::{check_d_stationary_default, objective};
use dcsparse::theory::{
    check_estimation_bound, check_glm_bound, check_prediction_bound, estimate_loss_re_constant,
    run_experiment, ConeSpec, ExperimentReport,
};
use dcsparse::{dca_fit, Init, LossKind, PenaltyFamily, PenaltySpec, SolverConfig};

use config::{shape_for, ExperimentConfig};

#[derive(Parser)]
#[command(name = "dcsparse", version, about = "Sparse regression with difference-of-convex penalties")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a penalized model to a CSV dataset and write the coefficients.
    Fit(FitArgs),
    /// Generate a synthetic dataset and its truth sidecar.
    Synth(SynthArgs),
    /// Certify stationarity of a coefficient file and optionally check error bounds.
    Check(CheckArgs),
    /// Run a replicate experiment described by a key=value config file.
    Experiment(ExperimentArgs),
    /// Tabulate a penalty and its derivative over a grid.
    PenaltyCurve(CurveArgs),
}

#[derive(Args)]
struct PenaltyArgs {
    /// l1, scad, mcp, capped-l1, transformed-l1 or log.
    #[arg(long, default_value = "l1")]
    penalty: PenaltyFamily,
    #[arg(long, allow_negative_numbers = true)]
    lambda: f64,
    /// Shape for scad, mcp and capped-l1.
    #[arg(long)]
    gamma: Option<f64>,
    /// Shape for transformed-l1.
    #[arg(long)]
    a: Option<f64>,
    /// Shape for log.
    #[arg(long)]
    offset: Option<f64>,
    /// Smoothing width for capped-l1, in units of lambda.
    #[arg(long)]
    smoothing: Option<f64>,
}

impl PenaltyArgs {
    fn build(&self) -> Result<PenaltySpec, Failure> {
        let shape = shape_for(self.penalty, self.gamma, self.a, self.offset).map_err(Failure::Input)?;
        let spec = PenaltySpec::new(self.penalty, self.lambda, shape)?;
        Ok(match self.smoothing {
            Some(mu) => spec.with_smoothing(mu)?,
            None => spec,
        })
    }
}

#[derive(Args)]
struct SolverArgs {
    /// zero or lasso.
    #[arg(long, default_value = "lasso")]
    init: String,
    #[arg(long)]
    outer_tol: Option<f64>,
    #[arg(long)]
    inner_tol: Option<f64>,
    #[arg(long)]
    max_outer_iters: Option<usize>,
    #[arg(long)]
    max_inner_iters: Option<usize>,
}

impl SolverArgs {
    fn build(&self) -> Result<SolverConfig, Failure> {
        let d = SolverConfig::default();
        let init = match self.init.as_str() {
            "zero" => Init::Zero,
            "lasso" => Init::LassoWarmStart,
            other => return Err(Failure::Input(format!("unknown init `{other}` (expected zero or lasso)"))),
        };
        let config = SolverConfig {
            outer_tol: self.outer_tol.unwrap_or(d.outer_tol),
            inner_tol: self.inner_tol.unwrap_or(d.inner_tol),
            max_outer_iters: self.max_outer_iters.unwrap_or(d.max_outer_iters),
            max_inner_iters: self.max_inner_iters.unwrap_or(d.max_inner_iters),
            init,
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args)]
struct FitArgs {
    /// Dataset CSV with header `y,x1,...,xp`.
    data: PathBuf,
    #[arg(long, default_value = "squared")]
    loss: LossKind,
    #[command(flatten)]
    penalty: PenaltyArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Coefficient CSV (`index,beta`); stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Objective trace CSV (`iteration,objective`).
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    p: usize,
    #[arg(long)]
    s: usize,
    #[arg(long)]
    signal_min: Option<f64>,
    #[arg(long)]
    signal_max: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    /// Column correlation rho in [0, 1).
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long, default_value = "gaussian")]
    noise: NoiseKind,
    #[arg(long, default_value = "squared")]
    loss: LossKind,
    #[arg(long)]
    standardize: Option<bool>,
    #[arg(long)]
    design_scale: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Dataset CSV to write.
    #[arg(long)]
    out: PathBuf,
    /// Truth sidecar CSV; defaults to `<out stem>.truth.csv`.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    /// Dataset CSV.
    data: PathBuf,
    /// Coefficient CSV as written by `fit`.
    #[arg(long)]
    fit: PathBuf,
    #[arg(long, default_value = "squared")]
    loss: LossKind,
    #[command(flatten)]
    penalty: PenaltyArgs,
    /// Truth sidecar written by `synth`.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Also check the estimation and prediction bounds (needs --truth).
    #[arg(long)]
    bounds: bool,
    /// Restricted-eigenvalue constant; estimated by cone sampling when omitted.
    #[arg(long)]
    re_gamma: Option<f64>,
    #[arg(long, default_value_t = 2000)]
    re_samples: usize,
    /// Cone constant c.
    #[arg(long, default_value_t = 0.5)]
    cone_c: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report CSV (`metric,value`); stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-coordinate CSV (`coordinate,residual,certificate`).
    #[arg(long)]
    residuals: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Config file of `key = value` lines.
    config: PathBuf,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Per-replicate CSV; overrides `out` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Summary CSV; defaults to `<out stem>.summary.csv`.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct CurveArgs {
    #[command(flatten)]
    penalty: PenaltyArgs,
    #[arg(long, allow_negative_numbers = true, default_value_t = -5.0)]
    min: f64,
    #[arg(long, allow_negative_numbers = true, default_value_t = 5.0)]
    max: f64,
    #[arg(long, default_value_t = 401)]
    points: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
enum Failure {
    Input(String),
    NotConverged(String),
}

impl From<dcsparse::Error> for Failure {
    fn from(e: dcsparse::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Input(format!("i/o error: {e}"))
    }
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| Failure::Input(format!("cannot write {}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// `data.csv` becomes `data.<tag>.csv`.
fn sidecar(path: &Path, tag: &str) -> PathBuf {
    path.with_extension(format!("{tag}.csv"))
}

fn cmd_fit(args: &FitArgs) -> Result<(), Failure> {
    let spec = args.penalty.build()?;
    let config = args.solver.build()?;
    let problem = read_csv(&args.data, args.loss)?;
    let fit = dca_fit(&problem, &spec, &config)?;

    let mut out = open_out(args.out.as_deref())?;
    writeln!(out, "index,beta")?;
    for (i, b) in fit.beta_hat.iter().enumerate() {
        writeln!(out, "{},{b}", i + 1)?;
    }
    out.flush()?;
    if let Some(path) = &args.trace {
        let mut t = open_out(Some(path))?;
        writeln!(t, "iteration,objective")?;
        for (k, v) in fit.objective_trace.iter().enumerate() {
            writeln!(t, "{k},{v}")?;
        }
        t.flush()?;
    }

    let trace: Vec<String> = fit.objective_trace.iter().map(f64::to_string).collect();
    eprintln!("converged={}", fit.converged);
    eprintln!("outer_iters={}", fit.outer_iters);
    eprintln!("inner_iters={}", fit.inner_iters_total);
    eprintln!("objective={}", fit.objective_trace.last().copied().unwrap_or(f64::NAN));
    eprintln!("objective_trace={}", trace.join(";"));
    eprintln!("max_violation={}", fit.stationarity.max_violation);
    eprintln!("is_d_stationary={}", fit.stationarity.is_d_stationary);
    if fit.converged {
        Ok(())
    } else {
        Err(Failure::NotConverged(format!(
            "stopped after {} outer iterations without meeting the tolerance",
            fit.outer_iters
        )))
    }
}

fn cmd_synth(args: &SynthArgs) -> Result<(), Failure> {
    let base = match args.loss {
        LossKind::SquaredError => SyntheticSpec::linear(args.n, args.p, args.s),
        LossKind::Logistic => SyntheticSpec::logistic(args.n, args.p, args.s),
    };
    let spec = SyntheticSpec {
        signal_min: args.signal_min.unwrap_or(base.signal_min),
        signal_max: args.signal_max.unwrap_or(base.signal_max),
        sigma: args.sigma.unwrap_or(base.sigma),
        design_correlation: args.rho.unwrap_or(base.design_correlation),
        noise: args.noise,
        standardize: args.standardize.unwrap_or(base.standardize),
        design_scale: args.design_scale.unwrap_or(base.design_scale),
        seed: args.seed,
        ..base
    };
    let (problem, truth) = generate(&spec)?;
    write_csv(&args.out, &problem)?;
    let truth_path = args.truth.clone().unwrap_or_else(|| sidecar(&args.out, "truth"));
    write_truth_csv(&truth_path, &truth)?;
    Ok(())
}

fn cmd_check(args: &CheckArgs) -> Result<(), Failure> {
    let spec = args.penalty.build()?;
    let problem = read_csv(&args.data, args.loss)?;
    let beta = read_vector_csv(&args.fit)?;
    if beta.len() != problem.p() {
        return Err(Failure::Input(format!(
            "coefficient file has {} entries but the dataset has {} predictors",
            beta.len(),
            problem.p()
        )));
    }
    if args.bounds && args.truth.is_none() {
        return Err(Failure::Input("--bounds requires --truth".into()));
    }
    let truth = match &args.truth {
        Some(path) => {
            let record = read_truth_csv(path)?;
            if record.beta_star.len() != problem.p() {
                return Err(Failure::Input(format!(
                    "truth file has {} entries but the dataset has {} predictors",
                    record.beta_star.len(),
                    problem.p()
                )));
            }
            Some(SyntheticTruth {
                beta_star: record.beta_star,
                support: record.support,
                sigma: record.sigma,
                spec: SyntheticSpec {
                    seed: record.seed,
                    ..SyntheticSpec::linear(problem.n(), problem.p(), 0)
                },
            })
        }
        None => None,
    };

    let report = check_d_stationary_default(&problem, &spec, &beta)?;
    let mut rows: Vec<(&str, String)> = vec![
        ("objective", objective(&problem, &spec, &beta)?.to_string()),
        ("is_d_stationary", report.is_d_stationary.to_string()),
        ("max_violation", report.max_violation.to_string()),
        ("tolerance", report.tolerance.to_string()),
        ("strict_dual_feasible", report.strict_dual_feasible.to_string()),
    ];
    if let Some(truth) = truth.as_ref().filter(|_| args.bounds) {
        let lambda = spec.lambda;
        let cone = match args.loss {
            LossKind::SquaredError => ConeSpec::linear(&truth.support, args.cone_c)?,
            LossKind::Logistic => ConeSpec::glm(&truth.support, args.cone_c)?,
        };
        let re_gamma = match args.re_gamma {
            Some(g) => g,
            None => estimate_loss_re_constant(&problem, &truth.beta_star, &cone, args.re_samples, args.seed)?,
        };
        rows.push(("re_gamma", re_gamma.to_string()));
        match args.loss {
            LossKind::SquaredError => {
                let est = check_estimation_bound(&beta, truth, lambda, re_gamma)?;
                let pred = check_prediction_bound(&problem, &beta, truth, lambda, re_gamma)?;
                rows.push(("estimation_error", est.observed.to_string()));
                rows.push(("estimation_bound", est.bound.to_string()));
                rows.push(("estimation_satisfied", est.satisfied.to_string()));
                rows.push(("prediction_error", pred.proof_form.observed.to_string()));
                rows.push(("prediction_bound", pred.proof_form.bound.to_string()));
                rows.push(("prediction_satisfied", pred.proof_form.satisfied.to_string()));
                rows.push(("prediction_bound_stated", pred.stated_form.bound.to_string()));
                rows.push(("prediction_stated_satisfied", pred.stated_form.satisfied.to_string()));
            }
            LossKind::Logistic => {
                let eta_minus = spec.dc_profile().eta_minus;
                let glm = check_glm_bound(&beta, truth, lambda, re_gamma, eta_minus, args.cone_c)?;
                rows.push(("estimation_error", glm.observed.to_string()));
                rows.push(("estimation_bound", glm.bound.to_string()));
                rows.push(("estimation_satisfied", glm.satisfied.to_string()));
            }
        }
    }

    let mut out = open_out(args.out.as_deref())?;
    writeln!(out, "metric,value")?;
    for (k, v) in rows {
        writeln!(out, "{k},{v}")?;
    }
    out.flush()?;
    if let Some(path) = &args.residuals {
        report.write_csv(open_out(Some(path))?)?;
    }
    Ok(())
}

fn write_report(report: &ExperimentReport, rows: Option<&Path>, summary: Option<&Path>) -> Result<(), Failure> {
    report.write_replicates_csv(open_out(rows)?)?;
    match summary {
        Some(path) => report.write_summary_csv(open_out(Some(path))?)?,
        None => {
            let mut err = io::stderr().lock();
            report.write_summary_csv(&mut err)?;
        }
    }
    Ok(())
}

fn cmd_experiment(args: &ExperimentArgs) -> Result<(), Failure> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| Failure::Input(format!("cannot read {}: {e}", args.config.display())))?;
    let mut config = ExperimentConfig::parse(&text).map_err(Failure::Input)?;
    if let Some(r) = args.replicates {
        config.plan.replicates = r;
    }
    if let Some(s) = args.seed {
        config.plan.seed = s;
    }
    let out = args.out.clone().or(config.out.clone());
    let summary = args
        .summary
        .clone()
        .or(config.summary.clone())
        .or_else(|| out.as_deref().map(|p| sidecar(p, "summary")));
    let report = run_experiment(&config.plan)?;
    write_report(&report, out.as_deref(), summary.as_deref())
}

fn cmd_penalty_curve(args: &CurveArgs) -> Result<(), Failure> {
    let spec = args.penalty.build()?;
    if !(args.min < args.max) || !args.min.is_finite() || !args.max.is_finite() {
        return Err(Failure::Input(format!("grid needs min < max, got [{}, {}]", args.min, args.max)));
    }
    if args.points < 2 {
        return Err(Failure::Input("grid needs at least 2 points".into()));
    }
    let step = (args.max - args.min) / (args.points - 1) as f64;
    let grid: Vec<f64> = (0..args.points)
        .map(|k| if k + 1 == args.points { args.max } else { args.min + k as f64 * step })
        .collect();
    let mut out = open_out(args.out.as_deref())?;
    writeln!(out, "t,value,derivative")?;
    for point in spec.curve(&grid) {
        writeln!(out, "{},{},{}", point.t, point.value, point.derivative)?;
    }
    out.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Check(a) => cmd_check(a),
        Command::Experiment(a) => cmd_experiment(a),
        Command::PenaltyCurve(a) => cmd_penalty_curve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::NotConverged(msg)) => {
            eprintln!("warning: {msg}");
            ExitCode::from(2)
        }
    }
}
