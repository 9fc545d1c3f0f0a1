//! Cone and restricted-eigenvalue machinery, error-bound checks and the
//! replicate experiment runner.
//!
//! `re_gamma` always denotes the restricted-eigenvalue constant; the penalty
//! shape parameter lives in [`PenaltySpec::shape`].

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;

use crate::data::{generate, replicate_seed, rng_from_seed, SyntheticSpec, SyntheticTruth};
use crate::error::{Error, Result};
use crate::losses::{sigmoid, LossKind, Problem};
use crate::oracle::{oracle_fit_truth, DEFAULT_LINF_CONSTANT};
use crate::penalties::PenaltySpec;
use crate::solver::{dca_fit, SolverConfig};
use crate::stationarity::{audit_assumption8, objective};

/// Environment variable that caps the replicate thread pool.
pub const THREADS_ENV: &str = "DC_SPARSE_THREADS";

/// Tolerance for declaring a fit equal to the oracle.
pub const ORACLE_EQUALITY_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConeRegime {
    /// Ratio `5/(2c)`.
    Linear,
    /// Ratio `(4+c)/c`.
    Glm,
}

/// `{ν : ‖ν_{S^c}‖₁ ≤ ratio·‖ν_S‖₁}`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConeSpec {
    pub support: Vec<usize>,
    pub c: f64,
    pub ratio: f64,
    pub regime: ConeRegime,
}

impl ConeSpec {
    pub fn linear(support: &[usize], c: f64) -> Result<Self> {
        Self::build(support, c, ConeRegime::Linear)
    }

    pub fn glm(support: &[usize], c: f64) -> Result<Self> {
        Self::build(support, c, ConeRegime::Glm)
    }

    fn build(support: &[usize], c: f64, regime: ConeRegime) -> Result<Self> {
        if !(c > 0.0 && c <= 1.0) {
            return Err(Error::ParameterDomain(format!("cone constant c must lie in (0, 1], got {c}")));
        }
        let mut support = support.to_vec();
        support.sort_unstable();
        support.dedup();
        let ratio = match regime {
            ConeRegime::Linear => 5.0 / (2.0 * c),
            ConeRegime::Glm => (4.0 + c) / c,
        };
        Ok(ConeSpec {
            support,
            c,
            ratio,
            regime,
        })
    }

    fn split_l1(&self, v: &DVector<f64>) -> (f64, f64) {
        let mut on = 0.0;
        let mut total = 0.0;
        for (j, x) in v.iter().enumerate() {
            total += x.abs();
            if self.support.binary_search(&j).is_ok() {
                on += x.abs();
            }
        }
        (on, total - on)
    }
}

pub fn cone_membership(v: &DVector<f64>, cone: &ConeSpec) -> bool {
    let (on, off) = cone.split_l1(v);
    off <= cone.ratio * on
}

/// Draws one unit-norm direction of the cone into `out`.
fn sample_cone_direction<R: Rng>(rng: &mut R, cone: &ConeSpec, complement: &[usize], out: &mut [f64]) {
    out.iter_mut().for_each(|x| *x = 0.0);
    let mut on_l1 = 0.0;
    let mut norm2 = 0.0;
    for &j in &cone.support {
        let z: f64 = rng.sample(StandardNormal);
        out[j] = z;
        norm2 += z * z;
    }
    let norm = norm2.sqrt();
    for &j in &cone.support {
        out[j] /= norm;
        on_l1 += out[j].abs();
    }
    if !complement.is_empty() {
        let u: f64 = rng.random();
        let budget = u * cone.ratio * on_l1;
        let weights: Vec<f64> = complement.iter().map(|_| rng.sample::<f64, _>(Exp1)).collect();
        let sum: f64 = weights.iter().sum();
        for (&j, w) in complement.iter().zip(&weights) {
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            out[j] = sign * budget * w / sum;
        }
    }
    let total: f64 = out.iter().map(|x| x * x).sum::<f64>().sqrt();
    out.iter_mut().for_each(|x| *x /= total);
}

fn complement_of(support: &[usize], p: usize) -> Vec<usize> {
    (0..p).filter(|j| support.binary_search(j).is_err()).collect()
}

fn re_on_design(design: &DMatrix<f64>, cone: &ConeSpec, samples: usize, seed: u64) -> Result<f64> {
    if samples == 0 {
        return Err(Error::ParameterDomain("need at least one cone sample".into()));
    }
    let (n, p) = design.shape();
    if let Some(&bad) = cone.support.iter().find(|&&j| j >= p) {
        return Err(Error::Shape(format!("support index {bad} out of range for p = {p}")));
    }
    if cone.support.is_empty() {
        // the cone collapses to {0}
        return Ok(f64::INFINITY);
    }
    const BATCH: usize = 256;
    let complement = complement_of(&cone.support, p);
    let mut rng = rng_from_seed(seed);
    let mut best = f64::INFINITY;
    let mut remaining = samples;
    let mut directions = DMatrix::<f64>::zeros(p, BATCH);
    while remaining > 0 {
        let batch = remaining.min(BATCH);
        for k in 0..batch {
            sample_cone_direction(&mut rng, cone, &complement, directions.column_mut(k).as_mut_slice());
        }
        let images = design * directions.columns(0, batch);
        for col in images.column_iter() {
            best = best.min(col.norm_squared() / n as f64);
        }
        remaining -= batch;
    }
    Ok(best)
}

/// Monte Carlo `min (1/n)‖Xv‖²` over sampled unit `v` in the cone.
///
/// The true restricted eigenvalue is at most this value. Deterministic in
/// `seed`.
pub fn estimate_re_constant(problem: &Problem, cone: &ConeSpec, samples: usize, seed: u64) -> Result<f64> {
    re_on_design(problem.design(), cone, samples, seed)
}

/// Rows of `X` scaled by `√ψ''(x_iᵀβ)`; equal to `X` for squared error.
pub fn hessian_weighted_design(problem: &Problem, beta: &DVector<f64>) -> Result<DMatrix<f64>> {
    problem.check_len(beta, "beta")?;
    let eta = problem.design() * beta;
    let mut design = problem.design().clone();
    if problem.loss() == LossKind::Logistic {
        for (i, e) in eta.iter().enumerate() {
            let mu = sigmoid(*e);
            let w = (mu * (1.0 - mu)).sqrt();
            design.row_mut(i).scale_mut(w);
        }
    }
    Ok(design)
}

/// Restricted curvature of the loss at `beta`, estimated as in
/// [`estimate_re_constant`] on the Hessian-weighted design.
pub fn estimate_loss_re_constant(
    problem: &Problem,
    beta: &DVector<f64>,
    cone: &ConeSpec,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    re_on_design(&hessian_weighted_design(problem, beta)?, cone, samples, seed)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundReport {
    pub observed: f64,
    pub bound: f64,
    pub satisfied: bool,
    /// `observed / bound`.
    pub slack_ratio: f64,
}

impl BoundReport {
    pub fn new(observed: f64, bound: f64) -> Self {
        let slack_ratio = if bound > 0.0 {
            observed / bound
        } else if observed == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        BoundReport {
            observed,
            bound,
            satisfied: observed <= bound,
            slack_ratio,
        }
    }
}

fn positive(name: &str, value: f64) -> Result<()> {
    if value > 0.0 {
        Ok(())
    } else {
        Err(Error::ParameterDomain(format!("{name} must be positive, got {value}")))
    }
}

/// `‖β̂ − β*‖₂` against `(5/(2γ))·λ·√s`.
pub fn check_estimation_bound(
    beta_hat: &DVector<f64>,
    truth: &SyntheticTruth,
    lambda: f64,
    re_gamma: f64,
) -> Result<BoundReport> {
    positive("re_gamma", re_gamma)?;
    let observed = (beta_hat - &truth.beta_star).norm();
    let s = truth.support.len() as f64;
    Ok(BoundReport::new(observed, 5.0 / (2.0 * re_gamma) * lambda * s.sqrt()))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PredictionBoundReport {
    /// Bound `(5λ/2)²·|S|/γ`.
    pub proof_form: BoundReport,
    /// Bound `(5λ/2)²·√|S|/γ`.
    pub stated_form: BoundReport,
}

/// `‖X(β* − β̂)‖²/n` against both forms of the prediction bound.
pub fn check_prediction_bound(
    problem: &Problem,
    beta_hat: &DVector<f64>,
    truth: &SyntheticTruth,
    lambda: f64,
    re_gamma: f64,
) -> Result<PredictionBoundReport> {
    positive("re_gamma", re_gamma)?;
    problem.check_len(beta_hat, "beta_hat")?;
    let diff = &truth.beta_star - beta_hat;
    let observed = (problem.design() * diff).norm_squared() / problem.n() as f64;
    let s = truth.support.len() as f64;
    let base = (2.5 * lambda).powi(2) / re_gamma;
    Ok(PredictionBoundReport {
        proof_form: BoundReport::new(observed, base * s),
        stated_form: BoundReport::new(observed, base * s.sqrt()),
    })
}

/// `2σ√(τ·ln p / n)`.
pub fn select_lambda(sigma: f64, tau: f64, n: usize, p: usize) -> Result<f64> {
    if !(tau >= 2.0) {
        return Err(Error::ParameterDomain(format!("tau must be at least 2, got {tau}")));
    }
    if n == 0 || p < 2 {
        return Err(Error::ParameterDomain(format!("need n ≥ 1 and p ≥ 2, got n={n} p={p}")));
    }
    if !(sigma >= 0.0) {
        return Err(Error::ParameterDomain(format!("sigma must be nonnegative, got {sigma}")));
    }
    Ok(2.0 * sigma * (tau * (p as f64).ln() / n as f64).sqrt())
}

/// `‖β̂ − β*‖₂` against `(4+c)λ/(2(γ−η⁻))·√|S|`.
pub fn check_glm_bound(
    beta_hat: &DVector<f64>,
    truth: &SyntheticTruth,
    lambda: f64,
    re_gamma: f64,
    eta_minus: f64,
    c: f64,
) -> Result<BoundReport> {
    positive("c", c)?;
    if !(re_gamma > eta_minus) {
        return Err(Error::Regime(format!(
            "curvature margin γ − η⁻ = {re_gamma} − {eta_minus} is not positive"
        )));
    }
    let observed = (beta_hat - &truth.beta_star).norm();
    let s = truth.support.len() as f64;
    let bound = (4.0 + c) * lambda / (2.0 * (re_gamma - eta_minus)) * s.sqrt();
    Ok(BoundReport::new(observed, bound))
}

/// Smallest `r₀ ≥ 0` with `h_λ'(r₀) ≥ (1−c)λ`, or `+∞` if never reached.
fn h_slope_crossing(spec: &PenaltySpec, target: f64) -> f64 {
    if target <= 0.0 {
        return 0.0;
    }
    let mut hi = spec.lambda.max(1.0);
    while spec.h_derivative(hi) < target {
        hi *= 2.0;
        if hi > 1e15 {
            return f64::INFINITY;
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if spec.h_derivative(mid) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// `r = cλ√|S| ∧ r₀` with `h_λ'(r₀) = (1−c)λ`.
pub fn existence_ball(truth: &SyntheticTruth, lambda: f64, c: f64, spec: &PenaltySpec) -> Result<f64> {
    if !(c > 0.0 && c <= 1.0) {
        return Err(Error::ParameterDomain(format!("c must lie in (0, 1], got {c}")));
    }
    let spec = spec.with_lambda(lambda)?;
    let r0 = h_slope_crossing(&spec, (1.0 - c) * lambda);
    let s = truth.support.len() as f64;
    Ok((c * lambda * s.sqrt()).min(r0))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RscAudit {
    pub checked: usize,
    pub violations: usize,
    /// Smallest observed `f(β₂) − [f(β₁) + ∇f(β₁)ᵀΔ + ((γ̂−η⁻)/2)‖Δ‖²] + 1e−8`.
    pub worst_margin: f64,
}

/// Samples pairs `β₂ = β₁ + Δ` with `Δ` in the cone and `β₁` near `center`,
/// and counts violations of the restricted strong convexity inequality for
/// `F = L + Σp`.
#[allow(clippy::too_many_arguments)]
pub fn rsc_composite_check(
    problem: &Problem,
    spec: &PenaltySpec,
    cone: &ConeSpec,
    re_gamma: f64,
    center: &DVector<f64>,
    radius: f64,
    samples: usize,
    seed: u64,
) -> Result<RscAudit> {
    problem.check_len(center, "center")?;
    let p = problem.p();
    let eta_minus = spec.dc_profile().eta_minus;
    let curvature = 0.5 * (re_gamma - eta_minus);
    let complement = complement_of(&cone.support, p);
    let mut rng = rng_from_seed(seed);
    let mut direction = vec![0.0; p];
    let mut audit = RscAudit {
        checked: 0,
        violations: 0,
        worst_margin: f64::INFINITY,
    };
    if cone.support.is_empty() {
        return Ok(audit);
    }
    for _ in 0..samples {
        let beta1 = DVector::from_fn(p, |j, _| {
            center[j] + radius * rng.sample::<f64, _>(StandardNormal) / (p as f64).sqrt()
        });
        sample_cone_direction(&mut rng, cone, &complement, &mut direction);
        let step: f64 = radius * rng.random::<f64>();
        let delta = DVector::from_iterator(p, direction.iter().map(|d| step * d));
        let beta2 = &beta1 + &delta;
        let eval = problem.loss_eval(&beta1)?;
        let penalty_grad = beta1.map(|b| spec.derivative(b));
        let grad = eval.gradient + penalty_grad;
        let f1 = objective(problem, spec, &beta1)?;
        let f2 = objective(problem, spec, &beta2)?;
        let lower = f1 + grad.dot(&delta) + curvature * delta.norm_squared();
        let margin = f2 - lower + 1e-8;
        audit.checked += 1;
        audit.worst_margin = audit.worst_margin.min(margin);
        if margin < 0.0 {
            audit.violations += 1;
        }
    }
    Ok(audit)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GlmAudit {
    /// `‖∇L(β*)‖_∞`.
    pub gradient_at_truth: f64,
    /// `λ/8`.
    pub gradient_threshold: f64,
    pub gradient_condition: bool,
    /// `max_{j∉S} |h_λ'(β̂_j)|`.
    pub off_support_slope: f64,
    /// `(1−c)λ`.
    pub slope_threshold: f64,
    pub slope_condition: bool,
}

impl GlmAudit {
    pub fn holds(&self) -> bool {
        self.gradient_condition && self.slope_condition
    }
}

pub fn audit_glm(
    problem: &Problem,
    spec: &PenaltySpec,
    beta_hat: &DVector<f64>,
    truth: &SyntheticTruth,
    c: f64,
) -> Result<GlmAudit> {
    problem.check_len(beta_hat, "beta_hat")?;
    let gradient_at_truth = problem.loss_eval(&truth.beta_star)?.gradient.amax();
    let off_support_slope = beta_hat
        .iter()
        .enumerate()
        .filter(|(j, _)| truth.support.binary_search(j).is_err())
        .map(|(_, b)| spec.h_derivative(*b).abs())
        .fold(0.0, f64::max);
    let gradient_threshold = spec.lambda / 8.0;
    let slope_threshold = (1.0 - c) * spec.lambda;
    Ok(GlmAudit {
        gradient_at_truth,
        gradient_threshold,
        gradient_condition: gradient_at_truth <= gradient_threshold,
        off_support_slope,
        slope_threshold,
        slope_condition: off_support_slope <= slope_threshold,
    })
}

/// One experiment: a generator, an estimator and replicate bookkeeping.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentPlan {
    pub generator: SyntheticSpec,
    pub penalty: PenaltySpec,
    pub solver: SolverConfig,
    pub replicates: usize,
    pub seed: u64,
    /// Cone samples for `γ̂`; zero skips every bound that needs it.
    pub re_samples: usize,
    /// Constant `c` shared by the cone, the off-support audit and the GLM bound.
    pub cone_c: f64,
    pub linf_constant: f64,
}

impl ExperimentPlan {
    pub fn new(
        generator: SyntheticSpec,
        penalty: PenaltySpec,
        solver: SolverConfig,
        replicates: usize,
        seed: u64,
    ) -> Self {
        ExperimentPlan {
            generator,
            penalty,
            solver,
            replicates,
            seed,
            re_samples: 2000,
            cone_c: 0.5,
            linf_constant: DEFAULT_LINF_CONSTANT,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::ParameterDomain("replicates must be at least 1".into()));
        }
        self.generator.validate()?;
        self.penalty.validate()?;
        self.solver.validate()?;
        if !(self.cone_c > 0.0 && self.cone_c < 1.0) {
            return Err(Error::ParameterDomain(format!("cone c must lie in (0, 1), got {}", self.cone_c)));
        }
        positive("linf constant", self.linf_constant)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReplicateMetrics {
    pub converged: bool,
    pub outer_iters: usize,
    pub max_violation: f64,
    pub is_d_stationary: bool,
    pub support_size: usize,
    pub support_match: bool,
    pub l2_error: f64,
    pub re_gamma: Option<f64>,
    pub estimation_bound: Option<f64>,
    pub estimation_ok: Option<bool>,
    pub prediction_error: Option<f64>,
    pub prediction_bound: Option<f64>,
    pub prediction_bound_stated: Option<f64>,
    pub oracle_distance: Option<f64>,
    pub oracle_equal: Option<bool>,
    pub oracle_linf_error: Option<f64>,
    pub oracle_linf_bound: Option<f64>,
    pub assumption8: Option<bool>,
    pub cone_lemma: Option<bool>,
    pub glm_audit: Option<bool>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub seed: u64,
    pub outcome: std::result::Result<ReplicateMetrics, String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSummary {
    pub replicates: usize,
    pub failures: usize,
    pub converged: usize,
    pub support_recovery_rate: f64,
    pub oracle_equality_rate: f64,
    pub recovery_and_oracle_rate: f64,
    pub estimation_bound_rate: f64,
    pub prediction_bound_rate: f64,
    pub prediction_bound_stated_rate: f64,
    pub oracle_linf_bound_rate: f64,
    pub assumption8_passes: usize,
    pub cone_lemma_violations: usize,
    pub glm_audit_passes: usize,
    /// Estimation-bound frequency among replicates passing the GLM audit.
    pub glm_bound_rate_audited: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentReport {
    pub plan: ExperimentPlan,
    pub records: Vec<ReplicateRecord>,
    pub summary: ExperimentSummary,
}

fn run_replicate(plan: &ExperimentPlan, seed: u64) -> Result<ReplicateMetrics> {
    let generator = SyntheticSpec {
        seed,
        ..plan.generator.clone()
    };
    let (problem, truth) = generate(&generator)?;
    let fit = dca_fit(&problem, &plan.penalty, &plan.solver)?;
    let beta_hat = &fit.beta_hat;
    let lambda = plan.penalty.lambda;
    let c = plan.cone_c;
    let support_hat: Vec<usize> = (0..problem.p()).filter(|&j| beta_hat[j] != 0.0).collect();
    let support_match = support_hat == truth.support;
    let re_seed = seed ^ 0x5851_F42D_4C95_7F2D;

    let mut m = ReplicateMetrics {
        converged: fit.converged,
        outer_iters: fit.outer_iters,
        max_violation: fit.stationarity.max_violation,
        is_d_stationary: fit.stationarity.is_d_stationary,
        support_size: support_hat.len(),
        support_match,
        l2_error: (beta_hat - &truth.beta_star).norm(),
        re_gamma: None,
        estimation_bound: None,
        estimation_ok: None,
        prediction_error: None,
        prediction_bound: None,
        prediction_bound_stated: None,
        oracle_distance: None,
        oracle_equal: None,
        oracle_linf_error: None,
        oracle_linf_bound: None,
        assumption8: None,
        cone_lemma: None,
        glm_audit: None,
    };

    match problem.loss() {
        LossKind::SquaredError => {
            let cone = ConeSpec::linear(&truth.support, c)?;
            if plan.re_samples > 0 {
                let re_gamma = estimate_re_constant(&problem, &cone, plan.re_samples, re_seed)?;
                m.re_gamma = Some(re_gamma);
                if re_gamma > 0.0 && re_gamma.is_finite() {
                    let est = check_estimation_bound(beta_hat, &truth, lambda, re_gamma)?;
                    let pred = check_prediction_bound(&problem, beta_hat, &truth, lambda, re_gamma)?;
                    m.estimation_bound = Some(est.bound);
                    m.estimation_ok = Some(est.satisfied);
                    m.prediction_error = Some(pred.proof_form.observed);
                    m.prediction_bound = Some(pred.proof_form.bound);
                    m.prediction_bound_stated = Some(pred.stated_form.bound);
                }
            }
            let oracle = oracle_fit_truth(&problem, &truth)?;
            let distance = (beta_hat - &oracle.beta_oracle).amax();
            m.oracle_distance = Some(distance);
            m.oracle_equal = Some(support_match && distance <= ORACLE_EQUALITY_TOL);
            m.oracle_linf_error = oracle.linf_error_vs_truth;
            m.oracle_linf_bound = Some(oracle.linf_bound(truth.sigma, problem.n(), plan.linf_constant));
            let a8 = audit_assumption8(&problem, beta_hat, &truth.support, Some(&truth.beta_star), lambda, c)?;
            m.assumption8 = Some(a8.holds);
            m.cone_lemma = Some(cone_membership(&(beta_hat - &oracle.beta_oracle), &cone));
        }
        LossKind::Logistic => {
            let cone = ConeSpec::glm(&truth.support, c)?;
            m.glm_audit = Some(audit_glm(&problem, &plan.penalty, beta_hat, &truth, c)?.holds());
            if plan.re_samples > 0 {
                let re_gamma =
                    estimate_loss_re_constant(&problem, &truth.beta_star, &cone, plan.re_samples, re_seed)?;
                m.re_gamma = Some(re_gamma);
                let eta_minus = plan.penalty.dc_profile().eta_minus;
                match check_glm_bound(beta_hat, &truth, lambda, re_gamma, eta_minus, c) {
                    Ok(report) => {
                        m.estimation_bound = Some(report.bound);
                        m.estimation_ok = Some(report.satisfied);
                    }
                    Err(Error::Regime(_)) => m.estimation_ok = Some(false),
                    Err(e) => return Err(e),
                }
            }
        }
    }
    Ok(m)
}

fn thread_cap_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|&k: &usize| k > 0)
}

/// Runs every replicate; parallelism is capped by `DC_SPARSE_THREADS`.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<ExperimentReport> {
    run_experiment_with_threads(plan, thread_cap_from_env())
}

/// Runs every replicate on at most `threads` workers (the global pool when
/// `None`). Records are ordered by replicate index.
pub fn run_experiment_with_threads(plan: &ExperimentPlan, threads: Option<usize>) -> Result<ExperimentReport> {
    plan.validate()?;
    let work = || {
        (0..plan.replicates)
            .into_par_iter()
            .map(|replicate| {
                let seed = replicate_seed(plan.seed, replicate);
                ReplicateRecord {
                    replicate,
                    seed,
                    outcome: run_replicate(plan, seed).map_err(|e| e.to_string()),
                }
            })
            .collect::<Vec<_>>()
    };
    let records = match threads {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| Error::ParameterDomain(format!("cannot build thread pool: {e}")))?
            .install(work),
        None => work(),
    };
    let summary = summarize(&records);
    Ok(ExperimentReport {
        plan: plan.clone(),
        records,
        summary,
    })
}

/// Support-recovery suite with default plan settings.
pub fn support_recovery_experiment(
    generator: &SyntheticSpec,
    penalty: &PenaltySpec,
    config: &SolverConfig,
    replicates: usize,
    seed: u64,
) -> Result<ExperimentReport> {
    run_experiment(&ExperimentPlan::new(
        generator.clone(),
        *penalty,
        config.clone(),
        replicates,
        seed,
    ))
}

fn summarize(records: &[ReplicateRecord]) -> ExperimentSummary {
    let total = records.len();
    let ok: Vec<&ReplicateMetrics> = records.iter().filter_map(|r| r.outcome.as_ref().ok()).collect();
    let rate = |pred: &dyn Fn(&ReplicateMetrics) -> bool| {
        ok.iter().filter(|m| pred(m)).count() as f64 / total.max(1) as f64
    };
    let audited: Vec<&&ReplicateMetrics> = ok.iter().filter(|m| m.glm_audit == Some(true)).collect();
    let glm_bound_rate_audited = if audited.is_empty() {
        f64::NAN
    } else {
        audited.iter().filter(|m| m.estimation_ok == Some(true)).count() as f64 / audited.len() as f64
    };
    ExperimentSummary {
        replicates: total,
        failures: total - ok.len(),
        converged: ok.iter().filter(|m| m.converged).count(),
        support_recovery_rate: rate(&|m| m.support_match),
        oracle_equality_rate: rate(&|m| m.oracle_distance.is_some_and(|d| d <= ORACLE_EQUALITY_TOL)),
        recovery_and_oracle_rate: rate(&|m| m.oracle_equal == Some(true)),
        estimation_bound_rate: rate(&|m| m.estimation_ok == Some(true)),
        prediction_bound_rate: rate(&|m| matches!((m.prediction_error, m.prediction_bound), (Some(e), Some(b)) if e <= b)),
        prediction_bound_stated_rate: rate(
            &|m| matches!((m.prediction_error, m.prediction_bound_stated), (Some(e), Some(b)) if e <= b),
        ),
        oracle_linf_bound_rate: rate(&|m| matches!((m.oracle_linf_error, m.oracle_linf_bound), (Some(e), Some(b)) if e <= b)),
        assumption8_passes: ok.iter().filter(|m| m.assumption8 == Some(true)).count(),
        cone_lemma_violations: ok
            .iter()
            .filter(|m| m.assumption8 == Some(true) && m.cone_lemma == Some(false))
            .count(),
        glm_audit_passes: audited.len(),
        glm_bound_rate_audited,
    }
}

fn opt_f64(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_owned(), |x| x.to_string())
}

fn opt_bool(v: Option<bool>) -> String {
    v.map_or_else(|| "NA".to_owned(), |x| u8::from(x).to_string())
}

const REPLICATE_HEADER: &str = "replicate,seed,status,converged,outer_iters,max_violation,\
is_d_stationary,support_size,support_match,l2_error,re_gamma,estimation_bound,estimation_ok,\
prediction_error,prediction_bound,prediction_bound_stated,oracle_distance,oracle_equal,\
oracle_linf_error,oracle_linf_bound,assumption8,cone_lemma,glm_audit,message";

impl ExperimentReport {
    /// One row per replicate in index order; failed replicates carry the
    /// error message and `NA` metrics.
    pub fn write_replicates_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{REPLICATE_HEADER}")?;
        for r in &self.records {
            match &r.outcome {
                Ok(m) => writeln!(
                    out,
                    "{},{},ok,{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},",
                    r.replicate,
                    r.seed,
                    u8::from(m.converged),
                    m.outer_iters,
                    m.max_violation,
                    u8::from(m.is_d_stationary),
                    m.support_size,
                    u8::from(m.support_match),
                    m.l2_error,
                    opt_f64(m.re_gamma),
                    opt_f64(m.estimation_bound),
                    opt_bool(m.estimation_ok),
                    opt_f64(m.prediction_error),
                    opt_f64(m.prediction_bound),
                    opt_f64(m.prediction_bound_stated),
                    opt_f64(m.oracle_distance),
                    opt_bool(m.oracle_equal),
                    opt_f64(m.oracle_linf_error),
                    opt_f64(m.oracle_linf_bound),
                    opt_bool(m.assumption8),
                    opt_bool(m.cone_lemma),
                    opt_bool(m.glm_audit),
                )?,
                Err(message) => {
                    let cleaned = message.replace([',', '\n', '\r', '"'], " ");
                    write!(out, "{},{},failed", r.replicate, r.seed)?;
                    for _ in 0..20 {
                        write!(out, ",NA")?;
                    }
                    writeln!(out, ",{cleaned}")?;
                }
            }
        }
        out.flush()
    }

    /// `metric,value` rows.
    pub fn write_summary_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let s = &self.summary;
        writeln!(out, "metric,value")?;
        let rows: [(&str, String); 14] = [
            ("replicates", s.replicates.to_string()),
            ("failures", s.failures.to_string()),
            ("converged", s.converged.to_string()),
            ("support_recovery_rate", s.support_recovery_rate.to_string()),
            ("oracle_equality_rate", s.oracle_equality_rate.to_string()),
            ("recovery_and_oracle_rate", s.recovery_and_oracle_rate.to_string()),
            ("estimation_bound_rate", s.estimation_bound_rate.to_string()),
            ("prediction_bound_rate", s.prediction_bound_rate.to_string()),
            ("prediction_bound_stated_rate", s.prediction_bound_stated_rate.to_string()),
            ("oracle_linf_bound_rate", s.oracle_linf_bound_rate.to_string()),
            ("assumption8_passes", s.assumption8_passes.to_string()),
            ("cone_lemma_violations", s.cone_lemma_violations.to_string()),
            ("glm_audit_passes", s.glm_audit_passes.to_string()),
            ("glm_bound_rate_audited", s.glm_bound_rate_audited.to_string()),
        ];
        for (k, v) in rows {
            writeln!(out, "{k},{v}")?;
        }
        out.flush()
    }
}
