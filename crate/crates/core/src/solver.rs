//! DCA / local linear approximation for `L_n(β) + λ‖β‖₁ − h_λ(β)`.
//!
//! Each outer step linearizes `h_λ` at the current iterate, which turns the
//! problem into a weighted LASSO with weights `w_i = λ − h'_λ(|β_{k,i}|)`.
//! The weighted LASSO is solved by cyclic coordinate descent for squared
//! loss and by proximal gradient with backtracking for the logistic loss.
//! Both inner solvers are monotone on the weighted objective, so warm
//! starting at `β_k` keeps the outer objective trace nonincreasing.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::losses::{LossKind, Problem};
use crate::penalties::PenaltySpec;
use crate::stationarity::{self, StationarityReport};

#[derive(Clone, Debug, PartialEq, Default)]
pub enum Init {
    Zero,
    /// Start from the LASSO solution at the same λ.
    #[default]
    LassoWarmStart,
    Custom(DVector<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    /// Outer stopping threshold `δ`.
    pub outer_tol: f64,
    pub max_outer_iters: usize,
    /// Bound on the weighted-LASSO KKT residual.
    pub inner_tol: f64,
    pub max_inner_iters: usize,
    pub init: Init,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            outer_tol: 1e-8,
            max_outer_iters: 100,
            inner_tol: 1e-10,
            max_inner_iters: 100_000,
            init: Init::LassoWarmStart,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.outer_tol > 0.0 && self.inner_tol > 0.0) {
            return Err(Error::ParameterDomain(format!(
                "tolerances must be positive (outer {}, inner {})",
                self.outer_tol, self.inner_tol
            )));
        }
        if self.max_outer_iters == 0 || self.max_inner_iters == 0 {
            return Err(Error::ParameterDomain("iteration caps must be at least 1".into()));
        }
        Ok(())
    }
}

/// Result of one weighted-LASSO solve.
#[derive(Clone, Debug, PartialEq)]
pub struct InnerSolution {
    pub beta: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub kkt_residual: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub beta_hat: DVector<f64>,
    /// `F(β_k)` for the starting point and every outer iterate.
    pub objective_trace: Vec<f64>,
    pub outer_iters: usize,
    pub inner_iters_total: usize,
    pub converged: bool,
    /// LLA weights `λ − h'_λ(|β_{k,i}|)` used in the last inner solve.
    pub weights_final: DVector<f64>,
    /// Certificate at `beta_hat` with the default tolerance.
    pub stationarity: StationarityReport,
}

fn soft_threshold(z: f64, w: f64) -> f64 {
    if z > w {
        z - w
    } else if z < -w {
        z + w
    } else {
        0.0
    }
}

/// KKT residual of `L_n(β) + Σ w_i|β_i|` given `∇L_n(β)`.
fn weighted_kkt(gradient: &DVector<f64>, weights: &DVector<f64>, beta: &DVector<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..beta.len() {
        let (g, w, b) = (gradient[i], weights[i], beta[i]);
        let r = if b > 0.0 {
            (g + w).abs()
        } else if b < 0.0 {
            (g - w).abs()
        } else {
            (g.abs() - w).max(0.0)
        };
        worst = worst.max(r);
    }
    worst
}

/// Minimizes `L_n(β) + Σ w_i|β_i|` starting from `warm_start`.
///
/// Columns that are identically zero carry no information; their
/// coefficients are set to zero when penalized and left at the warm start
/// otherwise.
pub fn weighted_l1_solve(
    problem: &Problem,
    weights: &DVector<f64>,
    warm_start: &DVector<f64>,
    config: &SolverConfig,
) -> Result<InnerSolution> {
    config.validate()?;
    problem.check_len(weights, "weights")?;
    problem.check_len(warm_start, "warm start")?;
    if let Some(w) = weights.iter().find(|w| !(**w >= 0.0 && w.is_finite())) {
        return Err(Error::ParameterDomain(format!("weights must be nonnegative, got {w}")));
    }
    match problem.loss() {
        LossKind::SquaredError => Ok(coordinate_descent(problem, weights, warm_start, config)),
        LossKind::Logistic => proximal_gradient(problem, weights, warm_start, config),
    }
}

fn coordinate_descent(
    problem: &Problem,
    weights: &DVector<f64>,
    warm_start: &DVector<f64>,
    config: &SolverConfig,
) -> InnerSolution {
    let x = problem.design();
    let y = problem.response();
    let (n, p) = x.shape();
    let nf = n as f64;
    let col_sq: Vec<f64> = (0..p).map(|j| x.column(j).norm_squared() / nf).collect();

    let mut beta = warm_start.clone();
    for j in 0..p {
        if col_sq[j] == 0.0 && weights[j] > 0.0 {
            beta[j] = 0.0;
        }
    }
    let mut resid = y - x * &beta;
    let gradient_of = |resid: &DVector<f64>| -(x.tr_mul(resid)) / nf;

    let mut kkt = weighted_kkt(&gradient_of(&resid), weights, &beta);
    if kkt <= config.inner_tol {
        return InnerSolution {
            beta,
            iterations: 0,
            converged: true,
            kkt_residual: kkt,
        };
    }
    for sweep in 1..=config.max_inner_iters {
        for j in 0..p {
            if col_sq[j] == 0.0 {
                continue;
            }
            let xj = x.column(j);
            let old = beta[j];
            let z = xj.dot(&resid) / nf + col_sq[j] * old;
            let new = soft_threshold(z, weights[j]) / col_sq[j];
            if new != old {
                resid.axpy(old - new, &xj, 1.0);
                beta[j] = new;
            }
        }
        kkt = weighted_kkt(&gradient_of(&resid), weights, &beta);
        if kkt <= config.inner_tol {
            // confirm against a freshly computed residual
            resid = y - x * &beta;
            kkt = weighted_kkt(&gradient_of(&resid), weights, &beta);
            if kkt <= config.inner_tol {
                return InnerSolution {
                    beta,
                    iterations: sweep,
                    converged: true,
                    kkt_residual: kkt,
                };
            }
        }
    }
    InnerSolution {
        beta,
        iterations: config.max_inner_iters,
        converged: false,
        kkt_residual: kkt,
    }
}

fn proximal_gradient(
    problem: &Problem,
    weights: &DVector<f64>,
    warm_start: &DVector<f64>,
    config: &SolverConfig,
) -> Result<InnerSolution> {
    let x = problem.design();
    let n = problem.n() as f64;
    // 1/L with L = ‖X‖_F²/(4n) ≥ ‖X‖₂²/(4n), the logistic Lipschitz constant
    let frob = x.norm_squared();
    let mut step = if frob > 0.0 { 4.0 * n / frob } else { 1.0 };

    let mut beta = warm_start.clone();
    let mut eta = x * &beta;
    let mut value = problem.value_from_linear(&eta);
    let mut gradient = problem.gradient_from_linear(&eta);
    let mut kkt = weighted_kkt(&gradient, weights, &beta);

    for iter in 0..config.max_inner_iters {
        if kkt <= config.inner_tol {
            return Ok(InnerSolution {
                beta,
                iterations: iter,
                converged: true,
                kkt_residual: kkt,
            });
        }
        let mut accepted = false;
        for _ in 0..80 {
            let candidate = DVector::from_fn(beta.len(), |i, _| {
                soft_threshold(beta[i] - step * gradient[i], step * weights[i])
            });
            let diff = &candidate - &beta;
            let eta_c = x * &candidate;
            let value_c = problem.value_from_linear(&eta_c);
            if !value_c.is_finite() {
                return Err(Error::NumericalFailure {
                    message: "non-finite logistic loss in proximal gradient".into(),
                    trace: vec![value],
                });
            }
            let model = value + gradient.dot(&diff) + diff.norm_squared() / (2.0 * step);
            if value_c <= model + 1e-15 * value.abs() {
                beta = candidate;
                eta = eta_c;
                value = value_c;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        gradient = problem.gradient_from_linear(&eta);
        kkt = weighted_kkt(&gradient, weights, &beta);
        step *= 1.5;
    }
    Ok(InnerSolution {
        converged: kkt <= config.inner_tol,
        beta,
        iterations: config.max_inner_iters,
        kkt_residual: kkt,
    })
}

/// LLA weights `λ − h'_λ(|β_i|)`.
pub fn lla_weights(spec: &PenaltySpec, beta: &DVector<f64>) -> DVector<f64> {
    beta.map(|b| spec.lla_weight(b))
}

/// `max_i min{|Δ_i|, |Δ_i/β_{k,i}|}`, the ratio term skipped where `β_{k,i} = 0`.
pub fn outer_change(previous: &DVector<f64>, next: &DVector<f64>) -> f64 {
    previous
        .iter()
        .zip(next.iter())
        .map(|(&old, &new)| {
            let delta = (new - old).abs();
            if old != 0.0 {
                delta.min(delta / old.abs())
            } else {
                delta
            }
        })
        .fold(0.0, f64::max)
}

/// Fits `β̂` by DCA/LLA.
pub fn dca_fit(problem: &Problem, spec: &PenaltySpec, config: &SolverConfig) -> Result<FitResult> {
    spec.validate()?;
    config.validate()?;
    let p = problem.p();
    let lambda_weights = DVector::from_element(p, spec.lambda);

    let mut inner_total = 0;
    let (mut beta, mut previous_weights, mut inner_converged) = match &config.init {
        Init::Zero => (DVector::zeros(p), None, true),
        Init::Custom(start) => {
            problem.check_len(start, "initial point")?;
            (start.clone(), None, true)
        }
        Init::LassoWarmStart => {
            let lasso = weighted_l1_solve(problem, &lambda_weights, &DVector::zeros(p), config)?;
            inner_total += lasso.iterations;
            (lasso.beta, Some(lambda_weights.clone()), lasso.converged)
        }
    };

    let mut trace = Vec::with_capacity(config.max_outer_iters + 1);
    let start_value = stationarity::objective(problem, spec, &beta)?;
    if !start_value.is_finite() {
        return Err(Error::NumericalFailure {
            message: "non-finite objective at the initial point".into(),
            trace,
        });
    }
    trace.push(start_value);

    // the FOC residual at β_{k+1} exceeds the inner KKT residual by at most
    // η⁻|Δ|, so the stopping rule alone does not certify the iterate
    let certify_tol = 10.0 * config.inner_tol;
    let mut converged = false;
    let mut outer = 0;
    let mut weights = lla_weights(spec, &beta);
    while outer < config.max_outer_iters {
        if inner_converged && previous_weights.as_ref() == Some(&weights) {
            // same weighted problem as the one β already solves
            converged = true;
            break;
        }
        let inner = weighted_l1_solve(problem, &weights, &beta, config)?;
        outer += 1;
        inner_total += inner.iterations;
        let value = stationarity::objective(problem, spec, &inner.beta)?;
        trace.push(value);
        if !value.is_finite() {
            return Err(Error::NumericalFailure {
                message: format!("non-finite objective at outer iteration {outer}"),
                trace,
            });
        }
        let change = outer_change(&beta, &inner.beta);
        beta = inner.beta;
        inner_converged = inner.converged;
        previous_weights = Some(std::mem::replace(&mut weights, lla_weights(spec, &beta)));

        if change <= config.outer_tol && inner_converged {
            let gradient = problem.loss_eval(&beta)?.gradient;
            let report = stationarity::report_from_gradient(spec, &beta, &gradient, certify_tol);
            if report.is_d_stationary {
                converged = true;
                break;
            }
        }
    }

    let weights_final = previous_weights.unwrap_or_else(|| lla_weights(spec, &beta));
    let stationarity = stationarity::check_d_stationary_default(problem, spec, &beta)?;
    Ok(FitResult {
        beta_hat: beta,
        objective_trace: trace,
        outer_iters: outer,
        inner_iters_total: inner_total,
        converged,
        weights_final,
        stationarity,
    })
}
