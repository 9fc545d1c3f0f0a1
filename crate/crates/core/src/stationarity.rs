//! d-stationarity certificates for `F(β) = L_n(β) + λ‖β‖₁ − h_λ(β)`.
//!
//! With `L_n` and `h_λ` differentiable, `β` is d-stationary exactly when some
//! `z ∈ ∂‖β‖₁` satisfies `∇L_n(β) + λz − ∇h_λ(β) = 0`. The report measures how
//! far each coordinate is from admitting such a `z`.

use std::io::Write;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::losses::Problem;
use crate::penalties::PenaltySpec;

#[derive(Clone, Debug, PartialEq)]
pub struct StationarityReport {
    /// Per-coordinate first-order violation.
    pub residuals: Vec<f64>,
    pub max_violation: f64,
    /// The subgradient `z ∈ ∂‖β‖₁` closest to satisfying the first-order condition.
    pub subgradient_certificate: Vec<f64>,
    pub tolerance: f64,
    pub is_d_stationary: bool,
    /// `|z_i| < 1` on every zero coordinate.
    pub strict_dual_feasible: bool,
}

impl StationarityReport {
    /// Writes `coordinate,residual,certificate` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "coordinate,residual,certificate")?;
        for (i, (r, z)) in self
            .residuals
            .iter()
            .zip(&self.subgradient_certificate)
            .enumerate()
        {
            writeln!(out, "{},{},{}", i + 1, r, z)?;
        }
        Ok(())
    }
}

/// `1e-6·(1 + ‖∇L_n(β)‖_∞)`.
pub fn default_tolerance(gradient: &DVector<f64>) -> f64 {
    1e-6 * (1.0 + gradient.amax())
}

/// Objective `F(β) = L_n(β) + Σ p_λ(β_i)`.
pub fn objective(problem: &Problem, spec: &PenaltySpec, beta: &DVector<f64>) -> Result<f64> {
    Ok(problem.loss_value(beta)? + spec.total(beta.as_slice()))
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn check_d_stationary(
    problem: &Problem,
    spec: &PenaltySpec,
    beta: &DVector<f64>,
    tol: f64,
) -> Result<StationarityReport> {
    let gradient = problem.loss_eval(beta)?.gradient;
    Ok(report_from_gradient(spec, beta, &gradient, tol))
}

/// Same as [`check_d_stationary`] with [`default_tolerance`].
pub fn check_d_stationary_default(
    problem: &Problem,
    spec: &PenaltySpec,
    beta: &DVector<f64>,
) -> Result<StationarityReport> {
    let gradient = problem.loss_eval(beta)?.gradient;
    let tol = default_tolerance(&gradient);
    Ok(report_from_gradient(spec, beta, &gradient, tol))
}

pub(crate) fn report_from_gradient(
    spec: &PenaltySpec,
    beta: &DVector<f64>,
    gradient: &DVector<f64>,
    tol: f64,
) -> StationarityReport {
    let lambda = spec.lambda;
    let p = beta.len();
    let mut residuals = Vec::with_capacity(p);
    let mut certificate = Vec::with_capacity(p);
    let mut strict = true;
    for i in 0..p {
        let b = beta[i];
        let g = gradient[i] - spec.h_derivative(b);
        if b != 0.0 {
            residuals.push((g + lambda * sign(b)).abs());
            certificate.push(sign(b));
        } else {
            residuals.push((g.abs() - lambda).max(0.0));
            let z = if lambda > 0.0 { (-g / lambda).clamp(-1.0, 1.0) } else { 0.0 };
            strict &= z.abs() < 1.0;
            certificate.push(z);
        }
    }
    let max_violation = residuals.iter().copied().fold(0.0, f64::max);
    StationarityReport {
        residuals,
        max_violation,
        subgradient_certificate: certificate,
        tolerance: tol,
        is_d_stationary: max_violation <= tol,
        strict_dual_feasible: strict,
    }
}

/// Exact one-sided derivative `F'(β; d)`.
pub fn directional_derivative(
    problem: &Problem,
    spec: &PenaltySpec,
    beta: &DVector<f64>,
    direction: &DVector<f64>,
) -> Result<f64> {
    problem.check_len(direction, "direction")?;
    let gradient = problem.loss_eval(beta)?.gradient;
    let lambda = spec.lambda;
    let mut total = gradient.dot(direction);
    for (&b, &d) in beta.iter().zip(direction.iter()) {
        total += if b != 0.0 { lambda * sign(b) * d } else { lambda * d.abs() };
        total -= spec.h_directional(b, d);
    }
    Ok(total)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Assumption8Audit {
    pub holds: bool,
    /// `(coordinate, lhs − cλ)` for every checked coordinate.
    pub margins: Vec<(usize, f64)>,
}

/// Checks `(1/n) x_jᵀ X(β* − β̂) sign(β̂_j) ≥ cλ` over `j ∉ S` with `β̂_j ≠ 0`.
///
/// With `beta_star = None` the observable surrogate
/// `(1/n) x_jᵀ(y − Xβ̂) sign(β̂_j) ≥ cλ` is used instead.
pub fn audit_assumption8(
    problem: &Problem,
    beta_hat: &DVector<f64>,
    support: &[usize],
    beta_star: Option<&DVector<f64>>,
    lambda: f64,
    c: f64,
) -> Result<Assumption8Audit> {
    if !(c > 0.0 && c < 1.0) {
        return Err(Error::ParameterDomain(format!("c must lie in (0, 1), got {c}")));
    }
    problem.check_len(beta_hat, "beta_hat")?;
    let p = problem.p();
    if let Some(&bad) = support.iter().find(|&&j| j >= p) {
        return Err(Error::Shape(format!("support index {bad} out of range for p = {p}")));
    }
    let x = problem.design();
    let n = problem.n() as f64;
    let target = match beta_star {
        Some(star) => {
            problem.check_len(star, "beta_star")?;
            x * (star - beta_hat)
        }
        None => problem.response() - x * beta_hat,
    };
    let mut in_support = vec![false; p];
    for &j in support {
        in_support[j] = true;
    }
    let margins: Vec<(usize, f64)> = (0..p)
        .filter(|&j| !in_support[j] && beta_hat[j] != 0.0)
        .map(|j| {
            let lhs = x.column(j).dot(&target) / n * sign(beta_hat[j]);
            (j, lhs - c * lambda)
        })
        .collect();
    Ok(Assumption8Audit {
        holds: margins.iter().all(|&(_, m)| m >= 0.0),
        margins,
    })
}
