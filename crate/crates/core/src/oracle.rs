//! Least squares restricted to a known support.

use nalgebra::{DMatrix, DVector};

use crate::data::SyntheticTruth;
use crate::error::{Error, Result};
use crate::losses::{LossKind, Problem};
use crate::penalties::PenaltySpec;
use crate::stationarity::{check_d_stationary_default, StationarityReport};

/// `X_S` is treated as rank deficient when `λ_min(X_SᵀX_S) ≤ RANK_TOL·‖X_S‖_F²`.
pub const RANK_TOL: f64 = 1e-10;

/// Default constant in the oracle sup-norm bound.
pub const DEFAULT_LINF_CONSTANT: f64 = 3.0;

#[derive(Clone, Debug, PartialEq)]
pub struct OracleResult {
    /// Exactly zero off the support.
    pub beta_oracle: DVector<f64>,
    /// Sorted, deduplicated, zero-based.
    pub support: Vec<usize>,
    pub linf_error_vs_truth: Option<f64>,
    /// `λ_min((1/n) X_SᵀX_S)`; infinite for an empty support.
    pub gram_min_eigenvalue: f64,
}

impl OracleResult {
    pub fn linf_error(&self, beta_star: &DVector<f64>) -> f64 {
        (&self.beta_oracle - beta_star).amax()
    }

    /// `C·σ·√(2/γ)·√(ln s / n)` with `γ` the restricted Gram eigenvalue.
    pub fn linf_bound(&self, sigma: f64, n: usize, constant: f64) -> f64 {
        let s = self.support.len().max(1) as f64;
        constant * sigma * (2.0 / self.gram_min_eigenvalue).sqrt() * (s.ln() / n as f64).sqrt()
    }
}

pub(crate) fn columns(design: &DMatrix<f64>, support: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(design.nrows(), support.len(), |i, k| design[(i, support[k])])
}

pub fn oracle_fit(problem: &Problem, support: &[usize]) -> Result<OracleResult> {
    if problem.loss() != LossKind::SquaredError {
        return Err(Error::Domain("the oracle estimator is defined for squared-error loss".into()));
    }
    let (n, p) = (problem.n(), problem.p());
    let mut support = support.to_vec();
    support.sort_unstable();
    support.dedup();
    if let Some(&bad) = support.iter().find(|&&j| j >= p) {
        return Err(Error::Shape(format!("support index {bad} out of range for p = {p}")));
    }
    let mut beta_oracle = DVector::zeros(p);
    if support.is_empty() {
        return Ok(OracleResult {
            beta_oracle,
            support,
            linf_error_vs_truth: None,
            gram_min_eigenvalue: f64::INFINITY,
        });
    }
    let k = support.len();
    if k > n {
        return Err(Error::SingularDesign(format!(
            "support of size {k} exceeds the sample size {n}"
        )));
    }
    let xs = columns(problem.design(), &support);
    let gram = xs.tr_mul(&xs);
    let min_eig = gram.symmetric_eigenvalues().min();
    let frob = xs.norm_squared();
    if !(min_eig > RANK_TOL * frob) {
        return Err(Error::SingularDesign(format!(
            "restricted Gram matrix has smallest eigenvalue {min_eig:e} (scale {frob:e})"
        )));
    }
    let qr = xs.qr();
    let qty = qr.q().tr_mul(problem.response());
    let coef = qr
        .r()
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::SingularDesign("triangular factor is singular".into()))?;
    for (k, &j) in support.iter().enumerate() {
        beta_oracle[j] = coef[k];
    }
    Ok(OracleResult {
        beta_oracle,
        support,
        linf_error_vs_truth: None,
        gram_min_eigenvalue: min_eig / n as f64,
    })
}

/// [`oracle_fit`] on the true support, with the sup-norm error filled in.
pub fn oracle_fit_truth(problem: &Problem, truth: &SyntheticTruth) -> Result<OracleResult> {
    let mut oracle = oracle_fit(problem, &truth.support)?;
    oracle.linf_error_vs_truth = Some(oracle.linf_error(&truth.beta_star));
    Ok(oracle)
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleStationarity {
    pub is_d_stationary: bool,
    pub min_signal: f64,
    /// `2ζ`.
    pub signal_threshold: f64,
    /// `min_{j∈S} |β*_j| > 2ζ`.
    pub signal_condition_holds: bool,
    pub report: StationarityReport,
}

pub fn oracle_is_dstationary(
    problem: &Problem,
    spec: &PenaltySpec,
    oracle: &OracleResult,
    truth: &SyntheticTruth,
) -> Result<OracleStationarity> {
    spec.validate()?;
    let zeta = spec.dc_profile().zeta.ok_or_else(|| {
        Error::UnsupportedFamily(format!(
            "{} has no finite flatness threshold",
            spec.family
        ))
    })?;
    let min_signal = truth.min_signal();
    let report = check_d_stationary_default(problem, spec, &oracle.beta_oracle)?;
    Ok(OracleStationarity {
        is_d_stationary: report.is_d_stationary,
        min_signal,
        signal_threshold: 2.0 * zeta,
        signal_condition_holds: min_signal > 2.0 * zeta,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate, SyntheticSpec};
    use approx::assert_abs_diff_eq;

    /// Normal equations solved by Gaussian elimination with partial pivoting.
    fn normal_equations(x: &DMatrix<f64>, y: &DVector<f64>, support: &[usize]) -> Vec<f64> {
        let k = support.len();
        let mut a = vec![vec![0.0; k + 1]; k];
        for r in 0..k {
            for c in 0..k {
                a[r][c] = (0..x.nrows()).map(|i| x[(i, support[r])] * x[(i, support[c])]).sum();
            }
            a[r][k] = (0..x.nrows()).map(|i| x[(i, support[r])] * y[i]).sum();
        }
        for col in 0..k {
            let pivot = (col..k)
                .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
                .unwrap();
            a.swap(col, pivot);
            for row in col + 1..k {
                let f = a[row][col] / a[col][col];
                for c in col..=k {
                    a[row][c] -= f * a[col][c];
                }
            }
        }
        let mut out = vec![0.0; k];
        for row in (0..k).rev() {
            let tail: f64 = (row + 1..k).map(|c| a[row][c] * out[c]).sum();
            out[row] = (a[row][k] - tail) / a[row][row];
        }
        out
    }

    #[test]
    fn noiseless_recovers_truth() {
        let spec = SyntheticSpec {
            sigma: 0.0,
            seed: 17,
            ..SyntheticSpec::linear(40, 30, 4)
        };
        let (problem, truth) = generate(&spec).unwrap();
        let oracle = oracle_fit_truth(&problem, &truth).unwrap();
        assert!(oracle.linf_error_vs_truth.unwrap() < 1e-12);
        for j in 0..30 {
            if !truth.support.contains(&j) {
                assert_eq!(oracle.beta_oracle[j], 0.0);
            }
        }
    }

    #[test]
    fn full_support_is_ols() {
        let spec = SyntheticSpec {
            seed: 2,
            ..SyntheticSpec::linear(50, 6, 3)
        };
        let (problem, _) = generate(&spec).unwrap();
        let all: Vec<usize> = (0..6).collect();
        let oracle = oracle_fit(&problem, &all).unwrap();
        let grad = problem.loss_eval(&oracle.beta_oracle).unwrap().gradient;
        assert!(grad.amax() < 1e-12);
    }

    #[test]
    fn matches_normal_equations() {
        for seed in 0..5 {
            let spec = SyntheticSpec {
                seed,
                design_correlation: 0.3,
                ..SyntheticSpec::linear(60, 20, 5)
            };
            let (problem, truth) = generate(&spec).unwrap();
            let oracle = oracle_fit(&problem, &truth.support).unwrap();
            let expected = normal_equations(problem.design(), problem.response(), &truth.support);
            for (k, &j) in truth.support.iter().enumerate() {
                assert_abs_diff_eq!(oracle.beta_oracle[j], expected[k], epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn singular_support_rejected() {
        let mut x = DMatrix::from_fn(10, 3, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let copy = x.column(0).clone_owned();
        x.set_column(2, &copy);
        let problem = Problem::new(x, DVector::from_element(10, 1.0), LossKind::SquaredError).unwrap();
        assert!(matches!(oracle_fit(&problem, &[0, 2]), Err(Error::SingularDesign(_))));
        assert!(oracle_fit(&problem, &[0, 1]).is_ok());
    }

    #[test]
    fn empty_support_gives_zero() {
        let (problem, _) = generate(&SyntheticSpec::linear(10, 4, 1)).unwrap();
        let oracle = oracle_fit(&problem, &[]).unwrap();
        assert!(oracle.beta_oracle.iter().all(|b| *b == 0.0));
        assert!(oracle.gram_min_eigenvalue.is_infinite());
    }

    #[test]
    fn noiseless_strong_signal_oracle_is_stationary() {
        let penalty = PenaltySpec::scad(0.2, 3.7).unwrap();
        let spec = SyntheticSpec {
            sigma: 0.0,
            signal_min: 2.0,
            signal_max: 3.0,
            seed: 8,
            ..SyntheticSpec::linear(80, 40, 3)
        };
        let (problem, truth) = generate(&spec).unwrap();
        let oracle = oracle_fit_truth(&problem, &truth).unwrap();
        let status = oracle_is_dstationary(&problem, &penalty, &oracle, &truth).unwrap();
        assert!(status.signal_condition_holds);
        assert!(status.is_d_stationary);
    }

    #[test]
    fn families_without_threshold_rejected() {
        let (problem, truth) = generate(&SyntheticSpec::linear(20, 5, 2)).unwrap();
        let oracle = oracle_fit_truth(&problem, &truth).unwrap();
        for penalty in [
            PenaltySpec::transformed_l1(1.0, 1.0).unwrap(),
            PenaltySpec::logarithmic(1.0, 1.0).unwrap(),
        ] {
            assert!(matches!(
                oracle_is_dstationary(&problem, &penalty, &oracle, &truth),
                Err(Error::UnsupportedFamily(_))
            ));
        }
    }
}
