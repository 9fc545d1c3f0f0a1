//! Squared-error and logistic losses.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LossKind {
    /// `(1/2n)‖y − Xβ‖²`
    SquaredError,
    /// `(1/n) Σ ψ(x_iᵀβ) − y_i x_iᵀβ` with `ψ(u) = log(1 + eᵘ)`
    Logistic,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::SquaredError => "squared",
            LossKind::Logistic => "logistic",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "squared" | "squared-error" | "gaussian" | "ls" => Ok(LossKind::SquaredError),
            "logistic" | "binomial" | "bernoulli" => Ok(LossKind::Logistic),
            other => Err(Error::ParameterDomain(format!("unknown loss `{other}`"))),
        }
    }
}

/// Log-partition of the Bernoulli family, `log(1 + eᵘ)`, evaluated without
/// overflow.
pub fn log1p_exp(u: f64) -> f64 {
    u.max(0.0) + (-u.abs()).exp().ln_1p()
}

/// Logistic mean function `1/(1 + e^{−u})`.
pub fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// An estimation instance: design, response and loss.
#[derive(Clone, Debug, PartialEq)]
pub struct Problem {
    design: DMatrix<f64>,
    response: DVector<f64>,
    loss: LossKind,
}

impl Problem {
    pub fn new(design: DMatrix<f64>, response: DVector<f64>, loss: LossKind) -> Result<Self> {
        let (n, p) = design.shape();
        if n == 0 || p == 0 {
            return Err(Error::Shape(format!("design must be non-empty, got {n}x{p}")));
        }
        if response.len() != n {
            return Err(Error::Shape(format!(
                "design has {n} rows but response has {} entries",
                response.len()
            )));
        }
        if design.iter().chain(response.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Domain("design and response must be finite".into()));
        }
        if loss == LossKind::Logistic {
            if let Some(bad) = response.iter().find(|&&v| v != 0.0 && v != 1.0) {
                return Err(Error::Domain(format!(
                    "logistic response must be 0 or 1, found {bad}"
                )));
            }
        }
        Ok(Problem {
            design,
            response,
            loss,
        })
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn response(&self) -> &DVector<f64> {
        &self.response
    }

    pub fn loss(&self) -> LossKind {
        self.loss
    }

    pub fn n(&self) -> usize {
        self.design.nrows()
    }

    pub fn p(&self) -> usize {
        self.design.ncols()
    }

    /// Same design and loss with a new response.
    pub fn with_response(&self, response: DVector<f64>) -> Result<Self> {
        Problem::new(self.design.clone(), response, self.loss)
    }

    pub(crate) fn check_len(&self, beta: &DVector<f64>, what: &str) -> Result<()> {
        if beta.len() != self.p() {
            return Err(Error::Shape(format!(
                "{what} has length {} but the design has {} columns",
                beta.len(),
                self.p()
            )));
        }
        Ok(())
    }

    /// Loss value only.
    pub fn loss_value(&self, beta: &DVector<f64>) -> Result<f64> {
        self.check_len(beta, "beta")?;
        let eta = &self.design * beta;
        Ok(self.value_from_linear(&eta))
    }

    pub(crate) fn value_from_linear(&self, eta: &DVector<f64>) -> f64 {
        let n = self.n() as f64;
        match self.loss {
            LossKind::SquaredError => {
                let ss: f64 = self
                    .response
                    .iter()
                    .zip(eta.iter())
                    .map(|(y, e)| (y - e) * (y - e))
                    .sum();
                ss / (2.0 * n)
            }
            LossKind::Logistic => {
                self.response
                    .iter()
                    .zip(eta.iter())
                    .map(|(y, e)| log1p_exp(*e) - y * e)
                    .sum::<f64>()
                    / n
            }
        }
    }

    /// Gradient given the linear predictor `Xβ`.
    pub(crate) fn gradient_from_linear(&self, eta: &DVector<f64>) -> DVector<f64> {
        let n = self.n() as f64;
        let scores: DVector<f64> = match self.loss {
            LossKind::SquaredError => eta - &self.response,
            LossKind::Logistic => {
                DVector::from_iterator(
                    self.n(),
                    eta.iter()
                        .zip(self.response.iter())
                        .map(|(e, y)| sigmoid(*e) - y),
                )
            }
        };
        self.design.tr_mul(&scores) / n
    }

    /// Value and gradient of `L_n` at `beta`.
    pub fn loss_eval(&self, beta: &DVector<f64>) -> Result<LossEval> {
        self.check_len(beta, "beta")?;
        let eta = &self.design * beta;
        Ok(LossEval {
            value: self.value_from_linear(&eta),
            gradient: self.gradient_from_linear(&eta),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossEval {
    pub value: f64,
    pub gradient: DVector<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_xoshiro::Xoshiro256PlusPlus;

    fn random_problem(rng: &mut Xoshiro256PlusPlus, n: usize, p: usize, loss: LossKind) -> Problem {
        let x = DMatrix::from_fn(n, p, |_, _| rng.random_range(-1.5..1.5));
        let y = DVector::from_fn(n, |_, _| match loss {
            LossKind::SquaredError => rng.random_range(-2.0..2.0),
            LossKind::Logistic => f64::from(rng.random_bool(0.4)),
        });
        Problem::new(x, y, loss).unwrap()
    }

    fn central_difference(problem: &Problem, beta: &DVector<f64>, j: usize, h: f64) -> f64 {
        let mut plus = beta.clone();
        let mut minus = beta.clone();
        plus[j] += h;
        minus[j] -= h;
        (problem.loss_value(&plus).unwrap() - problem.loss_value(&minus).unwrap()) / (2.0 * h)
    }

    #[test]
    fn perfect_fit_has_zero_loss() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let beta = DVector::from_vec(vec![2.0, -1.0]);
        let y = &x * &beta;
        let problem = Problem::new(x, y, LossKind::SquaredError).unwrap();
        let eval = problem.loss_eval(&beta).unwrap();
        assert_eq!(eval.value, 0.0);
        assert!(eval.gradient.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn logistic_gradient_at_origin() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(3);
        let problem = random_problem(&mut rng, 8, 3, LossKind::Logistic);
        let eval = problem.loss_eval(&DVector::zeros(3)).unwrap();
        for j in 0..3 {
            let expected: f64 = (0..8)
                .map(|i| (0.5 - problem.response()[i]) * problem.design()[(i, j)])
                .sum::<f64>()
                / 8.0;
            assert_abs_diff_eq!(eval.gradient[j], expected, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(eval.value, std::f64::consts::LN_2, epsilon = 1e-15);
    }

    #[test]
    fn gradient_matches_finite_differences_on_small_instance() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(11);
        for loss in [LossKind::SquaredError, LossKind::Logistic] {
            let problem = random_problem(&mut rng, 5, 3, loss);
            let beta = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
            let eval = problem.loss_eval(&beta).unwrap();
            for j in 0..3 {
                let fd = central_difference(&problem, &beta, j, 1e-5);
                assert_abs_diff_eq!(eval.gradient[j], fd, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let x = DMatrix::zeros(3, 2);
        assert!(matches!(
            Problem::new(x.clone(), DVector::zeros(2), LossKind::SquaredError),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            Problem::new(x.clone(), DVector::from_vec(vec![0.0, 1.0, 0.5]), LossKind::Logistic),
            Err(Error::Domain(_))
        ));
        let ok = Problem::new(x, DVector::zeros(3), LossKind::SquaredError).unwrap();
        assert!(matches!(ok.loss_eval(&DVector::zeros(3)), Err(Error::Shape(_))));
    }

    #[test]
    fn log_partition_is_stable_and_convex() {
        assert_eq!(log1p_exp(1000.0), 1000.0);
        assert!(log1p_exp(-1000.0) >= 0.0);
        let h = 1e-3;
        for i in -200..=200 {
            let u = i as f64 * 0.1;
            let second = log1p_exp(u + h) - 2.0 * log1p_exp(u) + log1p_exp(u - h);
            assert!(second >= -1e-15, "second difference {second} at {u}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn gradient_agrees_with_finite_differences(seed in any::<u64>(), logistic in any::<bool>()) {
            let loss = if logistic { LossKind::Logistic } else { LossKind::SquaredError };
            let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
            let problem = random_problem(&mut rng, 7, 4, loss);
            let beta = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
            let eval = problem.loss_eval(&beta).unwrap();
            for j in 0..4 {
                let fd = central_difference(&problem, &beta, j, 1e-5);
                prop_assert!((eval.gradient[j] - fd).abs() <= 1e-6 * (1.0 + fd.abs()));
            }
        }

        #[test]
        fn loss_is_midpoint_convex(seed in any::<u64>(), logistic in any::<bool>()) {
            let loss = if logistic { LossKind::Logistic } else { LossKind::SquaredError };
            let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
            let problem = random_problem(&mut rng, 6, 3, loss);
            let a = DVector::from_fn(3, |_, _| rng.random_range(-3.0..3.0));
            let b = DVector::from_fn(3, |_, _| rng.random_range(-3.0..3.0));
            let mid = (&a + &b) * 0.5;
            let lhs = problem.loss_value(&mid).unwrap();
            let rhs = 0.5 * (problem.loss_value(&a).unwrap() + problem.loss_value(&b).unwrap());
            prop_assert!(lhs <= rhs + 1e-12);
        }
    }
}
