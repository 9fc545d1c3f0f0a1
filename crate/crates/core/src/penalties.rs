//! Folded-concave sparsity penalties written as a difference of convex functions.
//!
//! Every family is represented as
//!
//! ```text
//! p_λ(t) = λ|t| − h_λ(t)
//! ```
//!
//! where `h_λ` is convex, even, and has `|h'_λ| ≤ λ`. The solver only ever
//! needs `h_λ` and its derivative; `p_λ` is evaluated in closed form to avoid
//! cancellation.
//!
//! Scale-free families (L1, SCAD, MCP, capped-L1) are defined through their
//! unit-λ profile, `p_λ(t) = λ² p₁(t/λ)`, so shape knobs are expressed in
//! units of λ (SCAD and MCP flatten at `γλ`, capped-L1 at `γλ/2`). The
//! transformed-L1 and logarithmic penalties are not scale-free and use
//! `p_λ(t) = λ p₁(t)`.

use std::collections::BTreeSet;
use std::fmt;

use crate::error::{Error, Result};

/// Penalty family. The shape knob is `γ` for SCAD, MCP and capped-L1, `a`
/// for transformed-L1 and the log offset `ε` for the logarithmic penalty.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PenaltyFamily {
    L1,
    Scad,
    Mcp,
    CappedL1,
    TransformedL1,
    Logarithmic,
}

impl PenaltyFamily {
    pub const ALL: [PenaltyFamily; 6] = [
        PenaltyFamily::L1,
        PenaltyFamily::Scad,
        PenaltyFamily::Mcp,
        PenaltyFamily::CappedL1,
        PenaltyFamily::TransformedL1,
        PenaltyFamily::Logarithmic,
    ];

    /// Whether `p_λ(t) = λ² p₁(t/λ)` holds for the family.
    pub fn is_scale_free(self) -> bool {
        matches!(
            self,
            PenaltyFamily::L1 | PenaltyFamily::Scad | PenaltyFamily::Mcp | PenaltyFamily::CappedL1
        )
    }

    /// Shape used when the caller does not supply one.
    pub fn default_shape(self) -> Option<f64> {
        match self {
            PenaltyFamily::L1 => None,
            PenaltyFamily::Scad => Some(3.7),
            PenaltyFamily::Mcp => Some(3.0),
            PenaltyFamily::CappedL1 => Some(2.0),
            PenaltyFamily::TransformedL1 => Some(1.0),
            PenaltyFamily::Logarithmic => Some(1.0),
        }
    }

    /// Command-line name of the family.
    pub fn name(self) -> &'static str {
        match self {
            PenaltyFamily::L1 => "l1",
            PenaltyFamily::Scad => "scad",
            PenaltyFamily::Mcp => "mcp",
            PenaltyFamily::CappedL1 => "capped-l1",
            PenaltyFamily::TransformedL1 => "transformed-l1",
            PenaltyFamily::Logarithmic => "log",
        }
    }
}

impl fmt::Display for PenaltyFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for PenaltyFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" | "lasso" => Ok(PenaltyFamily::L1),
            "scad" => Ok(PenaltyFamily::Scad),
            "mcp" => Ok(PenaltyFamily::Mcp),
            "capped-l1" | "cappedl1" | "capped_l1" => Ok(PenaltyFamily::CappedL1),
            "transformed-l1" | "transformedl1" | "transformed_l1" | "tl1" => {
                Ok(PenaltyFamily::TransformedL1)
            }
            "log" | "logarithmic" => Ok(PenaltyFamily::Logarithmic),
            other => Err(Error::ParameterDomain(format!("unknown penalty family `{other}`"))),
        }
    }
}

/// Penalty family with its regularization weight and shape knob.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PenaltySpec {
    pub family: PenaltyFamily,
    pub lambda: f64,
    pub shape: Option<f64>,
    /// Width (in units of λ) of the quadratic smoothing around the capped-L1
    /// kink. `None` keeps the kink.
    pub smoothing: Option<f64>,
}

impl PenaltySpec {
    /// Builds and validates a spec, filling in the family's default shape
    /// when `shape` is `None`.
    pub fn new(family: PenaltyFamily, lambda: f64, shape: Option<f64>) -> Result<Self> {
        let spec = PenaltySpec {
            family,
            lambda,
            shape: shape.or_else(|| family.default_shape()),
            smoothing: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn l1(lambda: f64) -> Result<Self> {
        Self::new(PenaltyFamily::L1, lambda, None)
    }

    pub fn scad(lambda: f64, gamma: f64) -> Result<Self> {
        Self::new(PenaltyFamily::Scad, lambda, Some(gamma))
    }

    pub fn mcp(lambda: f64, gamma: f64) -> Result<Self> {
        Self::new(PenaltyFamily::Mcp, lambda, Some(gamma))
    }

    pub fn capped_l1(lambda: f64, gamma: f64) -> Result<Self> {
        Self::new(PenaltyFamily::CappedL1, lambda, Some(gamma))
    }

    pub fn transformed_l1(lambda: f64, a: f64) -> Result<Self> {
        Self::new(PenaltyFamily::TransformedL1, lambda, Some(a))
    }

    pub fn logarithmic(lambda: f64, offset: f64) -> Result<Self> {
        Self::new(PenaltyFamily::Logarithmic, lambda, Some(offset))
    }

    /// Replaces the capped-L1 kink by a quadratic ramp of width `mu` (in
    /// units of λ), which gives `h'` a finite slope of `1/mu`.
    pub fn with_smoothing(mut self, mu: f64) -> Result<Self> {
        if self.family != PenaltyFamily::CappedL1 {
            return Err(Error::UnsupportedFamily(format!(
                "smoothing only applies to capped-l1, not {}",
                self.family
            )));
        }
        self.smoothing = Some(mu);
        self.validate()?;
        Ok(self)
    }

    /// Smoothing with the default width `1e-3·γ`.
    pub fn with_default_smoothing(self) -> Result<Self> {
        let gamma = self.shape.unwrap_or(0.0);
        self.with_smoothing(1e-3 * gamma)
    }

    /// Same family and shape at a different λ.
    pub fn with_lambda(mut self, lambda: f64) -> Result<Self> {
        self.lambda = lambda;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let lambda_ok = if self.family == PenaltyFamily::L1 {
            // λ = 0 is the unpenalized problem, which only makes sense for L1.
            self.lambda >= 0.0 && self.lambda.is_finite()
        } else {
            self.lambda > 0.0 && self.lambda.is_finite()
        };
        if !lambda_ok {
            return Err(Error::ParameterDomain(format!(
                "lambda must be positive and finite for {}, got {}",
                self.family, self.lambda
            )));
        }
        let shape = self.shape;
        let need = |lower: f64, what: &str| -> Result<f64> {
            match shape {
                Some(v) if v.is_finite() && v > lower => Ok(v),
                Some(v) => Err(Error::ParameterDomain(format!(
                    "{} requires {what} > {lower}, got {v}",
                    self.family
                ))),
                None => Err(Error::ParameterDomain(format!("{} requires {what}", self.family))),
            }
        };
        match self.family {
            PenaltyFamily::L1 => {}
            PenaltyFamily::Scad => {
                need(1.0, "gamma")?;
            }
            PenaltyFamily::Mcp => {
                need(0.0, "gamma")?;
            }
            PenaltyFamily::CappedL1 => {
                let gamma = need(0.0, "gamma")?;
                if let Some(mu) = self.smoothing {
                    if !(mu > 0.0 && mu < gamma) {
                        return Err(Error::ParameterDomain(format!(
                            "capped-l1 smoothing width must lie in (0, gamma), got {mu}"
                        )));
                    }
                }
            }
            PenaltyFamily::TransformedL1 => {
                need(0.0, "a")?;
            }
            PenaltyFamily::Logarithmic => {
                need(0.0, "log offset")?;
            }
        }
        if self.smoothing.is_some() && self.family != PenaltyFamily::CappedL1 {
            return Err(Error::ParameterDomain("smoothing only applies to capped-l1".into()));
        }
        Ok(())
    }

    fn shape_or_nan(&self) -> f64 {
        self.shape.unwrap_or(f64::NAN)
    }

    /// Unit-λ profile `(p₁(u), h₁(u), h₁'(u))` for `u ≥ 0`.
    fn unit_profile(&self, u: f64) -> (f64, f64, f64) {
        let s = self.shape_or_nan();
        match self.family {
            PenaltyFamily::L1 => (u, 0.0, 0.0),
            PenaltyFamily::Scad => {
                if u <= 1.0 {
                    (u, 0.0, 0.0)
                } else if u < s {
                    let d = u - 1.0;
                    (
                        (2.0 * s * u - u * u - 1.0) / (2.0 * (s - 1.0)),
                        d * d / (2.0 * (s - 1.0)),
                        d / (s - 1.0),
                    )
                } else {
                    ((s + 1.0) / 2.0, u - (s + 1.0) / 2.0, 1.0)
                }
            }
            PenaltyFamily::Mcp => {
                if u < s {
                    (u - u * u / (2.0 * s), u * u / (2.0 * s), u / s)
                } else {
                    (s / 2.0, u - s / 2.0, 1.0)
                }
            }
            PenaltyFamily::CappedL1 => {
                let kink = s / 2.0;
                match self.smoothing {
                    None => {
                        if u < kink {
                            (u, 0.0, 0.0)
                        } else if u > kink {
                            (kink, u - kink, 1.0)
                        } else {
                            // midpoint of the one-sided derivatives
                            (kink, 0.0, 0.5)
                        }
                    }
                    Some(mu) => {
                        let lo = kink - mu / 2.0;
                        let hi = kink + mu / 2.0;
                        if u <= lo {
                            (u, 0.0, 0.0)
                        } else if u < hi {
                            let d = u - lo;
                            let h = d * d / (2.0 * mu);
                            (u - h, h, d / mu)
                        } else {
                            (kink, u - kink, 1.0)
                        }
                    }
                }
            }
            PenaltyFamily::TransformedL1 => {
                let a = s;
                let den = a + u;
                (a * u / den, u * u / den, u * (u + 2.0 * a) / (den * den))
            }
            PenaltyFamily::Logarithmic => {
                let eps = s;
                let p = eps * (u / eps).ln_1p();
                (p, u - p, u / (u + eps))
            }
        }
    }

    /// `(p_λ(|t|), h_λ(|t|), h'_λ(|t|))`, i.e. on the nonnegative half-line.
    fn scaled_profile(&self, u: f64) -> (f64, f64, f64) {
        let lambda = self.lambda;
        if self.family == PenaltyFamily::L1 {
            return (lambda * u, 0.0, 0.0);
        }
        if self.family.is_scale_free() {
            let (p, h, dh) = self.unit_profile(u / lambda);
            (lambda * lambda * p, lambda * lambda * h, lambda * dh)
        } else {
            let (p, h, dh) = self.unit_profile(u);
            (lambda * p, lambda * h, lambda * dh)
        }
    }

    /// Penalty value `p_λ(t)`.
    pub fn value(&self, t: f64) -> f64 {
        self.scaled_profile(t.abs()).0.max(0.0)
    }

    /// Convex correction `h_λ(t)`.
    pub fn h(&self, t: f64) -> f64 {
        self.scaled_profile(t.abs()).1
    }

    /// `h'_λ(t)`, odd in `t`. At the unsmoothed capped-L1 kink this is the
    /// midpoint of the one-sided derivatives.
    pub fn h_derivative(&self, t: f64) -> f64 {
        if t == 0.0 {
            return 0.0;
        }
        let dh = self.scaled_profile(t.abs()).2;
        if t > 0.0 {
            dh
        } else {
            -dh
        }
    }

    /// One-sided derivative of `h_λ` at `t` along the scalar direction `d`,
    /// i.e. `lim_{τ↓0} (h(t + τd) − h(t))/τ`.
    pub fn h_directional(&self, t: f64, d: f64) -> f64 {
        if d == 0.0 {
            return 0.0;
        }
        if self.family == PenaltyFamily::CappedL1 && self.smoothing.is_none() {
            let kink = self.shape_or_nan() * self.lambda / 2.0;
            if t.abs() == kink {
                // moving outward picks up slope λ, moving inward stays flat
                let outward = (t > 0.0) == (d > 0.0);
                return if outward { self.lambda * d.abs() } else { 0.0 };
            }
        }
        self.h_derivative(t) * d
    }

    /// Derivative of the penalty in `t`, `sign(t)(λ − |h'_λ(t)|)`, with 0 at
    /// the origin.
    pub fn derivative(&self, t: f64) -> f64 {
        if t == 0.0 {
            return 0.0;
        }
        let slope = self.lambda - self.h_derivative(t).abs();
        if t > 0.0 {
            slope
        } else {
            -slope
        }
    }

    /// LLA weight `λ − h'_λ(|t|)`.
    pub fn lla_weight(&self, t: f64) -> f64 {
        (self.lambda - self.h_derivative(t.abs())).clamp(0.0, self.lambda)
    }

    /// Separable sum `Σ p_λ(β_i)`.
    pub fn total(&self, beta: &[f64]) -> f64 {
        beta.iter().map(|&b| self.value(b)).sum()
    }

    /// Separable sum `Σ h_λ(β_i)`.
    pub fn h_total(&self, beta: &[f64]) -> f64 {
        beta.iter().map(|&b| self.h(b)).sum()
    }

    /// Curvature bounds, unbiasedness threshold and satisfied assumptions.
    pub fn dc_profile(&self) -> DcProfile {
        use Assumption::*;
        let lambda = self.lambda;
        let s = self.shape_or_nan();
        let all: BTreeSet<Assumption> = [
            BoundedDerivative,
            Symmetric,
            BoundedCurvature,
            VanishesAtOrigin,
            FlatBeyondThreshold,
        ]
        .into_iter()
        .collect();
        let without = |a: Assumption| {
            let mut set = all.clone();
            set.remove(&a);
            set
        };
        let (eta_minus, zeta, assumptions) = match self.family {
            PenaltyFamily::L1 => (0.0, None, without(FlatBeyondThreshold)),
            PenaltyFamily::Scad => (1.0 / (s - 1.0), Some(s * lambda), all),
            PenaltyFamily::Mcp => (1.0 / s, Some(s * lambda), all),
            PenaltyFamily::CappedL1 => match self.smoothing {
                None => (f64::INFINITY, Some(s * lambda / 2.0), without(BoundedCurvature)),
                Some(mu) => (1.0 / mu, Some((s + mu) * lambda / 2.0), all),
            },
            PenaltyFamily::TransformedL1 => (2.0 * lambda / s, None, without(FlatBeyondThreshold)),
            PenaltyFamily::Logarithmic => (lambda / s, None, without(FlatBeyondThreshold)),
        };
        DcProfile {
            eta_minus,
            eta_plus: 0.0,
            zeta,
            assumptions,
        }
    }

    /// Returns `(p_{cλ}(ct), c² p_λ(t))`, which agree for scale-free families.
    pub fn scale_check(&self, t: f64, c: f64) -> Result<(f64, f64)> {
        if !self.family.is_scale_free() {
            return Err(Error::UnsupportedFamily(format!(
                "{} is not scale-free",
                self.family
            )));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::ParameterDomain(format!("scale must be positive, got {c}")));
        }
        let scaled = PenaltySpec {
            lambda: c * self.lambda,
            ..*self
        };
        scaled.validate()?;
        Ok((scaled.value(c * t), c * c * self.value(t)))
    }

    /// Samples `(t, p(t), p'(t))` over a grid.
    pub fn curve(&self, grid: &[f64]) -> Vec<CurvePoint> {
        grid.iter()
            .map(|&t| CurvePoint {
                t,
                value: self.value(t),
                derivative: self.derivative(t),
            })
            .collect()
    }
}

impl fmt::Display for PenaltySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(lambda={}", self.family, self.lambda)?;
        if let Some(s) = self.shape {
            write!(f, ", shape={s}")?;
        }
        if let Some(mu) = self.smoothing {
            write!(f, ", smoothing={mu}")?;
        }
        f.write_str(")")
    }
}

/// Regularity conditions on `h_λ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Assumption {
    /// A3: `sup |h'_λ| ≤ λ`.
    BoundedDerivative,
    /// A4: `h_λ` symmetric about 0.
    Symmetric,
    /// A5: `h'_λ` nondecreasing with slope in `[η⁺, η⁻]`.
    BoundedCurvature,
    /// A6: `h_λ(0) = h'_λ(0) = 0`.
    VanishesAtOrigin,
    /// A7: `h'_λ(t) = λ` for `|t| ≥ ζ`.
    FlatBeyondThreshold,
}

impl Assumption {
    pub fn label(self) -> &'static str {
        match self {
            Assumption::BoundedDerivative => "A3",
            Assumption::Symmetric => "A4",
            Assumption::BoundedCurvature => "A5",
            Assumption::VanishesAtOrigin => "A6",
            Assumption::FlatBeyondThreshold => "A7",
        }
    }
}

impl fmt::Display for Assumption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DcProfile {
    /// Upper bound on the slope of `h'_λ`; infinite when `h'_λ` jumps.
    pub eta_minus: f64,
    /// Lower bound on the slope of `h'_λ` (zero for every shipped family).
    pub eta_plus: f64,
    /// Threshold beyond which `h'_λ = λ`, when it exists.
    pub zeta: Option<f64>,
    pub assumptions: BTreeSet<Assumption>,
}

impl DcProfile {
    pub fn satisfies(&self, a: Assumption) -> bool {
        self.assumptions.contains(&a)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    pub t: f64,
    pub value: f64,
    pub derivative: f64,
}
