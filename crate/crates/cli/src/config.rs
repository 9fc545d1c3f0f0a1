//! Flat `key = value` experiment configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Keys are
//! case-sensitive; unknown or repeated keys are errors.

use std::collections::BTreeMap;
use std::path::PathBuf;

use dcsparse::data::{NoiseKind, SyntheticSpec};
use dcsparse::theory::{select_lambda, ExperimentPlan};
use dcsparse::{Init, LossKind, PenaltyFamily, PenaltySpec, SolverConfig};

const KEYS: &[&str] = &[
    "n",
    "p",
    "s",
    "signal_min",
    "signal_max",
    "sigma",
    "rho",
    "noise",
    "loss",
    "standardize",
    "design_scale",
    "penalty",
    "lambda",
    "tau",
    "gamma",
    "a",
    "offset",
    "smoothing",
    "outer_tol",
    "inner_tol",
    "max_outer_iters",
    "max_inner_iters",
    "init",
    "replicates",
    "seed",
    "re_samples",
    "cone_c",
    "linf_constant",
    "out",
    "summary",
];

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub plan: ExperimentPlan,
    pub out: Option<PathBuf>,
    pub summary: Option<PathBuf>,
}

struct Entries(BTreeMap<String, (usize, String)>);

impl Entries {
    fn parse(text: &str) -> Result<Self, String> {
        let mut map = BTreeMap::new();
        for (index, raw) in text.lines().enumerate() {
            let line_no = index + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {line_no}: expected `key = value`"))?;
            let key = key.trim();
            if !KEYS.contains(&key) {
                return Err(format!("line {line_no}: unknown key `{key}`"));
            }
            if map
                .insert(key.to_owned(), (line_no, value.trim().to_owned()))
                .is_some()
            {
                return Err(format!("line {line_no}: key `{key}` given twice"));
            }
        }
        Ok(Entries(map))
    }

    fn raw(&self, key: &str) -> Option<&(usize, String)> {
        self.0.get(key)
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, String>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some((line, value)) => value
                .parse::<T>()
                .map(Some)
                .map_err(|e| format!("line {line}: bad value `{value}` for `{key}`: {e}")),
        }
    }

    fn required<T: std::str::FromStr>(&self, key: &str) -> Result<T, String>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)?.ok_or_else(|| format!("missing required key `{key}`"))
    }
}

fn parse_init(value: &str) -> Result<Init, String> {
    match value {
        "zero" => Ok(Init::Zero),
        "lasso" => Ok(Init::LassoWarmStart),
        other => Err(format!("unknown init `{other}` (expected zero or lasso)")),
    }
}

/// Picks the shape parameter from the family-specific key.
pub fn shape_for(
    family: PenaltyFamily,
    gamma: Option<f64>,
    a: Option<f64>,
    offset: Option<f64>,
) -> Result<Option<f64>, String> {
    let (given, name) = match family {
        PenaltyFamily::L1 => (None, ""),
        PenaltyFamily::Scad | PenaltyFamily::Mcp | PenaltyFamily::CappedL1 => (gamma, "gamma"),
        PenaltyFamily::TransformedL1 => (a, "a"),
        PenaltyFamily::Logarithmic => (offset, "offset"),
    };
    for (value, key) in [(gamma, "gamma"), (a, "a"), (offset, "offset")] {
        if value.is_some() && key != name {
            return Err(format!("`{key}` does not apply to the {family} penalty"));
        }
    }
    Ok(given.or(family.default_shape()))
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        let e = Entries::parse(text)?;
        let loss: LossKind = e.get("loss")?.unwrap_or(LossKind::SquaredError);
        let n: usize = e.required("n")?;
        let p: usize = e.required("p")?;
        let s: usize = e.required("s")?;
        let base = match loss {
            LossKind::SquaredError => SyntheticSpec::linear(n, p, s),
            LossKind::Logistic => SyntheticSpec::logistic(n, p, s),
        };
        let generator = SyntheticSpec {
            signal_min: e.get("signal_min")?.unwrap_or(base.signal_min),
            signal_max: e.get("signal_max")?.unwrap_or(base.signal_max),
            sigma: e.get("sigma")?.unwrap_or(base.sigma),
            design_correlation: e.get("rho")?.unwrap_or(base.design_correlation),
            noise: e.get::<NoiseKind>("noise")?.unwrap_or(base.noise),
            standardize: e.get("standardize")?.unwrap_or(base.standardize),
            design_scale: e.get("design_scale")?.unwrap_or(base.design_scale),
            ..base
        };

        let family: PenaltyFamily = e.required("penalty")?;
        let lambda = match e.raw("lambda") {
            Some((_, v)) if v == "auto" => {
                let tau = e.get("tau")?.unwrap_or(3.0);
                select_lambda(generator.sigma, tau, n, p).map_err(|err| err.to_string())?
            }
            _ => e.required("lambda")?,
        };
        let shape = shape_for(family, e.get("gamma")?, e.get("a")?, e.get("offset")?)?;
        let mut penalty = PenaltySpec::new(family, lambda, shape).map_err(|err| err.to_string())?;
        if let Some(mu) = e.get("smoothing")? {
            penalty = penalty.with_smoothing(mu).map_err(|err| err.to_string())?;
        }

        let defaults = SolverConfig::default();
        let solver = SolverConfig {
            outer_tol: e.get("outer_tol")?.unwrap_or(defaults.outer_tol),
            inner_tol: e.get("inner_tol")?.unwrap_or(defaults.inner_tol),
            max_outer_iters: e.get("max_outer_iters")?.unwrap_or(defaults.max_outer_iters),
            max_inner_iters: e.get("max_inner_iters")?.unwrap_or(defaults.max_inner_iters),
            init: match e.raw("init") {
                Some((line, v)) => parse_init(v).map_err(|err| format!("line {line}: {err}"))?,
                None => defaults.init,
            },
        };

        let mut plan = ExperimentPlan::new(
            generator,
            penalty,
            solver,
            e.required("replicates")?,
            e.get("seed")?.unwrap_or(0),
        );
        plan.re_samples = e.get("re_samples")?.unwrap_or(plan.re_samples);
        plan.cone_c = e.get("cone_c")?.unwrap_or(plan.cone_c);
        plan.linf_constant = e.get("linf_constant")?.unwrap_or(plan.linf_constant);
        Ok(ExperimentConfig {
            plan,
            out: e.get("out")?,
            summary: e.get("summary")?,
        })
    }
}
