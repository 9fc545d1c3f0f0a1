//! Seeded synthetic sparse-regression instances and CSV I/O.
//!
//! All randomness comes from `Xoshiro256PlusPlus` seeded through SplitMix64
//! (`seed_from_u64`). Replicate `i` of an experiment with base seed `s` uses
//! seed `s ⊕ i`. Within one instance the draws happen in a fixed order:
//! design (row by row), support, magnitudes and signs, then noise or
//! Bernoulli responses.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::{Error, Result};
use crate::losses::{sigmoid, LossKind, Problem};

pub type Rng64 = Xoshiro256PlusPlus;

pub fn rng_from_seed(seed: u64) -> Rng64 {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

/// Seed of replicate `index` under base seed `seed`.
pub fn replicate_seed(seed: u64, index: usize) -> u64 {
    seed ^ index as u64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NoiseKind {
    Gaussian,
    /// `σ·(±1)` with equal probability.
    Rademacher,
}

impl std::str::FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(NoiseKind::Gaussian),
            "rademacher" => Ok(NoiseKind::Rademacher),
            other => Err(Error::ParameterDomain(format!("unknown noise kind `{other}`"))),
        }
    }
}

impl std::fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NoiseKind::Gaussian => "gaussian",
            NoiseKind::Rademacher => "rademacher",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub n: usize,
    pub p: usize,
    /// Number of nonzero coefficients.
    pub s: usize,
    pub signal_min: f64,
    pub signal_max: f64,
    pub sigma: f64,
    /// Toeplitz correlation `ρ^{|i−j|}` between columns.
    pub design_correlation: f64,
    pub noise: NoiseKind,
    pub loss: LossKind,
    /// Rescale columns to `‖x_j‖²/n = 1` before applying `design_scale`.
    pub standardize: bool,
    /// Multiplies the whole design.
    pub design_scale: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Linear model with standardized Gaussian design and Gaussian noise.
    pub fn linear(n: usize, p: usize, s: usize) -> Self {
        SyntheticSpec {
            n,
            p,
            s,
            signal_min: 1.0,
            signal_max: 2.0,
            sigma: 1.0,
            design_correlation: 0.0,
            noise: NoiseKind::Gaussian,
            loss: LossKind::SquaredError,
            standardize: true,
            design_scale: 1.0,
            seed: 0,
        }
    }

    /// Logistic model; columns are left unstandardized.
    pub fn logistic(n: usize, p: usize, s: usize) -> Self {
        SyntheticSpec {
            loss: LossKind::Logistic,
            standardize: false,
            ..Self::linear(n, p, s)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::ParameterDomain(msg));
        if self.n == 0 || self.p == 0 {
            return bad(format!("n and p must be positive, got n={} p={}", self.n, self.p));
        }
        if self.s > self.p {
            return bad(format!("sparsity s={} exceeds p={}", self.s, self.p));
        }
        if !(self.signal_min.is_finite() && self.signal_max.is_finite())
            || self.signal_min < 0.0
            || self.signal_min > self.signal_max
        {
            return bad(format!(
                "signal range [{}, {}] is invalid",
                self.signal_min, self.signal_max
            ));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be nonnegative, got {}", self.sigma));
        }
        if !(0.0..1.0).contains(&self.design_correlation) {
            return bad(format!(
                "design correlation must lie in [0, 1), got {}",
                self.design_correlation
            ));
        }
        if !(self.design_scale > 0.0 && self.design_scale.is_finite()) {
            return bad(format!("design scale must be positive, got {}", self.design_scale));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticTruth {
    pub beta_star: DVector<f64>,
    /// Sorted zero-based indices of the nonzero coefficients.
    pub support: Vec<usize>,
    pub sigma: f64,
    pub spec: SyntheticSpec,
}

impl SyntheticTruth {
    pub fn min_signal(&self) -> f64 {
        self.support
            .iter()
            .map(|&j| self.beta_star[j].abs())
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn generate(spec: &SyntheticSpec) -> Result<(Problem, SyntheticTruth)> {
    spec.validate()?;
    let mut rng = rng_from_seed(spec.seed);
    let (n, p) = (spec.n, spec.p);
    let rho = spec.design_correlation;
    let innovation = (1.0 - rho * rho).sqrt();

    // AR(1) across columns gives covariance ρ^{|i−j|} with unit variances
    let mut rows = Vec::with_capacity(n * p);
    for _ in 0..n {
        let mut prev: f64 = rng.sample(StandardNormal);
        rows.push(prev);
        for _ in 1..p {
            let z: f64 = rng.sample(StandardNormal);
            prev = rho * prev + innovation * z;
            rows.push(prev);
        }
    }
    let mut design = DMatrix::from_row_slice(n, p, &rows);
    if spec.standardize {
        for mut col in design.column_iter_mut() {
            let norm = (col.norm_squared() / n as f64).sqrt();
            if norm > 0.0 {
                col /= norm;
            }
        }
    }
    if spec.design_scale != 1.0 {
        design *= spec.design_scale;
    }

    let mut support = index::sample(&mut rng, p, spec.s).into_vec();
    support.sort_unstable();
    let mut beta_star = DVector::zeros(p);
    for &j in &support {
        let magnitude = if spec.signal_max > spec.signal_min {
            rng.random_range(spec.signal_min..=spec.signal_max)
        } else {
            spec.signal_min
        };
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        beta_star[j] = sign * magnitude;
    }

    let mean = &design * &beta_star;
    let response = match spec.loss {
        LossKind::SquaredError => {
            let noise = DVector::from_iterator(
                n,
                (0..n).map(|_| match spec.noise {
                    NoiseKind::Gaussian => spec.sigma * rng.sample::<f64, _>(StandardNormal),
                    NoiseKind::Rademacher => {
                        if rng.random_bool(0.5) {
                            spec.sigma
                        } else {
                            -spec.sigma
                        }
                    }
                }),
            );
            if spec.sigma == 0.0 {
                mean
            } else {
                mean + noise
            }
        }
        LossKind::Logistic => mean.map(|eta| f64::from(rng.random::<f64>() < sigmoid(eta))),
    };

    let problem = Problem::new(design, response, spec.loss)?;
    let truth = SyntheticTruth {
        beta_star,
        support,
        sigma: spec.sigma,
        spec: spec.clone(),
    };
    Ok((problem, truth))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Writes `y,x1,...,xp` rows. Values use the shortest representation that
/// parses back to the same `f64`.
pub fn write_problem<W: Write>(problem: &Problem, mut out: W) -> std::io::Result<()> {
    let p = problem.p();
    let mut header = String::from("y");
    for j in 1..=p {
        header.push_str(&format!(",x{j}"));
    }
    writeln!(out, "{header}")?;
    let x = problem.design();
    for (i, y) in problem.response().iter().enumerate() {
        write!(out, "{y}")?;
        for j in 0..p {
            write!(out, ",{}", x[(i, j)])?;
        }
        writeln!(out)?;
    }
    out.flush()
}

pub fn write_csv(path: impl AsRef<Path>, problem: &Problem) -> Result<()> {
    write_problem(problem, create(path.as_ref())?)?;
    Ok(())
}

/// Reads a header row followed by numeric rows into a table.
fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(e, 1))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(e, 1))?
        .iter()
        .map(str::to_owned)
        .collect();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(Error::Parse {
            line: 1,
            message: "file is empty; expected a header row".into(),
        });
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(e, 0))?;
        let line = record.position().map_or(0, |pos| pos.line());
        if record.len() != header.len() {
            return Err(Error::Shape(format!(
                "line {line} has {} fields but the header has {}",
                record.len(),
                header.len()
            )));
        }
        let row = record
            .iter()
            .map(|field| {
                field.parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    message: format!("`{field}` is not a number"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

fn csv_error(e: csv::Error, fallback_line: u64) -> Error {
    let line = e.position().map_or(fallback_line, |pos| pos.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse {
            line,
            message: format!("{other:?}"),
        },
    }
}

/// Reads a dataset written by [`write_csv`]: first column response, the rest
/// predictors.
pub fn read_csv(path: impl AsRef<Path>, loss: LossKind) -> Result<Problem> {
    let (header, rows) = read_table(path.as_ref())?;
    if header.len() < 2 {
        return Err(Error::Shape("need a response column and at least one predictor".into()));
    }
    if rows.is_empty() {
        return Err(Error::Shape("no data rows (n = 0)".into()));
    }
    let n = rows.len();
    let p = header.len() - 1;
    let response = DVector::from_iterator(n, rows.iter().map(|r| r[0]));
    let design = DMatrix::from_fn(n, p, |i, j| rows[i][j + 1]);
    Problem::new(design, response, loss)
}

/// Writes `index,<name>` rows with one-based indices.
pub fn write_vector_csv(path: impl AsRef<Path>, name: &str, values: &DVector<f64>) -> Result<()> {
    let mut out = create(path.as_ref())?;
    writeln!(out, "index,{name}")?;
    for (i, v) in values.iter().enumerate() {
        writeln!(out, "{},{v}", i + 1)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads the value column of an `index,<name>` file.
pub fn read_vector_csv(path: impl AsRef<Path>) -> Result<DVector<f64>> {
    let (header, rows) = read_table(path.as_ref())?;
    if header.len() != 2 {
        return Err(Error::Shape(format!(
            "expected two columns (index, value), found {}",
            header.len()
        )));
    }
    if rows.is_empty() {
        return Err(Error::Shape("no rows".into()));
    }
    Ok(DVector::from_iterator(rows.len(), rows.iter().map(|r| r[1])))
}

/// Writes the truth sidecar: `index,beta_star,in_support,sigma,seed`.
pub fn write_truth_csv(path: impl AsRef<Path>, truth: &SyntheticTruth) -> Result<()> {
    let mut out = create(path.as_ref())?;
    writeln!(out, "index,beta_star,in_support,sigma,seed")?;
    for (i, b) in truth.beta_star.iter().enumerate() {
        let in_support = u8::from(truth.support.binary_search(&i).is_ok());
        writeln!(out, "{},{b},{in_support},{},{}", i + 1, truth.sigma, truth.spec.seed)?;
    }
    out.flush()?;
    Ok(())
}

/// Truth as read back from a sidecar file.
#[derive(Clone, Debug, PartialEq)]
pub struct TruthRecord {
    pub beta_star: DVector<f64>,
    pub support: Vec<usize>,
    pub sigma: f64,
    pub seed: u64,
}

pub fn read_truth_csv(path: impl AsRef<Path>) -> Result<TruthRecord> {
    let (header, rows) = read_table(path.as_ref())?;
    if header.len() != 5 {
        return Err(Error::Shape(format!("truth file needs 5 columns, found {}", header.len())));
    }
    if rows.is_empty() {
        return Err(Error::Shape("truth file has no rows".into()));
    }
    let beta_star = DVector::from_iterator(rows.len(), rows.iter().map(|r| r[1]));
    let support = rows
        .iter()
        .enumerate()
        .filter(|(_, r)| r[2] != 0.0)
        .map(|(i, _)| i)
        .collect();
    Ok(TruthRecord {
        beta_star,
        support,
        sigma: rows[0][3],
        seed: rows[0][4] as u64,
    })
}
