//! Sparse regression with difference-of-convex penalties.
//!
//! The crate covers the penalty families (L1, SCAD, MCP, capped-L1,
//! transformed-L1, logarithmic) in the form `λ|t| − h_λ(t)`, a DCA/LLA
//! solver built on weighted-LASSO subproblems, d-stationarity certificates,
//! the oracle estimator, seeded synthetic data and a Monte Carlo harness that
//! compares fitted estimates against the known error bounds.

pub mod data;
pub mod error;
pub mod losses;
pub mod oracle;
pub mod penalties;
pub mod solver;
pub mod stationarity;
pub mod theory;

pub use data::{generate, SyntheticSpec, SyntheticTruth};
pub use error::{Error, Result};
pub use losses::{LossEval, LossKind, Problem};
pub use oracle::{oracle_fit, OracleResult};
pub use penalties::{Assumption, DcProfile, PenaltyFamily, PenaltySpec};
pub use solver::{dca_fit, weighted_l1_solve, FitResult, Init, SolverConfig};
pub use stationarity::{check_d_stationary, directional_derivative, StationarityReport};
pub use theory::{BoundReport, ConeSpec, ExperimentPlan, ExperimentReport};
