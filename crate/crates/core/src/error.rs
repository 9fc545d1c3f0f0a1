use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter out of domain: {0}")]
    ParameterDomain(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("response outside the loss domain: {0}")]
    Domain(String),

    #[error("unsupported penalty family: {0}")]
    UnsupportedFamily(String),

    #[error("singular design: {0}")]
    SingularDesign(String),

    #[error("regime violated: {0}")]
    Regime(String),

    #[error("numerical failure: {message}")]
    NumericalFailure {
        message: String,
        /// Objective values recorded before the failure.
        trace: Vec<f64>,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
