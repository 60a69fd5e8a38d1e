use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("index {index} outside available range {lo}..={hi}")]
    OutOfRange { index: i64, lo: i64, hi: i64 },

    #[error("singular parameter: {0}")]
    SingularParameter(String),

    #[error("construction error: {0}")]
    Construction(String),

    /// A numerical invariant (unitarity, residual, normalization) was violated.
    #[error("numerical check failed: {what} (defect {defect:e}, threshold {threshold:e})")]
    NumericalCheck {
        what: String,
        defect: f64,
        threshold: f64,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("eigensolver failed: {0}")]
    Eigensolver(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
