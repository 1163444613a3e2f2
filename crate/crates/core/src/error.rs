use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch { expected: Vec<usize>, found: Vec<usize> },
    #[error("unknown subsystem label `{0}`")]
    UnknownLabel(String),
    #[error("duplicate subsystem label `{0}`")]
    DuplicateLabel(String),
    #[error("capacity exceeded: {requested} amplitudes requested, limit is {limit}")]
    Capacity { requested: usize, limit: usize },
    #[error("operator is not {0} within tolerance")]
    OperatorKind(&'static str),
    #[error("pointer width must be positive and finite, got {0}")]
    InvalidWidth(f64),
    #[error("state has zero norm")]
    ZeroNorm,
    #[error("grid domain [{xmin}, {xmax}] does not cover [{need_min}, {need_max}]")]
    DomainTooSmall { xmin: f64, xmax: f64, need_min: f64, need_max: f64 },
    #[error("grid is invalid: {0}")]
    InvalidGrid(String),
    #[error("postselection is orthogonal to the preselected state (|<chi|psi>| = {0:e}); weak value undefined")]
    OrthogonalPostselection(f64),
    #[error("postselection basis is incomplete: {found} vectors for dimension {dim}")]
    IncompleteBasis { found: usize, dim: usize },
    #[error("observable is invalid: {0}")]
    InvalidObservable(String),
    #[error("precession angle {0} outside [-pi, pi]")]
    AlphaOutOfRange(f64),
    #[error("absorption coefficient must be non-negative, got {0}")]
    NegativeAbsorption(f64),
    #[error("inference is not invertible: {0}")]
    NonInvertible(&'static str),
    #[error("negative radicand {0} when inferring |(sigma_x)^w|")]
    NegativeRadicand(f64),
    #[error("insufficient statistics: {0} postselected trials, need at least 2")]
    InsufficientStatistics(usize),
    #[error("coupling strength must be non-zero")]
    ZeroCoupling,
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },
}

/// Error classes shared by the CLI exit status and the C ABI status codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Capacity,
    Numerical,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Capacity { .. } => ErrorClass::Capacity,
            Error::OrthogonalPostselection(_)
            | Error::NegativeRadicand(_)
            | Error::ZeroNorm
            | Error::InsufficientStatistics(_) => ErrorClass::Numerical,
            _ => ErrorClass::Validation,
        }
    }
}
