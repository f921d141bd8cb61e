use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum PmeError {
    #[error("matrix is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NonSymmetric(f64),
    #[error("point cloud is degenerate: {0}")]
    DegenerateCloud(String),
    #[error("invalid distance matrix: {0}")]
    InvalidDistances(String),
    #[error("invalid template point: {0}")]
    InvalidPoint(String),
    #[error("null-space design is rank deficient")]
    RankDeficientDesign,
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("neighbourhood graph is disconnected")]
    Disconnected,
    #[error("non-finite loss at iteration {0}")]
    NonFiniteLoss(usize),
    #[error("need at least 5 residual pairs, got {0}")]
    TooFewPairs(usize),
    #[error("unsupported mechanism: {0}")]
    UnsupportedMechanism(String),
    #[error("empty point set")]
    EmptySet,
    #[error("template kind mismatch: {0}")]
    KindMismatch(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

impl PmeError {
    /// Short variant name, used in CLI diagnostics.
    pub fn name(&self) -> &'static str {
        match self {
            PmeError::NotPositiveDefinite { .. } => "NotPositiveDefinite",
            PmeError::NonSymmetric(_) => "NonSymmetric",
            PmeError::DegenerateCloud(_) => "DegenerateCloud",
            PmeError::InvalidDistances(_) => "InvalidDistances",
            PmeError::InvalidPoint(_) => "InvalidPoint",
            PmeError::RankDeficientDesign => "RankDeficientDesign",
            PmeError::LengthMismatch { .. } => "LengthMismatch",
            PmeError::InvalidInput(_) => "InvalidInput",
            PmeError::Disconnected => "Disconnected",
            PmeError::NonFiniteLoss(_) => "NonFiniteLoss",
            PmeError::TooFewPairs(_) => "TooFewPairs",
            PmeError::UnsupportedMechanism(_) => "UnsupportedMechanism",
            PmeError::EmptySet => "EmptySet",
            PmeError::KindMismatch(_) => "KindMismatch",
            PmeError::Precondition(_) => "Precondition",
            PmeError::DimensionMismatch(_) => "DimensionMismatch",
        }
    }
}

pub type Result<T> = std::result::Result<T, PmeError>;
