use thiserror::Error;

/// Failures raised by the library. Each variant names the condition, not the caller.
#[derive(Debug, Error)]
pub enum Error {
    #[error("potential is not integrable: {0}")]
    NonIntegrable(String),
    #[error("averaged Hessian is not positive definite: {0}")]
    DegenerateHessian(String),
    #[error("ambiguous numerical rank: {0}")]
    AmbiguousRank(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("eigendecomposition unavailable: {0}")]
    EigendecompositionUnavailable(String),
    #[error("rotation projection requested without a symmetry structure")]
    SymmetryUnavailable,
    #[error("CFL violation: {0}")]
    CflViolation(String),
    #[error("non-finite or growing state at t = {t}: {reason}")]
    NonFiniteState { t: f64, reason: String },
    #[error("bottom of the spectrum is clustered: {0}")]
    ClusterAtBottom(String),
    #[error("undefined: {0}")]
    Undefined(String),
    #[error("degenerate fit window: {0}")]
    DegenerateWindow(String),
    #[error("insufficient history: {0}")]
    InsufficientHistory(String),
    #[error("classification error: {0}")]
    ClassificationError(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Short machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NonIntegrable(_) => "NonIntegrable",
            Error::DegenerateHessian(_) => "DegenerateHessian",
            Error::AmbiguousRank(_) => "AmbiguousRank",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::EigendecompositionUnavailable(_) => "EigendecompositionUnavailable",
            Error::SymmetryUnavailable => "SymmetryUnavailable",
            Error::CflViolation(_) => "CflViolation",
            Error::NonFiniteState { .. } => "NonFiniteState",
            Error::ClusterAtBottom(_) => "ClusterAtBottom",
            Error::Undefined(_) => "Undefined",
            Error::DegenerateWindow(_) => "DegenerateWindow",
            Error::InsufficientHistory(_) => "InsufficientHistory",
            Error::ClassificationError(_) => "ClassificationError",
            Error::Config(_) => "Config",
            Error::Io(_) => "Io",
        }
    }

    /// Module that raises this kind of failure.
    pub fn owner(&self) -> &'static str {
        match self {
            Error::NonIntegrable(_) | Error::DegenerateHessian(_) | Error::AmbiguousRank(_) => "potential",
            Error::ShapeMismatch(_) => "basis",
            Error::SymmetryUnavailable => "collision",
            Error::CflViolation(_) | Error::NonFiniteState { .. } => "evolve",
            Error::EigendecompositionUnavailable(_)
            | Error::ClusterAtBottom(_)
            | Error::Undefined(_)
            | Error::DegenerateWindow(_) => "spectral",
            Error::InsufficientHistory(_) => "diagnostics",
            Error::ClassificationError(_) => "modes",
            Error::Config(_) | Error::Io(_) => "cli",
        }
    }
}
