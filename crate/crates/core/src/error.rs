use thiserror::Error;

/// Errors raised by the workbench.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Matrix or space dimensions do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A bipartite split was required but absent, or the split is inconsistent.
    #[error("labelling error: {0}")]
    Labelling(String),

    /// A scalar argument is outside the range where the quantity is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// An input that must be Hermitian is not.
    #[error("matrix is not Hermitian (max deviation {0:e})")]
    NotHermitian(f64),

    /// A density operator failed its trace or positivity checks.
    #[error("invalid density operator: {0}")]
    InvalidState(String),

    /// The operation is not defined for this kind of input.
    #[error("not applicable: {0}")]
    NotApplicable(String),

    /// Compiler margins or other run configuration are invalid.
    #[error("configuration error: {0}")]
    Config(String),

    /// A numerical routine did not converge.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
