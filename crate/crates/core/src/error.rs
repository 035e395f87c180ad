use alloc::string::String;
use core::fmt;

/// Errors produced by the numerical core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Array shapes do not agree. `node` is set when raised during graph evaluation.
    Shape { node: Option<usize>, detail: String },
    /// A NaN or infinity was found where finite values are required.
    NonFinite { context: String },
    /// A precondition on an argument was violated.
    InvalidInput(String),
    /// A constraint system has no solution (COP-k-means).
    Infeasible(String),
    /// A majority vote had no winner or no voters.
    Ambiguous(String),
    /// Training produced a non-finite loss.
    Divergence { iteration: usize, detail: String },
}

pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(detail: impl Into<String>) -> Self {
        Error::Shape {
            node: None,
            detail: detail.into(),
        }
    }

    pub(crate) fn invalid(detail: impl Into<String>) -> Self {
        Error::InvalidInput(detail.into())
    }

    /// Short machine-readable category name.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Shape { .. } => "shape",
            Error::NonFinite { .. } => "non-finite",
            Error::InvalidInput(_) => "invalid-input",
            Error::Infeasible(_) => "infeasible",
            Error::Ambiguous(_) => "ambiguous",
            Error::Divergence { .. } => "divergence",
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape {
                node: Some(id),
                detail,
            } => write!(f, "shape mismatch at node {id}: {detail}"),
            Error::Shape { node: None, detail } => write!(f, "shape mismatch: {detail}"),
            Error::NonFinite { context } => write!(f, "non-finite value in {context}"),
            Error::InvalidInput(d) => write!(f, "invalid input: {d}"),
            Error::Infeasible(d) => write!(f, "infeasible constraints: {d}"),
            Error::Ambiguous(d) => write!(f, "ambiguous: {d}"),
            Error::Divergence { iteration, detail } => {
                write!(f, "training diverged at iteration {iteration}: {detail}")
            }
        }
    }
}

impl core::error::Error for Error {}
