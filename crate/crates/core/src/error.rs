use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An argument violated an operation's precondition.
    Domain(String),
    /// Matrix or layer shapes do not chain.
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    /// A metric is undefined for the given input (e.g. AUC without negatives).
    UndefinedMetric(&'static str),
    /// The target node has no edges within its receptive field.
    EmptyField(usize),
    /// Training produced a non-finite loss.
    TrainingDiverged { epoch: usize },
    /// Candidate enumeration hit its cap and truncation was not allowed.
    Capacity { cap: usize },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::DimensionMismatch { expected, found } => write!(
                f,
                "dimension mismatch: expected {}x{}, found {}x{}",
                expected.0, expected.1, found.0, found.1
            ),
            Error::UndefinedMetric(why) => write!(f, "undefined metric: {why}"),
            Error::EmptyField(node) => write!(f, "node {node} has an empty receptive field"),
            Error::TrainingDiverged { epoch } => {
                write!(f, "training diverged: non-finite loss at epoch {epoch}")
            }
            Error::Capacity { cap } => write!(f, "candidate enumeration exceeded cap of {cap}"),
        }
    }
}

impl core::error::Error for Error {}
