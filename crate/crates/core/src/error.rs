use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Errors raised by the pure kernels.
///
/// Validation failures carry enough context (ids, field names, sizes) to be
/// reported to a user without a backtrace.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Two operands that must agree in size do not.
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    /// A record failed a domain invariant.
    Invalid {
        what: &'static str,
        detail: String,
    },
    DuplicateId {
        kind: &'static str,
        id: String,
    },
    UnknownId {
        kind: &'static str,
        id: String,
    },
    /// A collection that must be non-empty was empty.
    Empty(&'static str),
    /// Training produced a non-finite loss.
    Diverged {
        epoch: usize,
        step: usize,
    },
    /// A reader backend failed to produce an answer.
    Backend(String),
}

impl Error {
    pub(crate) fn invalid(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            detail: detail.into(),
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch {
                context,
                expected,
                found,
            } => write!(f, "dimension mismatch in {context}: expected {expected}, found {found}"),
            Error::Invalid { what, detail } => write!(f, "invalid {what}: {detail}"),
            Error::DuplicateId { kind, id } => write!(f, "duplicate {kind} id `{id}`"),
            Error::UnknownId { kind, id } => write!(f, "unknown {kind} id `{id}`"),
            Error::Empty(what) => write!(f, "{what} is empty"),
            Error::Diverged { epoch, step } => {
                write!(f, "training diverged (non-finite loss) at epoch {epoch}, step {step}")
            }
            Error::Backend(msg) => write!(f, "reader backend failed: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
