use std::io;
use std::path::PathBuf;

/// Errors produced by the library.
///
/// The variants map one-to-one onto the CLI's exit codes, so callers can
/// tell a bad parameter apart from a damaged file without string matching.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A parameter or argument violates an operation's precondition.
    #[error("usage error: {0}")]
    Usage(String),

    /// A file does not follow the expected byte layout.
    #[error("format error: {0}")]
    Format(String),

    /// A file parsed but its contents are inconsistent (ids out of range etc).
    #[error("corrupt index: {0}")]
    Corruption(String),

    /// The operation ran but no admissible answer exists.
    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl Error {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
