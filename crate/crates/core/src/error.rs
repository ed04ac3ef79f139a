use std::path::PathBuf;

/// Error type for all fallible operations in this crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("tick arithmetic overflow")]
    Overflow,

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("fit did not converge after {iterations} iterations")]
    NotConverged { iterations: usize },

    #[error("{what} at offset {offset}")]
    Format { what: String, offset: u64 },

    #[error("line {line}: {what}")]
    Parse { line: usize, what: String },

    #[error("no events")]
    NoEvents,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(what: impl Into<String>, offset: u64) -> Self {
        Error::Format {
            what: what.into(),
            offset,
        }
    }
}
