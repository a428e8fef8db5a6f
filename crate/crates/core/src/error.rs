use std::path::PathBuf;

/// Errors produced anywhere in the pipeline.
///
/// Variants are grouped by how the CLI reports them: usage problems exit 1
/// (handled by the argument parser), data/validation problems exit 2, and
/// degenerate analyses (single-class splits, empty windows, too-small
/// classes) exit 3.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A line of an input file failed to parse.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    /// Input data violated a documented invariant.
    #[error("{0}")]
    Validation(String),

    /// The requested analysis is degenerate on this data
    /// (e.g. a class is empty or smaller than the fold count).
    #[error("{0}")]
    Degenerate(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn parse(path: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub fn validation(message: impl Into<String>) -> Self {
        Error::Validation(message.into())
    }

    pub fn degenerate(message: impl Into<String>) -> Self {
        Error::Degenerate(message.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code the CLI uses for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } | Error::Validation(_) | Error::Io { .. } => 2,
            Error::Degenerate(_) => 3,
        }
    }
}
