use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("lookup error: {0}")]
    Lookup(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("training diverged at iteration {iteration}: loss {loss}")]
    Diverged { iteration: usize, loss: f64 },

    #[error("format error: {0}")]
    Format(String),

    #[error("file error at {path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the numbers rather than the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical(_) | Error::Diverged { .. })
    }
}
