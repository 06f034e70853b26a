use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{origin}:{line}: {msg}")]
    Parse {
        origin: String,
        line: usize,
        msg: String,
    },
    #[error("invalid platform: {0}")]
    InvalidPlatform(String),
    #[error("invalid workload: {0}")]
    InvalidWorkload(String),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid perturbation: {0}")]
    InvalidPerturbation(String),
    #[error("invalid scheduling configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown technique `{0}`")]
    UnknownTechnique(String),
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn parse(origin: &str, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            origin: origin.to_string(),
            line,
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// True for errors caused by the filesystem rather than by content.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_string(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}
