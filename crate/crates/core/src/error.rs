use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate link chain: alpha = beta = 1 has no unique steady state")]
    DegenerateChain,

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("model format error: {0}")]
    ModelFormat(String),

    #[error("incompatible model file: {0}")]
    Incompatible(String),

    #[error("config error at line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("unknown scenario `{name}`; available presets: {available}")]
    UnknownScenario { name: String, available: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
