use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("{what} has zero power")]
    ZeroPower { what: &'static str },

    #[error("target THD {target:.3} % is not achievable; maximum for curve {curve} is {max:.3} %")]
    UnachievableThd { curve: u8, target: f64, max: f64 },

    #[error("non-finite value in {what} at block {block}")]
    NonFinite { what: &'static str, block: usize },

    #[error("malformed WAV file at byte offset {offset}: {msg}")]
    Wav { offset: u64, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
