use std::io;

use thiserror::Error;

use pams_core::blocklog::LogError;

#[derive(Debug, Error)]
pub enum NodeError {
    #[error("config: {0}")]
    Config(String),
    #[error("block log is corrupt at height {height}: {detail}")]
    CorruptLog { height: u64, detail: String },
    #[error("no genesis block: {0}")]
    Genesis(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl NodeError {
    /// Stable machine-readable name.
    pub fn code(&self) -> &'static str {
        match self {
            NodeError::Config(_) => "ConfigError",
            NodeError::CorruptLog { .. } => "CorruptLog",
            NodeError::Genesis(_) => "GenesisError",
            NodeError::Io(_) => "IoError",
        }
    }
}

impl From<LogError> for NodeError {
    fn from(e: LogError) -> Self {
        match e {
            LogError::Corrupt { height, reason } => NodeError::CorruptLog { height, detail: reason },
            LogError::BadMagic => NodeError::CorruptLog { height: 0, detail: "bad magic".into() },
            LogError::Io(e) => NodeError::Io(e),
        }
    }
}
