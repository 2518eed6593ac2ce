use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("cannot read {path}: {source}")]
    ReadConfig { path: PathBuf, source: std::io::Error },

    #[error("cannot parse {path}: {source}")]
    ParseConfig { path: PathBuf, source: Box<toml::de::Error> },

    #[error("cell (q={q}, policy={policy}, arrivals={arrivals}) failed: {source}")]
    Fig4Cell { q: f64, policy: String, arrivals: String, source: aojc_core::Error },

    #[error(transparent)]
    Core(#[from] aojc_core::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// Process exit code: 2 for anything the user can fix in the config,
    /// 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::ReadConfig { .. } | CliError::ParseConfig { .. } => 2,
            CliError::Core(e) | CliError::Fig4Cell { source: e, .. } => match e {
                aojc_core::Error::InvalidParams(_)
                | aojc_core::Error::InvalidSubset(_)
                | aojc_core::Error::InvalidPolicy(_)
                | aojc_core::Error::MissingSubset(_)
                | aojc_core::Error::SubsetCapExceeded { .. }
                | aojc_core::Error::InvalidArgument(_) => 2,
                _ => 1,
            },
            _ => 1,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

pub fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}
