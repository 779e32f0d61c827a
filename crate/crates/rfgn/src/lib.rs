//! File formats, model artifacts and the `rfgn` command line on top of
//! `rfgn-core`.

pub mod artifact;
pub mod commands;
pub mod config;
pub mod data;
pub mod metrics;
pub mod snapshot;

use std::process::ExitCode;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("bad input data: {0}")]
    Data(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            Self::Config(_) => 2,
            Self::Numeric(_) => 3,
            Self::Data(_) | Self::Io(_) => 1,
        })
    }
}

impl From<rfgn_core::Error> for CliError {
    fn from(e: rfgn_core::Error) -> Self {
        use rfgn_core::Error as E;
        match e {
            E::NonFiniteLoss { .. } | E::NonFinite(_) => Self::Numeric(e.to_string()),
            E::InvalidConfig(_) | E::OddDimension(_) => Self::Config(e.to_string()),
            _ => Self::Data(e.to_string()),
        }
    }
}

/// Sizes the global rayon pool from `RFGN_THREADS` when set.
pub fn init_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("RFGN_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| CliError::Config(format!("RFGN_THREADS must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))
}
