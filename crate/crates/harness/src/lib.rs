//! Experiment harness for the `actmap` workbench: configuration, run
//! directories, pretraining and training orchestration, evaluation, timing,
//! the path-feasibility `S` sweep and plot-data export.

pub mod config;
pub mod manifest;
pub mod plots;
pub mod run;
pub mod sweep;
pub mod timing;

pub use config::{Algorithm, EnvId, Preset, RunConfig};
pub use manifest::RunManifest;

/// Harness failure, split by exit code.
#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    /// Invalid configuration or usage; exit code 1.
    #[error("config error: {0}")]
    Config(String),
    /// Anything that failed while running; exit code 2.
    #[error(transparent)]
    Runtime(#[from] anyhow::Error),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 1,
            HarnessError::Runtime(_) => 2,
        }
    }
}

impl From<actmap::Error> for HarnessError {
    fn from(e: actmap::Error) -> Self {
        match e {
            actmap::Error::Config(m) | actmap::Error::Usage(m) => HarnessError::Config(m),
            other => HarnessError::Runtime(other.into()),
        }
    }
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Runtime(e.into())
    }
}

impl From<csv::Error> for HarnessError {
    fn from(e: csv::Error) -> Self {
        HarnessError::Runtime(e.into())
    }
}

impl From<serde_json::Error> for HarnessError {
    fn from(e: serde_json::Error) -> Self {
        HarnessError::Runtime(e.into())
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/harness.md")]
mod book_harness {}
