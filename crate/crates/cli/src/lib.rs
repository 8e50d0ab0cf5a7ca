//! Configuration-driven experiment runner for low-resolution weight training.
//!
//! A run reads one TOML file, trains every sweep cell and writes
//! `results.csv`, per-cell learning curves under `curves/`, run metadata in
//! `run.toml`, and for RBMs sample and receptive-field images as PGM.

pub mod config;
pub mod images;
mod run;

use thiserror::Error;

pub use config::RunConfig;
pub use run::{read_results, run, validate, write_results, ResultRecord, RunOptions, RunSummary, RESULT_COLUMNS};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("cannot write output: {0}")]
    Output(String),
}

impl CliError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
            CliError::Output(_) => 1,
        }
    }

    pub(crate) fn from_training(e: lowres_core::Error) -> Self {
        use lowres_core::Error as E;
        match e {
            E::Divergence { .. } | E::InvalidValue(_) => CliError::Numerical(e.to_string()),
            E::Idx(_) | E::Libsvm(_) | E::Io { .. } => CliError::Data(e.to_string()),
            E::Config(_) | E::InvalidResolution { .. } | E::InvalidArgument(_) | E::ShapeMismatch { .. } => {
                CliError::Config(e.to_string())
            }
        }
    }
}
