//! Seeded experiments: sample a sparse signal, design and measure, run the
//! phase recovery and l1 stages, and score the result up to global phase.

mod config;
mod io;
mod trial;

pub use config::{
    normalized_snr, ExperimentConfig, NoiseBound, PppSettings, SweepAxis, SweepField,
    MAX_AUTO_DEGREE,
};
pub use io::{
    format_real, read_records, write_records, write_sweep, Sidecar, ARTIFACT_VERSION, CSV_HEADER,
};
pub use trial::{
    aggregate, align_phase, median, run_sweep, run_trial, sample_signal, Aggregate, SweepResult,
    TrialDetail, TrialRecord,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
