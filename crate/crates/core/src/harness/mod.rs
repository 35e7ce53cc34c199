//! Experiment configuration, seeded batch execution and report emission.

mod experiment;
mod report;

use thiserror::Error;

pub use experiment::{
    export_transcript, load_spec, run_experiment, ExperimentSpec, MessageSpec, Observer, Scenario, Seeds, StreamKind,
    TomographySpec, WalkSpec,
};
pub use report::{
    aggregate, emit_report, write_report_file, Aggregate, ReportFormat, SeedRow, SessionAggregate, SessionMetrics,
    SimReport, TomographyAggregate, TomographyMetrics,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error at `{path}`: {reason}")]
    Config { path: String, reason: String },
    #[error("seed {seed}: {reason}")]
    Runtime { seed: u64, reason: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    pub(crate) fn config(path: impl Into<String>, reason: impl ToString) -> Self {
        HarnessError::Config {
            path: path.into(),
            reason: reason.to_string(),
        }
    }

    pub fn is_config(&self) -> bool {
        matches!(self, HarnessError::Config { .. })
    }
}
