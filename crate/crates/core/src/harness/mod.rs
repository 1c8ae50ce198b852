//! Dataset handling, pipeline orchestration, metrics and traces.

mod config;
mod dataset;
mod metrics;
mod pipeline;
mod trace;

use thiserror::Error;

pub use config::{PolicyKind, RunConfig};
pub use dataset::{load_dataset, read_dataset, DatasetExample};
pub use metrics::{evaluate, load_predictions, read_predictions, set_f1, MetricsReport, Prediction, Verdict};
pub use pipeline::{run_dataset, run_example, write_outputs, ExampleOutcome, DEFAULT_WORKERS};
pub use trace::{GroundingVerdict, SchemaSource, ScoredPath, Stage, TraceRecord};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum HarnessError {
    #[error("{0}")]
    Io(String),
    #[error("line {line}: {message}")]
    Json { line: usize, message: String },
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("example {0:?} has no gold answers")]
    EmptyAnswers(String),
    #[error("predictions and golds do not line up: {0}")]
    IdMismatch(String),
    #[error("configuration: {0}")]
    Config(String),
}
