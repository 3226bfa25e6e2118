//! Experiment layer: dataset loading, parameter sweeps, expansion-type
//! analysis and the harness configuration file.

mod config;
mod dataset;
mod expansion;
mod sweep;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use config::{EndpointConfig, HarnessConfig, RetrievalConfig};
pub use dataset::{load_dataset, parse_dataset};
pub use expansion::{
    ablate_expansion_type, classification_prompt, classify_expansions, classify_pair, expansion_pairs, parse_label, Classification,
    ExpansionLabel, ExpansionSummary, ExpansionType, UnparseableLabel,
};
pub use sweep::{run_sweep, SweepAxis, SweepCell, SweepReport, SweepSpec};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    Schema { line: usize, reason: String },
    #[error("invalid sweep: {0}")]
    InvalidSweep(String),
    #[error("config: {0}")]
    Config(String),
}

impl BenchError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }
}
