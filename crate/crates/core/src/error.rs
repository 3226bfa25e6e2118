use thiserror::Error;

use crate::bench::BenchError;
use crate::gateway::GatewayError;
use crate::model::{ConfigError, InvalidQuestion};
use crate::retrieval::RetrievalError;
use crate::reward::RewardError;
use crate::squeeze::SqueezeError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Crate-level error, one variant per subsystem.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Question(#[from] InvalidQuestion),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Squeeze(#[from] SqueezeError),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error(transparent)]
    Bench(#[from] BenchError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
