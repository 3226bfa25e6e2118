//! Multi-query search rollouts with retrieval squeezing.
//!
//! A policy model answers a question by alternating tagged reasoning,
//! multi-query `<search>` blocks and a final `<answer>`. Every query variant
//! in a search block is retrieved independently, the union of retrieved
//! chunks is distilled by a frozen summarizer model (the *squeezer*) and the
//! summary is injected back into the rollout as an `<information>` block.
//! Finished trajectories are scored with an exact-match plus format reward.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: shared domain types and the trajectory JSONL record
//! - [`protocol`]: the tag protocol parser and prompt rendering
//! - [`retrieval`]: BM25 index, remote retrieval client, bundle fan-out
//! - [`gateway`]: LLM clients (OpenAI-compatible and scripted)
//! - [`squeeze`]: squeezer prompt assembly and summary injection limits
//! - [`rollout`]: the multi-turn rollout loop and batch runner
//! - [`reward`]: exact-match and format rewards, evaluation reports
//! - [`bench`]: datasets, sweeps, expansion-type analysis, harness config
//! - [`testkit`]: deterministic fixtures (toy corpora, oracle backends)

pub mod bench;
pub mod error;
pub mod gateway;
pub mod model;
pub mod protocol;
pub mod retrieval;
pub mod reward;
pub mod rollout;
pub mod squeeze;
pub mod testkit;

pub use error::{Error, Result};
pub use model::{
    Chunk, ChunkSet, Question, QueryBundle, RewardBreakdown, RolloutConfig, Segment, SegmentKind,
    Status, Summary, Trajectory, TrajectoryRecord,
};
