//! Shared domain types: questions, rollout configuration, trajectories,
//! retrieval results, summaries and rewards.
//!
//! Everything here is plain data with validation. Types are immutable once
//! built and can be shared freely across concurrent rollouts.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default weight of the format reward in `r = r_em + lambda * r_format`.
pub const DEFAULT_LAMBDA: f64 = 0.2;

/// Text appended to the rollout when the policy emits no valid action.
pub const RETHINK_NOTICE: &str = "My action is not correct. Let me rethink.";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid config field `{field}`: {reason}")]
pub struct ConfigError {
    pub field: &'static str,
    pub reason: String,
}

impl ConfigError {
    pub fn new(field: &'static str, reason: impl Into<String>) -> Self {
        Self {
            field,
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid question `{id}`: {reason}")]
pub struct InvalidQuestion {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub text: String,
    pub golden_answers: Vec<String>,
    pub dataset: String,
}

impl Question {
    pub fn new(
        id: impl Into<String>,
        text: impl Into<String>,
        golden_answers: Vec<String>,
        dataset: impl Into<String>,
    ) -> Result<Self, InvalidQuestion> {
        let question = Self {
            id: id.into(),
            text: text.into(),
            golden_answers,
            dataset: dataset.into(),
        };
        question.validate()?;
        Ok(question)
    }

    pub fn validate(&self) -> Result<(), InvalidQuestion> {
        let fail = |reason: &str| InvalidQuestion {
            id: self.id.clone(),
            reason: reason.to_string(),
        };
        if self.text.trim().is_empty() {
            return Err(fail("question text is empty"));
        }
        if self.golden_answers.is_empty() {
            return Err(fail("no golden answers"));
        }
        if self.golden_answers.iter().any(|g| g.trim().is_empty()) {
            return Err(fail("empty golden answer"));
        }
        Ok(())
    }
}

/// How predicted and gold answers are compared for the exact-match reward.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmMode {
    /// Compare after QA answer normalization.
    #[default]
    Normalized,
    /// Compare raw strings byte for byte.
    Strict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RolloutConfig {
    /// Turn budget. Every action (search, answer or rethink) costs one turn.
    pub max_turns: u32,
    /// Number of query variants the policy is asked to produce per search.
    pub n_expansions: u32,
    /// Chunks retrieved per query variant.
    pub top_k: u32,
    /// Token cap for each policy generation.
    pub response_token_limit: u32,
    /// Token cap for each injected `<information>` block.
    pub retrieved_token_limit: u32,
    pub lambda_format: f64,
    /// Search blocks with more queries than this are cut to the first `max_bundle`.
    pub max_bundle: u32,
    /// Token budget of the context handed to the squeezer.
    pub squeezer_input_budget: u32,
    pub temperature: f64,
    pub seed: Option<u64>,
    pub em_mode: EmMode,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        Self {
            max_turns: 4,
            n_expansions: 3,
            top_k: 10,
            response_token_limit: 500,
            retrieved_token_limit: 500,
            lambda_format: DEFAULT_LAMBDA,
            max_bundle: 8,
            squeezer_input_budget: 8192,
            temperature: 1.0,
            seed: None,
            em_mode: EmMode::Normalized,
        }
    }
}

impl RolloutConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("max_turns", self.max_turns),
            ("n_expansions", self.n_expansions),
            ("top_k", self.top_k),
            ("response_token_limit", self.response_token_limit),
            ("retrieved_token_limit", self.retrieved_token_limit),
            ("max_bundle", self.max_bundle),
            ("squeezer_input_budget", self.squeezer_input_budget),
        ];
        for (field, value) in positive {
            if value == 0 {
                return Err(ConfigError::new(field, "must be at least 1"));
            }
        }
        if !self.lambda_format.is_finite() || self.lambda_format < 0.0 {
            return Err(ConfigError::new(
                "lambda_format",
                format!("must be a finite non-negative number, got {}", self.lambda_format),
            ));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(ConfigError::new(
                "temperature",
                format!("must be a finite non-negative number, got {}", self.temperature),
            ));
        }
        Ok(())
    }
}

/// Returns `cfg` unchanged when every invariant holds.
pub fn validate_config(cfg: RolloutConfig) -> Result<RolloutConfig, ConfigError> {
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    Think,
    Search,
    Answer,
    Information,
    RethinkNotice,
    Raw,
}

impl SegmentKind {
    /// Injected by the runtime rather than generated by the policy.
    pub fn is_runtime_injected(self) -> bool {
        matches!(self, SegmentKind::Information | SegmentKind::RethinkNotice)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub kind: SegmentKind,
    pub content: String,
    #[serde(rename = "turn")]
    pub turn_index: u32,
}

impl Segment {
    pub fn new(kind: SegmentKind, content: impl Into<String>, turn_index: u32) -> Self {
        Self {
            kind,
            content: content.into(),
            turn_index,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Running,
    Answered,
    Exhausted,
    Failed,
}

impl Status {
    pub fn is_finished(self) -> bool {
        !matches!(self, Status::Running)
    }
}

/// Where and why a rollout aborted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub turn: u32,
    pub message: String,
}

/// Wall-clock spent in each collaborator, in milliseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timings {
    pub generation: u64,
    pub retrieval: u64,
    pub squeeze: u64,
    pub total: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub question: Question,
    pub segments: Vec<Segment>,
    pub status: Status,
    pub final_answer: Option<String>,
    pub turn_count: u32,
    /// Queries actually sent to the retriever, summed over all turns.
    pub queries_dispatched: u32,
    pub failure: Option<Failure>,
    pub timings: Timings,
}

impl Trajectory {
    pub fn new(question: Question) -> Self {
        Self {
            question,
            segments: Vec::new(),
            status: Status::Running,
            final_answer: None,
            turn_count: 0,
            queries_dispatched: 0,
            failure: None,
            timings: Timings::default(),
        }
    }

    pub fn segments_of(&self, kind: SegmentKind) -> impl Iterator<Item = &Segment> {
        self.segments.iter().filter(move |s| s.kind == kind)
    }

    /// Checks the structural invariants a finished trajectory must satisfy.
    pub fn check_invariants(&self, max_turns: u32) -> Result<(), String> {
        let answers = self.segments_of(SegmentKind::Answer).count();
        let answered = self.status == Status::Answered;
        if answered != self.final_answer.is_some() {
            return Err("final_answer presence disagrees with status".into());
        }
        if answered && answers != 1 {
            return Err(format!("answered trajectory has {answers} answer segments"));
        }
        if !answered && self.status != Status::Failed && answers != 0 {
            return Err("unanswered trajectory carries an answer segment".into());
        }
        if self.turn_count > max_turns {
            return Err(format!(
                "turn_count {} exceeds max_turns {max_turns}",
                self.turn_count
            ));
        }
        let mut last_turn = 0;
        for (i, seg) in self.segments.iter().enumerate() {
            if seg.turn_index < last_turn {
                return Err(format!("segment {i} goes back in turn order"));
            }
            last_turn = seg.turn_index;
            if seg.kind == SegmentKind::Information {
                let prev = i.checked_sub(1).map(|p| &self.segments[p]);
                match prev {
                    Some(p) if p.kind == SegmentKind::Search && p.turn_index == seg.turn_index => {}
                    _ => return Err(format!("information segment {i} does not follow a search")),
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryBundle {
    pub queries: Vec<String>,
    pub source_turn: u32,
}

impl QueryBundle {
    /// Trims every query and drops empty ones. `None` when nothing is left.
    pub fn from_queries<I, S>(queries: I, source_turn: u32) -> Option<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let queries: Vec<String> = queries
            .into_iter()
            .map(|q| q.as_ref().trim().to_string())
            .filter(|q| !q.is_empty())
            .collect();
        if queries.is_empty() {
            None
        } else {
            Some(Self {
                queries,
                source_turn,
            })
        }
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chunk {
    pub doc_id: String,
    pub title: String,
    pub text: String,
    pub score: f64,
    /// 1-based position within the owning [`ChunkSet`].
    pub rank: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkSet {
    pub query: String,
    pub chunks: Vec<Chunk>,
}

impl ChunkSet {
    pub fn empty(query: impl Into<String>) -> Self {
        Self {
            query: query.into(),
            chunks: Vec::new(),
        }
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.chunks.iter().map(|c| c.doc_id.as_str())
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    /// Ranks run 1..=len and scores never increase with rank.
    pub fn is_well_ranked(&self) -> bool {
        self.chunks
            .iter()
            .enumerate()
            .all(|(i, c)| c.rank as usize == i + 1)
            && self.chunks.windows(2).all(|w| w[0].score >= w[1].score)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub text: String,
    pub source_queries: Vec<String>,
    pub source_doc_ids: Vec<String>,
    pub squeezer_model: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub em: u8,
    pub format: u8,
    pub lambda: f64,
    pub total: f64,
}

impl RewardBreakdown {
    pub fn new(em: bool, format: bool, lambda: f64) -> Self {
        let em = u8::from(em);
        let format = u8::from(format);
        Self {
            em,
            format,
            lambda,
            total: Self::combine(em, format, lambda),
        }
    }

    fn combine(em: u8, format: u8, lambda: f64) -> f64 {
        f64::from(em) + lambda * f64::from(format)
    }

    pub fn is_consistent(&self) -> bool {
        self.em <= 1
            && self.format <= 1
            && self.total == Self::combine(self.em, self.format, self.lambda)
    }
}

/// Counts and truncates tokens for the response and injection limits.
pub trait TokenCounter: Send + Sync {
    fn count(&self, text: &str) -> usize;

    /// Longest prefix of `text` holding at most `max` tokens.
    fn truncate<'a>(&self, text: &'a str, max: usize) -> &'a str;
}

/// Whitespace-delimited word counting. Model-free and deterministic.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceTokens;

impl TokenCounter for WhitespaceTokens {
    fn count(&self, text: &str) -> usize {
        text.split_whitespace().count()
    }

    fn truncate<'a>(&self, text: &'a str, max: usize) -> &'a str {
        if max == 0 {
            return "";
        }
        let mut seen = 0;
        let mut in_word = false;
        for (i, ch) in text.char_indices() {
            if ch.is_whitespace() {
                if in_word {
                    in_word = false;
                    if seen == max {
                        return &text[..i];
                    }
                }
            } else if !in_word {
                in_word = true;
                seen += 1;
            }
        }
        text
    }
}

/// One line of trajectory JSONL output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub question_id: String,
    pub dataset: String,
    pub question: String,
    pub golden_answers: Vec<String>,
    pub status: Status,
    pub segments: Vec<Segment>,
    pub final_answer: Option<String>,
    pub turn_count: u32,
    pub queries_dispatched: u32,
    pub failure: Option<Failure>,
    pub reward: RewardBreakdown,
    pub config: RolloutConfig,
    pub timings_ms: BTreeMap<String, u64>,
}

impl TrajectoryRecord {
    pub fn new(trajectory: &Trajectory, reward: RewardBreakdown, config: &RolloutConfig) -> Self {
        let t = trajectory.timings;
        let timings_ms = BTreeMap::from([
            ("generation".to_string(), t.generation),
            ("retrieval".to_string(), t.retrieval),
            ("squeeze".to_string(), t.squeeze),
            ("total".to_string(), t.total),
        ]);
        Self {
            question_id: trajectory.question.id.clone(),
            dataset: trajectory.question.dataset.clone(),
            question: trajectory.question.text.clone(),
            golden_answers: trajectory.question.golden_answers.clone(),
            status: trajectory.status,
            segments: trajectory.segments.clone(),
            final_answer: trajectory.final_answer.clone(),
            turn_count: trajectory.turn_count,
            queries_dispatched: trajectory.queries_dispatched,
            failure: trajectory.failure.clone(),
            reward,
            config: config.clone(),
            timings_ms,
        }
    }

    pub fn to_trajectory(&self) -> Trajectory {
        let timing = |key: &str| self.timings_ms.get(key).copied().unwrap_or(0);
        Trajectory {
            question: Question {
                id: self.question_id.clone(),
                text: self.question.clone(),
                golden_answers: self.golden_answers.clone(),
                dataset: self.dataset.clone(),
            },
            segments: self.segments.clone(),
            status: self.status,
            final_answer: self.final_answer.clone(),
            turn_count: self.turn_count,
            queries_dispatched: self.queries_dispatched,
            failure: self.failure.clone(),
            timings: Timings {
                generation: timing("generation"),
                retrieval: timing("retrieval"),
                squeeze: timing("squeeze"),
                total: timing("total"),
            },
        }
    }
}

pub fn write_jsonl<W: Write, T: Serialize>(mut out: W, rows: &[T]) -> std::io::Result<()> {
    for row in rows {
        serde_json::to_writer(&mut out, row)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Reads JSONL rows, skipping blank lines. Errors carry the 1-based line number.
pub fn read_jsonl<R: BufRead, T: for<'de> Deserialize<'de>>(
    input: R,
) -> Result<Vec<T>, (usize, String)> {
    let mut rows = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| (i + 1, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push(serde_json::from_str(&line).map_err(|e| (i + 1, e.to_string()))?);
    }
    Ok(rows)
}
