//! The multi-turn rollout loop and the batch runner.
//!
//! Each turn asks the policy for one generation, parses the action it ends
//! with, and then either retrieves and squeezes (search), stops (answer), or
//! appends the rethink notice (anything else). Every action costs one turn.

use std::io::Write;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use parking_lot::Mutex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::gateway::{GenerationRequest, LlmGateway};
use crate::model::{
    ConfigError, Failure, Question, RolloutConfig, Segment, SegmentKind, Status, TokenCounter, Trajectory,
    WhitespaceTokens, RETHINK_NOTICE,
};
use crate::protocol::{render_information, render_prompt, render_segment, scan_generation, ParsedAction};
use crate::retrieval::{retrieve_bundle, Retriever};
use crate::squeeze::{SqueezeInput, Squeezer};

pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
    }
}

/// A clock that never moves. Makes timings and event timestamps reproducible.
#[derive(Debug, Clone, Copy, Default)]
pub struct FrozenClock(pub u64);

impl Clock for FrozenClock {
    fn now_ms(&self) -> u64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    TurnStarted,
    GenerationReceived,
    SearchDispatched,
    SummaryInjected,
    RethinkInjected,
    Answered,
    Exhausted,
    ErrorAborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutEvent {
    pub question_id: String,
    pub kind: EventKind,
    pub turn: u32,
    pub payload: Value,
    pub timestamp_ms: u64,
}

pub trait EventSink: Send + Sync {
    fn emit(&self, event: RolloutEvent);
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NullSink;

impl EventSink for NullSink {
    fn emit(&self, _event: RolloutEvent) {}
}

/// Keeps every event in memory.
#[derive(Debug, Default)]
pub struct MemorySink {
    events: Mutex<Vec<RolloutEvent>>,
}

impl MemorySink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn events(&self) -> Vec<RolloutEvent> {
        self.events.lock().clone()
    }

    pub fn events_for(&self, question_id: &str) -> Vec<RolloutEvent> {
        self.events.lock().iter().filter(|e| e.question_id == question_id).cloned().collect()
    }
}

impl EventSink for MemorySink {
    fn emit(&self, event: RolloutEvent) {
        self.events.lock().push(event);
    }
}

/// Logs events through `tracing` at debug level.
#[derive(Debug, Clone, Copy, Default)]
pub struct TracingSink;

impl EventSink for TracingSink {
    fn emit(&self, event: RolloutEvent) {
        tracing::debug!(
            question = %event.question_id,
            turn = event.turn,
            kind = ?event.kind,
            payload = %event.payload,
            "rollout event"
        );
    }
}

/// Writes one JSON object per event.
#[derive(Debug)]
pub struct JsonlSink<W: Write + Send> {
    out: Mutex<W>,
}

impl<W: Write + Send> JsonlSink<W> {
    pub fn new(out: W) -> Self {
        Self { out: Mutex::new(out) }
    }

    pub fn into_inner(self) -> W {
        self.out.into_inner()
    }
}

impl<W: Write + Send> EventSink for JsonlSink<W> {
    fn emit(&self, event: RolloutEvent) {
        let mut out = self.out.lock();
        let written = serde_json::to_writer(&mut *out, &event).map_err(std::io::Error::from)
            .and_then(|()| out.write_all(b"\n"));
        if let Err(e) = written {
            tracing::warn!(error = %e, "dropping rollout event");
        }
    }
}

/// Everything a rollout talks to.
#[derive(Clone)]
pub struct Collaborators {
    pub policy: Arc<dyn LlmGateway>,
    pub retriever: Arc<dyn Retriever>,
    pub squeezer: Squeezer,
    pub clock: Arc<dyn Clock>,
    pub sink: Arc<dyn EventSink>,
    pub counter: Arc<dyn TokenCounter>,
    /// Fan the queries of a search out concurrently.
    pub parallel_retrieval: bool,
}

impl Collaborators {
    pub fn new(policy: Arc<dyn LlmGateway>, retriever: Arc<dyn Retriever>, squeezer: Squeezer) -> Self {
        Self {
            policy,
            retriever,
            squeezer,
            clock: Arc::new(SystemClock),
            sink: Arc::new(NullSink),
            counter: Arc::new(WhitespaceTokens),
            parallel_retrieval: true,
        }
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_sink(mut self, sink: Arc<dyn EventSink>) -> Self {
        self.sink = sink;
        self
    }

    pub fn with_parallel_retrieval(mut self, parallel: bool) -> Self {
        self.parallel_retrieval = parallel;
        self
    }
}

struct Run<'a> {
    question: &'a Question,
    collab: &'a Collaborators,
}

impl Run<'_> {
    fn emit(&self, kind: EventKind, turn: u32, payload: Value) {
        self.collab.sink.emit(RolloutEvent {
            question_id: self.question.id.clone(),
            kind,
            turn,
            payload,
            timestamp_ms: self.collab.clock.now_ms(),
        });
    }

    fn timed<T>(&self, slot: &mut u64, f: impl FnOnce() -> T) -> T {
        let start = self.collab.clock.now_ms();
        let out = f();
        *slot += self.collab.clock.now_ms().saturating_sub(start);
        out
    }
}

/// Runs one rollout to completion. Never panics on collaborator errors: a
/// failing gateway or retriever yields a [`Status::Failed`] trajectory.
pub fn run_rollout(question: &Question, cfg: &RolloutConfig, collab: &Collaborators) -> Trajectory {
    let run = Run { question, collab };
    let started = collab.clock.now_ms();
    let mut traj = Trajectory::new(question.clone());
    let head = render_prompt(question, cfg);
    let mut context = String::new();

    for turn in 0..cfg.max_turns {
        run.emit(EventKind::TurnStarted, turn, Value::Null);
        traj.turn_count = turn + 1;

        let request = GenerationRequest::policy(format!("{head}{context}"), cfg, collab.policy.model_label())
            .with_session(question.id.clone());
        let generated = run.timed(&mut traj.timings.generation, || collab.policy.generate(&request));
        let generated = match generated {
            Ok(g) => g,
            Err(e) => return abort(&run, traj, turn, format!("policy: {e}"), started),
        };
        run.emit(
            EventKind::GenerationReceived,
            turn,
            json!({ "text": generated.text, "stop_reason": generated.stop_reason }),
        );

        let scan = scan_generation(&generated.text, turn);
        context.push_str(&generated.text[..scan.consumed]);
        let mut action = scan.action;
        // Information blocks are reserved for the runtime.
        if scan.segments.iter().any(|s| s.kind == SegmentKind::Information) {
            action = ParsedAction::Malformed("policy emitted a reserved <information> block".into());
        }
        for segment in scan.segments {
            // A rejected generation keeps its text but requests no action.
            let demote = segment.kind == SegmentKind::Information
                || (action.is_malformed() && matches!(segment.kind, SegmentKind::Search | SegmentKind::Answer));
            if demote {
                traj.segments.push(Segment::new(SegmentKind::Raw, render_segment(&segment), turn));
            } else {
                traj.segments.push(segment);
            }
        }

        match action {
            ParsedAction::Search(mut bundle) => {
                let limit = cfg.max_bundle as usize;
                if bundle.len() > limit {
                    tracing::warn!(question = %question.id, turn, requested = bundle.len(), limit, "truncating query bundle");
                    bundle.queries.truncate(limit);
                }
                run.emit(EventKind::SearchDispatched, turn, json!({ "queries": bundle.queries }));
                let retrieved = run.timed(&mut traj.timings.retrieval, || {
                    retrieve_bundle(collab.retriever.as_ref(), &bundle, cfg.top_k as usize, collab.parallel_retrieval)
                });
                let chunk_sets = match retrieved {
                    Ok(sets) => sets,
                    Err(e) => return abort(&run, traj, turn, format!("retrieval: {e}"), started),
                };
                traj.queries_dispatched += bundle.len() as u32;

                let squeezed = run.timed(&mut traj.timings.squeeze, || {
                    SqueezeInput::new(bundle.queries.clone(), chunk_sets, cfg.squeezer_input_budget as usize)
                        .and_then(|input| {
                            collab.squeezer.squeeze(&input, cfg.retrieved_token_limit as usize, Some(&question.id))
                        })
                });
                let summary = match squeezed {
                    Ok(s) => s,
                    Err(e) => return abort(&run, traj, turn, format!("squeezer: {e}"), started),
                };
                context.push_str(&render_information(&summary));
                run.emit(
                    EventKind::SummaryInjected,
                    turn,
                    json!({ "summary": summary.text, "doc_ids": summary.source_doc_ids }),
                );
                traj.segments.push(Segment::new(SegmentKind::Information, summary.text, turn));
            }
            ParsedAction::Answer(answer) => {
                run.emit(EventKind::Answered, turn, json!({ "answer": answer }));
                traj.final_answer = Some(answer);
                traj.status = Status::Answered;
                traj.timings.total = collab.clock.now_ms().saturating_sub(started);
                return traj;
            }
            ParsedAction::Malformed(reason) => {
                context.push_str(RETHINK_NOTICE);
                traj.segments.push(Segment::new(SegmentKind::RethinkNotice, RETHINK_NOTICE, turn));
                run.emit(EventKind::RethinkInjected, turn, json!({ "reason": reason }));
            }
        }
    }

    run.emit(EventKind::Exhausted, cfg.max_turns.saturating_sub(1), Value::Null);
    traj.status = Status::Exhausted;
    traj.timings.total = collab.clock.now_ms().saturating_sub(started);
    traj
}

fn abort(run: &Run<'_>, mut traj: Trajectory, turn: u32, message: String, started: u64) -> Trajectory {
    tracing::warn!(question = %run.question.id, turn, %message, "rollout aborted");
    run.emit(EventKind::ErrorAborted, turn, json!({ "error": message }));
    traj.status = Status::Failed;
    traj.failure = Some(Failure { turn, message });
    traj.timings.total = run.collab.clock.now_ms().saturating_sub(started);
    traj
}

/// Checks that one trajectory's events follow the rollout state machine.
pub fn check_event_path(events: &[RolloutEvent]) -> Result<(), String> {
    use EventKind::*;
    let mut prev: Option<EventKind> = None;
    for (i, e) in events.iter().enumerate() {
        let ok = match (prev, e.kind) {
            (None, TurnStarted) => true,
            (Some(TurnStarted), GenerationReceived | ErrorAborted) => true,
            (Some(GenerationReceived), SearchDispatched | Answered | RethinkInjected) => true,
            (Some(SearchDispatched), SummaryInjected | ErrorAborted) => true,
            (Some(SummaryInjected | RethinkInjected), TurnStarted | Exhausted) => true,
            _ => false,
        };
        if !ok {
            return Err(format!("event {i}: {:?} cannot follow {prev:?}", e.kind));
        }
        prev = Some(e.kind);
    }
    match prev {
        Some(Answered | Exhausted | ErrorAborted) => Ok(()),
        other => Err(format!("event stream ends in non-terminal state {other:?}")),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub config: RolloutConfig,
    pub retriever: String,
    pub policy_model: String,
    pub squeezer_model: String,
    pub questions: usize,
    pub parallelism: usize,
    pub answered: usize,
    pub exhausted: usize,
    pub failed: usize,
    pub started_at_ms: u64,
    pub wall_clock_ms: u64,
}

#[derive(Debug, Clone)]
pub struct BatchOutput {
    /// In input order.
    pub trajectories: Vec<Trajectory>,
    pub manifest: RunManifest,
}

/// SHA-256 of the config's canonical JSON form.
pub fn config_hash(cfg: &RolloutConfig) -> String {
    let json = serde_json::to_string(cfg).expect("config serializes");
    hex::encode(Sha256::digest(json.as_bytes()))
}

/// Runs every question with at most `parallelism` rollouts in flight.
/// Individual failures are recorded in their trajectories; the batch itself
/// only fails on invalid configuration.
pub fn run_batch(
    questions: &[Question],
    cfg: &RolloutConfig,
    collab: &Collaborators,
    parallelism: usize,
) -> Result<BatchOutput, ConfigError> {
    cfg.validate()?;
    if parallelism == 0 {
        return Err(ConfigError::new("parallelism", "must be at least 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| ConfigError::new("parallelism", e.to_string()))?;
    let started = collab.clock.now_ms();
    let wall = std::time::Instant::now();
    let trajectories: Vec<Trajectory> =
        pool.install(|| questions.par_iter().map(|q| run_rollout(q, cfg, collab)).collect());

    let count = |s: Status| trajectories.iter().filter(|t| t.status == s).count();
    let manifest = RunManifest {
        config_hash: config_hash(cfg),
        config: cfg.clone(),
        retriever: collab.retriever.identity(),
        policy_model: collab.policy.model_label(),
        squeezer_model: collab.squeezer.model_label(),
        questions: questions.len(),
        parallelism,
        answered: count(Status::Answered),
        exhausted: count(Status::Exhausted),
        failed: count(Status::Failed),
        started_at_ms: started,
        wall_clock_ms: wall.elapsed().as_millis() as u64,
    };
    Ok(BatchOutput { trajectories, manifest })
}
