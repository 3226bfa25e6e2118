//! Uniform access to chat-style LLMs.
//!
//! Generation is segment-granular: a request carries stop sequences and the
//! backend returns the continuation up to and including the first one that
//! fired. [`OpenAiGateway`] talks to any OpenAI-compatible endpoint;
//! [`ScriptedGateway`] and [`ScriptBook`] replay canned generations for tests.

mod openai;
mod scripted;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use openai::{OpenAiConfig, OpenAiGateway};
pub use scripted::{ScriptBook, ScriptedGateway};

use crate::model::{RolloutConfig, TokenCounter};
use crate::protocol::POLICY_STOP_SEQUENCES;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: String,
    pub stop_sequences: Vec<String>,
    pub max_tokens: u32,
    pub temperature: f64,
    pub model: String,
    pub seed: Option<u64>,
    /// Caller-chosen routing key, typically the question id of the rollout.
    pub session: Option<String>,
}

impl GenerationRequest {
    /// A policy-model request: stops at `</search>` or `</answer>` and is
    /// capped at the configured response length.
    pub fn policy(prompt: impl Into<String>, cfg: &RolloutConfig, model: impl Into<String>) -> Self {
        Self {
            prompt: prompt.into(),
            stop_sequences: POLICY_STOP_SEQUENCES.iter().map(|s| s.to_string()).collect(),
            max_tokens: cfg.response_token_limit,
            temperature: cfg.temperature,
            model: model.into(),
            seed: cfg.seed,
            session: None,
        }
    }

    /// A plain completion request with no stop sequences.
    pub fn completion(prompt: impl Into<String>, max_tokens: u32, model: impl Into<String>) -> Self {
        Self {
            prompt: prompt.into(),
            stop_sequences: Vec::new(),
            max_tokens,
            temperature: 0.0,
            model: model.into(),
            seed: None,
            session: None,
        }
    }

    pub fn with_session(mut self, session: impl Into<String>) -> Self {
        self.session = Some(session.into());
        self
    }

    pub(crate) fn check(&self) -> Result<(), GatewayError> {
        if self.prompt.is_empty() {
            return Err(GatewayError::InvalidRequest("empty prompt".into()));
        }
        if self.max_tokens == 0 {
            return Err(GatewayError::InvalidRequest("max_tokens must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    StopSequence(String),
    Length,
    EndOfSequence,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationResult {
    /// Continuation text, ending with the stop sequence when one fired.
    pub text: String,
    pub stop_reason: StopReason,
    pub latency_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GatewayError {
    #[error("transport failed after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("provider error{}: {body}", status.map(|s| format!(" {s}")).unwrap_or_default())]
    Provider { status: Option<u16>, body: String },
    #[error("call budget of {limit} requests exhausted")]
    BudgetExceeded { limit: u64 },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

pub trait LlmGateway: Send + Sync {
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult, GatewayError>;

    /// Model label recorded in summaries and manifests.
    fn model_label(&self) -> String;
}

/// Cuts `text` just after the earliest occurrence of any stop sequence.
/// Returns the kept text and the stop sequence that matched, if any.
pub fn apply_stop_sequences<'a>(text: &'a str, stops: &[String]) -> (&'a str, Option<&'a str>) {
    let mut best: Option<(usize, usize)> = None;
    for stop in stops.iter().filter(|s| !s.is_empty()) {
        if let Some(at) = text.find(stop.as_str()) {
            let end = at + stop.len();
            // Earliest start wins; on equal starts the longer sequence wins.
            if best.is_none_or(|(b_at, b_end)| at < b_at || (at == b_at && end > b_end)) {
                best = Some((at, end));
            }
        }
    }
    match best {
        Some((at, end)) => (&text[..end], Some(&text[at..end])),
        None => (text, None),
    }
}

/// Applies stop sequences and the token budget to a raw continuation.
pub fn finish_generation(
    raw: &str,
    request: &GenerationRequest,
    counter: &dyn TokenCounter,
    provider_hit_length: bool,
) -> (String, StopReason) {
    let (kept, matched) = apply_stop_sequences(raw, &request.stop_sequences);
    let limit = request.max_tokens as usize;
    if counter.count(kept) > limit {
        return (counter.truncate(kept, limit).to_string(), StopReason::Length);
    }
    match matched {
        Some(stop) => (kept.to_string(), StopReason::StopSequence(stop.to_string())),
        None if provider_hit_length => (kept.to_string(), StopReason::Length),
        None => (kept.to_string(), StopReason::EndOfSequence),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::WhitespaceTokens;

    fn stops() -> Vec<String> {
        vec!["</search>".into(), "</answer>".into()]
    }

    #[test]
    fn earliest_stop_wins() {
        let (kept, hit) = apply_stop_sequences("a</answer>b</search>", &stops());
        assert_eq!(kept, "a</answer>");
        assert_eq!(hit, Some("</answer>"));
        let (kept, hit) = apply_stop_sequences("plain", &stops());
        assert_eq!((kept, hit), ("plain", None));
    }

    #[test]
    fn overlong_generation_reports_length() {
        let cfg = RolloutConfig { response_token_limit: 3, ..RolloutConfig::default() };
        let req = GenerationRequest::policy("p", &cfg, "m");
        let (text, reason) = finish_generation("one two three four</search>", &req, &WhitespaceTokens, false);
        assert_eq!(text, "one two three");
        assert_eq!(reason, StopReason::Length);
    }

    #[test]
    fn policy_request_uses_response_limit() {
        let req = GenerationRequest::policy("p", &RolloutConfig::default(), "m");
        assert_eq!(req.max_tokens, 500);
        assert_eq!(req.stop_sequences, stops());
    }
}
