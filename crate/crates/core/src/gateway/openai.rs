//! Blocking client for OpenAI-compatible `/chat/completions` endpoints.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use parking_lot::{Condvar, Mutex};
use reqwest::blocking::Client;
use reqwest::header::RETRY_AFTER;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{finish_generation, GatewayError, GenerationRequest, GenerationResult, LlmGateway};
use crate::model::WhitespaceTokens;

#[derive(Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct OpenAiConfig {
    /// Base URL up to and excluding `/chat/completions`, e.g. `http://localhost:8000/v1`.
    pub base_url: String,
    #[serde(skip_serializing)]
    pub api_key: Option<String>,
    pub model: String,
    pub max_retries: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
    pub timeout_secs: u64,
    /// Hard cap on the number of requests this gateway will issue.
    pub max_calls: Option<u64>,
    pub max_in_flight: usize,
}

impl Default for OpenAiConfig {
    fn default() -> Self {
        Self {
            base_url: "http://localhost:8000/v1".into(),
            api_key: None,
            model: String::new(),
            max_retries: 3,
            initial_backoff_ms: 500,
            max_backoff_ms: 8_000,
            timeout_secs: 120,
            max_calls: None,
            max_in_flight: 16,
        }
    }
}

impl fmt::Debug for OpenAiConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OpenAiConfig")
            .field("base_url", &self.base_url)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .field("model", &self.model)
            .field("max_retries", &self.max_retries)
            .field("max_calls", &self.max_calls)
            .field("max_in_flight", &self.max_in_flight)
            .finish()
    }
}

impl OpenAiConfig {
    /// Reads `{PREFIX}_BASE_URL`, `{PREFIX}_MODEL` and optionally
    /// `{PREFIX}_API_KEY`. `None` unless both URL and model are set.
    pub fn from_env(prefix: &str) -> Option<Self> {
        let var = |name: &str| std::env::var(format!("{prefix}_{name}")).ok().filter(|v| !v.is_empty());
        Some(Self {
            base_url: var("BASE_URL")?,
            model: var("MODEL")?,
            api_key: var("API_KEY"),
            ..Self::default()
        })
    }
}

/// Counting gate bounding concurrent requests.
#[derive(Debug)]
struct InFlight {
    limit: usize,
    active: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a InFlight);

impl InFlight {
    fn new(limit: usize) -> Self {
        Self { limit: limit.max(1), active: Mutex::new(0), freed: Condvar::new() }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut active = self.active.lock();
        while *active >= self.limit {
            self.freed.wait(&mut active);
        }
        *active += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.active.lock() -= 1;
        self.0.freed.notify_one();
    }
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: Message,
    finish_reason: Option<String>,
}

#[derive(Debug, Deserialize)]
struct Message {
    content: Option<String>,
}

#[derive(Debug)]
pub struct OpenAiGateway {
    config: OpenAiConfig,
    client: Client,
    calls: AtomicU64,
    in_flight: InFlight,
}

enum Attempt {
    Done(Value),
    Retry(String, Option<Duration>),
    Fail(GatewayError),
}

impl OpenAiGateway {
    pub fn new(config: OpenAiConfig) -> Result<Self, GatewayError> {
        let client = Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| GatewayError::Transport { attempts: 0, message: e.to_string() })?;
        let in_flight = InFlight::new(config.max_in_flight);
        Ok(Self { config, client, calls: AtomicU64::new(0), in_flight })
    }

    pub fn config(&self) -> &OpenAiConfig {
        &self.config
    }

    /// Requests issued so far, including retries.
    pub fn calls_made(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }

    fn body(&self, request: &GenerationRequest) -> Value {
        let model = if request.model.is_empty() { &self.config.model } else { &request.model };
        let mut body = json!({
            "model": model,
            "messages": [{"role": "user", "content": request.prompt}],
            "max_tokens": request.max_tokens,
            "temperature": request.temperature,
        });
        if !request.stop_sequences.is_empty() {
            body["stop"] = json!(request.stop_sequences);
        }
        if let Some(seed) = request.seed {
            body["seed"] = json!(seed);
        }
        body
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let ms = self
            .config
            .initial_backoff_ms
            .saturating_mul(1u64 << attempt.min(16))
            .min(self.config.max_backoff_ms);
        Duration::from_millis(ms)
    }

    fn send_once(&self, body: &Value) -> Attempt {
        if let Some(limit) = self.config.max_calls {
            if self.calls.fetch_add(1, Ordering::SeqCst) >= limit {
                return Attempt::Fail(GatewayError::BudgetExceeded { limit });
            }
        } else {
            self.calls.fetch_add(1, Ordering::SeqCst);
        }
        let mut builder = self.client.post(self.endpoint()).json(body);
        if let Some(key) = &self.config.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = match builder.send() {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(e.to_string(), None),
        };
        let status = response.status();
        let retry_after = response
            .headers()
            .get(RETRY_AFTER)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<u64>().ok())
            .map(Duration::from_secs);
        let text = match response.text() {
            Ok(t) => t,
            Err(e) => return Attempt::Retry(e.to_string(), None),
        };
        if status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error() {
            return Attempt::Retry(format!("status {status}: {text}"), retry_after);
        }
        if !status.is_success() {
            return Attempt::Fail(GatewayError::Provider { status: Some(status.as_u16()), body: text });
        }
        match serde_json::from_str(&text) {
            Ok(v) => Attempt::Done(v),
            Err(e) => Attempt::Fail(GatewayError::Provider {
                status: Some(status.as_u16()),
                body: format!("unparseable response ({e}): {text}"),
            }),
        }
    }
}

/// Providers drop the matched stop sequence from the returned text. Put it
/// back: the stop whose opening tag is still unclosed at the end is the one
/// that fired.
fn restore_stop(text: &str, stops: &[String]) -> Option<String> {
    stops
        .iter()
        .filter_map(|stop| {
            let open = stop.strip_prefix("</").map(|name| format!("<{name}"))?;
            let opened = text.rfind(&open)?;
            match text.rfind(stop.as_str()) {
                Some(closed) if closed > opened => None,
                _ => Some((opened, stop)),
            }
        })
        .max_by_key(|(at, _)| *at)
        .map(|(_, stop)| stop.clone())
}

impl LlmGateway for OpenAiGateway {
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult, GatewayError> {
        request.check()?;
        let body = self.body(request);
        tracing::debug!(endpoint = %self.endpoint(), request = %body, "llm request");
        let _permit = self.in_flight.acquire();
        let started = Instant::now();

        let mut attempt = 0;
        let value = loop {
            match self.send_once(&body) {
                Attempt::Done(v) => break v,
                Attempt::Fail(e) => return Err(e),
                Attempt::Retry(message, retry_after) => {
                    if attempt >= self.config.max_retries {
                        return Err(GatewayError::Transport { attempts: attempt + 1, message });
                    }
                    let wait = retry_after
                        .map(|d| d.min(Duration::from_millis(self.config.max_backoff_ms)))
                        .unwrap_or_else(|| self.backoff(attempt));
                    tracing::warn!(attempt, ?wait, %message, "retrying llm request");
                    std::thread::sleep(wait);
                    attempt += 1;
                }
            }
        };
        tracing::debug!(response = %value, "llm response");

        let parsed: ChatResponse = serde_json::from_value(value).map_err(|e| GatewayError::Provider {
            status: None,
            body: format!("unexpected response shape: {e}"),
        })?;
        let choice = parsed.choices.into_iter().next().ok_or_else(|| GatewayError::Provider {
            status: None,
            body: "response has no choices".into(),
        })?;
        let mut text = choice.message.content.unwrap_or_default();
        let finish = choice.finish_reason.as_deref();
        if finish == Some("stop") {
            if let Some(stop) = restore_stop(&text, &request.stop_sequences) {
                text.push_str(&stop);
            }
        }
        let (text, stop_reason) =
            finish_generation(&text, request, &WhitespaceTokens, finish == Some("length"));
        Ok(GenerationResult { text, stop_reason, latency_ms: started.elapsed().as_millis() as u64 })
    }

    fn model_label(&self) -> String {
        self.config.model.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stops() -> Vec<String> {
        vec!["</search>".into(), "</answer>".into()]
    }

    #[test]
    fn restores_unclosed_search() {
        assert_eq!(restore_stop("<think>x</think><search>a ## b", &stops()).as_deref(), Some("</search>"));
        assert_eq!(restore_stop("<answer>YG", &stops()).as_deref(), Some("</answer>"));
        assert_eq!(restore_stop("plain text", &stops()), None);
        assert_eq!(restore_stop("<search>a</search>", &stops()), None);
    }

    #[test]
    fn debug_redacts_key() {
        let cfg = OpenAiConfig { api_key: Some("sk-secret".into()), ..OpenAiConfig::default() };
        let shown = format!("{cfg:?}");
        assert!(!shown.contains("sk-secret"));
        assert!(shown.contains("<redacted>"));
    }

    #[test]
    fn backoff_doubles_and_caps() {
        let gw = OpenAiGateway::new(OpenAiConfig {
            initial_backoff_ms: 100,
            max_backoff_ms: 350,
            ..OpenAiConfig::default()
        })
        .unwrap();
        assert_eq!(gw.backoff(0), Duration::from_millis(100));
        assert_eq!(gw.backoff(1), Duration::from_millis(200));
        assert_eq!(gw.backoff(2), Duration::from_millis(350));
    }
}
