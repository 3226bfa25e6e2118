use std::collections::{BTreeMap, VecDeque};

use parking_lot::Mutex;

use super::{finish_generation, GatewayError, GenerationRequest, GenerationResult, LlmGateway};
use crate::model::WhitespaceTokens;

/// Replays canned generations in order and records every request.
#[derive(Debug)]
pub struct ScriptedGateway {
    label: String,
    script: Mutex<VecDeque<String>>,
    requests: Mutex<Vec<GenerationRequest>>,
}

impl ScriptedGateway {
    pub fn new<I, S>(script: I) -> Result<Self, GatewayError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let script: VecDeque<String> = script.into_iter().map(Into::into).collect();
        if script.is_empty() {
            return Err(GatewayError::InvalidRequest("script is empty".into()));
        }
        Ok(Self {
            label: "scripted".into(),
            script: Mutex::new(script),
            requests: Mutex::new(Vec::new()),
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Prompts received so far, in call order.
    pub fn prompts(&self) -> Vec<String> {
        self.requests.lock().iter().map(|r| r.prompt.clone()).collect()
    }

    pub fn requests(&self) -> Vec<GenerationRequest> {
        self.requests.lock().clone()
    }

    pub fn remaining(&self) -> usize {
        self.script.lock().len()
    }
}

impl LlmGateway for ScriptedGateway {
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult, GatewayError> {
        request.check()?;
        self.requests.lock().push(request.clone());
        let raw = self.script.lock().pop_front().ok_or_else(|| GatewayError::Provider {
            status: None,
            body: "script exhausted".into(),
        })?;
        let (text, stop_reason) = finish_generation(&raw, request, &WhitespaceTokens, false);
        Ok(GenerationResult { text, stop_reason, latency_ms: 0 })
    }

    fn model_label(&self) -> String {
        self.label.clone()
    }
}

/// One [`ScriptedGateway`] per session, so concurrent rollouts each replay
/// their own script deterministically.
#[derive(Debug)]
pub struct ScriptBook {
    label: String,
    scripts: BTreeMap<String, ScriptedGateway>,
}

impl ScriptBook {
    pub fn new(label: impl Into<String>) -> Self {
        Self { label: label.into(), scripts: BTreeMap::new() }
    }

    pub fn insert<I, S>(&mut self, session: impl Into<String>, script: I) -> Result<(), GatewayError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let gateway = ScriptedGateway::new(script)?.with_label(self.label.clone());
        self.scripts.insert(session.into(), gateway);
        Ok(())
    }

    pub fn session(&self, session: &str) -> Option<&ScriptedGateway> {
        self.scripts.get(session)
    }
}

impl LlmGateway for ScriptBook {
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult, GatewayError> {
        let session = request.session.as_deref().unwrap_or_default();
        let gateway = self.scripts.get(session).ok_or_else(|| GatewayError::Provider {
            status: None,
            body: format!("no script for session `{session}`"),
        })?;
        gateway.generate(request)
    }

    fn model_label(&self) -> String {
        self.label.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::StopReason;
    use crate::model::RolloutConfig;

    fn policy_request(prompt: &str) -> GenerationRequest {
        GenerationRequest::policy(prompt, &RolloutConfig::default(), "scripted")
    }

    #[test]
    fn replays_text_and_reports_stop() {
        let gw = ScriptedGateway::new(["<think>a</think><search>q1 ## q2</search>"]).unwrap();
        let out = gw.generate(&policy_request("prompt")).unwrap();
        assert_eq!(out.text, "<think>a</think><search>q1 ## q2</search>");
        assert_eq!(out.stop_reason, StopReason::StopSequence("</search>".into()));
        assert_eq!(gw.prompts(), vec!["prompt"]);
    }

    #[test]
    fn exhausted_script_is_a_provider_error() {
        let gw = ScriptedGateway::new(["<answer>x</answer>"]).unwrap();
        gw.generate(&policy_request("p")).unwrap();
        let err = gw.generate(&policy_request("p")).unwrap_err();
        assert_eq!(err, GatewayError::Provider { status: None, body: "script exhausted".into() });
    }

    #[test]
    fn empty_script_is_rejected() {
        assert!(ScriptedGateway::new(Vec::<String>::new()).is_err());
    }

    #[test]
    fn text_past_stop_is_cut() {
        let gw = ScriptedGateway::new(["<answer>x</answer> trailing"]).unwrap();
        assert_eq!(gw.generate(&policy_request("p")).unwrap().text, "<answer>x</answer>");
    }

    #[test]
    fn no_stop_means_end_of_sequence() {
        let gw = ScriptedGateway::new(["<think>x"]).unwrap();
        assert_eq!(gw.generate(&policy_request("p")).unwrap().stop_reason, StopReason::EndOfSequence);
    }

    #[test]
    fn book_routes_by_session() {
        let mut book = ScriptBook::new("policy");
        book.insert("a", ["<answer>A</answer>"]).unwrap();
        book.insert("b", ["<answer>B</answer>"]).unwrap();
        let out = book.generate(&policy_request("p").with_session("b")).unwrap();
        assert_eq!(out.text, "<answer>B</answer>");
        assert!(book.generate(&policy_request("p").with_session("c")).is_err());
    }
}
