mod common;

use std::sync::Arc;
use std::time::Duration;

use common::{chat, prompt_of, scripted_llm, MockServer, Reply};
use expand_squeeze::gateway::{
    GatewayError, GenerationRequest, LlmGateway, OpenAiConfig, OpenAiGateway, StopReason,
};
use expand_squeeze::retrieval::{RemoteRetriever, RetrievalError, Retriever};
use expand_squeeze::reward::total_reward;
use expand_squeeze::rollout::{run_rollout, Collaborators};
use expand_squeeze::squeeze::Squeezer;
use expand_squeeze::testkit::{case_study_index, winner_case};
use expand_squeeze::{RolloutConfig, Status};
use serde_json::json;

fn gateway(url: &str) -> OpenAiGateway {
    OpenAiGateway::new(OpenAiConfig {
        base_url: format!("{url}/v1"),
        model: "mock".into(),
        initial_backoff_ms: 1,
        max_backoff_ms: 5,
        timeout_secs: 5,
        ..OpenAiConfig::default()
    })
    .unwrap()
}

fn policy_request(prompt: &str) -> GenerationRequest {
    GenerationRequest::policy(prompt, &RolloutConfig::default(), "mock")
}

#[test]
fn request_body_carries_prompt_stops_and_seed() {
    let server = MockServer::start(|_, _| chat("<answer>x", "stop"));
    let gw = gateway(&server.url);
    let mut req = policy_request("Question: q.\n");
    req.seed = Some(9);
    gw.generate(&req).unwrap();
    let body = &server.bodies()[0];
    assert_eq!(body["model"], "mock");
    assert_eq!(prompt_of(body), "Question: q.\n");
    assert_eq!(body["stop"], json!(["</search>", "</answer>"]));
    assert_eq!(body["max_tokens"], 500);
    assert_eq!(body["seed"], 9);
}

#[test]
fn dropped_stop_sequence_is_restored() {
    let server = MockServer::start(|_, _| chat("<think>t</think><search>a ## b", "stop"));
    let result = gateway(&server.url).generate(&policy_request("p")).unwrap();
    assert_eq!(result.text, "<think>t</think><search>a ## b</search>");
    assert_eq!(result.stop_reason, StopReason::StopSequence("</search>".into()));
}

#[test]
fn length_finish_is_reported() {
    let server = MockServer::start(|_, _| chat("<think>going on and on", "length"));
    let result = gateway(&server.url).generate(&policy_request("p")).unwrap();
    assert_eq!(result.stop_reason, StopReason::Length);
}

#[test]
fn server_errors_and_rate_limits_are_retried() {
    let server = MockServer::start(|n, _| match n {
        0 => Reply::json(500, json!({"error": "boom"})),
        1 => Reply::json(429, json!({"error": "slow down"})).with_header("Retry-After", "0"),
        _ => chat("<answer>ok", "stop"),
    });
    let result = gateway(&server.url).generate(&policy_request("p")).unwrap();
    assert_eq!(result.text, "<answer>ok</answer>");
    assert_eq!(server.hits(), 3);
}

#[test]
fn retries_are_bounded() {
    let server = MockServer::start(|_, _| Reply::json(503, json!({"error": "down"})));
    let err = gateway(&server.url).generate(&policy_request("p")).unwrap_err();
    assert!(matches!(err, GatewayError::Transport { attempts: 4, .. }), "{err:?}");
    assert_eq!(server.hits(), 4);
}

#[test]
fn client_errors_are_not_retried() {
    let server = MockServer::start(|_, _| Reply::json(400, json!({"error": "bad model"})));
    let err = gateway(&server.url).generate(&policy_request("p")).unwrap_err();
    assert!(matches!(err, GatewayError::Provider { status: Some(400), .. }));
    assert_eq!(server.hits(), 1);
}

#[test]
fn call_budget_is_enforced() {
    let server = MockServer::start(|_, _| chat("<answer>x", "stop"));
    let gw = OpenAiGateway::new(OpenAiConfig {
        base_url: format!("{}/v1", server.url),
        model: "mock".into(),
        max_calls: Some(2),
        ..OpenAiConfig::default()
    })
    .unwrap();
    gw.generate(&policy_request("p")).unwrap();
    gw.generate(&policy_request("p")).unwrap();
    assert_eq!(gw.generate(&policy_request("p")), Err(GatewayError::BudgetExceeded { limit: 2 }));
    assert_eq!(server.hits(), 2);
}

#[test]
fn api_key_is_sent_as_bearer() {
    let server = MockServer::start(|_, _| chat("<answer>x", "stop"));
    let gw = OpenAiGateway::new(OpenAiConfig {
        base_url: format!("{}/v1", server.url),
        model: "mock".into(),
        api_key: Some("sk-test".into()),
        ..OpenAiConfig::default()
    })
    .unwrap();
    gw.generate(&policy_request("p")).unwrap();
    assert_eq!(server.auth_headers()[0].as_deref(), Some("Bearer sk-test"));
}

#[test]
fn unreachable_endpoint_is_transport_error() {
    let gw = OpenAiGateway::new(OpenAiConfig {
        base_url: "http://127.0.0.1:9/v1".into(),
        model: "m".into(),
        max_retries: 1,
        initial_backoff_ms: 1,
        timeout_secs: 2,
        ..OpenAiConfig::default()
    })
    .unwrap();
    assert!(matches!(gw.generate(&policy_request("p")), Err(GatewayError::Transport { attempts: 2, .. })));
}

#[test]
fn remote_retriever_reranks_and_truncates() {
    let server = MockServer::start(|_, body| {
        assert_eq!(body["topk"], 2);
        Reply::json(
            200,
            json!({"results": [
                {"doc_id": "b", "title": "B", "text": "tb", "score": 1.0},
                {"doc_id": "a", "title": "A", "text": "ta", "score": 1.0},
                {"doc_id": "c", "text": "tc", "score": 3.0},
            ]}),
        )
    });
    let r = RemoteRetriever::new(format!("{}/retrieve", server.url), Duration::from_secs(5)).unwrap();
    let set = r.retrieve("q", 2).unwrap();
    let ids: Vec<_> = set.doc_ids().collect();
    assert_eq!(ids, ["c", "a"]);
    assert_eq!(set.chunks[0].rank, 1);
    assert_eq!(set.chunks[0].title, "");
    assert!(set.is_well_ranked());
}

#[test]
fn remote_retriever_maps_errors() {
    let server = MockServer::start(|n, _| match n {
        0 => Reply::json(503, json!({"error": "loading"})),
        _ => Reply::json(500, json!({"error": "boom"})),
    });
    let r = RemoteRetriever::new(server.url.clone(), Duration::from_secs(5)).unwrap();
    assert!(matches!(r.retrieve("q", 3), Err(RetrievalError::IndexNotBuilt)));
    assert!(matches!(r.retrieve("q", 3), Err(RetrievalError::Remote { status: 500, .. })));
    assert!(matches!(r.retrieve("q", 0), Err(RetrievalError::InvalidDepth)));
}

#[test]
fn rollout_over_http_endpoints() {
    let server = MockServer::start(scripted_llm);
    let policy = Arc::new(gateway(&server.url));
    let squeezer = Squeezer::new(Arc::new(gateway(&server.url)));
    let collab = Collaborators::new(policy, Arc::new(case_study_index()), squeezer);
    let cfg = RolloutConfig::default();
    let traj = run_rollout(&winner_case().question, &cfg, &collab);
    assert_eq!(traj.status, Status::Answered, "{traj:?}");
    assert_eq!(traj.final_answer.as_deref(), Some("YG Entertainment"));
    assert_eq!(total_reward(&traj, &cfg).total, 1.2);
    assert_eq!(server.hits(), 3);
}
