#![allow(dead_code)]

pub mod oracle;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use serde_json::{json, Value};
use tiny_http::{Header, Response, Server};

pub struct Reply {
    pub status: u16,
    pub body: String,
    pub headers: Vec<(&'static str, String)>,
}

impl Reply {
    pub fn json(status: u16, body: Value) -> Self {
        Self { status, body: body.to_string(), headers: vec![] }
    }

    pub fn with_header(mut self, name: &'static str, value: impl Into<String>) -> Self {
        self.headers.push((name, value.into()));
        self
    }
}

/// OpenAI-style chat completion body.
pub fn chat(content: &str, finish_reason: &str) -> Reply {
    Reply::json(
        200,
        json!({"choices": [{"index": 0, "message": {"role": "assistant", "content": content}, "finish_reason": finish_reason}]}),
    )
}

/// A local HTTP server answering every request through `handler(call_index, json_body)`.
pub struct MockServer {
    pub url: String,
    server: Arc<Server>,
    hits: Arc<AtomicUsize>,
    bodies: Arc<Mutex<Vec<Value>>>,
    auth: Arc<Mutex<Vec<Option<String>>>>,
    thread: Option<JoinHandle<()>>,
}

impl MockServer {
    pub fn start<F>(handler: F) -> Self
    where
        F: Fn(usize, &Value) -> Reply + Send + Sync + 'static,
    {
        let server = Arc::new(Server::http("127.0.0.1:0").expect("bind"));
        let url = format!("http://{}", server.server_addr().to_ip().expect("ip address"));
        let hits = Arc::new(AtomicUsize::new(0));
        let bodies = Arc::new(Mutex::new(Vec::new()));
        let auth = Arc::new(Mutex::new(Vec::new()));
        let thread = {
            let (server, hits, bodies, auth) = (server.clone(), hits.clone(), bodies.clone(), auth.clone());
            std::thread::spawn(move || {
                for mut request in server.incoming_requests() {
                    let mut raw = String::new();
                    let _ = request.as_reader().read_to_string(&mut raw);
                    let body: Value = serde_json::from_str(&raw).unwrap_or(Value::Null);
                    let bearer = request
                        .headers()
                        .iter()
                        .find(|h| h.field.equiv("Authorization"))
                        .map(|h| h.value.as_str().to_string());
                    auth.lock().unwrap().push(bearer);
                    bodies.lock().unwrap().push(body.clone());
                    let n = hits.fetch_add(1, Ordering::SeqCst);
                    let reply = handler(n, &body);
                    let mut response = Response::from_string(reply.body).with_status_code(reply.status);
                    response.add_header(Header::from_bytes("Content-Type", "application/json").unwrap());
                    for (name, value) in reply.headers {
                        response.add_header(Header::from_bytes(name, value.as_bytes()).unwrap());
                    }
                    let _ = request.respond(response);
                }
            })
        };
        Self { url, server, hits, bodies, auth, thread: Some(thread) }
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }

    pub fn bodies(&self) -> Vec<Value> {
        self.bodies.lock().unwrap().clone()
    }

    pub fn auth_headers(&self) -> Vec<Option<String>> {
        self.auth.lock().unwrap().clone()
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Text of the single user message in a chat request.
pub fn prompt_of(body: &Value) -> &str {
    body["messages"][0]["content"].as_str().unwrap_or_default()
}

/// One endpoint that plays policy, squeezer and classifier for the
/// case-study question, dropping stop sequences the way real providers do.
pub fn scripted_llm(_: usize, body: &Value) -> Reply {
    let prompt = prompt_of(body);
    if prompt.starts_with("Classify the following") {
        return chat("syntax", "stop");
    }
    if prompt.contains("\nContexts:") {
        return chat("WINNER was formed by YG Entertainment.", "stop");
    }
    let tail = prompt.rsplit_once("Question: ").map_or("", |(_, t)| t);
    if tail.contains("<information>") {
        chat("<think>the information names the agency</think><answer>YG Entertainment", "stop")
    } else {
        chat("<think>find who formed the group</think><search>who formed the boy group WINNER ## WINNER formed by", "stop")
    }
}
