//! HTTP retrieval backend.
//!
//! Speaks `POST {url}` with `{"query": .., "topk": ..}` and expects
//! `{"results": [{"doc_id", "title", "text", "score"}, ..]}`.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{RetrievalError, Retriever};
use crate::model::{Chunk, ChunkSet};

#[derive(Debug, Serialize)]
struct SearchRequest<'a> {
    query: &'a str,
    topk: usize,
}

#[derive(Debug, Deserialize)]
struct SearchResponse {
    results: Vec<RemoteHit>,
}

#[derive(Debug, Deserialize)]
struct RemoteHit {
    doc_id: String,
    #[serde(default)]
    title: String,
    text: String,
    score: f64,
}

#[derive(Debug, Clone)]
pub struct RemoteRetriever {
    url: String,
    client: reqwest::blocking::Client,
}

impl RemoteRetriever {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Result<Self, RetrievalError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| RetrievalError::Transport(e.to_string()))?;
        Ok(Self { url: url.into(), client })
    }
}

impl Retriever for RemoteRetriever {
    fn retrieve(&self, query: &str, k: usize) -> Result<ChunkSet, RetrievalError> {
        if k == 0 {
            return Err(RetrievalError::InvalidDepth);
        }
        let response = self
            .client
            .post(&self.url)
            .json(&SearchRequest { query, topk: k })
            .send()
            .map_err(|e| RetrievalError::Transport(e.to_string()))?;
        let status = response.status();
        if status == reqwest::StatusCode::SERVICE_UNAVAILABLE {
            return Err(RetrievalError::IndexNotBuilt);
        }
        if !status.is_success() {
            let body = response.text().unwrap_or_default();
            return Err(RetrievalError::Remote { status: status.as_u16(), body });
        }
        let mut hits = response
            .json::<SearchResponse>()
            .map_err(|e| RetrievalError::Transport(format!("bad response body: {e}")))?
            .results;
        // The server's order is not trusted; re-rank under the local tie-break.
        hits.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.doc_id.cmp(&b.doc_id)));
        hits.truncate(k);
        let chunks = hits
            .into_iter()
            .enumerate()
            .map(|(i, h)| Chunk {
                doc_id: h.doc_id,
                title: h.title,
                text: h.text,
                score: h.score,
                rank: i as u32 + 1,
            })
            .collect();
        Ok(ChunkSet { query: query.to_string(), chunks })
    }

    fn identity(&self) -> String {
        format!("remote {}", self.url)
    }
}
