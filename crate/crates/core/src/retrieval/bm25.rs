//! Embedded BM25 inverted index.
//!
//! Scoring uses the non-negative IDF variant
//! `ln(1 + (N - df + 0.5) / (df + 0.5))` and the usual length-normalised term
//! frequency. Every query token occurrence contributes, so repeated query
//! terms weigh more. Ties are broken by ascending `doc_id`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::tokenize::tokenize;
use super::{RetrievalError, Retriever};
use crate::model::{Chunk, ChunkSet};

const INDEX_MAGIC: &str = "expand-squeeze-bm25";
const INDEX_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusDoc {
    pub doc_id: String,
    #[serde(default)]
    pub title: String,
    pub text: String,
}

impl CorpusDoc {
    pub fn new(doc_id: impl Into<String>, title: impl Into<String>, text: impl Into<String>) -> Self {
        Self { doc_id: doc_id.into(), title: title.into(), text: text.into() }
    }

    /// Tokens of the indexed field (title followed by text).
    pub fn tokens(&self) -> Vec<String> {
        let mut tokens = tokenize(&self.title);
        tokens.extend(tokenize(&self.text));
        tokens
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

impl Bm25Params {
    pub fn idf(&self, doc_count: f64, df: f64) -> f64 {
        (1.0 + (doc_count - df + 0.5) / (df + 0.5)).ln()
    }

    pub fn term_weight(&self, idf: f64, tf: f64, doc_len: f64, avg_doc_len: f64) -> f64 {
        idf * (tf * (self.k1 + 1.0)) / (tf + self.k1 * (1.0 - self.b + self.b * doc_len / avg_doc_len))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexStats {
    pub doc_count: usize,
    pub term_count: usize,
    pub avg_doc_len: f64,
    pub build_time_ms: u64,
    /// Lines skipped during ingestion.
    pub rejected: usize,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IngestOptions {
    /// Skip malformed or duplicate lines instead of aborting.
    pub skip_malformed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct Posting {
    doc: u32,
    tf: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Bm25Index {
    params: Bm25Params,
    docs: Vec<CorpusDoc>,
    doc_lens: Vec<u32>,
    postings: BTreeMap<String, Vec<Posting>>,
    total_len: u64,
    fingerprint: String,
    build_time_ms: u64,
    rejected: usize,
}

impl Bm25Index {
    pub fn build(docs: Vec<CorpusDoc>) -> Result<Self, RetrievalError> {
        Self::build_with(docs, Bm25Params::default())
    }

    pub fn build_with(docs: Vec<CorpusDoc>, params: Bm25Params) -> Result<Self, RetrievalError> {
        let started = Instant::now();
        let mut seen = HashSet::with_capacity(docs.len());
        for (i, doc) in docs.iter().enumerate() {
            if !seen.insert(doc.doc_id.as_str()) {
                return Err(RetrievalError::Schema {
                    line: i + 1,
                    reason: format!("duplicate doc_id `{}`", doc.doc_id),
                });
            }
        }

        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        let mut doc_lens = Vec::with_capacity(docs.len());
        let mut total_len = 0u64;
        let mut hasher = Sha256::new();
        hasher.update(format!("{}:{}", params.k1, params.b));
        for (i, doc) in docs.iter().enumerate() {
            for field in [&doc.doc_id, &doc.title, &doc.text] {
                hasher.update(field.as_bytes());
                hasher.update([0u8]);
            }
            let tokens = doc.tokens();
            doc_lens.push(tokens.len() as u32);
            total_len += tokens.len() as u64;
            let mut tf: HashMap<String, u32> = HashMap::new();
            for token in tokens {
                *tf.entry(token).or_default() += 1;
            }
            for (term, count) in tf {
                postings.entry(term).or_default().push(Posting { doc: i as u32, tf: count });
            }
        }
        for list in postings.values_mut() {
            list.sort_unstable_by_key(|p| p.doc);
        }

        Ok(Self {
            params,
            docs,
            doc_lens,
            postings,
            total_len,
            fingerprint: hex::encode(hasher.finalize()),
            build_time_ms: started.elapsed().as_millis() as u64,
            rejected: 0,
        })
    }

    pub fn stats(&self) -> IndexStats {
        IndexStats {
            doc_count: self.docs.len(),
            term_count: self.postings.len(),
            avg_doc_len: self.avg_doc_len(),
            build_time_ms: self.build_time_ms,
            rejected: self.rejected,
        }
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn docs(&self) -> &[CorpusDoc] {
        &self.docs
    }

    /// SHA-256 over the ingested documents and scoring parameters.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn avg_doc_len(&self) -> f64 {
        if self.docs.is_empty() {
            0.0
        } else {
            self.total_len as f64 / self.docs.len() as f64
        }
    }

    /// Top-`k` documents for `query`, by score descending then `doc_id` ascending.
    pub fn search(&self, query: &str, k: usize) -> Result<ChunkSet, RetrievalError> {
        if k == 0 {
            return Err(RetrievalError::InvalidDepth);
        }
        let n = self.docs.len() as f64;
        let avg = self.avg_doc_len();
        let mut scores: HashMap<u32, f64> = HashMap::new();
        for term in tokenize(query) {
            let Some(list) = self.postings.get(&term) else { continue };
            let idf = self.params.idf(n, list.len() as f64);
            for p in list {
                let dl = f64::from(self.doc_lens[p.doc as usize]);
                *scores.entry(p.doc).or_insert(0.0) +=
                    self.params.term_weight(idf, f64::from(p.tf), dl, avg);
            }
        }

        let mut ranked: Vec<(u32, f64)> = scores.into_iter().collect();
        let order = |a: &(u32, f64), b: &(u32, f64)| {
            b.1.total_cmp(&a.1)
                .then_with(|| self.docs[a.0 as usize].doc_id.cmp(&self.docs[b.0 as usize].doc_id))
        };
        if ranked.len() > k {
            ranked.select_nth_unstable_by(k - 1, order);
            ranked.truncate(k);
        }
        ranked.sort_unstable_by(order);

        let chunks = ranked
            .into_iter()
            .enumerate()
            .map(|(i, (doc, score))| {
                let d = &self.docs[doc as usize];
                Chunk {
                    doc_id: d.doc_id.clone(),
                    title: d.title.clone(),
                    text: d.text.clone(),
                    score,
                    rank: i as u32 + 1,
                }
            })
            .collect();
        Ok(ChunkSet { query: query.to_string(), chunks })
    }

    pub fn save(&self, path: &Path) -> Result<(), RetrievalError> {
        let io = |e| RetrievalError::io(path, e);
        let mut out = BufWriter::new(File::create(path).map_err(io)?);
        writeln!(out, "{INDEX_MAGIC} {INDEX_VERSION}").map_err(io)?;
        serde_json::to_writer(&mut out, self)
            .map_err(|e| RetrievalError::IndexFormat(e.to_string()))?;
        out.flush().map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self, RetrievalError> {
        let mut input = BufReader::new(File::open(path).map_err(|e| RetrievalError::io(path, e))?);
        let mut header = String::new();
        input.read_line(&mut header).map_err(|e| RetrievalError::io(path, e))?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some(INDEX_MAGIC) {
            return Err(RetrievalError::IndexFormat("not an index file".into()));
        }
        let version: u32 = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| RetrievalError::IndexFormat("missing version".into()))?;
        if version != INDEX_VERSION {
            return Err(RetrievalError::IndexFormat(format!(
                "unsupported index version {version}, expected {INDEX_VERSION}"
            )));
        }
        serde_json::from_reader(input).map_err(|e| RetrievalError::IndexFormat(e.to_string()))
    }
}

impl Retriever for Bm25Index {
    fn retrieve(&self, query: &str, k: usize) -> Result<ChunkSet, RetrievalError> {
        self.search(query, k)
    }

    fn identity(&self) -> String {
        format!(
            "bm25(k1={},b={}) docs={} sha256={}",
            self.params.k1,
            self.params.b,
            self.docs.len(),
            self.fingerprint
        )
    }
}

/// Reads a `{doc_id, title, text}` JSONL corpus and builds an index over it.
pub fn ingest_corpus(path: &Path, options: IngestOptions) -> Result<Bm25Index, RetrievalError> {
    let file = File::open(path).map_err(|e| RetrievalError::io(path, e))?;
    let mut docs = Vec::new();
    let mut seen = HashSet::new();
    let mut rejected = 0;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| RetrievalError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<CorpusDoc>(&line)
            .map_err(|e| e.to_string())
            .and_then(|doc| {
                if seen.contains(&doc.doc_id) {
                    Err(format!("duplicate doc_id `{}`", doc.doc_id))
                } else {
                    Ok(doc)
                }
            });
        match parsed {
            Ok(doc) => {
                seen.insert(doc.doc_id.clone());
                docs.push(doc);
            }
            Err(reason) if options.skip_malformed => {
                tracing::warn!(line = i + 1, %reason, "skipping corpus line");
                rejected += 1;
            }
            Err(reason) => return Err(RetrievalError::Schema { line: i + 1, reason }),
        }
    }
    let mut index = Bm25Index::build(docs)?;
    index.rejected = rejected;
    Ok(index)
}
