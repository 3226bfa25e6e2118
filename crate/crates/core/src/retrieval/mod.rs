//! The search engine: an embedded BM25 index, an HTTP backend, and parallel
//! retrieval over a bundle of query variants.

mod bm25;
mod remote;
mod tokenize;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use rayon::prelude::*;
use thiserror::Error;

pub use bm25::{ingest_corpus, Bm25Index, Bm25Params, CorpusDoc, IndexStats, IngestOptions};
pub use remote::RemoteRetriever;
pub use tokenize::tokenize;

use crate::model::{ChunkSet, QueryBundle};

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corpus line {line}: {reason}")]
    Schema { line: usize, reason: String },
    #[error("index format: {0}")]
    IndexFormat(String),
    #[error("index not built")]
    IndexNotBuilt,
    #[error("retrieval depth must be at least 1")]
    InvalidDepth,
    #[error("gold document set is empty")]
    EmptyGoldSet,
    #[error("retrieval transport: {0}")]
    Transport(String),
    #[error("retrieval service returned {status}: {body}")]
    Remote { status: u16, body: String },
    #[error("query {index}: {source}")]
    Query {
        index: usize,
        #[source]
        source: Box<RetrievalError>,
    },
}

impl RetrievalError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }
}

/// A search engine returning the `k` most relevant chunks for a query.
pub trait Retriever: Send + Sync {
    fn retrieve(&self, query: &str, k: usize) -> Result<ChunkSet, RetrievalError>;

    /// Stable description of the backend and corpus, recorded in run manifests.
    fn identity(&self) -> String;
}

/// A retriever whose index is installed after construction.
#[derive(Debug, Default)]
pub struct IndexSlot {
    index: OnceLock<Bm25Index>,
}

impl IndexSlot {
    pub fn new() -> Self {
        Self::default()
    }

    /// Installs the index. Fails, returning it, if one is already present.
    pub fn install(&self, index: Bm25Index) -> Result<(), Bm25Index> {
        self.index.set(index)
    }

    pub fn get(&self) -> Option<&Bm25Index> {
        self.index.get()
    }
}

impl Retriever for IndexSlot {
    fn retrieve(&self, query: &str, k: usize) -> Result<ChunkSet, RetrievalError> {
        self.index.get().ok_or(RetrievalError::IndexNotBuilt)?.search(query, k)
    }

    fn identity(&self) -> String {
        self.index.get().map_or_else(|| "unbuilt".to_string(), Retriever::identity)
    }
}

/// Retrieves every query of `bundle`, returning one chunk set per query in
/// bundle order. With `parallel` the queries fan out over the rayon pool; the
/// result is the same either way.
pub fn retrieve_bundle(
    retriever: &dyn Retriever,
    bundle: &QueryBundle,
    k: usize,
    parallel: bool,
) -> Result<Vec<ChunkSet>, RetrievalError> {
    let results: Vec<Result<ChunkSet, RetrievalError>> = if parallel && bundle.len() > 1 {
        bundle.queries.par_iter().map(|q| retriever.retrieve(q, k)).collect()
    } else {
        bundle.queries.iter().map(|q| retriever.retrieve(q, k)).collect()
    };
    results
        .into_iter()
        .enumerate()
        .map(|(index, r)| r.map_err(|e| RetrievalError::Query { index, source: Box::new(e) }))
        .collect()
}

/// Fraction of `gold` covered by the union of retrieved documents.
pub fn union_recall(chunk_sets: &[ChunkSet], gold: &BTreeSet<String>) -> Result<f64, RetrievalError> {
    if gold.is_empty() {
        return Err(RetrievalError::EmptyGoldSet);
    }
    let retrieved: BTreeSet<&str> = chunk_sets.iter().flat_map(ChunkSet::doc_ids).collect();
    let hit = gold.iter().filter(|g| retrieved.contains(g.as_str())).count();
    Ok(hit as f64 / gold.len() as f64)
}

/// Recall of the bundle's union of top-`k` results against `gold`.
pub fn recall_at(
    retriever: &dyn Retriever,
    bundle: &QueryBundle,
    k: usize,
    gold: &BTreeSet<String>,
) -> Result<f64, RetrievalError> {
    if gold.is_empty() {
        return Err(RetrievalError::EmptyGoldSet);
    }
    let sets = retrieve_bundle(retriever, bundle, k, false)?;
    union_recall(&sets, gold)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn index() -> Bm25Index {
        Bm25Index::build(vec![
            CorpusDoc::new("d1", "WINNER", "boy group formed by YG Entertainment"),
            CorpusDoc::new("d2", "2014 S/S", "debut album of WINNER"),
            CorpusDoc::new("d3", "YG Entertainment", "record label founded by Yang Hyun-suk"),
        ])
        .unwrap()
    }

    fn bundle(qs: &[&str]) -> QueryBundle {
        QueryBundle::from_queries(qs.iter().copied(), 0).unwrap()
    }

    #[test]
    fn unbuilt_slot_errors() {
        let slot = IndexSlot::new();
        assert!(matches!(slot.retrieve("x", 3), Err(RetrievalError::IndexNotBuilt)));
        slot.install(index()).unwrap();
        assert_eq!(slot.retrieve("WINNER", 3).unwrap().len(), 2);
    }

    #[test]
    fn bundle_preserves_order() {
        let idx = index();
        let b = bundle(&["label founder", "debut album", "boy group"]);
        let sets = retrieve_bundle(&idx, &b, 5, true).unwrap();
        assert_eq!(sets.len(), 3);
        for (set, q) in sets.iter().zip(&b.queries) {
            assert_eq!(&set.query, q);
            assert!(set.len() <= 5);
        }
    }

    #[test]
    fn single_query_bundle_equals_retrieve() {
        let idx = index();
        let sets = retrieve_bundle(&idx, &bundle(&["WINNER album"]), 2, true).unwrap();
        assert_eq!(sets, vec![idx.search("WINNER album", 2).unwrap()]);
    }

    #[test]
    fn errors_carry_query_index() {
        let idx = index();
        let err = retrieve_bundle(&idx, &bundle(&["a", "b"]), 0, true).unwrap_err();
        assert!(matches!(err, RetrievalError::Query { index: 0, .. }));
    }

    #[test]
    fn recall_bounds() {
        let idx = index();
        let gold: BTreeSet<String> = ["d1".to_string(), "d2".to_string()].into();
        assert_eq!(recall_at(&idx, &bundle(&["WINNER"]), 5, &gold).unwrap(), 1.0);
        assert_eq!(recall_at(&idx, &bundle(&["Yang Hyun-suk"]), 5, &gold).unwrap(), 0.0);
        assert!(matches!(
            recall_at(&idx, &bundle(&["x"]), 5, &BTreeSet::new()),
            Err(RetrievalError::EmptyGoldSet)
        ));
    }
}
