//! Builds a BM25 index, retrieves a three-query bundle in parallel, and
//! shows how the union of the variants widens recall over any single query.
//!
//! ```sh
//! cargo run --example bm25_retrieval
//! ```

use std::collections::BTreeSet;

use expand_squeeze::retrieval::{recall_at, retrieve_bundle, Bm25Index};
use expand_squeeze::testkit::case_study_docs;
use expand_squeeze::QueryBundle;

pub struct RetrievalDemo {
    pub single_query_recall: f64,
    pub bundle_recall: f64,
    pub top_doc: String,
}

pub fn run_example() -> RetrievalDemo {
    let index = Bm25Index::build(case_study_docs()).expect("unique ids");
    let stats = index.stats();
    println!("{} docs, {} terms, avg length {:.1}", stats.doc_count, stats.term_count, stats.avg_doc_len);

    let bundle = QueryBundle::from_queries(
        ["father of John V, Prince of Anhalt-Zerbst", "Ernest I Prince of Anhalt-Dessau death date"],
        0,
    )
    .expect("non-empty");
    let sets = retrieve_bundle(&index, &bundle, 3, true).expect("retrieval");
    for set in &sets {
        println!("query: {}", set.query);
        for c in &set.chunks {
            println!("  {:>2}. {:<14} {:.3}  {}", c.rank, c.doc_id, c.score, c.title);
        }
    }

    let gold: BTreeSet<String> = ["john-v", "ernest-i"].map(String::from).into();
    let first = QueryBundle::from_queries([bundle.queries[0].as_str()], 0).expect("non-empty");
    let single_query_recall = recall_at(&index, &first, 1, &gold).expect("gold set");
    let bundle_recall = recall_at(&index, &bundle, 1, &gold).expect("gold set");
    println!("recall@1: first query {single_query_recall:.2}, whole bundle {bundle_recall:.2}");

    // Indexes persist to a single file.
    let path = std::env::temp_dir().join(format!("bm25-example-{}.idx", std::process::id()));
    index.save(&path).expect("save");
    let reloaded = Bm25Index::load(&path).expect("load");
    assert_eq!(reloaded.fingerprint(), index.fingerprint());
    let _ = std::fs::remove_file(&path);

    RetrievalDemo { single_query_recall, bundle_recall, top_doc: sets[1].chunks[0].doc_id.clone() }
}

#[allow(dead_code)]
fn main() {
    run_example();
}
