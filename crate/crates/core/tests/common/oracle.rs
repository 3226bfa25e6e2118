//! Independent reference implementations and random generators shared by
//! the property tests and the acceptance gate.

use std::collections::{BTreeMap, BTreeSet};

use expand_squeeze::model::{QueryBundle, Segment, SegmentKind};
use expand_squeeze::retrieval::CorpusDoc;
use rand::seq::IndexedRandom;
use rand::Rng;

pub const K1: f64 = 1.2;
pub const B: f64 = 0.75;

fn words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() {
            cur.extend(c.to_lowercase());
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Scores every document against the query from first principles and sorts
/// by score descending, then doc id ascending.
pub fn exhaustive_bm25(docs: &[CorpusDoc], query: &str, k: usize) -> Vec<(String, f64)> {
    let bags: Vec<Vec<String>> = docs.iter().map(|d| [words(&d.title), words(&d.text)].concat()).collect();
    let n = docs.len() as f64;
    let avgdl = bags.iter().map(Vec::len).sum::<usize>() as f64 / n;
    let mut scored = Vec::new();
    for (doc, bag) in docs.iter().zip(&bags) {
        let dl = bag.len() as f64;
        let mut score = 0.0;
        let mut matched = false;
        for term in words(query) {
            let tf = bag.iter().filter(|w| **w == term).count() as f64;
            if tf == 0.0 {
                continue;
            }
            matched = true;
            let df = bags.iter().filter(|b| b.contains(&term)).count() as f64;
            let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
            score += idf * (tf * (K1 + 1.0)) / (tf + K1 * (1.0 - B + B * dl / avgdl));
        }
        if matched {
            scored.push((doc.doc_id.clone(), score));
        }
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(k);
    scored
}

const VOCAB: [&str; 24] = [
    "alpha", "beta", "gamma", "delta", "river", "stone", "crown", "prince", "album", "group", "debut", "father",
    "death", "city", "north", "south", "band", "label", "year", "king", "music", "film", "war", "song",
];

pub fn random_text<R: Rng>(rng: &mut R, max_words: usize) -> String {
    let n = rng.random_range(1..=max_words);
    (0..n).map(|_| *VOCAB.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

/// A corpus of up to `max_docs` documents over a small shared vocabulary,
/// so term overlaps and exact score ties are common.
pub fn random_corpus<R: Rng>(rng: &mut R, max_docs: usize) -> Vec<CorpusDoc> {
    let n = rng.random_range(1..=max_docs);
    (0..n)
        .map(|i| {
            let title = if rng.random_bool(0.5) { random_text(rng, 3) } else { String::new() };
            CorpusDoc::new(format!("d{:03}", (i * 7919) % 1000), title, random_text(rng, 12))
        })
        .collect()
}

pub fn random_bundle<R: Rng>(rng: &mut R, max_queries: usize) -> QueryBundle {
    let n = rng.random_range(1..=max_queries);
    QueryBundle::from_queries((0..n).map(|_| random_text(rng, 4)), 0).unwrap()
}

pub fn random_gold<R: Rng>(rng: &mut R, docs: &[CorpusDoc]) -> BTreeSet<String> {
    let n = rng.random_range(1..=docs.len().min(4));
    (0..n).map(|_| docs.choose(rng).unwrap().doc_id.clone()).collect()
}

const CONTENT_CHARS: &[char] = &[
    'a', 'b', 'z', 'Q', '0', '7', ' ', ' ', '\n', '#', '#', '.', ',', '?', '\'', '/', '-', '<', '>', 'é', '漢',
];

fn random_content<R: Rng>(rng: &mut R, min: usize) -> String {
    loop {
        let len = rng.random_range(min..12);
        let s: String = (0..len).map(|_| *CONTENT_CHARS.choose(rng).unwrap()).collect();
        if is_tag_free(&s) {
            return s;
        }
    }
}

fn is_tag_free(s: &str) -> bool {
    ["think", "search", "answer", "information"]
        .iter()
        .all(|t| !s.contains(&format!("<{t}>")) && !s.contains(&format!("</{t}>")))
}

/// A well-formed sequence of tagged blocks with free text between them.
pub fn random_segments<R: Rng>(rng: &mut R, turn: u32) -> Vec<Segment> {
    use SegmentKind::*;
    let n = rng.random_range(1..8);
    let mut out: Vec<Segment> = Vec::new();
    for _ in 0..n {
        let kind = *[Think, Search, Answer, Information, Raw].choose(rng).unwrap();
        let raw_after_raw = kind == Raw && out.last().is_some_and(|s| s.kind == Raw);
        if raw_after_raw {
            continue;
        }
        let content = if kind == Raw {
            // Free text survives only if it is not blank.
            let mut c = random_content(rng, 1);
            if c.trim().is_empty() {
                c.push('x');
            }
            c
        } else {
            random_content(rng, 0)
        };
        out.push(Segment::new(kind, content, turn));
    }
    out
}

const MUTATIONS: [&str; 10] =
    ["<think>", "</think>", "<search>", "</search>", "<answer>", "</answer>", "<information>", "</information>", "<", "##"];

/// Inserts tag fragments, deletes spans, or truncates.
pub fn mutate<R: Rng>(rng: &mut R, text: &str) -> String {
    let mut chars: Vec<char> = text.chars().collect();
    for _ in 0..rng.random_range(1..4) {
        let at = rng.random_range(0..=chars.len());
        match rng.random_range(0..3) {
            0 => {
                let frag = MUTATIONS.choose(rng).unwrap();
                chars.splice(at..at, frag.chars());
            }
            1 if !chars.is_empty() => {
                let end = (at + rng.random_range(1..6)).min(chars.len());
                chars.drain(at.min(end)..end);
            }
            _ => chars.truncate(at),
        }
    }
    chars.into_iter().collect()
}

pub fn strip_ws(s: &str) -> String {
    s.chars().filter(|c| !c.is_whitespace()).collect()
}

/// Normalization cases: (prediction, golds, expected em).
pub fn reward_fixture() -> Vec<(&'static str, Vec<&'static str>, u8)> {
    vec![
        ("YG Entertainment", vec!["YG Entertainment"], 1),
        ("yg entertainment", vec!["YG Entertainment"], 1),
        ("The YG Entertainment", vec!["YG Entertainment"], 1),
        ("YG Entertainment.", vec!["YG Entertainment"], 1),
        ("  YG   Entertainment ", vec!["YG Entertainment"], 1),
        ("SM Entertainment", vec!["YG Entertainment"], 0),
        ("YG", vec!["YG Entertainment"], 0),
        ("12 June 1516", vec!["12 June 1516"], 1),
        ("12 june, 1516", vec!["12 June 1516"], 1),
        ("June 12 1516", vec!["12 June 1516"], 0),
        ("an apple", vec!["apple"], 1),
        ("a apple", vec!["the apple"], 1),
        ("theater", vec!["atheater"], 0),
        ("the the the", vec![""], 1),
        ("Paris", vec!["London", "paris"], 1),
        ("Paris", vec!["London", "Rome"], 0),
        ("U.S.A.", vec!["USA"], 1),
        ("U.S.A.", vec!["U S A"], 0),
        ("rock-n-roll", vec!["rocknroll"], 1),
        ("O'Brien", vec!["OBrien"], 1),
        ("anne", vec!["an ne"], 0),
        ("A Tale of Two Cities", vec!["tale of two cities"], 1),
        ("", vec!["answer"], 0),
        ("", vec!["The"], 1),
        ("Ångström", vec!["ångström"], 1),
    ]
}

/// Counts of each label in a slice, for ratio checks.
pub fn tally<T: Ord + Clone>(items: &[T]) -> BTreeMap<T, usize> {
    let mut m = BTreeMap::new();
    for i in items {
        *m.entry(i.clone()).or_insert(0) += 1;
    }
    m
}
