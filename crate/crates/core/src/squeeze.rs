//! Squeezing: the query variants and their retrieved chunk sets are handed
//! to a frozen summarizer model, whose answer becomes the `<information>`
//! block injected into the rollout.

use std::collections::HashSet;
use std::sync::Arc;

use thiserror::Error;

use crate::gateway::{GatewayError, GenerationRequest, LlmGateway};
use crate::model::{Chunk, ChunkSet, Summary, TokenCounter, WhitespaceTokens};
use crate::protocol::render_information;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SqueezeError {
    #[error("squeeze input has no queries")]
    EmptyInput,
    #[error("{queries} queries but {chunk_sets} chunk sets")]
    Misaligned { queries: usize, chunk_sets: usize },
    #[error("squeezer returned an empty summary")]
    SummaryEmpty,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SqueezeInput {
    pub queries: Vec<String>,
    pub chunk_sets: Vec<ChunkSet>,
    /// Token budget for the formatted contexts handed to the squeezer.
    pub token_budget: usize,
}

impl SqueezeInput {
    pub fn new(queries: Vec<String>, chunk_sets: Vec<ChunkSet>, token_budget: usize) -> Result<Self, SqueezeError> {
        if queries.len() != chunk_sets.len() {
            return Err(SqueezeError::Misaligned { queries: queries.len(), chunk_sets: chunk_sets.len() });
        }
        Ok(Self { queries, chunk_sets, token_budget })
    }
}

/// Chunks that made it into the squeezer prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct SqueezeContext<'a> {
    pub docs: Vec<&'a Chunk>,
    /// Chunks skipped because an earlier query already retrieved the document.
    pub duplicates: usize,
    /// Whole chunks dropped from the tail to fit the token budget.
    pub dropped: usize,
}

fn format_doc(index: usize, chunk: &Chunk) -> String {
    if chunk.title.is_empty() {
        format!("Doc {index} {}", chunk.text)
    } else {
        format!("Doc {index} (Title: {}) {}", chunk.title, chunk.text)
    }
}

/// Deduplicates chunks by `doc_id` in query order then rank order, and drops
/// whole chunks from the tail until the formatted contexts fit the budget.
pub fn assemble_context<'a>(input: &'a SqueezeInput, counter: &dyn TokenCounter) -> SqueezeContext<'a> {
    let mut seen = HashSet::new();
    let mut docs = Vec::new();
    let mut duplicates = 0;
    for chunk in input.chunk_sets.iter().flat_map(|set| &set.chunks) {
        if seen.insert(chunk.doc_id.as_str()) {
            docs.push(chunk);
        } else {
            duplicates += 1;
        }
    }
    let mut used: usize = docs
        .iter()
        .enumerate()
        .map(|(i, c)| counter.count(&format_doc(i + 1, c)))
        .sum();
    let mut dropped = 0;
    while used > input.token_budget {
        let Some(last) = docs.pop() else { break };
        used -= counter.count(&format_doc(docs.len() + 1, last));
        dropped += 1;
    }
    SqueezeContext { docs, duplicates, dropped }
}

fn render_squeeze_prompt(queries: &[String], docs: &[&Chunk]) -> String {
    let mut prompt = String::from(
        "You are a helpful assistant.\n\
         You are given a series of queries and contexts.\n\
         Return the answer to queries based on the Contexts and nothing else.\n\n\
         Queries:",
    );
    for (i, q) in queries.iter().enumerate() {
        prompt.push_str(&format!("\n{}. {q}", i + 1));
    }
    prompt.push_str("\nContexts:");
    for (i, chunk) in docs.iter().enumerate() {
        prompt.push('\n');
        prompt.push_str(&format_doc(i + 1, chunk));
    }
    prompt.push_str("\nAnswer:");
    prompt
}

pub fn build_squeeze_prompt(input: &SqueezeInput) -> Result<String, SqueezeError> {
    build_squeeze_prompt_with(input, &WhitespaceTokens)
}

pub fn build_squeeze_prompt_with(input: &SqueezeInput, counter: &dyn TokenCounter) -> Result<String, SqueezeError> {
    if input.queries.is_empty() {
        return Err(SqueezeError::EmptyInput);
    }
    let context = assemble_context(input, counter);
    Ok(render_squeeze_prompt(&input.queries, &context.docs))
}

/// Longest prefix of `text` whose `<information>` rendering fits `limit` tokens.
pub fn fit_information<'a>(text: &'a str, limit: usize, counter: &dyn TokenCounter) -> &'a str {
    let mut budget = limit;
    loop {
        let kept = counter.truncate(text, budget);
        let rendered = format!("<information>{kept}</information>");
        if counter.count(&rendered) <= limit || budget == 0 {
            return kept;
        }
        budget -= 1;
    }
}

/// A frozen summarizer model behind an [`LlmGateway`].
#[derive(Clone)]
pub struct Squeezer {
    gateway: Arc<dyn LlmGateway>,
    counter: Arc<dyn TokenCounter>,
}

impl std::fmt::Debug for Squeezer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Squeezer").field("model", &self.gateway.model_label()).finish()
    }
}

impl Squeezer {
    pub fn new(gateway: Arc<dyn LlmGateway>) -> Self {
        Self { gateway, counter: Arc::new(WhitespaceTokens) }
    }

    pub fn with_counter(mut self, counter: Arc<dyn TokenCounter>) -> Self {
        self.counter = counter;
        self
    }

    pub fn model_label(&self) -> String {
        self.gateway.model_label()
    }

    /// Summarizes `input`. The summary is cut so that its `<information>`
    /// rendering holds at most `injection_limit` tokens.
    pub fn squeeze(
        &self,
        input: &SqueezeInput,
        injection_limit: usize,
        session: Option<&str>,
    ) -> Result<Summary, SqueezeError> {
        if input.queries.is_empty() {
            return Err(SqueezeError::EmptyInput);
        }
        let context = assemble_context(input, self.counter.as_ref());
        let prompt = render_squeeze_prompt(&input.queries, &context.docs);
        let mut request = GenerationRequest::completion(prompt, injection_limit.max(1) as u32, self.model_label());
        request.session = session.map(str::to_string);
        let result = self.gateway.generate(&request)?;
        let text = result.text.trim();
        if text.is_empty() {
            return Err(SqueezeError::SummaryEmpty);
        }
        let text = fit_information(text, injection_limit, self.counter.as_ref()).trim_end();
        if text.is_empty() {
            return Err(SqueezeError::SummaryEmpty);
        }
        let summary = Summary {
            text: text.to_string(),
            source_queries: input.queries.clone(),
            source_doc_ids: context.docs.iter().map(|c| c.doc_id.clone()).collect(),
            squeezer_model: self.model_label(),
        };
        debug_assert!(self.counter.count(&render_information(&summary)) <= injection_limit.max(1));
        Ok(summary)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::ScriptedGateway;

    fn chunk(id: &str, rank: u32, text: &str) -> Chunk {
        Chunk { doc_id: id.into(), title: format!("T{id}"), text: text.into(), score: 1.0 / rank as f64, rank }
    }

    fn set(query: &str, chunks: Vec<Chunk>) -> ChunkSet {
        ChunkSet { query: query.into(), chunks }
    }

    fn input() -> SqueezeInput {
        SqueezeInput::new(
            vec!["q1".into(), "q2".into(), "q3".into()],
            vec![
                set("q1", vec![chunk("a", 1, "alpha"), chunk("b", 2, "beta")]),
                set("q2", vec![chunk("b", 1, "beta"), chunk("c", 2, "gamma")]),
                set("q3", vec![chunk("d", 1, "delta")]),
            ],
            8192,
        )
        .unwrap()
    }

    #[test]
    fn prompt_lists_queries_and_numbered_docs() {
        let prompt = build_squeeze_prompt(&input()).unwrap();
        assert!(prompt.starts_with("You are a helpful assistant.\n"));
        assert!(prompt.contains("Return the answer to queries based on the Contexts and nothing else."));
        assert!(prompt.contains("Queries:\n1. q1\n2. q2\n3. q3\nContexts:\n"));
        assert!(prompt.contains("Doc 1 (Title: Ta) alpha\nDoc 2 (Title: Tb) beta\nDoc 3 (Title: Tc) gamma\nDoc 4 (Title: Td) delta"));
        assert!(prompt.ends_with("\nAnswer:"));
    }

    #[test]
    fn duplicate_doc_appears_once() {
        let inp = input();
        let prompt = build_squeeze_prompt(&inp).unwrap();
        assert_eq!(prompt.matches("(Title: Tb)").count(), 1);
        let ctx = assemble_context(&inp, &WhitespaceTokens);
        assert_eq!(ctx.duplicates, 1);
        let ids: Vec<_> = ctx.docs.iter().map(|c| c.doc_id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c", "d"]);
    }

    #[test]
    fn empty_chunk_sets_leave_contexts_empty() {
        let inp = SqueezeInput::new(vec!["q".into()], vec![ChunkSet::empty("q")], 100).unwrap();
        let prompt = build_squeeze_prompt(&inp).unwrap();
        assert!(prompt.ends_with("Contexts:\nAnswer:"));
    }

    #[test]
    fn no_queries_is_an_error() {
        let inp = SqueezeInput::new(vec![], vec![], 100).unwrap();
        assert_eq!(build_squeeze_prompt(&inp), Err(SqueezeError::EmptyInput));
        assert!(matches!(SqueezeInput::new(vec!["q".into()], vec![], 1), Err(SqueezeError::Misaligned { .. })));
    }

    #[test]
    fn budget_drops_whole_tail_chunks() {
        let mut inp = input();
        // Each doc line is 5 tokens: "Doc", "i", "(Title:", "Tx)", "word".
        inp.token_budget = 11;
        let ctx = assemble_context(&inp, &WhitespaceTokens);
        let ids: Vec<_> = ctx.docs.iter().map(|c| c.doc_id.as_str()).collect();
        assert_eq!(ids, ["a", "b"]);
        assert_eq!(ctx.dropped, 2);
    }

    #[test]
    fn squeeze_passes_summary_through() {
        let gw = Arc::new(ScriptedGateway::new(["WINNER is the boy group."]).unwrap());
        let squeezer = Squeezer::new(gw.clone());
        let summary = squeezer.squeeze(&input(), 500, None).unwrap();
        assert_eq!(summary.text, "WINNER is the boy group.");
        assert_eq!(summary.source_doc_ids, ["a", "b", "c", "d"]);
        assert_eq!(summary.source_queries, ["q1", "q2", "q3"]);
        assert_eq!(summary.squeezer_model, "scripted");
        assert!(gw.prompts()[0].contains("Doc 4"));
    }

    #[test]
    fn whitespace_summary_is_rejected() {
        let gw = Arc::new(ScriptedGateway::new(["   \n"]).unwrap());
        let err = Squeezer::new(gw).squeeze(&input(), 500, None).unwrap_err();
        assert_eq!(err, SqueezeError::SummaryEmpty);
    }

    #[test]
    fn long_summary_is_cut_to_limit() {
        let long = (0..40).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ");
        let gw = Arc::new(ScriptedGateway::new([long]).unwrap());
        let summary = Squeezer::new(gw).squeeze(&input(), 10, None).unwrap();
        assert!(WhitespaceTokens.count(&render_information(&summary)) <= 10);
        assert!(summary.text.starts_with("w0 w1"));
    }
}
