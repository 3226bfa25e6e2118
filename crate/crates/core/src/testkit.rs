//! Deterministic fixtures: a small case-study corpus with replayable
//! scripts, a synthetic multi-facet benchmark with an oracle policy, and
//! rule-based stand-ins for the squeezer and the expansion classifier.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::gateway::{
    finish_generation, GatewayError, GenerationRequest, GenerationResult, LlmGateway, ScriptedGateway, StopReason,
};
use crate::model::{Question, WhitespaceTokens};
use crate::protocol::requested_variants;
use crate::retrieval::{Bm25Index, CorpusDoc};
use crate::rollout::{Collaborators, FrozenClock};
use crate::squeeze::Squeezer;

const CASE_STUDY_CORPUS: &str = include_str!("../data/case_study_corpus.jsonl");

/// The 20-document corpus behind [`winner_case`] and [`anhalt_case`].
pub fn case_study_docs() -> Vec<CorpusDoc> {
    CASE_STUDY_CORPUS
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).expect("bundled corpus is valid"))
        .collect()
}

pub fn case_study_index() -> Bm25Index {
    Bm25Index::build(case_study_docs()).expect("bundled corpus has unique ids")
}

/// A question with the exact policy generations and squeezer outputs of a
/// recorded rollout.
#[derive(Debug, Clone)]
pub struct CaseStudy {
    pub question: Question,
    pub policy_script: Vec<String>,
    pub squeezer_script: Vec<String>,
}

impl CaseStudy {
    /// Scripted policy and squeezer over the case-study corpus, with a
    /// frozen clock.
    pub fn collaborators(&self) -> (Collaborators, Arc<ScriptedGateway>, Arc<ScriptedGateway>) {
        let policy = Arc::new(ScriptedGateway::new(self.policy_script.clone()).expect("non-empty").with_label("policy"));
        let squeezer =
            Arc::new(ScriptedGateway::new(self.squeezer_script.clone()).expect("non-empty").with_label("squeezer"));
        let collab = Collaborators::new(policy.clone(), Arc::new(case_study_index()), Squeezer::new(squeezer.clone()))
            .with_clock(Arc::new(FrozenClock(0)));
        (collab, policy, squeezer)
    }
}

const SQUEEZER_PREFIX: &str = "Based on the provided contexts, here are the answers to the given queries: ";

pub fn winner_case() -> CaseStudy {
    CaseStudy {
        question: Question::new(
            "hotpotqa-2014-ss",
            "2014 S/S is the debut album of a South Korean boy group that was formed by who?",
            vec!["YG Entertainment".into()],
            "hotpotqa",
        )
        .expect("valid"),
        policy_script: vec![
            "<think>To determine who formed the boy group, I need to first identify the boy group.</think>\
<search>boy group that debuted with the album 2014 S/S ## male group first album 2014 S/S debut ## \
K-pop boy groups debut albums 2014 rookie artists</search>"
                .into(),
            "<think>Now that I know the boy group that debuted with the album 2014 S/S is WINNER. \
I can directly find who formed them.</think>\
<search>who formed the boy group WINNER ## WINNER boy group created by who ## who created the WINNER</search>"
                .into(),
            "<answer>YG Entertainment</answer>".into(),
        ],
        squeezer_script: vec![
            format!("{SQUEEZER_PREFIX}WINNER is the boy group."),
            format!("{SQUEEZER_PREFIX}YG Entertainment."),
        ],
    }
}

pub fn anhalt_case() -> CaseStudy {
    CaseStudy {
        question: Question::new(
            "2wiki-anhalt-zerbst",
            "When did John V, Prince Of Anhalt-Zerbst's father die?",
            vec!["12 June 1516".into()],
            "2wikimultihopqa",
        )
        .expect("valid"),
        policy_script: vec![
            "<think>To determine when John V, Prince of Anhalt-Zerbst's father died, \
I need to first identify who his father was.</think>\
<search>father of John V, Prince of Anhalt-Zerbst ## John V Prince of Anhalt-Zerbst's father ## \
Anhalt-Zerbst royal family tree German princes 17th century genealogy</search>"
                .into(),
            "<think>Now that I know his father. I can directly find when he died.</think>\
<search>Ernest I Prince of Anhalt-Dessau death date ## when did Ernest I, Prince of Anhalt-Dessau die ## \
Anhalt-Dessau rulers 16th century German princes death dates biography</search>"
                .into(),
            "<answer>12 June 1516</answer>".into(),
        ],
        squeezer_script: vec![
            format!("{SQUEEZER_PREFIX}Ernest I, Prince of Anhalt-Dessau."),
            format!("{SQUEEZER_PREFIX}12 June 1516."),
        ],
    }
}

/// A synthetic benchmark where each question has three facet queries and
/// only one of them (the gold facet, at a seeded position) retrieves the
/// document holding the answer. Asking for more query variants therefore
/// can only help.
#[derive(Debug, Clone)]
pub struct FacetBenchmark {
    pub docs: Vec<CorpusDoc>,
    pub questions: Vec<Question>,
    /// Planned queries per question id, in the order the oracle emits them.
    pub plans: BTreeMap<String, Vec<String>>,
    /// Index of the gold facet per question id.
    pub gold_facet: BTreeMap<String, usize>,
}

pub const FACETS: usize = 3;

fn pseudo_word(rng: &mut ChaCha8Rng) -> String {
    const SYLLABLES: [&str; 16] =
        ["ka", "ro", "vex", "lum", "tor", "qui", "zan", "mol", "fir", "dax", "pel", "sor", "wun", "gri", "bex", "nol"];
    (0..4).map(|_| SYLLABLES[rng.random_range(0..SYLLABLES.len())]).collect()
}

impl FacetBenchmark {
    pub fn generate(n_questions: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut used = std::collections::HashSet::new();
        let mut fresh = |rng: &mut ChaCha8Rng| loop {
            let w = pseudo_word(rng);
            if used.insert(w.clone()) {
                return w;
            }
        };
        let mut docs = Vec::new();
        let mut questions = Vec::new();
        let mut plans = BTreeMap::new();
        let mut gold_facet = BTreeMap::new();
        for i in 0..n_questions {
            let id = format!("facet-{i:04}");
            let subject = fresh(&mut rng);
            let facets: Vec<String> = (0..FACETS).map(|_| fresh(&mut rng)).collect();
            let gold = rng.random_range(0..FACETS);
            let code = fresh(&mut rng);
            for (f, facet) in facets.iter().enumerate() {
                let text = if f == gold {
                    format!("Ledger entry {facet}. The vault code is {code}.")
                } else {
                    format!("Ledger entry {facet}. This entry lists travel notes only.")
                };
                docs.push(CorpusDoc::new(format!("{id}-f{f}"), subject.clone(), text));
            }
            let q = Question::new(&id, format!("What is the vault code of {subject}?"), vec![code], "facets")
                .expect("valid");
            questions.push(q);
            plans.insert(id.clone(), facets.iter().map(|f| format!("{f} ledger entry")).collect());
            gold_facet.insert(id, gold);
        }
        docs.shuffle(&mut rng);
        Self { docs, questions, plans, gold_facet }
    }

    pub fn index(&self) -> Bm25Index {
        Bm25Index::build(self.docs.clone()).expect("generated ids are unique")
    }

    /// Expected exact-match mean when the policy issues its first `n` planned queries.
    pub fn expected_em(&self, n: usize) -> f64 {
        let hits = self.gold_facet.values().filter(|&&g| g < n).count();
        hits as f64 / self.gold_facet.len().max(1) as f64
    }

    pub fn collaborators(&self) -> Collaborators {
        Collaborators::new(
            Arc::new(OraclePolicy::new(self.plans.clone())),
            Arc::new(self.index()),
            Squeezer::new(Arc::new(ExtractiveSqueezer)),
        )
        .with_clock(Arc::new(FrozenClock(0)))
    }
}

/// The text after the policy prompt's `Question: ...` line.
fn rollout_tail(prompt: &str) -> &str {
    let Some(q) = prompt.rfind("Question: ") else { return "" };
    match prompt[q..].find(".\n") {
        Some(end) => &prompt[q + end + 2..],
        None => "",
    }
}

fn respond(raw: &str, request: &GenerationRequest) -> GenerationResult {
    let (text, stop_reason) = finish_generation(raw, request, &WhitespaceTokens, false);
    GenerationResult { text, stop_reason, latency_ms: 0 }
}

/// A policy that knows which queries to issue for every question (keyed by
/// session). It searches once with as many planned queries as the prompt
/// asks for, then answers with whatever the injected information says.
#[derive(Debug, Clone)]
pub struct OraclePolicy {
    plans: BTreeMap<String, Vec<String>>,
}

impl OraclePolicy {
    pub fn new(plans: BTreeMap<String, Vec<String>>) -> Self {
        Self { plans }
    }
}

impl LlmGateway for OraclePolicy {
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult, GatewayError> {
        let session = request.session.as_deref().unwrap_or_default();
        let plan = self.plans.get(session).ok_or_else(|| GatewayError::Provider {
            status: None,
            body: format!("no plan for session `{session}`"),
        })?;
        let tail = rollout_tail(&request.prompt);
        if let (Some(start), Some(end)) = (tail.rfind("<information>"), tail.rfind("</information>")) {
            let info = &tail[start + "<information>".len()..end];
            return Ok(respond(&format!("<think>the information answers it</think><answer>{}</answer>", info.trim()), request));
        }
        let n = requested_variants(&request.prompt).unwrap_or(1).max(1) as usize;
        let queries: Vec<&str> = plan.iter().take(n).map(String::as_str).collect();
        Ok(respond(&format!("<think>look up every facet</think><search>{}</search>", queries.join(" ## ")), request))
    }

    fn model_label(&self) -> String {
        "oracle-policy".into()
    }
}

pub const NO_ANSWER: &str = "The contexts do not contain the answer.";

/// Squeezer stand-in that copies the code out of a "vault code is X" context.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExtractiveSqueezer;

impl LlmGateway for ExtractiveSqueezer {
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult, GatewayError> {
        const KEY: &str = "vault code is ";
        let found = request.prompt.find(KEY).and_then(|at| {
            let rest = &request.prompt[at + KEY.len()..];
            let word: String = rest.chars().take_while(|c| c.is_alphanumeric()).collect();
            (!word.is_empty()).then_some(word)
        });
        Ok(GenerationResult {
            text: found.unwrap_or_else(|| NO_ANSWER.to_string()),
            stop_reason: StopReason::EndOfSequence,
            latency_ms: 0,
        })
    }

    fn model_label(&self) -> String {
        "extractive-squeezer".into()
    }
}

/// Classifier stand-in applying the expansion-type prompt's definitions: a
/// restructuring that keeps the same content words is syntax, anything that
/// changes them is semantic.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleClassifier;

const STOPWORDS: [&str; 14] =
    ["a", "an", "the", "of", "did", "does", "do", "he", "she", "it", "is", "was", "for", "by"];

/// Interrogatives name the slot they ask about; inflections share a stem.
fn canonical(word: &str) -> &str {
    match word {
        "where" => "place",
        "when" => "date",
        "who" => "person",
        "die" | "died" | "dies" => "death",
        w => w,
    }
}

pub fn content_words(query: &str) -> Vec<String> {
    let lowered = query.to_lowercase().replace("'s", " ").replace("\u{2019}s", " ");
    let mut words: Vec<String> = lowered
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty() && !STOPWORDS.contains(w))
        .map(|w| canonical(w).to_string())
        .collect();
    words.sort();
    words
}

fn prompt_field<'a>(prompt: &'a str, key: &str) -> Option<&'a str> {
    let start = prompt.find(key)? + key.len();
    prompt[start..].lines().next()
}

impl LlmGateway for RuleClassifier {
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult, GatewayError> {
        let (Some(base), Some(expanded)) =
            (prompt_field(&request.prompt, "Base Query: "), prompt_field(&request.prompt, "Expanded Query: "))
        else {
            return Err(GatewayError::InvalidRequest("not an expansion classification prompt".into()));
        };
        let label = if content_words(base) == content_words(expanded) { "syntax" } else { "semantic" };
        Ok(GenerationResult { text: label.into(), stop_reason: StopReason::EndOfSequence, latency_ms: 0 })
    }

    fn model_label(&self) -> String {
        "rule-classifier".into()
    }
}

/// Always fails with the given error.
#[derive(Debug, Clone)]
pub struct FailingGateway(pub GatewayError);

impl LlmGateway for FailingGateway {
    fn generate(&self, _request: &GenerationRequest) -> Result<GenerationResult, GatewayError> {
        Err(self.0.clone())
    }

    fn model_label(&self) -> String {
        "failing".into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_corpus_has_twenty_docs() {
        assert_eq!(case_study_docs().len(), 20);
    }

    #[test]
    fn facet_benchmark_is_seeded() {
        let a = FacetBenchmark::generate(30, 5);
        let b = FacetBenchmark::generate(30, 5);
        assert_eq!(a.docs, b.docs);
        assert_eq!(a.gold_facet, b.gold_facet);
        assert_eq!(a.docs.len(), 90);
        assert!(a.expected_em(1) <= a.expected_em(2) && a.expected_em(3) == 1.0);
    }

    #[test]
    fn rule_classifier_follows_prompt_examples() {
        let same = |a: &str, b: &str| content_words(a) == content_words(b);
        assert!(same("Alexander's father", "father of Alexander"));
        assert!(same("where did he die", "death place of"));
        assert!(!same("Alexander's father", "Alexander's family"));
        assert!(!same("death place", "burial location"));
    }
}
