use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{GatewayError, GenerationRequest, LlmGateway};
use crate::model::{QueryBundle, SegmentKind, Trajectory};
use crate::protocol::split_queries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExpansionType {
    Syntax,
    Semantic,
}

impl ExpansionType {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Syntax => "syntax",
            Self::Semantic => "semantic",
        }
    }
}

impl fmt::Display for ExpansionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpansionLabel {
    pub base_query: String,
    pub expanded_query: String,
    pub label: ExpansionType,
    pub classifier_model: String,
}

/// The classifier answered with something other than a single label word.
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("unparseable label {raw:?} for ({base:?}, {expanded:?})")]
pub struct UnparseableLabel {
    pub base: String,
    pub expanded: String,
    pub raw: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionSummary {
    pub pairs: usize,
    pub syntax: usize,
    pub semantic: usize,
    pub unparseable: usize,
    /// Percentages over labeled pairs; `None` when nothing was labeled.
    pub syntax_pct: Option<f64>,
    pub semantic_pct: Option<f64>,
}

impl ExpansionSummary {
    pub fn from_labels(labels: &[ExpansionLabel], unparseable: usize) -> Self {
        let syntax = labels.iter().filter(|l| l.label == ExpansionType::Syntax).count();
        let semantic = labels.len() - syntax;
        let syntax_pct = (!labels.is_empty()).then(|| 100.0 * syntax as f64 / labels.len() as f64);
        Self {
            pairs: labels.len() + unparseable,
            syntax,
            semantic,
            unparseable,
            syntax_pct,
            semantic_pct: syntax_pct.map(|p| 100.0 - p),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub labels: Vec<ExpansionLabel>,
    pub unparseable: Vec<UnparseableLabel>,
    pub summary: ExpansionSummary,
}

pub fn classification_prompt(base: &str, expanded: &str) -> String {
    format!(
        "Classify the following query expansion type.\n\n\
Base Query: {base}\n\
Expanded Query: {expanded}\n\n\
Query expansion types:\n\
- Syntax Expansion: Reformulating the query structure while keeping the same meaning \
(e.g., \"Alexander's father\" → \"father of Alexander\", \"where did he die\" → \"death place of\")\n\
- Semantic Expansion: Expanding the meaning to related concepts \
(e.g., \"Alexander's father\" → \"Alexander's family\", \"death place\" → \"burial location\")\n\n\
Respond with ONLY one word: 'syntax' or 'semantic'"
    )
}

/// Trimmed, lowercased, and matched exactly.
pub fn parse_label(raw: &str) -> Option<ExpansionType> {
    match raw.trim().to_lowercase().as_str() {
        "syntax" => Some(ExpansionType::Syntax),
        "semantic" => Some(ExpansionType::Semantic),
        _ => None,
    }
}

/// `(base, expansion)` pairs from every search block with at least two
/// queries. The first query of a block is its base.
pub fn expansion_pairs(trajectories: &[Trajectory]) -> Vec<(String, String)> {
    let mut pairs = Vec::new();
    for traj in trajectories {
        for seg in traj.segments_of(SegmentKind::Search) {
            let Some(bundle) = split_queries(&seg.content, seg.turn_index) else { continue };
            let mut queries = bundle.queries.into_iter();
            let Some(base) = queries.next() else { continue };
            pairs.extend(queries.map(|q| (base.clone(), q)));
        }
    }
    pairs
}

pub fn classify_pair(
    gateway: &dyn LlmGateway,
    base: &str,
    expanded: &str,
) -> Result<Result<ExpansionLabel, UnparseableLabel>, GatewayError> {
    let request = GenerationRequest::completion(classification_prompt(base, expanded), 8, gateway.model_label());
    let result = gateway.generate(&request)?;
    Ok(match parse_label(&result.text) {
        Some(label) => Ok(ExpansionLabel {
            base_query: base.to_string(),
            expanded_query: expanded.to_string(),
            label,
            classifier_model: gateway.model_label(),
        }),
        None => Err(UnparseableLabel { base: base.to_string(), expanded: expanded.to_string(), raw: result.text }),
    })
}

/// Labels every expansion pair in `trajectories`. Unparseable answers are
/// kept aside and excluded from the ratio; gateway errors abort.
pub fn classify_expansions(
    trajectories: &[Trajectory],
    gateway: &dyn LlmGateway,
) -> Result<Classification, GatewayError> {
    let mut labels = Vec::new();
    let mut unparseable = Vec::new();
    for (base, expanded) in expansion_pairs(trajectories) {
        match classify_pair(gateway, &base, &expanded)? {
            Ok(label) => labels.push(label),
            Err(bad) => {
                tracing::warn!(raw = %bad.raw, "classifier returned neither label");
                unparseable.push(bad);
            }
        }
    }
    let summary = ExpansionSummary::from_labels(&labels, unparseable.len());
    Ok(Classification { labels, unparseable, summary })
}

/// Removes expansions labelled `drop`. The base query always stays, and
/// expansions without a label are kept.
pub fn ablate_expansion_type(bundle: &QueryBundle, labels: &[ExpansionLabel], drop: ExpansionType) -> QueryBundle {
    let Some((base, rest)) = bundle.queries.split_first() else {
        return bundle.clone();
    };
    let dropped = |q: &String| {
        labels.iter().any(|l| l.base_query == *base && l.expanded_query == *q && l.label == drop)
    };
    let mut queries = vec![base.clone()];
    queries.extend(rest.iter().filter(|q| !dropped(q)).cloned());
    QueryBundle { queries, source_turn: bundle.source_turn }
}
