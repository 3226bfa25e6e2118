//! Labels the query variants of recorded rollouts as syntax or semantic
//! expansions of their block's first query, then drops one type from a
//! bundle.
//!
//! The classifier here is a rule-based stand-in; point the same call at any
//! `LlmGateway` to use a real model.
//!
//! ```sh
//! cargo run --example classify_expansions
//! ```

use expand_squeeze::bench::{ablate_expansion_type, classify_expansions, Classification, ExpansionType};
use expand_squeeze::rollout::run_rollout;
use expand_squeeze::testkit::{anhalt_case, winner_case, RuleClassifier};
use expand_squeeze::{QueryBundle, RolloutConfig};

pub fn run_example() -> Classification {
    let cfg = RolloutConfig::default();
    let trajectories: Vec<_> = [winner_case(), anhalt_case()]
        .into_iter()
        .map(|case| run_rollout(&case.question, &cfg, &case.collaborators().0))
        .collect();

    let classification = classify_expansions(&trajectories, &RuleClassifier).expect("rule classifier");
    for l in &classification.labels {
        println!("{:<9} {:?} -> {:?}", l.label.as_str(), l.base_query, l.expanded_query);
    }
    let s = &classification.summary;
    println!(
        "syntax {:.1}%  semantic {:.1}%  ({} pairs, {} unparseable)",
        s.syntax_pct.unwrap_or(0.0),
        s.semantic_pct.unwrap_or(0.0),
        s.pairs,
        s.unparseable
    );

    let bundle = QueryBundle::from_queries(
        ["who formed the boy group WINNER", "WINNER boy group created by who", "who created the WINNER"],
        1,
    )
    .expect("non-empty");
    let kept = ablate_expansion_type(&bundle, &classification.labels, ExpansionType::Semantic);
    println!("without semantic expansions: {:?}", kept.queries);
    classification
}

#[allow(dead_code)]
fn main() {
    run_example();
}
