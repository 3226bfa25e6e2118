//! Shows the prompt a squeezer model receives for one search, how repeated
//! documents are merged, and how the injected summary is held to its token
//! limit.
//!
//! ```sh
//! cargo run --example squeeze_prompt
//! ```

use std::sync::Arc;

use expand_squeeze::gateway::ScriptedGateway;
use expand_squeeze::model::{TokenCounter, WhitespaceTokens};
use expand_squeeze::protocol::render_information;
use expand_squeeze::retrieval::retrieve_bundle;
use expand_squeeze::squeeze::{assemble_context, build_squeeze_prompt, SqueezeInput, Squeezer};
use expand_squeeze::testkit::case_study_index;
use expand_squeeze::QueryBundle;

pub struct SqueezeDemo {
    pub prompt: String,
    pub duplicates: usize,
    pub injected: String,
}

pub fn run_example() -> SqueezeDemo {
    let index = case_study_index();
    let bundle = QueryBundle::from_queries(
        ["who formed the boy group WINNER", "WINNER boy group created by who", "who created the WINNER"],
        1,
    )
    .expect("non-empty");
    let sets = retrieve_bundle(&index, &bundle, 3, true).expect("retrieval");
    let input = SqueezeInput::new(bundle.queries.clone(), sets, 8192).expect("aligned");

    let prompt = build_squeeze_prompt(&input).expect("queries present");
    let context = assemble_context(&input, &WhitespaceTokens);
    println!("{prompt}\n");
    println!("{} distinct docs, {} repeats merged", context.docs.len(), context.duplicates);

    // A verbose squeezer answer is cut so the whole block fits 12 tokens.
    let verbose = "YG Entertainment formed WINNER in 2013 through the survival program WIN: Who Is Next, \
                   and the group debuted in August 2014.";
    let squeezer = Squeezer::new(Arc::new(ScriptedGateway::new([verbose]).expect("non-empty")));
    let summary = squeezer.squeeze(&input, 12, None).expect("summary");
    let injected = render_information(&summary);
    println!("{injected}  ({} tokens)", WhitespaceTokens.count(&injected));

    SqueezeDemo { prompt, duplicates: context.duplicates, injected }
}

#[allow(dead_code)]
fn main() {
    run_example();
}
