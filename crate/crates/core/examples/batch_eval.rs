//! Runs a batch of rollouts concurrently, writes trajectory JSONL and a
//! per-question CSV, and aggregates exact match per dataset.
//!
//! ```sh
//! cargo run --example batch_eval
//! ```

use expand_squeeze::model::write_jsonl;
use expand_squeeze::reward::{aggregate, score_all, write_question_csv, EvalReport};
use expand_squeeze::rollout::run_batch;
use expand_squeeze::testkit::FacetBenchmark;
use expand_squeeze::RolloutConfig;

pub struct BatchDemo {
    pub report: EvalReport,
    pub jsonl: Vec<u8>,
    pub config_hash: String,
}

pub fn run_example() -> BatchDemo {
    let bench = FacetBenchmark::generate(24, 3);
    let cfg = RolloutConfig { n_expansions: 2, seed: Some(3), ..RolloutConfig::default() };
    let batch = run_batch(&bench.questions, &cfg, &bench.collaborators(), 4).expect("valid config");
    let records = score_all(&batch.trajectories, &cfg);

    let mut jsonl = Vec::new();
    write_jsonl(&mut jsonl, &records).expect("in-memory write");
    let mut csv = Vec::new();
    write_question_csv(&mut csv, &records).expect("in-memory write");
    println!("{}", String::from_utf8_lossy(&csv).lines().take(4).collect::<Vec<_>>().join("\n"));

    let report = aggregate(&records);
    println!("{}", serde_json::to_string_pretty(&report.per_dataset).expect("serializable"));
    println!(
        "manifest: config {} answered {} exhausted {} failed {}",
        &batch.manifest.config_hash[..12],
        batch.manifest.answered,
        batch.manifest.exhausted,
        batch.manifest.failed
    );
    BatchDemo { report, jsonl, config_hash: batch.manifest.config_hash }
}

#[allow(dead_code)]
fn main() {
    run_example();
}
