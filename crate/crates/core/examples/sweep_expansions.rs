//! Sweeps the number of query variants n over {1, 2, 3} on a synthetic
//! benchmark where each answer hides behind one of three facets, and prints
//! the plot-ready CSV.
//!
//! ```sh
//! cargo run --example sweep_expansions
//! ```

use expand_squeeze::bench::{run_sweep, SweepAxis, SweepReport, SweepSpec};
use expand_squeeze::testkit::FacetBenchmark;
use expand_squeeze::RolloutConfig;

pub fn run_example() -> SweepReport {
    let bench = FacetBenchmark::generate(60, 11);
    let spec = SweepSpec::new(SweepAxis::NExpansions, vec![1, 2, 3], RolloutConfig::default(), 11).expect("valid");
    let report = run_sweep(&spec, &bench.questions, &bench.collaborators(), 4).expect("valid spec");
    print!("{}", report.plot_csv());
    for n in [1, 2, 3] {
        println!("n={n}: expected {:.3}", bench.expected_em(n));
    }
    report
}

#[allow(dead_code)]
fn main() {
    run_example();
}
