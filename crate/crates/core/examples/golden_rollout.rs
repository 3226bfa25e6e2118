//! Replays two recorded multi-hop rollouts against a 20-document corpus
//! with a scripted policy and squeezer, then scores them.
//!
//! ```sh
//! cargo run --example golden_rollout
//! ```

use expand_squeeze::protocol::render_segment;
use expand_squeeze::reward::total_reward;
use expand_squeeze::rollout::run_rollout;
use expand_squeeze::testkit::{anhalt_case, winner_case};
use expand_squeeze::{RolloutConfig, TrajectoryRecord};

pub fn run_example() -> Vec<TrajectoryRecord> {
    let cfg = RolloutConfig::default();
    let mut records = Vec::new();
    for case in [winner_case(), anhalt_case()] {
        let (collab, _, _) = case.collaborators();
        let traj = run_rollout(&case.question, &cfg, &collab);
        let reward = total_reward(&traj, &cfg);
        println!("Q: {}", case.question.text);
        for seg in &traj.segments {
            println!("  [turn {}] {}", seg.turn_index, render_segment(seg));
        }
        println!(
            "  -> {:?} {:?}  em={} format={} total={}\n",
            traj.status, traj.final_answer, reward.em, reward.format, reward.total
        );
        records.push(TrajectoryRecord::new(&traj, reward, &cfg));
    }
    records
}

#[allow(dead_code)]
fn main() {
    run_example();
}
