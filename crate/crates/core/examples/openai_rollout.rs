//! One rollout against live OpenAI-compatible endpoints (for example vLLM).
//!
//! Needs `POLICY_BASE_URL`, `POLICY_MODEL`, `SQUEEZER_BASE_URL` and
//! `SQUEEZER_MODEL`; `*_API_KEY` is optional. Without them the example
//! prints a note and exits.
//!
//! ```sh
//! POLICY_BASE_URL=http://localhost:8000/v1 POLICY_MODEL=policy \
//! SQUEEZER_BASE_URL=http://localhost:8001/v1 SQUEEZER_MODEL=squeezer \
//! cargo run --example openai_rollout
//! ```

use std::sync::Arc;

use expand_squeeze::gateway::{OpenAiConfig, OpenAiGateway};
use expand_squeeze::protocol::render_segment;
use expand_squeeze::reward::total_reward;
use expand_squeeze::rollout::{run_rollout, Collaborators};
use expand_squeeze::squeeze::Squeezer;
use expand_squeeze::testkit::{case_study_index, winner_case};
use expand_squeeze::{RolloutConfig, Trajectory};

pub fn run_example() -> Option<Trajectory> {
    let (Some(policy), Some(squeezer)) = (OpenAiConfig::from_env("POLICY"), OpenAiConfig::from_env("SQUEEZER")) else {
        println!("POLICY_* / SQUEEZER_* endpoints not set; skipping");
        return None;
    };
    let policy = OpenAiGateway::new(policy).expect("policy client");
    let squeezer = OpenAiGateway::new(squeezer).expect("squeezer client");
    let collab = Collaborators::new(Arc::new(policy), Arc::new(case_study_index()), Squeezer::new(Arc::new(squeezer)));

    let cfg = RolloutConfig::default();
    let question = winner_case().question;
    let traj = run_rollout(&question, &cfg, &collab);
    for seg in &traj.segments {
        println!("[turn {}] {}", seg.turn_index, render_segment(seg));
    }
    let reward = total_reward(&traj, &cfg);
    println!("{:?} {:?} total={}", traj.status, traj.final_answer, reward.total);
    Some(traj)
}

#[allow(dead_code)]
fn main() {
    run_example();
}
