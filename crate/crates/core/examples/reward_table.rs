//! Exact-match scoring after answer normalization, and the total reward
//! em + lambda * format.
//!
//! ```sh
//! cargo run --example reward_table
//! ```

use expand_squeeze::model::RewardBreakdown;
use expand_squeeze::reward::{em_reward, normalize_answer};

pub fn run_example() -> Vec<(String, String, u8)> {
    let cases = [
        ("YG Entertainment", "YG Entertainment"),
        ("the YG entertainment.", "YG Entertainment"),
        ("SM Entertainment", "YG Entertainment"),
        ("June 12, 1516", "12 June 1516"),
        ("12 june 1516", "12 June 1516"),
        ("An Apple", "apple"),
    ];
    let mut rows = Vec::new();
    println!("{:<24} {:<20} {:<20} em", "prediction", "gold", "normalized");
    for (pred, gold) in cases {
        let em = em_reward(pred, &[gold.to_string()]).expect("gold present");
        println!("{pred:<24} {gold:<20} {:<20} {em}", normalize_answer(pred));
        rows.push((pred.to_string(), gold.to_string(), em));
    }
    for (em, format) in [(true, true), (true, false), (false, true), (false, false)] {
        let r = RewardBreakdown::new(em, format, 0.2);
        println!("em={} format={} -> total {}", r.em, r.format, r.total);
    }
    rows
}

#[allow(dead_code)]
fn main() {
    run_example();
}
