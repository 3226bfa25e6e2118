//! Exact-match and format rewards, and evaluation reports over scored
//! trajectories.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    EmMode, RewardBreakdown, RolloutConfig, SegmentKind, Status, Trajectory, TrajectoryRecord,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RewardError {
    #[error("gold answer list is empty")]
    EmptyGoldSet,
}

const ARTICLES: [&str; 3] = ["a", "an", "the"];

/// Standard open-domain QA answer normalization: lowercase, strip ASCII
/// punctuation, drop the articles "a", "an" and "the", collapse whitespace.
pub fn normalize_answer(text: &str) -> String {
    let lowered = text.to_lowercase();
    let no_punct: String = lowered.chars().filter(|c| !c.is_ascii_punctuation()).collect();
    no_punct
        .split_whitespace()
        .filter(|w| !ARTICLES.contains(w))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn em_reward(pred: &str, golds: &[String]) -> Result<u8, RewardError> {
    em_reward_with(EmMode::Normalized, pred, golds)
}

pub fn em_reward_with(mode: EmMode, pred: &str, golds: &[String]) -> Result<u8, RewardError> {
    if golds.is_empty() {
        return Err(RewardError::EmptyGoldSet);
    }
    let hit = match mode {
        EmMode::Normalized => {
            let pred = normalize_answer(pred);
            golds.iter().any(|g| normalize_answer(g) == pred)
        }
        EmMode::Strict => golds.iter().any(|g| g == pred),
    };
    Ok(u8::from(hit))
}

/// 1 when the trajectory answered, never needed a rethink, and reasoned in a
/// `<think>` block before every search; otherwise 0.
pub fn format_reward(traj: &Trajectory) -> u8 {
    if traj.status != Status::Answered {
        return 0;
    }
    if traj.segments.iter().any(|s| s.kind == SegmentKind::RethinkNotice) {
        return 0;
    }
    let think_before_every_search = traj.segments.iter().enumerate().all(|(i, seg)| {
        seg.kind != SegmentKind::Search
            || traj.segments[..i]
                .iter()
                .any(|p| p.kind == SegmentKind::Think && p.turn_index == seg.turn_index)
    });
    u8::from(think_before_every_search)
}

/// `em + lambda * format` for a finished trajectory.
pub fn total_reward(traj: &Trajectory, cfg: &RolloutConfig) -> RewardBreakdown {
    let pred = traj.final_answer.as_deref().unwrap_or("");
    // Questions are validated to carry at least one gold answer.
    let em = em_reward_with(cfg.em_mode, pred, &traj.question.golden_answers).unwrap_or(0);
    RewardBreakdown::new(em == 1, format_reward(traj) == 1, cfg.lambda_format)
}

/// Scores trajectories into JSONL records.
pub fn score_all(trajectories: &[Trajectory], cfg: &RolloutConfig) -> Vec<TrajectoryRecord> {
    trajectories
        .iter()
        .map(|t| TrajectoryRecord::new(t, total_reward(t, cfg), cfg))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetScore {
    /// `None` when there are no items.
    pub em_mean: Option<f64>,
    pub count: usize,
    /// Failed rollouts, included in `count` with em = 0.
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub axis: String,
    pub value: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_dataset: BTreeMap<String, DatasetScore>,
    pub overall: DatasetScore,
    pub config: Option<RolloutConfig>,
    pub sweep: Option<SweepPoint>,
}

#[derive(Default)]
struct Tally {
    em_sum: u64,
    count: usize,
    failed: usize,
}

impl Tally {
    fn add(&mut self, em: u8, failed: bool) {
        self.em_sum += u64::from(em);
        self.count += 1;
        self.failed += usize::from(failed);
    }

    fn score(&self) -> DatasetScore {
        DatasetScore {
            em_mean: (self.count > 0).then(|| self.em_sum as f64 / self.count as f64),
            count: self.count,
            failed: self.failed,
        }
    }
}

pub fn aggregate(records: &[TrajectoryRecord]) -> EvalReport {
    let mut per: BTreeMap<String, Tally> = BTreeMap::new();
    let mut overall = Tally::default();
    for r in records {
        let failed = r.status == Status::Failed;
        let em = if failed { 0 } else { r.reward.em };
        per.entry(r.dataset.clone()).or_default().add(em, failed);
        overall.add(em, failed);
    }
    EvalReport {
        per_dataset: per.into_iter().map(|(k, t)| (k, t.score())).collect(),
        overall: overall.score(),
        config: records.first().map(|r| r.config.clone()),
        sweep: None,
    }
}

/// Per-question CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionRow {
    pub id: String,
    pub dataset: String,
    pub em: u8,
    pub format: u8,
    pub total: f64,
    pub turns: u32,
    pub n_queries_used: u32,
}

impl From<&TrajectoryRecord> for QuestionRow {
    fn from(r: &TrajectoryRecord) -> Self {
        Self {
            id: r.question_id.clone(),
            dataset: r.dataset.clone(),
            em: r.reward.em,
            format: r.reward.format,
            total: r.reward.total,
            turns: r.turn_count,
            n_queries_used: r.queries_dispatched,
        }
    }
}

pub fn write_question_csv<W: Write>(out: W, records: &[TrajectoryRecord]) -> Result<(), csv::Error> {
    let mut writer = csv::Writer::from_writer(out);
    for r in records {
        writer.serialize(QuestionRow::from(r))?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Question, Segment};

    fn golds(g: &[&str]) -> Vec<String> {
        g.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize_answer("The YG Entertainment."), "yg entertainment");
        assert_eq!(normalize_answer("12 June 1516"), "12 june 1516");
        let once = normalize_answer("  An  Apple, the  Pie! ");
        assert_eq!(once, "apple pie");
        assert_eq!(normalize_answer(&once), once);
    }

    #[test]
    fn em_examples() {
        assert_eq!(em_reward("YG Entertainment", &golds(&["YG Entertainment"])), Ok(1));
        assert_eq!(em_reward("SM Entertainment", &golds(&["YG Entertainment"])), Ok(0));
        assert_eq!(em_reward("the yg entertainment", &golds(&["YG Entertainment"])), Ok(1));
        assert_eq!(em_reward("x", &[]), Err(RewardError::EmptyGoldSet));
    }

    #[test]
    fn strict_mode_compares_raw_strings() {
        let g = golds(&["YG Entertainment"]);
        assert_eq!(em_reward_with(EmMode::Strict, "yg entertainment", &g), Ok(0));
        assert_eq!(em_reward_with(EmMode::Strict, "YG Entertainment", &g), Ok(1));
    }

    fn traj(segments: Vec<Segment>, status: Status, answer: Option<&str>) -> Trajectory {
        let q = Question::new("q", "who?", vec!["YG Entertainment".into()], "hotpotqa").unwrap();
        let mut t = Trajectory::new(q);
        t.segments = segments;
        t.status = status;
        t.final_answer = answer.map(String::from);
        t
    }

    #[test]
    fn format_requires_think_before_search() {
        use SegmentKind::*;
        let good = traj(
            vec![
                Segment::new(Think, "t", 0),
                Segment::new(Search, "q", 0),
                Segment::new(Information, "i", 0),
                Segment::new(Answer, "YG Entertainment", 1),
            ],
            Status::Answered,
            Some("YG Entertainment"),
        );
        assert_eq!(format_reward(&good), 1);
        let no_think = traj(
            vec![Segment::new(Search, "q", 0), Segment::new(Answer, "a", 1)],
            Status::Answered,
            Some("a"),
        );
        assert_eq!(format_reward(&no_think), 0);
        // A think from an earlier turn does not count.
        let stale_think = traj(
            vec![
                Segment::new(Think, "t", 0),
                Segment::new(Search, "q", 0),
                Segment::new(Information, "i", 0),
                Segment::new(Search, "q", 1),
                Segment::new(Information, "i", 1),
            ],
            Status::Answered,
            Some("a"),
        );
        assert_eq!(format_reward(&stale_think), 0);
        assert_eq!(format_reward(&traj(vec![], Status::Exhausted, None)), 0);
    }

    #[test]
    fn total_reward_substitutes() {
        let cfg = RolloutConfig::default();
        let answered = traj(
            vec![Segment::new(SegmentKind::Answer, "YG Entertainment", 0)],
            Status::Answered,
            Some("YG Entertainment"),
        );
        let r = total_reward(&answered, &cfg);
        assert_eq!((r.em, r.format, r.total), (1, 1, 1.2));
        let wrong = traj(vec![Segment::new(SegmentKind::Answer, "SM", 0)], Status::Answered, Some("SM"));
        assert_eq!(total_reward(&wrong, &cfg).total, 0.2);
        let exhausted = traj(vec![], Status::Exhausted, None);
        assert_eq!(total_reward(&exhausted, &cfg).total, 0.0);
    }

    fn record(dataset: &str, em: u8, status: Status) -> TrajectoryRecord {
        let mut t = traj(vec![], status, None);
        t.question.dataset = dataset.into();
        TrajectoryRecord::new(&t, RewardBreakdown::new(em == 1, false, 0.2), &RolloutConfig::default())
    }

    #[test]
    fn aggregate_means() {
        let recs: Vec<_> = [1, 0, 1, 1].iter().map(|&e| record("nq", e, Status::Answered)).collect();
        assert_eq!(aggregate(&recs).overall.em_mean, Some(0.75));
        let empty = aggregate(&[]);
        assert_eq!(empty.overall.count, 0);
        assert_eq!(empty.overall.em_mean, None);
    }

    #[test]
    fn aggregate_weights_by_count() {
        // hotpotqa: 3 items, em {1,1,0} -> 2/3; nq: 1 item, em 0 -> 0.
        // Count-weighted: (3 * 2/3 + 1 * 0) / 4 = 0.5.
        let recs = vec![
            record("hotpotqa", 1, Status::Answered),
            record("hotpotqa", 1, Status::Answered),
            record("hotpotqa", 0, Status::Answered),
            record("nq", 0, Status::Answered),
        ];
        let rep = aggregate(&recs);
        assert_eq!(rep.overall.em_mean, Some(0.5));
        assert_eq!(rep.per_dataset["hotpotqa"].count, 3);
        assert_eq!(rep.per_dataset["nq"].em_mean, Some(0.0));
    }

    #[test]
    fn failed_counts_as_zero() {
        let rep = aggregate(&[record("nq", 1, Status::Failed), record("nq", 1, Status::Answered)]);
        assert_eq!(rep.overall.em_mean, Some(0.5));
        assert_eq!(rep.overall.failed, 1);
    }

    #[test]
    fn csv_has_header_and_rows() {
        let mut buf = Vec::new();
        write_question_csv(&mut buf, &[record("nq", 1, Status::Answered)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("id,dataset,em,format,total,turns,n_queries_used\n"));
        assert!(text.contains("q,nq,1,0,1.0,0,0"));
    }
}
