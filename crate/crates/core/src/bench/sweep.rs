use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::BenchError;
use crate::model::{Question, RolloutConfig, TrajectoryRecord};
use crate::reward::{aggregate, score_all, EvalReport, SweepPoint};
use crate::rollout::{run_batch, Collaborators};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    NExpansions,
    TopK,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            Self::NExpansions => "n_expansions",
            Self::TopK => "top_k",
        }
    }

    fn apply(self, cfg: &mut RolloutConfig, value: u32) {
        match self {
            Self::NExpansions => cfg.n_expansions = value,
            Self::TopK => cfg.top_k = value,
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepAxis {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "n" | "n_expansions" => Ok(Self::NExpansions),
            "k" | "top_k" => Ok(Self::TopK),
            other => Err(BenchError::InvalidSweep(format!("unknown axis {other:?}, expected n or k"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<u32>,
    pub base_config: RolloutConfig,
    pub seed: u64,
}

impl SweepSpec {
    pub fn new(axis: SweepAxis, values: Vec<u32>, base_config: RolloutConfig, seed: u64) -> Result<Self, BenchError> {
        let spec = Self { axis, values, base_config, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.values.is_empty() {
            return Err(BenchError::InvalidSweep("no axis values".into()));
        }
        if self.values[0] == 0 {
            return Err(BenchError::InvalidSweep("axis values must be at least 1".into()));
        }
        if self.values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(BenchError::InvalidSweep(format!("values must be strictly increasing: {:?}", self.values)));
        }
        self.base_config.validate().map_err(|e| BenchError::InvalidSweep(e.to_string()))
    }

    /// The config evaluated at one axis value.
    pub fn cell_config(&self, value: u32) -> RolloutConfig {
        let mut cfg = self.base_config.clone();
        self.axis.apply(&mut cfg, value);
        cfg.seed = Some(self.seed);
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub axis_value: u32,
    pub report: Option<EvalReport>,
    pub error: Option<String>,
    #[serde(skip)]
    pub records: Vec<TrajectoryRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub axis: SweepAxis,
    pub seed: u64,
    pub cells: Vec<SweepCell>,
}

impl SweepReport {
    pub fn em_mean(&self, axis_value: u32) -> Option<f64> {
        self.cells
            .iter()
            .find(|c| c.axis_value == axis_value)
            .and_then(|c| c.report.as_ref())
            .and_then(|r| r.overall.em_mean)
    }

    /// Plot data: `axis_value,dataset,em_mean,count`, with an `overall` row per cell.
    pub fn write_plot_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["axis_value", "dataset", "em_mean", "count"])?;
        for cell in &self.cells {
            let Some(report) = &cell.report else { continue };
            let rows = report.per_dataset.iter().map(|(d, s)| (d.as_str(), s)).chain([("overall", &report.overall)]);
            for (dataset, score) in rows {
                let em = score.em_mean.map(|m| format!("{m:.6}")).unwrap_or_default();
                w.write_record([cell.axis_value.to_string(), dataset.to_string(), em, score.count.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn plot_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_plot_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

/// Runs one full evaluation per axis value, cells in order. A cell that
/// cannot run records its error and the sweep moves on.
pub fn run_sweep(
    spec: &SweepSpec,
    questions: &[Question],
    collab: &Collaborators,
    parallelism: usize,
) -> Result<SweepReport, BenchError> {
    spec.validate()?;
    let mut cells = Vec::with_capacity(spec.values.len());
    for &value in &spec.values {
        let cfg = spec.cell_config(value);
        let cell = match run_batch(questions, &cfg, collab, parallelism) {
            Ok(out) => {
                let records = score_all(&out.trajectories, &cfg);
                let mut report = aggregate(&records);
                report.config = Some(cfg);
                report.sweep = Some(SweepPoint { axis: spec.axis.name().into(), value });
                tracing::info!(axis = %spec.axis, value, em = ?report.overall.em_mean, "sweep cell done");
                SweepCell { axis_value: value, report: Some(report), error: None, records }
            }
            Err(e) => {
                tracing::warn!(axis = %spec.axis, value, error = %e, "sweep cell failed");
                SweepCell { axis_value: value, report: None, error: Some(e.to_string()), records: Vec::new() }
            }
        };
        cells.push(cell);
    }
    Ok(SweepReport { axis: spec.axis, seed: spec.seed, cells })
}
