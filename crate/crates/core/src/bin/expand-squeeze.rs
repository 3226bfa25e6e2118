//! Command-line front end. Exit codes: 0 success, 1 some questions or sweep
//! cells failed, 2 configuration or I/O error.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use expand_squeeze::bench::{
    classify_expansions, load_dataset, run_sweep, BenchError, HarnessConfig, SweepAxis, SweepSpec,
};
use expand_squeeze::model::{read_jsonl, write_jsonl, TrajectoryRecord};
use expand_squeeze::retrieval::{ingest_corpus, IngestOptions};
use expand_squeeze::reward::{aggregate, score_all, write_question_csv};
use expand_squeeze::rollout::run_batch;
use expand_squeeze::{Error, Status};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "expand-squeeze", version, about = "Multi-query search rollouts with retrieval squeezing")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    policy_url: Option<String>,
    #[arg(long, global = true)]
    policy_model: Option<String>,
    #[arg(long, global = true)]
    squeezer_url: Option<String>,
    #[arg(long, global = true)]
    squeezer_model: Option<String>,
    #[arg(long, global = true)]
    classifier_url: Option<String>,
    #[arg(long, global = true)]
    classifier_model: Option<String>,
    /// Saved BM25 index; overrides the config.
    #[arg(long, global = true)]
    index: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    parallelism: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Index management.
    Index {
        #[command(subcommand)]
        action: IndexAction,
    },
    /// Run rollouts over a dataset and write scored trajectories.
    Run {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Run manifest (config hash, backends, counts).
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Summarize scored trajectories into a report and a per-question CSV.
    Eval {
        #[arg(long)]
        trajectories: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Evaluate once per value of n or k.
    Sweep {
        #[arg(long)]
        dataset: PathBuf,
        /// `n` (query variants) or `k` (retrieval depth).
        #[arg(long)]
        axis: SweepAxis,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<u32>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Label every (base, expansion) query pair as syntax or semantic.
    ClassifyExpansions {
        #[arg(long)]
        trajectories: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-score stored trajectories under the current reward settings.
    Replay {
        #[arg(long)]
        trajectories: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum IndexAction {
    /// Build a BM25 index from `{doc_id, title, text}` JSONL.
    Build {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Skip malformed lines instead of failing.
        #[arg(long)]
        skip_malformed: bool,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn load_config(g: &Global) -> Result<HarnessConfig, Error> {
    let mut cfg = match &g.config {
        Some(path) => HarnessConfig::load(path)?,
        None => HarnessConfig::default(),
    };
    let set = |slot: &mut String, v: &Option<String>| {
        if let Some(v) = v {
            slot.clone_from(v);
        }
    };
    set(&mut cfg.policy.base_url, &g.policy_url);
    set(&mut cfg.policy.model, &g.policy_model);
    set(&mut cfg.squeezer.base_url, &g.squeezer_url);
    set(&mut cfg.squeezer.model, &g.squeezer_model);
    if g.classifier_url.is_some() || g.classifier_model.is_some() {
        let classifier = cfg.classifier.get_or_insert_with(Default::default);
        set(&mut classifier.base_url, &g.classifier_url);
        set(&mut classifier.model, &g.classifier_model);
    }
    if let Some(index) = &g.index {
        cfg.retrieval.index = Some(index.clone());
    }
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    if let Some(p) = g.parallelism {
        cfg.parallelism = p;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create(path: &Path) -> Result<BufWriter<File>, Error> {
    File::create(path).map(BufWriter::new).map_err(|e| BenchError::Io { path: path.into(), source: e }.into())
}

fn read_records(path: &Path) -> Result<Vec<TrajectoryRecord>, Error> {
    let file = File::open(path).map_err(|e| BenchError::Io { path: path.into(), source: e })?;
    read_jsonl(BufReader::new(file)).map_err(|(line, reason)| BenchError::Schema { line, reason }.into())
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), Error> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

fn dispatch(cli: Cli) -> Result<bool, Error> {
    match cli.command {
        Command::Index { action: IndexAction::Build { corpus, out, skip_malformed } } => {
            let index = ingest_corpus(&corpus, IngestOptions { skip_malformed })?;
            index.save(&out)?;
            println!("{}", serde_json::to_string_pretty(&index.stats())?);
            Ok(true)
        }
        Command::Run { dataset, out, manifest } => {
            let cfg = load_config(&cli.global)?;
            let questions = load_dataset(&dataset)?;
            let rollout = cfg.seeded_rollout();
            let batch = run_batch(&questions, &rollout, &cfg.collaborators()?, cfg.parallelism)?;
            let records = score_all(&batch.trajectories, &rollout);
            write_jsonl(create(&out)?, &records)?;
            if let Some(path) = manifest {
                write_json(&path, &batch.manifest)?;
            }
            let report = aggregate(&records);
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(batch.manifest.failed == 0)
        }
        Command::Eval { trajectories, report, csv } => {
            let records = read_records(&trajectories)?;
            let summary = aggregate(&records);
            if let Some(path) = report {
                write_json(&path, &summary)?;
            }
            if let Some(path) = csv {
                write_question_csv(create(&path)?, &records).map_err(|e| BenchError::Config(e.to_string()))?;
            }
            println!("{}", serde_json::to_string_pretty(&summary)?);
            Ok(summary.overall.failed == 0)
        }
        Command::Sweep { dataset, axis, values, out_dir } => {
            let cfg = load_config(&cli.global)?;
            let questions = load_dataset(&dataset)?;
            let spec = SweepSpec::new(axis, values, cfg.rollout.clone(), cfg.seed)?;
            let report = run_sweep(&spec, &questions, &cfg.collaborators()?, cfg.parallelism)?;
            std::fs::create_dir_all(&out_dir).map_err(|e| BenchError::Io { path: out_dir.clone(), source: e })?;
            write_json(&out_dir.join("sweep_report.json"), &report)?;
            report
                .write_plot_csv(create(&out_dir.join("sweep.csv"))?)
                .map_err(|e| BenchError::Config(e.to_string()))?;
            for cell in &report.cells {
                let path = out_dir.join(format!("{}_{}.jsonl", axis.name(), cell.axis_value));
                write_jsonl(create(&path)?, &cell.records)?;
            }
            print!("{}", report.plot_csv());
            Ok(report.cells.iter().all(|c| c.error.is_none()))
        }
        Command::ClassifyExpansions { trajectories, out } => {
            let cfg = load_config(&cli.global)?;
            let endpoint = cfg.classifier.as_ref().unwrap_or(&cfg.squeezer);
            let records = read_records(&trajectories)?;
            let trajs: Vec<_> = records.iter().map(TrajectoryRecord::to_trajectory).collect();
            let classification = classify_expansions(&trajs, endpoint.gateway()?.as_ref())?;
            write_jsonl(create(&out)?, &classification.labels)?;
            println!("{}", serde_json::to_string_pretty(&classification.summary)?);
            Ok(classification.unparseable.is_empty())
        }
        Command::Replay { trajectories, out } => {
            let cfg = load_config(&cli.global)?;
            let records = read_records(&trajectories)?;
            let trajs: Vec<_> = records.iter().map(TrajectoryRecord::to_trajectory).collect();
            let rescored = score_all(&trajs, &cfg.rollout);
            write_jsonl(create(&out)?, &rescored)?;
            let report = aggregate(&rescored);
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(rescored.iter().all(|r| r.status != Status::Failed))
        }
    }
}
