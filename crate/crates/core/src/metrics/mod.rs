//! Run artifacts on disk, charts, comparison tables and multi-seed suites.
//!
//! A run directory contains `steps.csv` (one row per environment step),
//! `summary.toml` (evaluation statistics and a config echo) and a
//! `checkpoint/` directory. Plots and comparisons read only the first two.

mod compare;
mod plot;
mod steplog;
mod suite;

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use compare::{compare_summary, Comparison, ComparisonRow, PairwiseDiff};
pub use plot::{emit_plots, PlotKind};
pub use steplog::{format_f64, read_steps, write_steps, STEP_COLUMNS};
pub use suite::{run_suite, thread_cap, ExperimentSuite, PlotSpec, SuiteOutcome, SuiteRun, THREADS_VAR};

use crate::checkpoint;
use crate::error::{Error, Result};
use crate::train::{Algorithm, EvalStats, RunRecord, StepRow, TrainConfig};

pub const STEPS_FILE: &str = "steps.csv";
pub const SUMMARY_FILE: &str = "summary.toml";
pub const CHECKPOINT_DIR: &str = "checkpoint";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub label: String,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub total_reward: f64,
    /// Training reward collected under each task, indexed by task id.
    pub reward_by_task: Vec<f64>,
    pub eval_mean: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skip_rate: Option<f64>,
    pub eval: Vec<EvalStats>,
    pub config: TrainConfig,
}

/// Default series label: the algorithm name, with the pivot batch size for the averaged variant.
pub fn default_label(cfg: &TrainConfig) -> String {
    match cfg.algorithm {
        Algorithm::FgSfdqnAlg3 => format!("fg_sfdqn_alg3_n{}", cfg.averaging_n),
        a => a.name().to_string(),
    }
}

impl RunSummary {
    pub fn from_record(record: &RunRecord, label: &str) -> Self {
        let by_task = record.reward_by_task();
        Self {
            label: label.to_string(),
            algorithm: record.config.algorithm,
            seed: record.config.seed,
            total_reward: record.total_reward(),
            reward_by_task: (0..record.config.num_tasks)
                .map(|t| by_task.get(&t).copied().unwrap_or(0.0))
                .collect(),
            eval_mean: record.eval_mean(),
            skip_rate: record.skip_rate,
            eval: record.eval.clone(),
            config: record.config.clone(),
        }
    }
}

/// Writes `steps.csv`, `summary.toml` and the checkpoint into `dir`.
pub fn write_run(dir: &Path, record: &RunRecord, label: &str) -> Result<RunSummary> {
    std::fs::create_dir_all(dir)?;
    write_steps(BufWriter::new(File::create(dir.join(STEPS_FILE))?), &record.rows)?;
    let summary = RunSummary::from_record(record, label);
    let text = toml::to_string(&summary).map_err(|e| Error::Input(e.to_string()))?;
    std::fs::write(dir.join(SUMMARY_FILE), text)?;
    checkpoint::save(&dir.join(CHECKPOINT_DIR), &record.learner, &record.config)?;
    Ok(summary)
}

/// A run directory's step log and summary.
#[derive(Clone, Debug)]
pub struct LoadedRun {
    pub dir: PathBuf,
    pub summary: RunSummary,
    pub rows: Vec<StepRow>,
}

pub fn load_run(dir: &Path) -> Result<LoadedRun> {
    let text = std::fs::read_to_string(dir.join(SUMMARY_FILE))
        .map_err(|e| Error::Input(format!("{}: {e}", dir.join(SUMMARY_FILE).display())))?;
    let summary: RunSummary =
        toml::from_str(&text).map_err(|e| Error::Input(format!("{}: {e}", dir.display())))?;
    let file = File::open(dir.join(STEPS_FILE))
        .map_err(|e| Error::Input(format!("{}: {e}", dir.join(STEPS_FILE).display())))?;
    let rows = read_steps(BufReader::new(file))?;
    Ok(LoadedRun {
        dir: dir.to_path_buf(),
        summary,
        rows,
    })
}

/// Population mean and standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}
