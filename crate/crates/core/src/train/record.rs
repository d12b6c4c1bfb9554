use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::nn::ParamVector;
use crate::sfr::PolicyLibrary;

use super::config::TrainConfig;

/// One logged environment step.
///
/// `cumulative_task_reward` is the running sum of `reward` within the current
/// segment. Sequential loops start a segment at every task boundary; the
/// randomized loops treat the whole run as one segment.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRow {
    pub step: u64,
    pub task_id: usize,
    pub reward: f64,
    pub cumulative_task_reward: f64,
    pub residual_norm: f64,
    pub batch_msbe: f64,
    /// GPI-selected prior block; `None` for the scalar-Q baselines.
    pub chosen_policy: Option<usize>,
    pub updated: bool,
    /// Update time in nanoseconds, 0 unless timing is recorded.
    pub wall_clock_ns: u64,
}

/// Undiscounted evaluation returns for one task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalStats {
    pub task_id: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub returns: Vec<f64>,
}

impl EvalStats {
    pub fn from_returns(task_id: usize, returns: Vec<f64>) -> Self {
        let n = returns.len() as f64;
        let mean = returns.iter().sum::<f64>() / n;
        let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
        Self {
            task_id,
            mean,
            std: var.sqrt(),
            returns,
        }
    }
}

/// Trained parameters: a successor-feature library or a single Q-network.
#[derive(Clone, Debug, PartialEq)]
pub enum Learner {
    Library(PolicyLibrary),
    QNet(ParamVector),
}

#[derive(Clone, Debug)]
pub struct RunRecord {
    pub config: TrainConfig,
    pub rows: Vec<StepRow>,
    pub eval: Vec<EvalStats>,
    /// Fraction of averaged-update iterations skipped for a short pivot bucket.
    pub skip_rate: Option<f64>,
    pub learner: Learner,
}

impl RunRecord {
    /// Mean of the per-task evaluation means.
    pub fn eval_mean(&self) -> f64 {
        self.eval.iter().map(|e| e.mean).sum::<f64>() / self.eval.len().max(1) as f64
    }

    /// Sum of all training rewards.
    pub fn total_reward(&self) -> f64 {
        self.rows.iter().map(|r| r.reward).sum()
    }

    /// Total training reward collected under each task id.
    pub fn reward_by_task(&self) -> BTreeMap<usize, f64> {
        let mut out = BTreeMap::new();
        for row in &self.rows {
            *out.entry(row.task_id).or_insert(0.0) += row.reward;
        }
        out
    }
}
