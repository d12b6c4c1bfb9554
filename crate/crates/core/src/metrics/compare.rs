use std::fmt::Write as _;
use std::io::Write;

use super::{format_f64, mean_std, RunSummary};
use crate::error::{Error, Result};

/// Statistics over seeds for one label, per task or overall (`task_id = None`).
#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonRow {
    pub label: String,
    pub task_id: Option<usize>,
    pub seeds: usize,
    pub train_reward_mean: f64,
    pub train_reward_std: f64,
    pub eval_mean: f64,
    pub eval_std: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairwiseDiff {
    pub a: String,
    pub b: String,
    /// Overall eval mean of `a` minus that of `b`.
    pub eval_diff: f64,
    /// Total training reward mean of `a` minus that of `b`.
    pub train_diff: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    pub pairwise: Vec<PairwiseDiff>,
}

/// Per-label, per-task training reward and final evaluation across seeds, plus
/// pairwise differences of the overall means.
pub fn compare_summary(runs: &[RunSummary]) -> Result<Comparison> {
    let mut labels: Vec<&str> = Vec::new();
    for r in runs {
        if !labels.contains(&r.label.as_str()) {
            labels.push(&r.label);
        }
    }
    if labels.len() < 2 {
        return Err(Error::Usage("comparison needs at least two algorithms".into()));
    }
    let mut rows = Vec::new();
    let mut overall = Vec::new();
    for label in &labels {
        let group: Vec<&RunSummary> = runs.iter().filter(|r| r.label == *label).collect();
        let num_tasks = group.iter().map(|r| r.eval.len()).max().unwrap_or(0);
        for t in 0..num_tasks {
            let train: Vec<f64> = group.iter().filter_map(|r| r.reward_by_task.get(t).copied()).collect();
            let eval: Vec<f64> = group.iter().filter_map(|r| r.eval.get(t).map(|e| e.mean)).collect();
            let (tm, ts) = mean_std(&train);
            let (em, es) = mean_std(&eval);
            rows.push(ComparisonRow {
                label: label.to_string(),
                task_id: Some(t),
                seeds: group.len(),
                train_reward_mean: tm,
                train_reward_std: ts,
                eval_mean: em,
                eval_std: es,
            });
        }
        let (tm, ts) = mean_std(&group.iter().map(|r| r.total_reward).collect::<Vec<_>>());
        let (em, es) = mean_std(&group.iter().map(|r| r.eval_mean).collect::<Vec<_>>());
        let row = ComparisonRow {
            label: label.to_string(),
            task_id: None,
            seeds: group.len(),
            train_reward_mean: tm,
            train_reward_std: ts,
            eval_mean: em,
            eval_std: es,
        };
        overall.push(row.clone());
        rows.push(row);
    }
    let mut pairwise = Vec::new();
    for (x, a) in overall.iter().enumerate() {
        for b in &overall[x + 1..] {
            pairwise.push(PairwiseDiff {
                a: a.label.clone(),
                b: b.label.clone(),
                eval_diff: a.eval_mean - b.eval_mean,
                train_diff: a.train_reward_mean - b.train_reward_mean,
            });
        }
    }
    Ok(Comparison { rows, pairwise })
}

impl Comparison {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<24} {:>5} {:>5} {:>22} {:>22}",
            "label", "task", "seeds", "train reward", "final eval"
        );
        for r in &self.rows {
            let task = r.task_id.map_or("all".to_string(), |t| t.to_string());
            let _ = writeln!(
                s,
                "{:<24} {:>5} {:>5} {:>12.3} ± {:<7.3} {:>12.3} ± {:<7.3}",
                r.label, task, r.seeds, r.train_reward_mean, r.train_reward_std, r.eval_mean, r.eval_std
            );
        }
        let _ = writeln!(s);
        for p in &self.pairwise {
            let _ = writeln!(
                s,
                "{} - {}: eval {:+.3}, train reward {:+.3}",
                p.a, p.b, p.eval_diff, p.train_diff
            );
        }
        s
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "label",
            "task_id",
            "seeds",
            "train_reward_mean",
            "train_reward_std",
            "eval_mean",
            "eval_std",
        ])?;
        for r in &self.rows {
            out.write_record([
                r.label.clone(),
                r.task_id.map_or("all".to_string(), |t| t.to_string()),
                r.seeds.to_string(),
                format_f64(r.train_reward_mean),
                format_f64(r.train_reward_std),
                format_f64(r.eval_mean),
                format_f64(r.eval_std),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}
