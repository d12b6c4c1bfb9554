//! Multi-task environments sharing dynamics across tasks while rewards vary.
//!
//! Every environment exposes the same episodic interface through
//! [`Environment`]. Rewards are always linear in the transition features, so a
//! task is fully described by its [`TaskSpec::reward_weights`].

mod chain;
mod four_rooms;
mod grid;
mod maze;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub use chain::{ChainMdp, DEFAULT_SLIP};
pub use four_rooms::{FourRooms, INSTANCES_PER_TYPE, OBJECT_TYPES};
pub use grid::GridMap;
pub use maze::{MazeLayout, PointMaze};

use crate::error::{check_width, Error, Result};

/// Horizon used by every environment unless configured otherwise.
pub const DEFAULT_HORIZON: usize = 200;

/// Observation vector handed to the networks.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation(pub Vec<f64>);

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Feature vector φ(s, a, s').
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVec(pub Vec<f64>);

impl FeatureVec {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Hashable identity of a state-action pair, used to group same-origin transitions.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PivotKey(pub Vec<u8>);

#[derive(Clone, Debug, PartialEq)]
pub struct TaskSpec {
    pub task_id: usize,
    pub reward_weights: Vec<f64>,
    pub goal_position: Option<(f64, f64)>,
}

/// One environment step, the unit stored in replay and consumed by updates.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub s: Observation,
    pub a: usize,
    pub r: f64,
    pub s_next: Observation,
    pub features: FeatureVec,
    pub terminal: bool,
    pub task_id: usize,
    pub pivot_key: PivotKey,
}

/// Result of [`Environment::step`]. `truncated` marks the horizon, not a terminal state.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub obs: Observation,
    pub features: FeatureVec,
    pub terminal: bool,
    pub truncated: bool,
}

/// Inner product `φᵀw` of the task's reward weights with a feature vector.
pub fn task_reward(task: &TaskSpec, features: &FeatureVec) -> Result<f64> {
    check_width("reward weights", features.len(), task.reward_weights.len())?;
    Ok(task
        .reward_weights
        .iter()
        .zip(features.as_slice())
        .map(|(w, f)| w * f)
        .sum())
}

pub trait Environment: Send {
    fn kind(&self) -> EnvKind;
    fn num_actions(&self) -> usize;
    fn obs_dim(&self) -> usize;
    fn feature_dim(&self) -> usize;
    fn horizon(&self) -> usize;
    fn tasks(&self) -> &[TaskSpec];

    /// Selects the task whose context appears in observations. Dynamics are unaffected.
    fn set_task(&mut self, task_id: usize) -> Result<()>;
    fn active_task(&self) -> usize;

    /// Puts the agent at the start state; `seed` drives any stochastic dynamics.
    fn reset(&mut self, seed: u64) -> Observation;
    fn observe(&self) -> Observation;
    fn step(&mut self, action: usize) -> Result<StepOutcome>;

    fn feature_of(&self, s: &Observation, a: usize, s_next: &Observation) -> Result<FeatureVec>;
    fn pivot_key(&self, s: &Observation, a: usize) -> PivotKey;
}

#[derive(
    Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum,
)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum EnvKind {
    FourRooms,
    PointMazeU,
    PointMazeMedium,
    PointMazeLarge,
    ChainTest,
}

impl EnvKind {
    pub fn name(self) -> &'static str {
        match self {
            EnvKind::FourRooms => "four_rooms",
            EnvKind::PointMazeU => "point_maze_u",
            EnvKind::PointMazeMedium => "point_maze_medium",
            EnvKind::PointMazeLarge => "point_maze_large",
            EnvKind::ChainTest => "chain_test",
        }
    }

    pub fn is_maze(self) -> bool {
        matches!(
            self,
            EnvKind::PointMazeU | EnvKind::PointMazeMedium | EnvKind::PointMazeLarge
        )
    }

    fn builtin_layout(self) -> Option<&'static str> {
        match self {
            EnvKind::FourRooms => Some(include_str!("../../layouts/four_rooms.txt")),
            EnvKind::PointMazeU => Some(include_str!("../../layouts/maze_u.txt")),
            EnvKind::PointMazeMedium => Some(include_str!("../../layouts/maze_medium.txt")),
            EnvKind::PointMazeLarge => Some(include_str!("../../layouts/maze_large.txt")),
            EnvKind::ChainTest => None,
        }
    }
}

/// Everything needed to build an environment instance.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvConfig {
    pub kind: EnvKind,
    pub horizon: usize,
    /// Seed for layout randomness (object placement), fixed across episodes.
    pub layout_seed: u64,
    pub layout_file: Option<PathBuf>,
    /// Reward weights overriding the built-in task set.
    pub tasks: Option<Vec<Vec<f64>>>,
}

impl EnvConfig {
    pub fn new(kind: EnvKind) -> Self {
        Self {
            kind,
            horizon: DEFAULT_HORIZON,
            layout_seed: 0,
            layout_file: None,
            tasks: None,
        }
    }
}

pub fn make_env(cfg: &EnvConfig) -> Result<Box<dyn Environment>> {
    if cfg.horizon == 0 {
        return Err(Error::Config("horizon must be positive".into()));
    }
    let layout_text = match (&cfg.layout_file, cfg.kind.builtin_layout()) {
        (Some(path), _) => Some(std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read layout {}: {e}", path.display()))
        })?),
        (None, builtin) => builtin.map(str::to_owned),
    };
    let env: Box<dyn Environment> = match cfg.kind {
        EnvKind::FourRooms => {
            let map = GridMap::parse(layout_text.as_deref().unwrap())?;
            Box::new(FourRooms::new(map, cfg.layout_seed, cfg.horizon, cfg.tasks.clone())?)
        }
        kind if kind.is_maze() => {
            let map = GridMap::parse(layout_text.as_deref().unwrap())?;
            let layout = MazeLayout::from_grid(map)?;
            Box::new(PointMaze::new(kind, layout, cfg.horizon, cfg.tasks.clone())?)
        }
        _ => Box::new(ChainMdp::new(5, chain::DEFAULT_SLIP, cfg.horizon, cfg.tasks.clone())?),
    };
    Ok(env)
}

pub(crate) fn build_tasks(
    defaults: Vec<Vec<f64>>,
    overrides: Option<Vec<Vec<f64>>>,
    feature_dim: usize,
    goals: Option<&[(f64, f64)]>,
) -> Result<Vec<TaskSpec>> {
    let weights = overrides.unwrap_or(defaults);
    if weights.is_empty() {
        return Err(Error::Config("task set is empty".into()));
    }
    weights
        .into_iter()
        .enumerate()
        .map(|(task_id, w)| {
            if w.len() != feature_dim {
                return Err(Error::Config(format!(
                    "task {task_id} has {} reward weights, feature dimension is {feature_dim}",
                    w.len()
                )));
            }
            if w.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config(format!("task {task_id} has non-finite weights")));
            }
            let goal_position = goals.and_then(|g| {
                let hot = w.iter().position(|&v| v != 0.0)?;
                g.get(hot).copied()
            });
            Ok(TaskSpec {
                task_id,
                reward_weights: w,
                goal_position,
            })
        })
        .collect()
}

pub(crate) fn check_action(action: usize, num_actions: usize) -> Result<()> {
    if action < num_actions {
        Ok(())
    } else {
        Err(Error::Input(format!(
            "action {action} out of range for {num_actions} actions"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn task_reward_is_inner_product() {
        let task = TaskSpec {
            task_id: 0,
            reward_weights: vec![0.0, 0.0, 0.0, 1.0],
            goal_position: None,
        };
        assert_eq!(task_reward(&task, &FeatureVec(vec![0.0, 0.0, 0.0, 1.0])).unwrap(), 1.0);
        let zero = TaskSpec {
            reward_weights: vec![0.0; 4],
            ..task.clone()
        };
        assert_eq!(task_reward(&zero, &FeatureVec(vec![1.0, 0.5, 0.0, 1.0])).unwrap(), 0.0);
        assert!(matches!(
            task_reward(&task, &FeatureVec(vec![1.0])),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn every_builtin_env_builds() {
        for kind in [
            EnvKind::FourRooms,
            EnvKind::PointMazeU,
            EnvKind::PointMazeMedium,
            EnvKind::PointMazeLarge,
            EnvKind::ChainTest,
        ] {
            let env = make_env(&EnvConfig::new(kind)).unwrap();
            assert_eq!(env.kind(), kind);
            assert!(!env.tasks().is_empty());
            assert_eq!(env.horizon(), DEFAULT_HORIZON);
        }
    }

    #[test]
    fn mismatched_task_override_rejected() {
        let mut cfg = EnvConfig::new(EnvKind::FourRooms);
        cfg.tasks = Some(vec![vec![1.0, 0.0]]);
        assert!(matches!(make_env(&cfg), Err(Error::Config(_))));
    }
}
