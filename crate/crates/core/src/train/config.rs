use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::env::{EnvConfig, EnvKind, DEFAULT_HORIZON};
use crate::error::{Error, Result};
use crate::replay::DEFAULT_CAPACITY;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
pub enum Algorithm {
    #[serde(rename = "dqn")]
    #[value(name = "dqn")]
    Dqn,
    #[serde(rename = "fgdqn")]
    #[value(name = "fgdqn")]
    Fgdqn,
    #[serde(rename = "sfdqn")]
    #[value(name = "sfdqn")]
    Sfdqn,
    #[serde(rename = "fg_sfdqn_alg1")]
    #[value(name = "fg_sfdqn_alg1")]
    FgSfdqnAlg1,
    #[serde(rename = "fg_sfdqn_alg2")]
    #[value(name = "fg_sfdqn_alg2")]
    FgSfdqnAlg2,
    #[serde(rename = "fg_sfdqn_alg3")]
    #[value(name = "fg_sfdqn_alg3")]
    FgSfdqnAlg3,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::Dqn,
        Algorithm::Fgdqn,
        Algorithm::Sfdqn,
        Algorithm::FgSfdqnAlg1,
        Algorithm::FgSfdqnAlg2,
        Algorithm::FgSfdqnAlg3,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Dqn => "dqn",
            Algorithm::Fgdqn => "fgdqn",
            Algorithm::Sfdqn => "sfdqn",
            Algorithm::FgSfdqnAlg1 => "fg_sfdqn_alg1",
            Algorithm::FgSfdqnAlg2 => "fg_sfdqn_alg2",
            Algorithm::FgSfdqnAlg3 => "fg_sfdqn_alg3",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == name)
    }

    /// Scalar Q-network baselines.
    pub fn is_baseline(self) -> bool {
        matches!(self, Algorithm::Dqn | Algorithm::Fgdqn)
    }

    /// Plot color, fixed per algorithm.
    pub fn color(self) -> &'static str {
        match self {
            Algorithm::Dqn => "#1f77b4",
            Algorithm::Sfdqn => "#ff7f0e",
            Algorithm::FgSfdqnAlg1 => "#2ca02c",
            Algorithm::Fgdqn => "#d62728",
            Algorithm::FgSfdqnAlg2 => "#9467bd",
            Algorithm::FgSfdqnAlg3 => "#8c564b",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// `α_k = α₀ / (1 + k / 10000)`.
    RobbinsMonro,
}

/// Decay constant of the Robbins-Monro schedule, in steps.
pub const RM_DECAY_STEPS: f64 = 10_000.0;

impl LrSchedule {
    /// Step size at global update index `k` (0-based).
    pub fn rate(self, alpha0: f64, k: u64) -> f64 {
        match self {
            LrSchedule::Constant => alpha0,
            LrSchedule::RobbinsMonro => alpha0 / (1.0 + k as f64 / RM_DECAY_STEPS),
        }
    }
}

/// Fully resolved settings for one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub env: EnvKind,
    pub algorithm: Algorithm,
    pub steps_per_task: usize,
    pub num_tasks: usize,
    pub batch_size: usize,
    pub gamma: f64,
    pub epsilon: f64,
    pub alpha: f64,
    pub alpha_r: f64,
    pub horizon: usize,
    pub seed: u64,
    pub averaging_n: usize,
    pub growing_n: bool,
    pub lr_schedule: LrSchedule,
    pub learn_rewards: bool,
    pub minibatch: bool,
    pub buffer_capacity: usize,
    pub hidden: Vec<usize>,
    pub eval_episodes: usize,
    pub eval_step_cap: usize,
    pub layout_seed: u64,
    pub record_timing: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tasks: Option<Vec<Vec<f64>>>,
}

impl TrainConfig {
    /// Table defaults for `env`, running `algorithm`.
    pub fn defaults(env: EnvKind, algorithm: Algorithm) -> Self {
        let (hidden, steps_per_task, num_tasks, batch_size) = match env {
            EnvKind::FourRooms => (vec![64, 64], 10_000, 6, 64),
            EnvKind::ChainTest => (vec![16, 16], 2_000, 2, 32),
            _ => (vec![128, 128], 30_000, 8, 512),
        };
        Self {
            env,
            algorithm,
            steps_per_task,
            num_tasks,
            batch_size,
            gamma: 0.95,
            epsilon: 0.60,
            alpha: 0.001,
            alpha_r: 0.5,
            horizon: DEFAULT_HORIZON,
            seed: 0,
            averaging_n: 5,
            growing_n: false,
            lr_schedule: LrSchedule::Constant,
            learn_rewards: false,
            minibatch: false,
            buffer_capacity: DEFAULT_CAPACITY,
            hidden,
            eval_episodes: 10,
            eval_step_cap: 100,
            layout_seed: 0,
            record_timing: false,
            layout_file: None,
            tasks: None,
        }
    }

    pub fn env_config(&self) -> EnvConfig {
        EnvConfig {
            kind: self.env,
            horizon: self.horizon,
            layout_seed: self.layout_seed,
            layout_file: self.layout_file.clone(),
            tasks: self.tasks.clone(),
        }
    }

    pub fn total_steps(&self) -> usize {
        self.steps_per_task * self.num_tasks
    }

    /// Pivot batch size at update iteration `k`.
    pub fn averaging_n_at(&self, k: u64) -> usize {
        if self.growing_n {
            self.averaging_n + (k as f64 / RM_DECAY_STEPS) as usize
        } else {
            self.averaging_n
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad(format!("gamma must be in [0, 1), got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad(format!("epsilon must be in [0, 1], got {}", self.epsilon));
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return bad(format!("alpha must be finite and non-negative, got {}", self.alpha));
        }
        if !(self.alpha_r.is_finite() && self.alpha_r >= 0.0) {
            return bad(format!("alpha_r must be finite and non-negative, got {}", self.alpha_r));
        }
        for (name, v) in [
            ("steps_per_task", self.steps_per_task),
            ("num_tasks", self.num_tasks),
            ("batch_size", self.batch_size),
            ("horizon", self.horizon),
            ("averaging_n", self.averaging_n),
            ("buffer_capacity", self.buffer_capacity),
            ("eval_episodes", self.eval_episodes),
            ("eval_step_cap", self.eval_step_cap),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.hidden.contains(&0) {
            return bad("hidden widths must be positive".into());
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Partial settings from a config file or command-line flags.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    pub env: Option<EnvKind>,
    pub algorithm: Option<Algorithm>,
    pub steps_per_task: Option<usize>,
    pub num_tasks: Option<usize>,
    pub batch_size: Option<usize>,
    pub gamma: Option<f64>,
    pub epsilon: Option<f64>,
    pub alpha: Option<f64>,
    pub alpha_r: Option<f64>,
    pub horizon: Option<usize>,
    pub seed: Option<u64>,
    pub averaging_n: Option<usize>,
    pub growing_n: Option<bool>,
    pub lr_schedule: Option<LrSchedule>,
    pub learn_rewards: Option<bool>,
    pub minibatch: Option<bool>,
    pub buffer_capacity: Option<usize>,
    pub hidden: Option<Vec<usize>>,
    pub eval_episodes: Option<usize>,
    pub eval_step_cap: Option<usize>,
    pub layout_seed: Option<u64>,
    pub record_timing: Option<bool>,
    pub layout_file: Option<PathBuf>,
    pub tasks: Option<Vec<Vec<f64>>>,
}

macro_rules! overlay {
    ($cfg:ident, $o:ident, $($field:ident),*) => {
        $(if let Some(v) = $o.$field.clone() { $cfg.$field = v; })*
    };
}

impl ConfigOverrides {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Defaults for the selected environment, then `layers` applied in order.
    pub fn resolve(layers: &[&ConfigOverrides]) -> Result<TrainConfig> {
        let env = layers.iter().rev().find_map(|o| o.env).unwrap_or(EnvKind::FourRooms);
        let algorithm = layers
            .iter()
            .rev()
            .find_map(|o| o.algorithm)
            .unwrap_or(Algorithm::FgSfdqnAlg1);
        let mut cfg = TrainConfig::defaults(env, algorithm);
        for o in layers {
            overlay!(
                cfg, o, steps_per_task, num_tasks, batch_size, gamma, epsilon, alpha, alpha_r,
                horizon, seed, averaging_n, growing_n, lr_schedule, learn_rewards, minibatch,
                buffer_capacity, hidden, eval_episodes, eval_step_cap, layout_seed, record_timing
            );
            if o.layout_file.is_some() {
                cfg.layout_file = o.layout_file.clone();
            }
            if o.tasks.is_some() {
                cfg.tasks = o.tasks.clone();
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
