//! Training loops, evaluation and update-time measurement.
//!
//! [`train`] dispatches on [`TrainConfig::algorithm`]:
//!
//! | algorithm        | loop                          |
//! |------------------|-------------------------------|
//! | `sfdqn`          | [`train_sequential`], semi-gradient |
//! | `fg_sfdqn_alg1`  | [`train_sequential`], full gradient |
//! | `fg_sfdqn_alg2`  | [`train_randomized`]          |
//! | `fg_sfdqn_alg3`  | [`train_randomized_averaged`] |
//! | `dqn`, `fgdqn`   | [`train_baseline`]            |
//!
//! Every source of randomness is a separate ChaCha8 stream derived from the
//! run seed, so a config and seed determine the whole run.

mod baseline;
mod config;
mod eval;
mod overhead;
mod record;
mod sf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use baseline::{q_layout, train_baseline};
pub use config::{Algorithm, ConfigOverrides, LrSchedule, TrainConfig, RM_DECAY_STEPS};
pub use eval::{evaluate, evaluate_library, evaluate_qnet};
pub use overhead::{measure_overhead, OverheadStats, OverheadTarget};
pub use record::{EvalStats, Learner, RunRecord, StepRow};
pub use sf::{train_randomized, train_randomized_averaged, train_sequential, xi_arch};

use crate::env::{make_env, Environment, TaskSpec};
use crate::error::{Error, Result};
use crate::nn::ParamVector;
use crate::sfr::PolicyLibrary;

/// Read-only view of the parameters being trained.
#[derive(Clone, Copy, Debug)]
pub enum LearnerRef<'a> {
    Library(&'a PolicyLibrary),
    QNet(&'a ParamVector),
}

/// What happened during one environment step, after its update.
#[derive(Debug)]
pub struct StepEvent<'a> {
    pub row: &'a StepRow,
    /// Blocks the update was applied to: `[i]`, `[i, c]`, or empty.
    pub updated_blocks: &'a [usize],
    pub learner: LearnerRef<'a>,
}

/// Hook invoked after every training step.
pub trait StepObserver {
    fn on_step(&mut self, event: &StepEvent<'_>);
}

impl StepObserver for () {
    fn on_step(&mut self, _: &StepEvent<'_>) {}
}

/// Runs `cfg` to completion, then evaluates the result.
pub fn train(cfg: &TrainConfig) -> Result<RunRecord> {
    train_observed(cfg, &mut ())
}

pub fn train_observed(cfg: &TrainConfig, observer: &mut dyn StepObserver) -> Result<RunRecord> {
    match cfg.algorithm {
        Algorithm::Sfdqn | Algorithm::FgSfdqnAlg1 => train_sequential(cfg, observer),
        Algorithm::FgSfdqnAlg2 => train_randomized(cfg, observer),
        Algorithm::FgSfdqnAlg3 => train_randomized_averaged(cfg, observer),
        Algorithm::Dqn | Algorithm::Fgdqn => train_baseline(cfg, observer),
    }
}

// Stream ids for the per-purpose generators.
const BEHAVIOR_STREAM: u64 = 1;
const TASK_STREAM: u64 = 2;
const REPLAY_STREAM: u64 = 3;
const EVAL_STREAM: u64 = 4;
const EPISODE_STREAM: u64 = 5;

pub(crate) fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn require(cfg: &TrainConfig, allowed: &[Algorithm], loop_name: &str) -> Result<()> {
    cfg.validate()?;
    if allowed.contains(&cfg.algorithm) {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "{loop_name} cannot run algorithm {}",
            cfg.algorithm.name()
        )))
    }
}

/// The environment and the first `num_tasks` of its tasks.
fn build_env(cfg: &TrainConfig) -> Result<(Box<dyn Environment>, Vec<TaskSpec>)> {
    let env = make_env(&cfg.env_config())?;
    let available = env.tasks().len();
    if cfg.num_tasks > available {
        return Err(Error::Config(format!(
            "{} defines {available} tasks, {} requested",
            cfg.env.name(),
            cfg.num_tasks
        )));
    }
    let tasks = env.tasks()[..cfg.num_tasks].to_vec();
    Ok((env, tasks))
}

/// Times a closure when `enabled`, returning 0 otherwise.
fn timed<T>(enabled: bool, f: impl FnOnce() -> Result<T>) -> Result<(T, u64)> {
    if enabled {
        let start = std::time::Instant::now();
        let out = f()?;
        Ok((out, start.elapsed().as_nanos() as u64))
    } else {
        Ok((f()?, 0))
    }
}
