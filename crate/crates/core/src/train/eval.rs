use rand::RngCore;

use super::{build_env, rng_stream, EvalStats, Learner, TrainConfig, EVAL_STREAM};
use crate::env::{task_reward, Environment, Observation, TaskSpec};
use crate::error::{Error, Result};
use crate::gpi::{gpi_select, greedy_action};
use crate::nn::ParamVector;
use crate::sfr::PolicyLibrary;

/// Greedy rollouts of `policy` on every task, no learning.
fn rollouts(
    env: &mut dyn Environment,
    tasks: &[TaskSpec],
    n_episodes: usize,
    step_cap: usize,
    seed: u64,
    mut policy: impl FnMut(&Observation, usize) -> Result<usize>,
) -> Result<Vec<EvalStats>> {
    if n_episodes == 0 {
        return Err(Error::Config("evaluation needs at least one episode".into()));
    }
    let mut episode_seeds = rng_stream(seed, EVAL_STREAM);
    let mut out = Vec::with_capacity(tasks.len());
    for task in tasks {
        env.set_task(task.task_id)?;
        let mut returns = Vec::with_capacity(n_episodes);
        for _ in 0..n_episodes {
            let mut s = env.reset(episode_seeds.next_u64());
            let mut ret = 0.0;
            for _ in 0..step_cap {
                let a = policy(&s, task.task_id)?;
                let step = env.step(a)?;
                ret += task_reward(task, &step.features)?;
                if step.terminal || step.truncated {
                    break;
                }
                s = step.obs;
            }
            returns.push(ret);
        }
        out.push(EvalStats::from_returns(task.task_id, returns));
    }
    Ok(out)
}

/// GPI over the whole library with each task's own reward model.
pub fn evaluate_library(
    lib: &PolicyLibrary,
    env: &mut dyn Environment,
    tasks: &[TaskSpec],
    n_episodes: usize,
    step_cap: usize,
    seed: u64,
) -> Result<Vec<EvalStats>> {
    if tasks.iter().any(|t| t.task_id >= lib.active_count()) {
        return Err(Error::Usage("evaluated task has no reward model in the library".into()));
    }
    rollouts(env, tasks, n_episodes, step_cap, seed, |s, j| {
        Ok(gpi_select(lib, s, lib.reward(j), lib.active_count())?.action)
    })
}

/// Greedy actions of a scalar Q-network.
pub fn evaluate_qnet(
    q: &ParamVector,
    env: &mut dyn Environment,
    tasks: &[TaskSpec],
    n_episodes: usize,
    step_cap: usize,
    seed: u64,
) -> Result<Vec<EvalStats>> {
    rollouts(env, tasks, n_episodes, step_cap, seed, |s, _| {
        Ok(greedy_action(&q.forward(s.as_slice())?))
    })
}

/// Evaluation protocol of `cfg` (episodes, step cap, tasks) on a fresh environment.
pub fn evaluate(learner: &Learner, cfg: &TrainConfig) -> Result<Vec<EvalStats>> {
    let (mut env, tasks) = build_env(cfg)?;
    let (n, cap) = (cfg.eval_episodes, cfg.eval_step_cap);
    match learner {
        Learner::Library(lib) => evaluate_library(lib, env.as_mut(), &tasks, n, cap, cfg.seed),
        Learner::QNet(q) => evaluate_qnet(q, env.as_mut(), &tasks, n, cap, cfg.seed),
    }
}
