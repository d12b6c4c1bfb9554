use rand::RngCore;

use super::{
    build_env, require, rng_stream, timed, Algorithm, Learner, LearnerRef, RunRecord, StepEvent,
    StepObserver, StepRow, TrainConfig, BEHAVIOR_STREAM, EPISODE_STREAM, REPLAY_STREAM,
};
use crate::env::{task_reward, Environment, Transition};
use crate::error::Result;
use crate::gpi::{epsilon_greedy, greedy_action};
use crate::nn::{Layout, NetGradient, ParamVector};
use crate::replay::ReplayBuffer;
use crate::updates::{dqn_gradient, fgdqn_gradient};

/// Scalar Q head: observation in, one value per action out.
pub fn q_layout(cfg: &TrainConfig, env: &dyn Environment) -> Result<Layout> {
    let mut widths = vec![env.obs_dim()];
    widths.extend_from_slice(&cfg.hidden);
    widths.push(env.num_actions());
    Layout::new(widths)
}

/// One Q-network carried across the task sequence, trained from replay
/// minibatches of the current task's transitions.
pub fn train_baseline(cfg: &TrainConfig, observer: &mut dyn StepObserver) -> Result<RunRecord> {
    require(cfg, &[Algorithm::Dqn, Algorithm::Fgdqn], "baseline training")?;
    let rule = if cfg.algorithm == Algorithm::Fgdqn {
        fgdqn_gradient
    } else {
        dqn_gradient
    };
    let (mut env, tasks) = build_env(cfg)?;
    let mut q = ParamVector::init(q_layout(cfg, env.as_ref())?, cfg.seed);
    let mut behavior = rng_stream(cfg.seed, BEHAVIOR_STREAM);
    let mut episodes = rng_stream(cfg.seed, EPISODE_STREAM);
    let mut replay_rng = rng_stream(cfg.seed, REPLAY_STREAM);
    let mut rows = Vec::with_capacity(cfg.total_steps());
    let mut step = 0u64;
    for (i, task) in tasks.iter().enumerate() {
        env.set_task(i)?;
        let mut buffer = ReplayBuffer::new(cfg.buffer_capacity)?;
        let mut s = env.reset(episodes.next_u64());
        let mut cum = 0.0;
        for _ in 0..cfg.steps_per_task {
            let greedy = greedy_action(&q.forward(s.as_slice())?);
            let a = epsilon_greedy(greedy, cfg.epsilon, env.num_actions(), &mut behavior)?;
            let pivot_key = env.pivot_key(&s, a);
            let out = env.step(a)?;
            let r = task_reward(task, &out.features)?;
            let next = if out.terminal || out.truncated {
                env.reset(episodes.next_u64())
            } else {
                out.obs.clone()
            };
            buffer.push(Transition {
                s,
                a,
                r,
                s_next: out.obs,
                features: out.features,
                terminal: out.terminal,
                task_id: i,
                pivot_key,
            });
            let alpha = cfg.lr_schedule.rate(cfg.alpha, step);
            let ((res, msbe), ns) = timed(cfg.record_timing, || {
                let batch = buffer.sample(cfg.batch_size, &mut replay_rng)?;
                let mut g = NetGradient::zeros(q.layout().clone());
                let (mut res, mut msbe) = (0.0, 0.0);
                for t in &batch {
                    let gamma_t = if t.terminal { 0.0 } else { cfg.gamma };
                    let rep = rule(&q, t, gamma_t)?;
                    g.add_assign(&rep.grad)?;
                    res += rep.residual_norm;
                    msbe += rep.batch_msbe;
                }
                let n = batch.len() as f64;
                g.scale(1.0 / n);
                q.sgd_step(&g, alpha)?;
                Ok((res / n, msbe / n))
            })?;
            cum += r;
            rows.push(StepRow {
                step,
                task_id: i,
                reward: r,
                cumulative_task_reward: cum,
                residual_norm: res,
                batch_msbe: msbe,
                chosen_policy: None,
                updated: true,
                wall_clock_ns: ns,
            });
            observer.on_step(&StepEvent {
                row: rows.last().expect("row just pushed"),
                updated_blocks: &[0],
                learner: LearnerRef::QNet(&q),
            });
            s = next;
            step += 1;
        }
    }
    let learner = Learner::QNet(q);
    let eval = super::evaluate(&learner, cfg)?;
    Ok(RunRecord {
        config: cfg.clone(),
        rows,
        eval,
        skip_rate: None,
        learner,
    })
}
