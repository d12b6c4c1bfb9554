use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;

use super::{
    build_env, require, rng_stream, timed, Algorithm, Learner, LearnerRef, RunRecord, StepEvent,
    StepObserver, StepRow, TrainConfig, BEHAVIOR_STREAM, EPISODE_STREAM, REPLAY_STREAM,
    TASK_STREAM,
};
use crate::env::{task_reward, Environment, Observation, TaskSpec, Transition};
use crate::error::Result;
use crate::gpi::{epsilon_greedy, gpi_next_action, gpi_select, greedy_action};
use crate::nn::NetGradient;
use crate::replay::ReplayBuffer;
use crate::sfr::{q_from_xi, PolicyLibrary, XiArch};
use crate::updates::{
    averaged_full_gradient, full_gradient, joint_update, semi_gradient, UpdateReport,
};

type GradientRule = fn(&crate::sfr::XiNet, &Transition, usize, f64) -> Result<UpdateReport>;

pub fn xi_arch(cfg: &TrainConfig, env: &dyn Environment) -> XiArch {
    XiArch {
        obs_dim: env.obs_dim(),
        hidden: cfg.hidden.clone(),
        num_actions: env.num_actions(),
        feature_dim: env.feature_dim(),
    }
}

/// State shared by the three successor-feature loops.
struct SfRun<'a> {
    cfg: &'a TrainConfig,
    env: Box<dyn Environment>,
    tasks: Vec<TaskSpec>,
    lib: PolicyLibrary,
    behavior: ChaCha8Rng,
    episodes: ChaCha8Rng,
    rows: Vec<StepRow>,
    observer: &'a mut dyn StepObserver,
}

struct Acted {
    transition: Transition,
    gamma_t: f64,
    /// Observation to act from next: `s'`, or the start state after a reset.
    next_obs: Observation,
}

struct Outcome {
    residual_norm: f64,
    batch_msbe: f64,
    blocks: Vec<usize>,
    ns: u64,
}

impl Outcome {
    fn skipped() -> Self {
        Self {
            residual_norm: 0.0,
            batch_msbe: 0.0,
            blocks: Vec::new(),
            ns: 0,
        }
    }
}

impl<'a> SfRun<'a> {
    fn new(cfg: &'a TrainConfig, observer: &'a mut dyn StepObserver) -> Result<Self> {
        let (env, tasks) = build_env(cfg)?;
        let lib = PolicyLibrary::new(xi_arch(cfg, env.as_ref()), cfg.seed);
        Ok(Self {
            cfg,
            env,
            tasks,
            lib,
            behavior: rng_stream(cfg.seed, BEHAVIOR_STREAM),
            episodes: rng_stream(cfg.seed, EPISODE_STREAM),
            rows: Vec::with_capacity(cfg.total_steps()),
            observer,
        })
    }

    fn reset(&mut self) -> Observation {
        let seed = self.episodes.next_u64();
        self.env.reset(seed)
    }

    /// ε-greedy GPI step for task `i` from `s`, with the optional reward-model update.
    ///
    /// Returns the behavior GPI choice's policy index with the transition.
    fn act(&mut self, s: Observation, i: usize, search_upto: usize) -> Result<(usize, Acted)> {
        let choice = gpi_select(&self.lib, &s, self.lib.reward(i), search_upto)?;
        let a = epsilon_greedy(
            choice.action,
            self.cfg.epsilon,
            self.env.num_actions(),
            &mut self.behavior,
        )?;
        let pivot_key = self.env.pivot_key(&s, a);
        let out = self.env.step(a)?;
        let r = task_reward(&self.tasks[i], &out.features)?;
        if self.cfg.learn_rewards {
            self.lib.reward_mut(i).update(&out.features, r, self.cfg.alpha_r)?;
        }
        let gamma_t = if out.terminal { 0.0 } else { self.cfg.gamma };
        let next_obs = if out.terminal || out.truncated {
            self.reset()
        } else {
            out.obs.clone()
        };
        let transition = Transition {
            s,
            a,
            r,
            s_next: out.obs,
            features: out.features,
            terminal: out.terminal,
            task_id: i,
            pivot_key,
        };
        Ok((
            choice.policy,
            Acted {
                transition,
                gamma_t,
                next_obs,
            },
        ))
    }

    fn log(&mut self, step: u64, i: usize, r: f64, cum: f64, c: usize, out: &Outcome) {
        self.rows.push(StepRow {
            step,
            task_id: i,
            reward: r,
            cumulative_task_reward: cum,
            residual_norm: out.residual_norm,
            batch_msbe: out.batch_msbe,
            chosen_policy: Some(c),
            updated: !out.blocks.is_empty(),
            wall_clock_ns: out.ns,
        });
        let event = StepEvent {
            row: self.rows.last().expect("row just pushed"),
            updated_blocks: &out.blocks,
            learner: LearnerRef::Library(&self.lib),
        };
        self.observer.on_step(&event);
    }

    fn finish(self, skip_rate: Option<f64>) -> Result<RunRecord> {
        let learner = Learner::Library(self.lib);
        let eval = super::evaluate(&learner, self.cfg)?;
        Ok(RunRecord {
            config: self.cfg.clone(),
            rows: self.rows,
            eval,
            skip_rate,
            learner,
        })
    }
}

/// Greedy next action of block `c` under its own reward model.
fn own_greedy(lib: &PolicyLibrary, c: usize, s_next: &Observation) -> Result<usize> {
    Ok(greedy_action(&q_from_xi(&lib.net(c).eval(s_next)?, lib.reward(c))?))
}

/// Block-`i` and (when distinct) block-`c` updates on a single transition.
///
/// Block `i` bootstraps from `a_hat`; block `c` from its own greedy action.
fn single_update(
    lib: &mut PolicyLibrary,
    rule: GradientRule,
    t: &Transition,
    gamma_t: f64,
    (i, c, a_hat): (usize, usize, usize),
    alpha: f64,
) -> Result<Outcome> {
    let mut grads = vec![(i, rule(lib.net(i), t, a_hat, gamma_t)?)];
    if c != i {
        let a_c = own_greedy(lib, c, &t.s_next)?;
        grads.push((c, rule(lib.net(c), t, a_c, gamma_t)?));
    }
    let (residual_norm, batch_msbe) = (grads[0].1.residual_norm, grads[0].1.batch_msbe);
    joint_update(lib, i, c, &grads, alpha)?;
    Ok(Outcome {
        residual_norm,
        batch_msbe,
        blocks: grads.iter().map(|g| g.0).collect(),
        ns: 0,
    })
}

/// Replay-minibatch variant: per-transition gradients averaged over the batch.
fn minibatch_update(
    lib: &mut PolicyLibrary,
    rule: GradientRule,
    batch: &[Transition],
    gamma: f64,
    (i, c, search_upto): (usize, usize, usize),
    alpha: f64,
) -> Result<Outcome> {
    let layout = lib.net(i).params().layout().clone();
    let mut gi = NetGradient::zeros(layout.clone());
    let mut gc = NetGradient::zeros(layout);
    let (mut res, mut msbe) = (0.0, 0.0);
    for t in batch {
        let gamma_t = if t.terminal { 0.0 } else { gamma };
        let a_hat = gpi_next_action(lib, &t.s_next, lib.reward(i), search_upto)?;
        let rep = rule(lib.net(i), t, a_hat, gamma_t)?;
        gi.add_assign(&rep.grad)?;
        res += rep.residual_norm;
        msbe += rep.batch_msbe;
        if c != i {
            let a_c = own_greedy(lib, c, &t.s_next)?;
            gc.add_assign(&rule(lib.net(c), t, a_c, gamma_t)?.grad)?;
        }
    }
    let n = batch.len() as f64;
    gi.scale(1.0 / n);
    gc.scale(1.0 / n);
    let report = |grad| UpdateReport {
        grad,
        residual_norm: res / n,
        batch_msbe: msbe / n,
    };
    let mut grads = vec![(i, report(gi))];
    if c != i {
        grads.push((c, report(gc)));
    }
    joint_update(lib, i, c, &grads, alpha)?;
    Ok(Outcome {
        residual_norm: res / n,
        batch_msbe: msbe / n,
        blocks: grads.iter().map(|g| g.0).collect(),
        ns: 0,
    })
}

/// Tasks in order with warm-started blocks; GPI over the blocks learned so far.
///
/// `sfdqn` uses the semi-gradient and `fg_sfdqn_alg1` the full gradient; the
/// control flow is otherwise identical. The prior `c` comes from the behavior
/// GPI choice at `s_t`.
pub fn train_sequential(cfg: &TrainConfig, observer: &mut dyn StepObserver) -> Result<RunRecord> {
    require(cfg, &[Algorithm::Sfdqn, Algorithm::FgSfdqnAlg1], "sequential training")?;
    let rule: GradientRule = if cfg.algorithm == Algorithm::FgSfdqnAlg1 {
        full_gradient
    } else {
        semi_gradient
    };
    let mut run = SfRun::new(cfg, observer)?;
    let mut replay = if cfg.minibatch {
        Some((ReplayBuffer::new(cfg.buffer_capacity)?, rng_stream(cfg.seed, REPLAY_STREAM)))
    } else {
        None
    };
    let mut step = 0u64;
    for i in 0..cfg.num_tasks {
        let task = run.tasks[i].clone();
        run.lib.spawn_task(&task, true, cfg.learn_rewards)?;
        run.env.set_task(i)?;
        let mut s = run.reset();
        let mut cum = 0.0;
        for _ in 0..cfg.steps_per_task {
            let (c, acted) = run.act(s, i, i + 1)?;
            let alpha = cfg.lr_schedule.rate(cfg.alpha, step);
            let t = &acted.transition;
            let lib = &mut run.lib;
            let (mut out, ns) = timed(cfg.record_timing, || match replay.as_mut() {
                None => {
                    let a_hat = gpi_next_action(lib, &t.s_next, lib.reward(i), i + 1)?;
                    single_update(lib, rule, t, acted.gamma_t, (i, c, a_hat), alpha)
                }
                Some((buf, rng)) => {
                    buf.push(t.clone());
                    let batch = buf.sample(cfg.batch_size, rng)?;
                    minibatch_update(lib, rule, &batch, cfg.gamma, (i, c, i + 1), alpha)
                }
            })?;
            out.ns = ns;
            cum += t.r;
            let r = t.r;
            run.log(step, i, r, cum, c, &out);
            s = acted.next_obs;
            step += 1;
        }
    }
    run.finish(None)
}

fn spawn_all(run: &mut SfRun<'_>) -> Result<()> {
    for task in run.tasks.clone() {
        run.lib.spawn_task(&task, false, run.cfg.learn_rewards)?;
    }
    Ok(())
}

/// Uniform task sampling each iteration, full-gradient updates on blocks `i`
/// and `c`, where `(c, â)` is the GPI choice at `s'` over all blocks.
pub fn train_randomized(cfg: &TrainConfig, observer: &mut dyn StepObserver) -> Result<RunRecord> {
    require(cfg, &[Algorithm::FgSfdqnAlg2], "randomized training")?;
    let mut run = SfRun::new(cfg, observer)?;
    spawn_all(&mut run)?;
    let m = cfg.num_tasks;
    let mut task_rng = rng_stream(cfg.seed, TASK_STREAM);
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity)?;
    run.reset();
    let mut cum = 0.0;
    for step in 0..cfg.total_steps() as u64 {
        let i = task_rng.gen_range(0..m);
        run.env.set_task(i)?;
        let s = run.env.observe();
        let (_, acted) = run.act(s, i, m)?;
        let t = &acted.transition;
        buffer.push(t.clone());
        let alpha = cfg.lr_schedule.rate(cfg.alpha, step);
        let lib = &mut run.lib;
        let mut c = 0;
        let (mut out, ns) = timed(cfg.record_timing, || {
            let sel = gpi_select(lib, &t.s_next, lib.reward(i), m)?;
            c = sel.policy;
            single_update(lib, full_gradient, t, acted.gamma_t, (i, sel.policy, sel.action), alpha)
        })?;
        out.ns = ns;
        cum += t.r;
        let r = t.r;
        run.log(step, i, r, cum, c, &out);
    }
    run.finish(None)
}

/// Componentwise mean of the next-state observations in `batch`.
fn mean_next_state(batch: &[Transition]) -> Observation {
    let mut mean = vec![0.0; batch[0].s_next.len()];
    for t in batch {
        for (m, x) in mean.iter_mut().zip(t.s_next.as_slice()) {
            *m += x;
        }
    }
    let n = batch.len() as f64;
    Observation(mean.into_iter().map(|m| m / n).collect())
}

/// As [`train_randomized`], but each update uses the averaged residual over
/// `N` replayed transitions sharing a uniformly sampled pivot `(s, a)`.
///
/// `(c, â)` is the GPI choice at the mean next state and both blocks bootstrap
/// from the same `â`. Iterations whose pivot bucket holds fewer than `N`
/// transitions skip the update; the skipped fraction is reported.
pub fn train_randomized_averaged(
    cfg: &TrainConfig,
    observer: &mut dyn StepObserver,
) -> Result<RunRecord> {
    require(cfg, &[Algorithm::FgSfdqnAlg3], "averaged randomized training")?;
    let mut run = SfRun::new(cfg, observer)?;
    spawn_all(&mut run)?;
    let m = cfg.num_tasks;
    let mut task_rng = rng_stream(cfg.seed, TASK_STREAM);
    let mut replay_rng = rng_stream(cfg.seed, REPLAY_STREAM);
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity)?;
    run.reset();
    let (mut cum, mut skipped) = (0.0, 0usize);
    let total = cfg.total_steps() as u64;
    for step in 0..total {
        let i = task_rng.gen_range(0..m);
        run.env.set_task(i)?;
        let s = run.env.observe();
        let (_, acted) = run.act(s, i, m)?;
        let r = acted.transition.r;
        buffer.push(acted.transition);
        let alpha = cfg.lr_schedule.rate(cfg.alpha, step);
        let n = cfg.averaging_n_at(step);
        let lib = &mut run.lib;
        let mut c = i;
        let (mut out, ns) = timed(cfg.record_timing, || {
            let idx = buffer.sample_indices(1, &mut replay_rng)?[0];
            let pivot = buffer.get(idx).expect("sampled index is live").clone();
            let batch = buffer.sample_pivot_batch(&pivot.pivot_key, n, &mut replay_rng);
            if batch.len() < n {
                return Ok(Outcome::skipped());
            }
            let sel = gpi_select(lib, &mean_next_state(&batch), lib.reward(i), m)?;
            c = sel.policy;
            let avg = |lib: &PolicyLibrary, j: usize| {
                averaged_full_gradient(lib.net(j), &pivot.s, pivot.a, &batch, sel.action, cfg.gamma)
            };
            let mut grads = vec![(i, avg(lib, i)?)];
            if c != i {
                grads.push((c, avg(lib, c)?));
            }
            let (residual_norm, batch_msbe) = (grads[0].1.residual_norm, grads[0].1.batch_msbe);
            joint_update(lib, i, c, &grads, alpha)?;
            Ok(Outcome {
                residual_norm,
                batch_msbe,
                blocks: grads.iter().map(|g| g.0).collect(),
                ns: 0,
            })
        })?;
        if out.blocks.is_empty() {
            skipped += 1;
            out.ns = 0;
        } else {
            out.ns = ns;
        }
        cum += r;
        run.log(step, i, r, cum, c, &out);
    }
    run.finish(Some(skipped as f64 / total as f64))
}
