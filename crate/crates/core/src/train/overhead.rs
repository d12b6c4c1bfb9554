use std::hint::black_box;
use std::time::Instant;

use rand::{Rng, RngCore};

use super::{build_env, q_layout, rng_stream, xi_arch, Algorithm, TrainConfig, EPISODE_STREAM, REPLAY_STREAM};
use crate::env::{task_reward, Transition};
use crate::error::{Error, Result};
use crate::gpi::{gpi_next_action, gpi_select, greedy_action};
use crate::nn::ParamVector;
use crate::replay::ReplayBuffer;
use crate::sfr::{q_from_xi, PolicyLibrary};
use crate::updates::{
    averaged_full_gradient, dqn_gradient, fgdqn_gradient, full_gradient, joint_update,
    semi_gradient, UpdateReport,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OverheadTarget {
    /// Times an empty update; the floor of the measurement.
    Noop,
    Algo(Algorithm),
}

impl OverheadTarget {
    pub fn name(self) -> &'static str {
        match self {
            OverheadTarget::Noop => "noop",
            OverheadTarget::Algo(a) => a.name(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OverheadStats {
    pub target: OverheadTarget,
    pub samples: usize,
    pub mean_ms: f64,
    /// Population variance in ms².
    pub var_ms2: f64,
}

enum Subject {
    Noop,
    Q(ParamVector),
    Sf(PolicyLibrary),
}

/// Per-update wall-clock time of each target on one transition at a time.
///
/// A buffer is first filled with uniformly random behavior. Every target then
/// processes the same transition sequence, interleaved step by step, and only
/// the update computation is timed: the gradient(s), the GPI choices the
/// update needs, and the parameter step. Averaged updates whose pivot bucket
/// is short are skipped and not timed.
pub fn measure_overhead(
    cfg: &TrainConfig,
    targets: &[OverheadTarget],
    n_steps: usize,
) -> Result<Vec<OverheadStats>> {
    cfg.validate()?;
    if n_steps == 0 || targets.is_empty() {
        return Err(Error::Config("overhead needs steps and at least one target".into()));
    }
    let (mut env, tasks) = build_env(cfg)?;
    let m = tasks.len();
    let i = m - 1;
    let mut episodes = rng_stream(cfg.seed, EPISODE_STREAM);
    let mut walk = rng_stream(cfg.seed, REPLAY_STREAM);
    env.set_task(i)?;

    let warm = (4 * n_steps).max(20_000);
    let mut buffer = ReplayBuffer::new(warm)?;
    let mut s = env.reset(episodes.next_u64());
    for _ in 0..warm {
        let a = walk.gen_range(0..env.num_actions());
        let pivot_key = env.pivot_key(&s, a);
        let out = env.step(a)?;
        let r = task_reward(&tasks[i], &out.features)?;
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
        s = next;
    }

    let mut lib = PolicyLibrary::new(xi_arch(cfg, env.as_ref()), cfg.seed);
    for task in &tasks {
        lib.spawn_task(task, false, false)?;
    }
    let q = ParamVector::init(q_layout(cfg, env.as_ref())?, cfg.seed);
    let mut subjects: Vec<Subject> = targets
        .iter()
        .map(|t| match t {
            OverheadTarget::Noop => Subject::Noop,
            OverheadTarget::Algo(a) if a.is_baseline() => Subject::Q(q.clone()),
            OverheadTarget::Algo(_) => Subject::Sf(lib.clone()),
        })
        .collect();
    let mut times: Vec<Vec<f64>> = vec![Vec::with_capacity(n_steps); targets.len()];
    let mut pivot_rngs: Vec<_> = (0..targets.len()).map(|k| rng_stream(cfg.seed ^ k as u64, 7)).collect();

    for k in 0..n_steps {
        let t = buffer.get(k % buffer.len()).expect("buffer is warm").clone();
        let gamma_t = if t.terminal { 0.0 } else { cfg.gamma };
        let c = gpi_select(&lib, &t.s, lib.reward(i), m)?.policy;
        for (j, target) in targets.iter().enumerate() {
            let alpha = cfg.alpha;
            let start = Instant::now();
            let updated = match (target, &mut subjects[j]) {
                (OverheadTarget::Noop, _) => {
                    black_box(&t);
                    true
                }
                (OverheadTarget::Algo(a), Subject::Q(q)) => {
                    let rep = if *a == Algorithm::Fgdqn {
                        fgdqn_gradient(q, &t, gamma_t)?
                    } else {
                        dqn_gradient(q, &t, gamma_t)?
                    };
                    q.sgd_step(&rep.grad, alpha)?;
                    true
                }
                (OverheadTarget::Algo(a), Subject::Sf(l)) => {
                    sf_update(*a, l, &buffer, &t, gamma_t, (i, c, m), cfg, &mut pivot_rngs[j])?
                }
                _ => unreachable!("subjects follow targets"),
            };
            let elapsed = start.elapsed().as_secs_f64() * 1e3;
            if updated {
                times[j].push(elapsed);
            }
        }
    }

    Ok(targets
        .iter()
        .zip(times)
        .map(|(&target, ts)| {
            let n = ts.len().max(1) as f64;
            let mean = ts.iter().sum::<f64>() / n;
            let var = ts.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            OverheadStats {
                target,
                samples: ts.len(),
                mean_ms: mean,
                var_ms2: var,
            }
        })
        .collect())
}

#[allow(clippy::too_many_arguments)]
fn sf_update(
    algo: Algorithm,
    lib: &mut PolicyLibrary,
    buffer: &ReplayBuffer,
    t: &Transition,
    gamma_t: f64,
    (i, c_behavior, m): (usize, usize, usize),
    cfg: &TrainConfig,
    rng: &mut impl RngCore,
) -> Result<bool> {
    let own = |lib: &PolicyLibrary, c: usize| -> Result<usize> {
        Ok(greedy_action(&q_from_xi(&lib.net(c).eval(&t.s_next)?, lib.reward(c))?))
    };
    let mut grads: Vec<(usize, UpdateReport)> = Vec::with_capacity(2);
    let c = match algo {
        Algorithm::Sfdqn | Algorithm::FgSfdqnAlg1 => {
            let rule = if algo == Algorithm::Sfdqn { semi_gradient } else { full_gradient };
            let a_hat = gpi_next_action(lib, &t.s_next, lib.reward(i), m)?;
            grads.push((i, rule(lib.net(i), t, a_hat, gamma_t)?));
            if c_behavior != i {
                grads.push((c_behavior, rule(lib.net(c_behavior), t, own(lib, c_behavior)?, gamma_t)?));
            }
            c_behavior
        }
        Algorithm::FgSfdqnAlg2 => {
            let sel = gpi_select(lib, &t.s_next, lib.reward(i), m)?;
            grads.push((i, full_gradient(lib.net(i), t, sel.action, gamma_t)?));
            if sel.policy != i {
                grads.push((sel.policy, full_gradient(lib.net(sel.policy), t, own(lib, sel.policy)?, gamma_t)?));
            }
            sel.policy
        }
        Algorithm::FgSfdqnAlg3 => {
            let n = cfg.averaging_n;
            let batch = buffer.sample_pivot_batch(&t.pivot_key, n, rng);
            if batch.len() < n {
                return Ok(false);
            }
            let mut mean = vec![0.0; t.s_next.len()];
            for b in &batch {
                for (x, y) in mean.iter_mut().zip(b.s_next.as_slice()) {
                    *x += y / n as f64;
                }
            }
            let sel = gpi_select(lib, &crate::env::Observation(mean), lib.reward(i), m)?;
            for j in [i, sel.policy] {
                if grads.iter().all(|g| g.0 != j) {
                    grads.push((j, averaged_full_gradient(lib.net(j), &t.s, t.a, &batch, sel.action, cfg.gamma)?));
                }
            }
            sel.policy
        }
        Algorithm::Dqn | Algorithm::Fgdqn => unreachable!("baselines use the Q subject"),
    };
    joint_update(lib, i, c, &grads, cfg.alpha)?;
    Ok(true)
}
