//! Shared oracles for the integration tests.
//!
//! The chain helpers solve the tabular MDP by plain value iteration, without
//! touching any of the crate's learning code, so they can serve as ground truth.

#![allow(dead_code)]

use fg_sfrql::env::{ChainMdp, FeatureVec, Observation, PivotKey, Transition};
use fg_sfrql::nn::{Layout, ParamVector};
use fg_sfrql::sfr::{XiArch, XiNet};

pub const CHAIN_STATES: usize = 5;
pub const CHAIN_ACTIONS: usize = 2;
pub const CHAIN_FEATURES: usize = 2;
pub const CHAIN_GAMMA: f64 = 0.95;

pub fn chain() -> ChainMdp {
    ChainMdp::new(CHAIN_STATES, fg_sfrql::env::DEFAULT_SLIP, 200, None).unwrap()
}

/// `xi[s][a][k]` for a deterministic policy, by iterating the componentwise
/// Bellman equation until it stops changing.
pub fn dp_successor_features(env: &ChainMdp, policy: &[usize], gamma: f64) -> Vec<Vec<Vec<f64>>> {
    let n = env.n_states();
    let mut xi = vec![vec![vec![0.0; CHAIN_FEATURES]; CHAIN_ACTIONS]; n];
    loop {
        let mut next = xi.clone();
        for s in 0..n {
            for a in 0..CHAIN_ACTIONS {
                let mut row = vec![0.0; CHAIN_FEATURES];
                for (sp, p) in env.transition_probs(s, a) {
                    let phi = env.state_features(sp);
                    for k in 0..CHAIN_FEATURES {
                        row[k] += p * (phi.0[k] + gamma * xi[sp][policy[sp]][k]);
                    }
                }
                next[s][a] = row;
            }
        }
        let change = max_abs_diff3(&xi, &next);
        xi = next;
        if change < 1e-15 {
            return xi;
        }
    }
}

/// `q[s][a]` of a deterministic policy for the reward `r(s') = wᵀφ(s')`.
pub fn dp_policy_q(env: &ChainMdp, policy: &[usize], w: &[f64], gamma: f64) -> Vec<Vec<f64>> {
    let n = env.n_states();
    let reward = |sp: usize| -> f64 { env.state_features(sp).0.iter().zip(w).map(|(f, w)| f * w).sum() };
    let mut q = vec![vec![0.0; CHAIN_ACTIONS]; n];
    loop {
        let mut next = q.clone();
        for s in 0..n {
            for a in 0..CHAIN_ACTIONS {
                next[s][a] = env
                    .transition_probs(s, a)
                    .into_iter()
                    .map(|(sp, p)| p * (reward(sp) + gamma * q[sp][policy[sp]]))
                    .sum();
            }
        }
        let change = q
            .iter()
            .flatten()
            .zip(next.iter().flatten())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        q = next;
        if change < 1e-15 {
            return q;
        }
    }
}

pub fn dp_policy_value(env: &ChainMdp, policy: &[usize], w: &[f64], gamma: f64) -> Vec<f64> {
    let q = dp_policy_q(env, policy, w, gamma);
    (0..env.n_states()).map(|s| q[s][policy[s]]).collect()
}

fn max_abs_diff3(a: &[Vec<Vec<f64>>], b: &[Vec<Vec<f64>>]) -> f64 {
    a.iter()
        .flatten()
        .flatten()
        .zip(b.iter().flatten().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn tabular_arch(n_states: usize) -> XiArch {
    XiArch {
        obs_dim: n_states,
        hidden: vec![],
        num_actions: CHAIN_ACTIONS,
        feature_dim: CHAIN_FEATURES,
    }
}

/// A linear ξ-net whose output on the one-hot of `s` is exactly `xi[s]`.
pub fn tabular_xi_net(xi: &[Vec<Vec<f64>>]) -> XiNet {
    let n = xi.len();
    let width = CHAIN_ACTIONS * CHAIN_FEATURES;
    let mut params = ParamVector::zeros(Layout::new(vec![n, width]).unwrap());
    let w = params.weights_mut(0);
    for (s, per_action) in xi.iter().enumerate() {
        for (a, row) in per_action.iter().enumerate() {
            for (k, v) in row.iter().enumerate() {
                w[(a * CHAIN_FEATURES + k) * n + s] = *v;
            }
        }
    }
    XiNet::new(params, CHAIN_ACTIONS, CHAIN_FEATURES).unwrap()
}

/// A transition with arbitrary vectors, keyed by `(tag, a)`.
pub fn synthetic_transition(s: Vec<f64>, a: usize, s_next: Vec<f64>, phi: Vec<f64>, terminal: bool, tag: u8) -> Transition {
    Transition {
        s: Observation(s),
        a,
        r: 0.0,
        s_next: Observation(s_next),
        features: FeatureVec(phi),
        terminal,
        task_id: 0,
        pivot_key: PivotKey(vec![tag, a as u8]),
    }
}

/// Mean over `batch` of `‖φ + γ_t ξ(s', â_t) − ξ(s, a)‖²`, from forward passes only.
pub fn batch_msbe(net: &XiNet, batch: &[Transition], a_hats: &[usize], gamma: f64) -> f64 {
    let mut total = 0.0;
    for (t, &a_hat) in batch.iter().zip(a_hats) {
        let g = if t.terminal { 0.0 } else { gamma };
        let now = net.eval(&t.s).unwrap();
        let next = net.eval(&t.s_next).unwrap();
        for k in 0..net.feature_dim() {
            let d = t.features.0[k] + g * next.get(a_hat, k) - now.get(t.a, k);
            total += d * d;
        }
    }
    total / batch.len() as f64
}

/// Small sequential configuration on four-rooms, fast enough for integration tests.
pub fn quick_config(algo: fg_sfrql::train::Algorithm, seed: u64) -> fg_sfrql::train::TrainConfig {
    let mut cfg = fg_sfrql::train::TrainConfig::defaults(fg_sfrql::env::EnvKind::FourRooms, algo);
    cfg.seed = seed;
    cfg.num_tasks = 3;
    cfg.steps_per_task = 300;
    cfg.hidden = vec![8];
    cfg.batch_size = 8;
    cfg.eval_episodes = 2;
    cfg
}

/// Random ξ-net with up to two hidden layers and parameters uniform in ±1.
pub fn random_xi_net(rng: &mut impl rand::Rng) -> XiNet {
    let depth = rng.gen_range(0..=2);
    let arch = XiArch {
        obs_dim: rng.gen_range(1..=5),
        hidden: (0..depth).map(|_| rng.gen_range(2..=8)).collect(),
        num_actions: rng.gen_range(2..=4),
        feature_dim: rng.gen_range(1..=3),
    };
    let layout = arch.layout().unwrap();
    let values = (0..layout.num_params()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    XiNet::new(ParamVector::from_values(layout, values).unwrap(), arch.num_actions, arch.feature_dim).unwrap()
}

/// Random transition shaped for `net`, starting at `s` with action `a`.
pub fn random_transition_for(net: &XiNet, rng: &mut impl rand::Rng, s: &[f64], a: usize, terminal: bool) -> Transition {
    let obs_dim = net.params().layout().input_width();
    synthetic_transition(
        s.to_vec(),
        a,
        (0..obs_dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        (0..net.feature_dim()).map(|_| rng.gen_range(0.0..1.0)).collect(),
        terminal,
        0,
    )
}

pub fn random_obs(net: &XiNet, rng: &mut impl rand::Rng) -> Vec<f64> {
    (0..net.params().layout().input_width()).map(|_| rng.gen_range(-1.0..1.0)).collect()
}
