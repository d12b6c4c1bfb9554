//! Bellman residuals and the gradient rules applied to ξ-networks and scalar
//! Q-networks.
//!
//! For a transition `(s, a, φ, s')` and a next action `â` chosen beforehand,
//! the componentwise residual is
//!
//! ```text
//! δ(φ) = φ_t + γ_t ξ(s', â, φ) − ξ(s, a, φ)
//! ```
//!
//! The full gradient differentiates `‖δ‖²` through both the prediction and the
//! bootstrapped target:
//!
//! ```text
//! ∇‖δ‖² = Σ_φ 2 δ(φ) (γ_t ∇ξ(s', â, φ) − ∇ξ(s, a, φ))
//! ```
//!
//! The semi-gradient drops the `∇ξ(s', â, φ)` term. The averaged variant
//! replaces the single target by the mean over N transitions sharing `(s, a)`.
//! `â` is never differentiated through.

use crate::env::{Observation, Transition};
use crate::error::{check_width, Error, Result};
use crate::gpi::greedy_action;
use crate::nn::{NetGradient, ParamVector};
use crate::sfr::{PolicyLibrary, XiNet};

/// `δ(φ) = target(φ) − ξ(s, a, φ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualVec(pub Vec<f64>);

impl ResidualVec {
    pub fn norm(&self) -> f64 {
        self.0.iter().map(|d| d * d).sum::<f64>().sqrt()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UpdateReport {
    pub grad: NetGradient,
    pub residual_norm: f64,
    /// Squared Bellman error of the inputs under the current parameters.
    pub batch_msbe: f64,
}

struct Target<'a> {
    phi: &'a [f64],
    s_next: &'a [f64],
    gamma: f64,
}

fn check_gamma(gamma: f64) -> Result<()> {
    if (0.0..1.0).contains(&gamma) {
        Ok(())
    } else {
        Err(Error::Config(format!("discount must be in [0, 1), got {gamma}")))
    }
}

fn check_action(net: &XiNet, a: usize) -> Result<()> {
    if a < net.num_actions() {
        Ok(())
    } else {
        Err(Error::Input(format!(
            "action {a} out of range for {} actions",
            net.num_actions()
        )))
    }
}

/// Residual against the mean target of `targets`, plus its gradient.
fn residual_update(
    net: &XiNet,
    s: &Observation,
    a: usize,
    targets: &[Target<'_>],
    a_hat: usize,
    differentiate_target: bool,
) -> Result<UpdateReport> {
    check_action(net, a)?;
    check_action(net, a_hat)?;
    let d = net.feature_dim();
    let params = net.params();
    let trace_s = params.forward_trace(s.as_slice())?;
    let pred = &trace_s.output()[a * d..(a + 1) * d];

    let n = targets.len() as f64;
    let mut target_sum = vec![0.0; d];
    let mut next_traces = Vec::with_capacity(targets.len());
    for t in targets {
        check_gamma(t.gamma)?;
        check_width("transition features", d, t.phi.len())?;
        let trace = params.forward_trace(t.s_next)?;
        let next = &trace.output()[a_hat * d..(a_hat + 1) * d];
        for ((acc, phi), xi) in target_sum.iter_mut().zip(t.phi).zip(next) {
            *acc += phi + t.gamma * xi;
        }
        next_traces.push(trace);
    }
    let delta: Vec<f64> = target_sum
        .iter()
        .zip(pred)
        .map(|(sum, p)| sum / n - p)
        .collect();

    let mut grad = NetGradient::zeros(params.layout().clone());
    let pred_cot: Vec<f64> = delta.iter().map(|dl| -2.0 * dl).collect();
    params.accumulate_backward(&trace_s, &net.row_cotangent(a, &pred_cot), &mut grad)?;
    if differentiate_target {
        for (t, trace) in targets.iter().zip(&next_traces) {
            if t.gamma == 0.0 {
                continue;
            }
            let cot: Vec<f64> = delta.iter().map(|dl| 2.0 * t.gamma * dl / n).collect();
            params.accumulate_backward(trace, &net.row_cotangent(a_hat, &cot), &mut grad)?;
        }
    }
    let msbe: f64 = delta.iter().map(|dl| dl * dl).sum();
    Ok(UpdateReport {
        grad,
        residual_norm: msbe.sqrt(),
        batch_msbe: msbe,
    })
}

fn single_target(t: &Transition, gamma_t: f64) -> [Target<'_>; 1] {
    [Target {
        phi: t.features.as_slice(),
        s_next: t.s_next.as_slice(),
        gamma: gamma_t,
    }]
}

pub fn bellman_residual(
    net: &XiNet,
    t: &Transition,
    a_hat: usize,
    gamma_t: f64,
) -> Result<ResidualVec> {
    check_gamma(gamma_t)?;
    check_action(net, t.a)?;
    check_action(net, a_hat)?;
    let d = net.feature_dim();
    check_width("transition features", d, t.features.len())?;
    let now = net.eval(&t.s)?;
    let next = net.eval(&t.s_next)?;
    Ok(ResidualVec(
        (0..d)
            .map(|k| t.features.0[k] + gamma_t * next.get(a_hat, k) - now.get(t.a, k))
            .collect(),
    ))
}

/// Exact gradient of `‖δ‖²` for one transition, target term included.
pub fn full_gradient(net: &XiNet, t: &Transition, a_hat: usize, gamma_t: f64) -> Result<UpdateReport> {
    residual_update(net, &t.s, t.a, &single_target(t, gamma_t), a_hat, true)
}

/// TD-style gradient treating the bootstrapped target as a constant.
pub fn semi_gradient(net: &XiNet, t: &Transition, a_hat: usize, gamma_t: f64) -> Result<UpdateReport> {
    residual_update(net, &t.s, t.a, &single_target(t, gamma_t), a_hat, false)
}

/// `Σ_φ 2 δ(φ) γ_t ∇ξ(s', â, φ)`: the part of the full gradient the semi-gradient omits.
pub fn bootstrap_correction(
    net: &XiNet,
    t: &Transition,
    a_hat: usize,
    gamma_t: f64,
) -> Result<NetGradient> {
    let delta = bellman_residual(net, t, a_hat, gamma_t)?;
    let cot: Vec<f64> = delta.0.iter().map(|dl| 2.0 * gamma_t * dl).collect();
    net.params()
        .backward(t.s_next.as_slice(), &net.row_cotangent(a_hat, &cot))
}

fn check_pivot_batch(a: usize, batch: &[Transition]) -> Result<()> {
    let first = batch
        .first()
        .ok_or_else(|| Error::Usage("averaged update needs a non-empty batch".into()))?;
    if batch.iter().any(|t| t.pivot_key != first.pivot_key) {
        return Err(Error::Usage("batch mixes transitions from different pivots".into()));
    }
    if first.a != a {
        return Err(Error::Usage(format!(
            "pivot action {a} differs from batch action {}",
            first.a
        )));
    }
    Ok(())
}

/// Gradient of the averaged residual over `N` transitions that start at the pivot `(s, a)`.
///
/// Terminal transitions contribute no bootstrap term.
pub fn averaged_full_gradient(
    net: &XiNet,
    s: &Observation,
    a: usize,
    batch: &[Transition],
    a_hat: usize,
    gamma: f64,
) -> Result<UpdateReport> {
    check_pivot_batch(a, batch)?;
    check_gamma(gamma)?;
    let targets: Vec<Target<'_>> = batch
        .iter()
        .map(|t| Target {
            phi: t.features.as_slice(),
            s_next: t.s_next.as_slice(),
            gamma: if t.terminal { 0.0 } else { gamma },
        })
        .collect();
    residual_update(net, s, a, &targets, a_hat, true)
}

/// Mean of the per-sample squared residuals (diagnostic; not the averaged loss).
pub fn sample_msbe(
    net: &XiNet,
    batch: &[Transition],
    a_hat: usize,
    gamma: f64,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Usage("empty batch".into()));
    }
    let mut total = 0.0;
    for t in batch {
        let g = if t.terminal { 0.0 } else { gamma };
        let r = bellman_residual(net, t, a_hat, g)?;
        total += r.0.iter().map(|d| d * d).sum::<f64>();
    }
    Ok(total / batch.len() as f64)
}

fn q_update(
    net: &ParamVector,
    t: &Transition,
    gamma_t: f64,
    differentiate_target: bool,
) -> Result<UpdateReport> {
    check_gamma(gamma_t)?;
    let n_actions = net.layout().output_width();
    if t.a >= n_actions {
        return Err(Error::Input(format!(
            "action {} out of range for {n_actions} actions",
            t.a
        )));
    }
    let trace_s = net.forward_trace(t.s.as_slice())?;
    let trace_next = net.forward_trace(t.s_next.as_slice())?;
    let q_next = trace_next.output();
    let a_star = greedy_action(q_next);
    let delta = t.r + gamma_t * q_next[a_star] - trace_s.output()[t.a];

    let mut grad = NetGradient::zeros(net.layout().clone());
    let mut cot = vec![0.0; n_actions];
    cot[t.a] = -delta;
    net.accumulate_backward(&trace_s, &cot, &mut grad)?;
    if differentiate_target && gamma_t != 0.0 {
        let mut cot = vec![0.0; n_actions];
        cot[a_star] = gamma_t * delta;
        net.accumulate_backward(&trace_next, &cot, &mut grad)?;
    }
    Ok(UpdateReport {
        grad,
        residual_norm: delta.abs(),
        batch_msbe: delta * delta,
    })
}

/// DQN semi-gradient `−δ ∇Q(s, a)` with `δ = r + γ_t max Q(s', ·) − Q(s, a)`.
pub fn dqn_gradient(net: &ParamVector, t: &Transition, gamma_t: f64) -> Result<UpdateReport> {
    q_update(net, t, gamma_t, false)
}

/// Full gradient `δ (γ_t ∇Q(s', a*) − ∇Q(s, a))` with `a*` the greedy next action held fixed.
pub fn fgdqn_gradient(net: &ParamVector, t: &Transition, gamma_t: f64) -> Result<UpdateReport> {
    q_update(net, t, gamma_t, true)
}

/// Applies block gradients: block `i` always, block `c` when `c ≠ i`, nothing else.
pub fn joint_update(
    lib: &mut PolicyLibrary,
    i: usize,
    c: usize,
    grads: &[(usize, UpdateReport)],
    alpha: f64,
) -> Result<()> {
    let m = lib.active_count();
    if i >= m || c >= m {
        return Err(Error::Usage(format!(
            "blocks ({i}, {c}) out of range for {m} active tasks"
        )));
    }
    let find = |j: usize| {
        grads
            .iter()
            .find(|(b, _)| *b == j)
            .map(|(_, r)| &r.grad)
            .ok_or_else(|| Error::Usage(format!("missing gradient for block {j}")))
    };
    let gi = find(i)?;
    let new_i = lib.net(i).params().stepped(gi, alpha)?;
    let new_c = if c != i {
        Some(lib.net(c).params().stepped(find(c)?, alpha)?)
    } else {
        None
    };
    *lib.net_mut(i).params_mut() = new_i;
    if let Some(p) = new_c {
        *lib.net_mut(c).params_mut() = p;
    }
    Ok(())
}
