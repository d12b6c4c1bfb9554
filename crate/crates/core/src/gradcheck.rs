//! Finite-difference verification of every analytic gradient in the crate.
//!
//! Each check draws random small networks and transitions, evaluates the
//! corresponding loss directly from forward passes, differentiates it with
//! central differences, and records the relative error against the analytic
//! gradient.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{FeatureVec, Observation, PivotKey, Transition};
use crate::error::Result;
use crate::gpi::greedy_action;
use crate::nn::{finite_diff_grad, relative_error, Layout, ParamVector};
use crate::sfr::{XiArch, XiNet};
use crate::updates::{averaged_full_gradient, fgdqn_gradient, full_gradient, semi_gradient};

pub const FD_EPS: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-6;
/// Gradient norm below which errors are measured absolutely.
pub const NORM_FLOOR: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub instances: usize,
    pub max_rel_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckReport {
    pub checks: Vec<CheckResult>,
}

impl GradcheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.checks.iter().map(|c| c.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_rel_error() <= TOLERANCE
    }
}

struct Instance {
    arch: XiArch,
    params: ParamVector,
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let depth = rng.gen_range(0..=2);
    let arch = XiArch {
        obs_dim: rng.gen_range(1..=5),
        hidden: (0..depth).map(|_| rng.gen_range(2..=8)).collect(),
        num_actions: rng.gen_range(2..=4),
        feature_dim: rng.gen_range(1..=3),
    };
    let layout = arch.layout().expect("positive widths");
    // Wider than the default init so activations leave the linear regime.
    let n = layout.num_params();
    let params = ParamVector::from_values(layout, uniform(rng, n, -1.0, 1.0)).expect("finite");
    Instance { arch, params }
}

fn random_transition(rng: &mut ChaCha8Rng, arch: &XiArch, s: &[f64], a: usize) -> Transition {
    Transition {
        s: Observation(s.to_vec()),
        a,
        r: rng.gen_range(-1.0..1.0),
        s_next: Observation(uniform(rng, arch.obs_dim, -1.0, 1.0)),
        features: FeatureVec(uniform(rng, arch.feature_dim, 0.0, 1.0)),
        terminal: false,
        task_id: 0,
        pivot_key: PivotKey(vec![a as u8]),
    }
}

fn xi(arch: &XiArch, p: &ParamVector) -> XiNet {
    XiNet::new(p.clone(), arch.num_actions, arch.feature_dim).expect("arch layout")
}

/// `‖δ̄‖²` for the mean target over `batch`, from forward passes only.
fn residual_loss(net: &XiNet, s: &Observation, a: usize, batch: &[Transition], a_hat: usize, gammas: &[f64]) -> f64 {
    let d = net.feature_dim();
    let pred = net.eval(s).expect("width");
    let mut target = vec![0.0; d];
    for (t, g) in batch.iter().zip(gammas) {
        let next = net.eval(&t.s_next).expect("width");
        for (k, acc) in target.iter_mut().enumerate() {
            *acc += t.features.0[k] + g * next.get(a_hat, k);
        }
    }
    let n = batch.len() as f64;
    (0..d).map(|k| (target[k] / n - pred.get(a, k)).powi(2)).sum()
}

fn check_xi(
    name: &'static str,
    instances: usize,
    rng: &mut ChaCha8Rng,
    mut case: impl FnMut(&mut ChaCha8Rng, &Instance, usize) -> Result<f64>,
) -> Result<CheckResult> {
    let mut worst: f64 = 0.0;
    for k in 0..instances {
        let inst = random_instance(rng);
        worst = worst.max(case(rng, &inst, k)?);
    }
    Ok(CheckResult {
        name,
        instances,
        max_rel_error: worst,
    })
}

/// Runs all checks with `instances` random cases each.
pub fn run_gradcheck(instances: usize, seed: u64) -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();

    checks.push(check_xi("net_backward", instances, &mut rng, |rng, inst, _| {
        let x = uniform(rng, inst.arch.obs_dim, -1.0, 1.0);
        let width = inst.params.layout().output_width();
        let cot = uniform(rng, width, -1.0, 1.0);
        let analytic = inst.params.backward(&x, &cot)?;
        let fd = finite_diff_grad(
            |p| {
                let y = p.forward(&x).expect("width");
                y.iter().zip(&cot).map(|(a, b)| a * b).sum()
            },
            &inst.params,
            FD_EPS,
        )?;
        Ok(relative_error(analytic.values(), fd.values(), NORM_FLOOR))
    })?);

    checks.push(check_xi("full_gradient", instances, &mut rng, |rng, inst, k| {
        let gamma = if k % 2 == 0 { 0.95 } else { 0.0 };
        let s = uniform(rng, inst.arch.obs_dim, -1.0, 1.0);
        let a = rng.gen_range(0..inst.arch.num_actions);
        let a_hat = rng.gen_range(0..inst.arch.num_actions);
        let t = random_transition(rng, &inst.arch, &s, a);
        let analytic = full_gradient(&xi(&inst.arch, &inst.params), &t, a_hat, gamma)?;
        let fd = finite_diff_grad(
            |p| residual_loss(&xi(&inst.arch, p), &t.s, a, std::slice::from_ref(&t), a_hat, &[gamma]),
            &inst.params,
            FD_EPS,
        )?;
        Ok(relative_error(analytic.grad.values(), fd.values(), NORM_FLOOR))
    })?);

    checks.push(check_xi("semi_gradient_zero_discount", instances, &mut rng, |rng, inst, _| {
        let s = uniform(rng, inst.arch.obs_dim, -1.0, 1.0);
        let a = rng.gen_range(0..inst.arch.num_actions);
        let a_hat = rng.gen_range(0..inst.arch.num_actions);
        let t = random_transition(rng, &inst.arch, &s, a);
        let analytic = semi_gradient(&xi(&inst.arch, &inst.params), &t, a_hat, 0.0)?;
        let fd = finite_diff_grad(
            |p| residual_loss(&xi(&inst.arch, p), &t.s, a, std::slice::from_ref(&t), a_hat, &[0.0]),
            &inst.params,
            FD_EPS,
        )?;
        Ok(relative_error(analytic.grad.values(), fd.values(), NORM_FLOOR))
    })?);

    for (name, n) in [("averaged_full_gradient_n1", 1usize), ("averaged_full_gradient_n5", 5)] {
        checks.push(check_xi(name, instances, &mut rng, |rng, inst, _| {
            let s = uniform(rng, inst.arch.obs_dim, -1.0, 1.0);
            let a = rng.gen_range(0..inst.arch.num_actions);
            let a_hat = rng.gen_range(0..inst.arch.num_actions);
            let mut batch: Vec<Transition> = (0..n).map(|_| random_transition(rng, &inst.arch, &s, a)).collect();
            // One terminal sample when the batch has several, to cover γ_p = 0.
            if n > 1 {
                batch[n - 1].terminal = true;
            }
            let gammas: Vec<f64> = batch.iter().map(|t| if t.terminal { 0.0 } else { 0.95 }).collect();
            let s_obs = Observation(s.clone());
            let analytic = averaged_full_gradient(&xi(&inst.arch, &inst.params), &s_obs, a, &batch, a_hat, 0.95)?;
            let fd = finite_diff_grad(
                |p| residual_loss(&xi(&inst.arch, p), &s_obs, a, &batch, a_hat, &gammas),
                &inst.params,
                FD_EPS,
            )?;
            Ok(relative_error(analytic.grad.values(), fd.values(), NORM_FLOOR))
        })?);
    }

    checks.push(check_xi("fgdqn_gradient", instances, &mut rng, |rng, inst, k| {
        let gamma = if k % 2 == 0 { 0.95 } else { 0.0 };
        let mut widths = inst.params.layout().widths().to_vec();
        *widths.last_mut().unwrap() = inst.arch.num_actions;
        let layout = Layout::new(widths)?;
        let n = layout.num_params();
        let q = ParamVector::from_values(layout, uniform(rng, n, -1.0, 1.0))?;
        let s = uniform(rng, inst.arch.obs_dim, -1.0, 1.0);
        let a = rng.gen_range(0..inst.arch.num_actions);
        let t = random_transition(rng, &inst.arch, &s, a);
        let a_star = greedy_action(&q.forward(t.s_next.as_slice())?);
        let analytic = fgdqn_gradient(&q, &t, gamma)?;
        let fd = finite_diff_grad(
            |p| {
                let now = p.forward(t.s.as_slice()).expect("width");
                let next = p.forward(t.s_next.as_slice()).expect("width");
                let delta = t.r + gamma * next[a_star] - now[a];
                0.5 * delta * delta
            },
            &q,
            FD_EPS,
        )?;
        Ok(relative_error(analytic.grad.values(), fd.values(), NORM_FLOOR))
    })?);

    Ok(GradcheckReport { checks })
}
