//! Generalized policy improvement over a [`PolicyLibrary`].

use rand::Rng;

use crate::env::Observation;
use crate::error::{Error, Result};
use crate::sfr::{q_from_xi, PolicyLibrary, RewardModel};

/// Maximising `(policy, action)` pair and its value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GpiChoice {
    pub policy: usize,
    pub action: usize,
    pub value: f64,
}

/// Index of the largest entry; ties go to the lowest index.
pub fn greedy_action(q: &[f64]) -> usize {
    let mut best = 0;
    for (a, &v) in q.iter().enumerate().skip(1) {
        if v > q[best] {
            best = a;
        }
    }
    best
}

/// argmax over `(k, a) ∈ [0, search_upto) × A` of `Σ_φ ξ_k(s, a, φ) R(φ)`.
///
/// Candidates are scanned in lexicographic `(k, a)` order and only a strictly
/// larger value replaces the incumbent, so ties resolve to the lowest policy
/// index and then the lowest action.
pub fn gpi_select(
    lib: &PolicyLibrary,
    s: &Observation,
    reward: &RewardModel,
    search_upto: usize,
) -> Result<GpiChoice> {
    if lib.is_empty() {
        return Err(Error::Usage("GPI over an empty policy library".into()));
    }
    if search_upto == 0 || search_upto > lib.active_count() {
        return Err(Error::Usage(format!(
            "search_upto must be in [1, {}], got {search_upto}",
            lib.active_count()
        )));
    }
    let mut best: Option<GpiChoice> = None;
    for k in 0..search_upto {
        let q = q_from_xi(&lib.net(k).eval(s)?, reward)?;
        for (a, &value) in q.iter().enumerate() {
            if best.map_or(true, |b| value > b.value) {
                best = Some(GpiChoice {
                    policy: k,
                    action: a,
                    value,
                });
            }
        }
    }
    Ok(best.expect("library has at least one action"))
}

/// Action component of [`gpi_select`] at the next state.
pub fn gpi_next_action(
    lib: &PolicyLibrary,
    s_next: &Observation,
    reward: &RewardModel,
    search_upto: usize,
) -> Result<usize> {
    Ok(gpi_select(lib, s_next, reward, search_upto)?.action)
}

/// With probability `epsilon` a uniform random action, otherwise `choice`.
///
/// Always consumes one uniform draw, plus one more when exploring.
pub fn epsilon_greedy<R: Rng + ?Sized>(
    choice: usize,
    epsilon: f64,
    num_actions: usize,
    rng: &mut R,
) -> Result<usize> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::Config(format!("epsilon must be in [0, 1], got {epsilon}")));
    }
    if num_actions == 0 {
        return Err(Error::Config("no actions to choose from".into()));
    }
    if rng.gen::<f64>() < epsilon {
        Ok(rng.gen_range(0..num_actions))
    } else {
        Ok(choice)
    }
}
