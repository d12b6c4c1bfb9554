use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    build_tasks, check_action, EnvKind, Environment, FeatureVec, Observation, PivotKey,
    StepOutcome, TaskSpec,
};
use crate::error::{check_width, Error, Result};

pub const DEFAULT_SLIP: f64 = 0.2;

/// Small chain with exactly known dynamics, used for tabular checks.
///
/// Action 0 moves left, action 1 moves right; with probability `slip` the agent
/// stays put. Feature 0 fires on arriving at (or staying in) the left end,
/// feature 1 at the right end. There is no terminal state.
#[derive(Clone, Debug)]
pub struct ChainMdp {
    n_states: usize,
    slip: f64,
    tasks: Vec<TaskSpec>,
    horizon: usize,
    active_task: usize,
    state: usize,
    t: usize,
    done: bool,
    rng: ChaCha8Rng,
}

impl ChainMdp {
    pub fn new(
        n_states: usize,
        slip: f64,
        horizon: usize,
        tasks: Option<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        if n_states < 2 {
            return Err(Error::Config("chain needs at least two states".into()));
        }
        if !(0.0..1.0).contains(&slip) {
            return Err(Error::Config(format!("slip must be in [0, 1), got {slip}")));
        }
        let tasks = build_tasks(vec![vec![1.0, 0.0], vec![0.0, 1.0]], tasks, 2, None)?;
        Ok(Self {
            n_states,
            slip,
            tasks,
            horizon,
            active_task: 0,
            state: n_states / 2,
            t: 0,
            done: false,
            rng: ChaCha8Rng::seed_from_u64(0),
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn state(&self) -> usize {
        self.state
    }

    pub fn set_state(&mut self, s: usize) {
        assert!(s < self.n_states);
        self.state = s;
    }

    pub fn one_hot(&self, s: usize) -> Observation {
        let mut v = vec![0.0; self.n_states];
        v[s] = 1.0;
        Observation(v)
    }

    fn intended(&self, s: usize, a: usize) -> usize {
        if a == 0 {
            s.saturating_sub(1)
        } else {
            (s + 1).min(self.n_states - 1)
        }
    }

    /// Next-state distribution `P(· | s, a)` as `(state, probability)` pairs.
    pub fn transition_probs(&self, s: usize, a: usize) -> Vec<(usize, f64)> {
        let target = self.intended(s, a);
        if target == s || self.slip == 0.0 {
            vec![(target, 1.0)]
        } else {
            vec![(target, 1.0 - self.slip), (s, self.slip)]
        }
    }

    /// Features of arriving in `s_next`.
    pub fn state_features(&self, s_next: usize) -> FeatureVec {
        FeatureVec(vec![
            if s_next == 0 { 1.0 } else { 0.0 },
            if s_next == self.n_states - 1 { 1.0 } else { 0.0 },
        ])
    }

    fn decode(&self, obs: &Observation) -> Result<usize> {
        check_width("chain observation", self.n_states, obs.len())?;
        obs.as_slice()
            .iter()
            .position(|&x| x == 1.0)
            .ok_or_else(|| Error::Input("chain observation is not one-hot".into()))
    }
}

impl Environment for ChainMdp {
    fn kind(&self) -> EnvKind {
        EnvKind::ChainTest
    }

    fn num_actions(&self) -> usize {
        2
    }

    fn obs_dim(&self) -> usize {
        self.n_states
    }

    fn feature_dim(&self) -> usize {
        2
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn tasks(&self) -> &[TaskSpec] {
        &self.tasks
    }

    fn set_task(&mut self, task_id: usize) -> Result<()> {
        if task_id >= self.tasks.len() {
            return Err(Error::Usage(format!("no task {task_id}")));
        }
        self.active_task = task_id;
        Ok(())
    }

    fn active_task(&self) -> usize {
        self.active_task
    }

    fn reset(&mut self, seed: u64) -> Observation {
        self.state = self.n_states / 2;
        self.t = 0;
        self.done = false;
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.observe()
    }

    fn observe(&self) -> Observation {
        self.one_hot(self.state)
    }

    fn step(&mut self, action: usize) -> Result<StepOutcome> {
        check_action(action, 2)?;
        if self.done {
            return Err(Error::Usage("episode has ended; reset first".into()));
        }
        let s = self.observe();
        let slipped = self.slip > 0.0 && self.rng.gen::<f64>() < self.slip;
        if !slipped {
            self.state = self.intended(self.state, action);
        }
        let obs = self.observe();
        let features = self.feature_of(&s, action, &obs)?;
        self.t += 1;
        let truncated = self.t >= self.horizon;
        self.done = truncated;
        Ok(StepOutcome {
            obs,
            features,
            terminal: false,
            truncated,
        })
    }

    fn feature_of(&self, s: &Observation, a: usize, s_next: &Observation) -> Result<FeatureVec> {
        check_action(a, 2)?;
        self.decode(s)?;
        Ok(self.state_features(self.decode(s_next)?))
    }

    fn pivot_key(&self, s: &Observation, a: usize) -> PivotKey {
        let mut bytes: Vec<u8> = s.as_slice().iter().map(|&x| (x == 1.0) as u8).collect();
        bytes.extend_from_slice(&(a as u32).to_le_bytes());
        PivotKey(bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probabilities_sum_to_one() {
        let c = ChainMdp::new(5, 0.2, 200, None).unwrap();
        for s in 0..5 {
            for a in 0..2 {
                let total: f64 = c.transition_probs(s, a).iter().map(|p| p.1).sum();
                assert!((total - 1.0).abs() < 1e-15);
            }
        }
        assert_eq!(c.transition_probs(0, 0), vec![(0, 1.0)]);
    }

    #[test]
    fn seeded_trajectories_repeat() {
        let mut c = ChainMdp::new(5, 0.3, 200, None).unwrap();
        let run = |c: &mut ChainMdp| {
            c.reset(11);
            (0..50).map(|t| c.step(t % 2).unwrap().obs).collect::<Vec<_>>()
        };
        let a = run(&mut c);
        let b = run(&mut c);
        assert_eq!(a, b);
    }

    #[test]
    fn deterministic_without_slip() {
        let mut c = ChainMdp::new(5, 0.0, 200, None).unwrap();
        c.reset(0);
        c.step(1).unwrap();
        let out = c.step(1).unwrap();
        assert_eq!(c.state(), 4);
        assert_eq!(out.features.0, vec![0.0, 1.0]);
    }
}
