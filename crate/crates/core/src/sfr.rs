//! Successor feature representations: per-task ξ-networks, reward models, and
//! the policy library that holds one block of each per task.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{FeatureVec, Observation, TaskSpec};
use crate::error::{check_width, Error, Result};
use crate::nn::{Layout, ParamVector};

/// ξ(s, a, ·) for every action: a row-major `num_actions × feature_dim` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct XiMatrix {
    num_actions: usize,
    feature_dim: usize,
    data: Vec<f64>,
}

impl XiMatrix {
    pub fn from_rows(num_actions: usize, feature_dim: usize, data: Vec<f64>) -> Result<Self> {
        check_width("xi matrix", num_actions * feature_dim, data.len())?;
        Ok(Self {
            num_actions,
            feature_dim,
            data,
        })
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn row(&self, action: usize) -> &[f64] {
        &self.data[action * self.feature_dim..(action + 1) * self.feature_dim]
    }

    pub fn get(&self, action: usize, feature: usize) -> f64 {
        self.data[action * self.feature_dim + feature]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Network shape shared by every ξ-network of a library.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct XiArch {
    pub obs_dim: usize,
    pub hidden: Vec<usize>,
    pub num_actions: usize,
    pub feature_dim: usize,
}

impl XiArch {
    pub fn layout(&self) -> Result<Layout> {
        let mut widths = Vec::with_capacity(self.hidden.len() + 2);
        widths.push(self.obs_dim);
        widths.extend_from_slice(&self.hidden);
        widths.push(self.num_actions * self.feature_dim);
        Layout::new(widths)
    }
}

/// One task's parameter block θ⁽ʲ⁾ with its output reshaped to `|A| × d_φ`.
#[derive(Clone, Debug, PartialEq)]
pub struct XiNet {
    params: ParamVector,
    num_actions: usize,
    feature_dim: usize,
}

impl XiNet {
    pub fn new(params: ParamVector, num_actions: usize, feature_dim: usize) -> Result<Self> {
        check_width(
            "xi network output",
            num_actions * feature_dim,
            params.layout().output_width(),
        )?;
        Ok(Self {
            params,
            num_actions,
            feature_dim,
        })
    }

    pub fn init(arch: &XiArch, seed: u64) -> Result<Self> {
        let params = ParamVector::init(arch.layout()?, seed);
        Self::new(params, arch.num_actions, arch.feature_dim)
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamVector {
        &mut self.params
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn eval(&self, s: &Observation) -> Result<XiMatrix> {
        let out = self.params.forward(s.as_slice())?;
        XiMatrix::from_rows(self.num_actions, self.feature_dim, out)
    }

    /// Output cotangent that is `row` at action `action` and zero elsewhere.
    pub(crate) fn row_cotangent(&self, action: usize, row: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; self.num_actions * self.feature_dim];
        c[action * self.feature_dim..(action + 1) * self.feature_dim].copy_from_slice(row);
        c
    }
}

/// Linear reward model `R(φ) = wᵀφ`.
#[derive(Clone, Debug, PartialEq)]
pub struct RewardModel {
    weights: Vec<f64>,
    learned: bool,
}

impl RewardModel {
    /// Weights supplied by the environment; never updated.
    pub fn provided(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Config("reward weights must be finite".into()));
        }
        Ok(Self {
            weights,
            learned: false,
        })
    }

    /// Small random weights in `±0.01`, learned online.
    pub fn learned_random(feature_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            weights: (0..feature_dim).map(|_| rng.gen_range(-0.01..0.01)).collect(),
            learned: true,
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_learned(&self) -> bool {
        self.learned
    }

    pub fn predict(&self, features: &FeatureVec) -> Result<f64> {
        check_width("reward features", self.weights.len(), features.len())?;
        Ok(self.weights.iter().zip(features.as_slice()).map(|(w, f)| w * f).sum())
    }

    /// One SGD step on `(r - wᵀφ)²`: `w ← w + 2 α (r - wᵀφ) φ`.
    pub fn update(&mut self, phi: &FeatureVec, r: f64, alpha: f64) -> Result<()> {
        if !self.learned {
            return Err(Error::Usage("cannot update a provided reward model".into()));
        }
        let residual = r - self.predict(phi)?;
        for (w, f) in self.weights.iter_mut().zip(phi.as_slice()) {
            *w += 2.0 * alpha * residual * f;
        }
        if self.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Numeric("reward model diverged".into()));
        }
        Ok(())
    }

    pub(crate) fn from_parts(weights: Vec<f64>, learned: bool) -> Self {
        Self { weights, learned }
    }
}

/// `Q(a) = Σ_φ ξ(s, a, φ) R(φ)`.
pub fn q_from_xi(xi: &XiMatrix, reward: &RewardModel) -> Result<Vec<f64>> {
    check_width("reward weights", xi.feature_dim, reward.weights.len())?;
    Ok((0..xi.num_actions)
        .map(|a| {
            xi.row(a)
                .iter()
                .zip(&reward.weights)
                .map(|(x, w)| x * w)
                .sum()
        })
        .collect())
}

/// The joint parameter vector Θ, one ξ-network and reward model per task seen so far.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyLibrary {
    arch: XiArch,
    seed: u64,
    xi_nets: Vec<XiNet>,
    reward_models: Vec<RewardModel>,
}

impl PolicyLibrary {
    pub fn new(arch: XiArch, seed: u64) -> Self {
        Self {
            arch,
            seed,
            xi_nets: Vec::new(),
            reward_models: Vec::new(),
        }
    }

    /// Rebuilds a library from stored blocks.
    pub fn from_parts(
        arch: XiArch,
        xi_nets: Vec<XiNet>,
        reward_models: Vec<RewardModel>,
    ) -> Result<Self> {
        if xi_nets.len() != reward_models.len() {
            return Err(Error::Input(format!(
                "{} networks but {} reward models",
                xi_nets.len(),
                reward_models.len()
            )));
        }
        let layout = arch.layout()?;
        for net in &xi_nets {
            if net.params.layout() != &layout {
                return Err(Error::Input("network layout does not match architecture".into()));
            }
        }
        for rm in &reward_models {
            check_width("reward weights", arch.feature_dim, rm.weights.len())?;
        }
        Ok(Self {
            arch,
            seed: 0,
            xi_nets,
            reward_models,
        })
    }

    pub fn arch(&self) -> &XiArch {
        &self.arch
    }

    pub fn active_count(&self) -> usize {
        self.xi_nets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xi_nets.is_empty()
    }

    pub fn net(&self, j: usize) -> &XiNet {
        &self.xi_nets[j]
    }

    pub fn net_mut(&mut self, j: usize) -> &mut XiNet {
        &mut self.xi_nets[j]
    }

    pub fn nets(&self) -> &[XiNet] {
        &self.xi_nets
    }

    pub fn reward(&self, j: usize) -> &RewardModel {
        &self.reward_models[j]
    }

    pub fn reward_mut(&mut self, j: usize) -> &mut RewardModel {
        &mut self.reward_models[j]
    }

    pub fn rewards(&self) -> &[RewardModel] {
        &self.reward_models
    }

    /// Appends the block for `task`. A warm start copies the previous block;
    /// the first block is always freshly initialised.
    pub fn spawn_task(&mut self, task: &TaskSpec, warm_start: bool, learn_reward: bool) -> Result<()> {
        let next = self.active_count();
        if task.task_id != next {
            return Err(Error::Usage(format!(
                "task ids must be contiguous: expected {next}, got {}",
                task.task_id
            )));
        }
        check_width("task reward weights", self.arch.feature_dim, task.reward_weights.len())?;
        let net = match self.xi_nets.last() {
            Some(prev) if warm_start => prev.clone(),
            _ => XiNet::init(&self.arch, self.block_seed(next))?,
        };
        let reward = if learn_reward {
            RewardModel::learned_random(self.arch.feature_dim, self.block_seed(next) ^ 0x5eed)
        } else {
            RewardModel::provided(task.reward_weights.clone())?
        };
        self.xi_nets.push(net);
        self.reward_models.push(reward);
        Ok(())
    }

    fn block_seed(&self, j: usize) -> u64 {
        self.seed
            .wrapping_mul(0x9e37_79b9_7f4a_7c15)
            .wrapping_add(j as u64 + 1)
    }
}
