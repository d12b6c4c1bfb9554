//! Multi-task reinforcement learning with successor feature representations.
//!
//! Per-task ξ-networks predict discounted feature occupancies; Q-values for any
//! linear reward follow by an inner product, and generalized policy
//! improvement acts greedily over the whole library. The [`updates`] module
//! holds the semi-gradient and full-gradient Bellman residual rules, and
//! [`train`] runs them in sequential and randomized-task loops next to DQN and
//! FG-DQN baselines.

pub mod checkpoint;
pub mod env;
pub mod error;
pub mod gpi;
pub mod gradcheck;
pub mod metrics;
pub mod nn;
pub mod replay;
pub mod sfr;
pub mod train;
pub mod updates;

pub use error::{Error, Result};
