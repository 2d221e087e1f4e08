//! DQN and PPO learners plus the pieces they share.
//!
//! Both learners emit one score per action from an [`Mlp`]: Q-values for DQN,
//! logits for PPO. Greedy play is the argmax of that vector in both cases, so
//! a trained network can be frozen into a [`FrozenPolicy`] regardless of the
//! algorithm that produced it.

mod buffer;
mod codec;
mod dqn;
mod ppo;

pub use buffer::{ReplayBuffer, Transition, TransitionRef};
pub use codec::JointActionCodec;
pub use dqn::{dqn_loss, dqn_loss_and_grad, td_target, DqnAgent, DqnConfig, EpsilonSchedule, LossKind};
pub use ppo::{
    compute_gae, log_softmax, normalize_advantages, softmax, surrogate_loss, surrogate_loss_and_grad, PpoAgent,
    PpoConfig, PpoDiagnostics, Rollout, SurrogateBatch,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{Mlp, NnError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    Dqn,
    Ppo,
}

impl Algo {
    pub fn name(self) -> &'static str {
        match self {
            Algo::Dqn => "dqn",
            Algo::Ppo => "ppo",
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum AgentError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("empty batch")]
    EmptyBatch,
    #[error("{0}")]
    InvalidConfig(String),
    #[error("rollout incomplete: {0}")]
    IncompleteRollout(String),
    #[error("index {index} out of range (< {bound})")]
    OutOfRange { index: usize, bound: usize },
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// A network that only plays: greedy argmax over its outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenPolicy {
    pub algo: Algo,
    pub net: Mlp,
}

impl FrozenPolicy {
    pub fn new(algo: Algo, net: Mlp) -> Self {
        Self { algo, net }
    }

    pub fn obs_len(&self) -> usize {
        self.net.input_size()
    }

    pub fn action_count(&self) -> usize {
        self.net.output_size()
    }

    pub fn greedy(&self, obs: &[f64]) -> Result<usize, NnError> {
        Ok(argmax(&self.net.forward(obs)?))
    }
}
