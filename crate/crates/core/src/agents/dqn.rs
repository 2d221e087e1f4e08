use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{Adam, ForwardCache, Gradients, Mlp};

use super::{argmax, AgentError, ReplayBuffer, TransitionRef};

/// Linear decay from `start` to `end` over `decay_steps`, constant after.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_steps: u64,
}

impl EpsilonSchedule {
    pub fn value(&self, step: u64) -> f64 {
        if self.decay_steps == 0 || step >= self.decay_steps {
            return self.end;
        }
        let frac = step as f64 / self.decay_steps as f64;
        self.start + (self.end - self.start) * frac
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Mse,
    Huber,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DqnConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub gamma: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    pub epsilon: EpsilonSchedule,
    pub target_sync_interval: u64,
    pub learn_every: u64,
    /// No updates until the buffer holds this many transitions.
    pub learning_starts: usize,
    pub loss: LossKind,
    /// Global gradient-norm clip; `None` disables clipping.
    pub max_grad_norm: Option<f64>,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            learning_rate: 1e-4,
            gamma: 0.99,
            batch_size: 64,
            replay_capacity: 100_000,
            epsilon: EpsilonSchedule {
                start: 1.0,
                end: 0.05,
                decay_steps: 200_000,
            },
            target_sync_interval: 2_000,
            learn_every: 4,
            learning_starts: 1_000,
            loss: LossKind::Mse,
            max_grad_norm: None,
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |m: &str| Err(AgentError::InvalidConfig(format!("dqn: {m}")));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma must be in [0, 1)");
        }
        if self.batch_size == 0 || self.replay_capacity == 0 {
            return bad("batch_size and replay_capacity must be positive");
        }
        if self.learn_every == 0 || self.target_sync_interval == 0 {
            return bad("learn_every and target_sync_interval must be positive");
        }
        if !(self.learning_rate >= 0.0) {
            return bad("learning_rate must be >= 0");
        }
        let e = &self.epsilon;
        if !((0.0..=1.0).contains(&e.start) && (0.0..=1.0).contains(&e.end) && e.end <= e.start) {
            return bad("epsilon must satisfy 0 <= end <= start <= 1");
        }
        if self.hidden.contains(&0) {
            return bad("hidden layer sizes must be positive");
        }
        Ok(())
    }
}

/// `r + gamma * (1 - done) * max_a' q_next[a']`.
pub fn td_target(reward: f64, gamma: f64, done: bool, q_next: &[f64]) -> f64 {
    if done {
        reward
    } else {
        reward + gamma * q_next.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

fn element_loss(kind: LossKind, diff: f64) -> (f64, f64) {
    match kind {
        LossKind::Mse => (diff * diff, 2.0 * diff),
        LossKind::Huber => {
            if diff.abs() <= 1.0 {
                (0.5 * diff * diff, diff)
            } else {
                (diff.abs() - 0.5, diff.signum())
            }
        }
    }
}

/// Mean TD loss of `online` against targets from `target`.
pub fn dqn_loss(
    online: &Mlp,
    target: &Mlp,
    batch: &[TransitionRef<'_>],
    gamma: f64,
    kind: LossKind,
) -> Result<f64, AgentError> {
    if batch.is_empty() {
        return Err(AgentError::EmptyBatch);
    }
    let mut total = 0.0;
    for t in batch {
        let y = td_target(t.reward, gamma, t.done, &target.forward(t.next_obs)?);
        let q = online.forward(t.obs)?[t.action];
        total += element_loss(kind, q - y).0;
    }
    Ok(total / batch.len() as f64)
}

/// Loss and its gradient with respect to `online`'s parameters (targets are
/// held fixed).
pub fn dqn_loss_and_grad(
    online: &Mlp,
    target: &Mlp,
    batch: &[TransitionRef<'_>],
    gamma: f64,
    kind: LossKind,
) -> Result<(f64, Gradients), AgentError> {
    let mut grads = Gradients::zeros_like(online);
    let mut cache = ForwardCache::default();
    let loss = accumulate(online, target, batch, gamma, kind, &mut grads, &mut cache)?;
    Ok((loss, grads))
}

fn accumulate(
    online: &Mlp,
    target: &Mlp,
    batch: &[TransitionRef<'_>],
    gamma: f64,
    kind: LossKind,
    grads: &mut Gradients,
    cache: &mut ForwardCache,
) -> Result<f64, AgentError> {
    if batch.is_empty() {
        return Err(AgentError::EmptyBatch);
    }
    let n = batch.len() as f64;
    let mut grad_out = vec![0.0; online.output_size()];
    let mut total = 0.0;
    for t in batch {
        if t.action >= online.output_size() {
            return Err(AgentError::OutOfRange {
                index: t.action,
                bound: online.output_size(),
            });
        }
        let y = if t.done {
            t.reward
        } else {
            td_target(t.reward, gamma, false, &target.forward(t.next_obs)?)
        };
        let q = online.forward_cached(t.obs, cache)?[t.action];
        let (l, dl) = element_loss(kind, q - y);
        total += l;
        grad_out.iter_mut().for_each(|g| *g = 0.0);
        grad_out[t.action] = dl / n;
        online.backward(cache, &grad_out, grads)?;
    }
    Ok(total / n)
}

/// Epsilon-greedy Q-learner with a replay buffer and a periodically synced
/// target network.
#[derive(Debug, Clone)]
pub struct DqnAgent {
    pub config: DqnConfig,
    pub online: Mlp,
    pub target: Mlp,
    pub adam: Adam,
    pub buffer: ReplayBuffer,
    /// Environment transitions observed so far; drives the epsilon schedule.
    pub env_steps: u64,
    pub updates: u64,
    rng: ChaCha8Rng,
    cache: ForwardCache,
    grads: Gradients,
}

impl DqnAgent {
    pub fn new(obs_len: usize, action_count: usize, config: DqnConfig, seed: u64) -> Result<Self, AgentError> {
        config.validate()?;
        let mut sizes = vec![obs_len];
        sizes.extend(&config.hidden);
        sizes.push(action_count);
        let online = Mlp::init(&sizes, seed)?;
        Self::from_parts(config, online, None, seed)
    }

    /// Rebuilds an agent around existing networks (e.g. from a checkpoint).
    pub fn from_parts(config: DqnConfig, online: Mlp, adam: Option<Adam>, seed: u64) -> Result<Self, AgentError> {
        config.validate()?;
        let adam = adam.unwrap_or_else(|| Adam::new(&online, config.learning_rate));
        let buffer = ReplayBuffer::new(config.replay_capacity, online.input_size())?;
        let grads = Gradients::zeros_like(&online);
        Ok(Self {
            target: online.clone(),
            online,
            adam,
            buffer,
            env_steps: 0,
            updates: 0,
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15),
            cache: ForwardCache::default(),
            grads,
            config,
        })
    }

    pub fn action_count(&self) -> usize {
        self.online.output_size()
    }

    pub fn epsilon(&self) -> f64 {
        self.config.epsilon.value(self.env_steps)
    }

    pub fn q_values(&self, obs: &[f64]) -> Result<Vec<f64>, AgentError> {
        Ok(self.online.forward(obs)?)
    }

    pub fn greedy(&self, obs: &[f64]) -> Result<usize, AgentError> {
        Ok(argmax(&self.q_values(obs)?))
    }

    /// With probability `epsilon` a uniform action, otherwise greedy.
    pub fn act_with<R: Rng + ?Sized>(&self, obs: &[f64], epsilon: f64, rng: &mut R) -> Result<usize, AgentError> {
        if epsilon > 0.0 && rng.random::<f64>() < epsilon {
            Ok(rng.random_range(0..self.action_count()))
        } else {
            self.greedy(obs)
        }
    }

    /// Exploratory action at the scheduled epsilon.
    pub fn act<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<usize, AgentError> {
        self.act_with(obs, self.epsilon(), rng)
    }

    /// One gradient step on `batch`; returns the loss before the step.
    pub fn learn(&mut self, batch: &[TransitionRef<'_>]) -> Result<f64, AgentError> {
        self.grads.zero();
        let loss = accumulate(
            &self.online,
            &self.target,
            batch,
            self.config.gamma,
            self.config.loss,
            &mut self.grads,
            &mut self.cache,
        )?;
        self.apply_gradients()?;
        Ok(loss)
    }

    fn apply_gradients(&mut self) -> Result<(), AgentError> {
        if let Some(max) = self.config.max_grad_norm {
            self.grads.clip_norm(max);
        }
        self.adam.step(&mut self.online, &self.grads)?;
        self.updates += 1;
        Ok(())
    }

    pub fn sync_target(&mut self) {
        self.target.copy_from(&self.online).expect("same architecture");
    }

    /// Stores a transition and runs the learn/sync schedule: an update every
    /// `learn_every` steps once `learning_starts` transitions are stored, a
    /// target sync every `target_sync_interval` steps. Returns the loss when
    /// an update happened.
    pub fn observe(&mut self, t: TransitionRef<'_>) -> Result<Option<f64>, AgentError> {
        self.buffer.push(t)?;
        self.env_steps += 1;
        let mut loss = None;
        if self.buffer.len() >= self.config.learning_starts.max(1) && self.env_steps % self.config.learn_every == 0 {
            self.grads.zero();
            let batch = self.buffer.sample(&mut self.rng, self.config.batch_size);
            let l = accumulate(
                &self.online,
                &self.target,
                &batch,
                self.config.gamma,
                self.config.loss,
                &mut self.grads,
                &mut self.cache,
            )?;
            drop(batch);
            self.apply_gradients()?;
            loss = Some(l);
        }
        if self.env_steps % self.config.target_sync_interval == 0 {
            self.sync_target();
        }
        Ok(loss)
    }
}
