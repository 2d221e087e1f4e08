use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{Adam, ForwardCache, Gradients, Mlp};

use super::{argmax, AgentError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_ratio: f64,
    pub epochs_per_update: usize,
    pub minibatch_size: usize,
    pub entropy_coef: f64,
    pub rollout_length: usize,
    pub normalize_advantages: bool,
    /// Global gradient-norm clip per network; `None` disables clipping.
    pub max_grad_norm: Option<f64>,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            learning_rate: 3e-4,
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_ratio: 0.2,
            epochs_per_update: 4,
            minibatch_size: 256,
            entropy_coef: 0.01,
            rollout_length: 4096,
            normalize_advantages: true,
            max_grad_norm: None,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |m: &str| Err(AgentError::InvalidConfig(format!("ppo: {m}")));
        if !(self.clip_ratio > 0.0) {
            return bad("clip_ratio must be > 0");
        }
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gamma and gae_lambda must be in [0, 1]");
        }
        if self.epochs_per_update == 0 || self.minibatch_size == 0 || self.rollout_length == 0 {
            return bad("epochs_per_update, minibatch_size and rollout_length must be positive");
        }
        if !(self.learning_rate >= 0.0) {
            return bad("learning_rate must be >= 0");
        }
        if self.hidden.contains(&0) {
            return bad("hidden layer sizes must be positive");
        }
        Ok(())
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits).into_iter().map(f64::exp).collect()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding left `u` above the cumulative sum: take the last action with
    // non-zero mass.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

/// Generalized advantage estimates and returns.
///
/// `values` carries one extra bootstrap entry for the state after the last
/// step. `dones[t]` cuts both the bootstrap and the recursion at `t`.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>), AgentError> {
    let n = rewards.len();
    if values.len() != n + 1 || dones.len() != n {
        return Err(AgentError::IncompleteRollout(format!(
            "{} rewards need {} values and {} dones, got {} and {}",
            n,
            n + 1,
            n,
            values.len(),
            dones.len()
        )));
    }
    let mut adv = vec![0.0; n];
    let mut next = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * live * values[t + 1] - values[t];
        next = delta + gamma * lambda * live * next;
        adv[t] = next;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}

/// Shifts and scales to mean 0 and unit (population) variance; leaves
/// constant inputs centered only.
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.is_empty() {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    for a in adv.iter_mut() {
        *a -= mean;
        if std > 0.0 {
            *a /= std;
        }
    }
}

/// Experience gathered under the current policy.
#[derive(Debug, Clone, Default)]
pub struct Rollout {
    obs_len: usize,
    pub obs: Vec<f64>,
    pub actions: Vec<usize>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl Rollout {
    pub fn new(obs_len: usize) -> Self {
        Self {
            obs_len,
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn obs_at(&self, i: usize) -> &[f64] {
        &self.obs[i * self.obs_len..(i + 1) * self.obs_len]
    }

    pub fn push(&mut self, obs: &[f64], action: usize, log_prob: f64, value: f64, reward: f64, done: bool) {
        debug_assert_eq!(obs.len(), self.obs_len);
        self.obs.extend_from_slice(obs);
        self.actions.push(action);
        self.log_probs.push(log_prob);
        self.values.push(value);
        self.rewards.push(reward);
        self.dones.push(done);
    }

    /// Computes advantages and returns; `last_value` bootstraps the state
    /// after the final step (ignored if that step was terminal).
    pub fn finish(&mut self, last_value: f64, gamma: f64, lambda: f64, normalize: bool) -> Result<(), AgentError> {
        let mut values = self.values.clone();
        values.push(last_value);
        let (mut adv, returns) = compute_gae(&self.rewards, &values, &self.dones, gamma, lambda)?;
        if normalize {
            normalize_advantages(&mut adv);
        }
        self.advantages = adv;
        self.returns = returns;
        Ok(())
    }

    pub fn clear(&mut self) {
        let obs_len = self.obs_len;
        *self = Self::new(obs_len);
    }

    fn check_complete(&self) -> Result<(), AgentError> {
        let n = self.len();
        if n == 0 {
            return Err(AgentError::IncompleteRollout("no steps".into()));
        }
        if self.advantages.len() != n || self.returns.len() != n {
            return Err(AgentError::IncompleteRollout("advantages not computed; call finish".into()));
        }
        if self.log_probs.len() != n || self.obs.len() != n * self.obs_len {
            return Err(AgentError::IncompleteRollout("misaligned buffers".into()));
        }
        Ok(())
    }
}

/// The samples of one surrogate evaluation, by index into a rollout.
#[derive(Debug, Clone, Copy)]
pub struct SurrogateBatch<'a> {
    pub rollout: &'a Rollout,
    pub indices: &'a [usize],
    pub clip_ratio: f64,
    pub entropy_coef: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct SurrogateStats {
    loss: f64,
    surrogate: f64,
    entropy: f64,
    clip_fraction: f64,
    approx_kl: f64,
}

/// `-(mean clipped surrogate) - entropy_coef * mean entropy`.
pub fn surrogate_loss(policy: &Mlp, batch: &SurrogateBatch<'_>) -> Result<f64, AgentError> {
    Ok(surrogate_inner(policy, batch, None)?.loss)
}

/// Loss and its gradient with respect to the policy parameters.
pub fn surrogate_loss_and_grad(policy: &Mlp, batch: &SurrogateBatch<'_>) -> Result<(f64, Gradients), AgentError> {
    let mut grads = Gradients::zeros_like(policy);
    let stats = surrogate_inner(policy, batch, Some((&mut grads, &mut ForwardCache::default())))?;
    Ok((stats.loss, grads))
}

fn surrogate_inner(
    policy: &Mlp,
    batch: &SurrogateBatch<'_>,
    mut grad: Option<(&mut Gradients, &mut ForwardCache)>,
) -> Result<SurrogateStats, AgentError> {
    if batch.indices.is_empty() {
        return Err(AgentError::EmptyBatch);
    }
    let r = batch.rollout;
    let n = batch.indices.len() as f64;
    let (lo, hi) = (1.0 - batch.clip_ratio, 1.0 + batch.clip_ratio);
    let mut stats = SurrogateStats::default();
    let mut local_cache = ForwardCache::default();
    let mut g_logits = vec![0.0; policy.output_size()];
    for &i in batch.indices {
        let cache = match grad.as_mut() {
            Some((_, c)) => &mut **c,
            None => &mut local_cache,
        };
        let logits = policy.forward_cached(r.obs_at(i), cache)?;
        let logp = log_softmax(logits);
        let a = r.actions[i];
        let adv = r.advantages[i];
        let ratio = (logp[a] - r.log_probs[i]).exp();
        let unclipped = ratio * adv;
        let clipped = ratio.clamp(lo, hi) * adv;
        let take_unclipped = unclipped <= clipped;
        let surrogate = unclipped.min(clipped);
        let probs: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
        let entropy = -probs.iter().zip(&logp).map(|(p, l)| p * l).sum::<f64>();

        stats.surrogate += surrogate / n;
        stats.entropy += entropy / n;
        stats.loss += (-surrogate - batch.entropy_coef * entropy) / n;
        stats.approx_kl += (r.log_probs[i] - logp[a]) / n;
        if ratio < lo || ratio > hi {
            stats.clip_fraction += 1.0 / n;
        }

        if let Some((grads, cache)) = grad.as_mut() {
            for (j, g) in g_logits.iter_mut().enumerate() {
                let onehot = if j == a { 1.0 } else { 0.0 };
                let d_surr = if take_unclipped { adv * ratio * (onehot - probs[j]) } else { 0.0 };
                let d_ent = -probs[j] * (logp[j] + entropy);
                *g = (-d_surr - batch.entropy_coef * d_ent) / n;
            }
            policy.backward(cache, &g_logits, grads)?;
        }
    }
    Ok(stats)
}

fn value_loss_inner(
    value: &Mlp,
    rollout: &Rollout,
    indices: &[usize],
    grads: &mut Gradients,
    cache: &mut ForwardCache,
) -> Result<f64, AgentError> {
    let n = indices.len() as f64;
    let mut total = 0.0;
    for &i in indices {
        let v = value.forward_cached(rollout.obs_at(i), cache)?[0];
        let diff = v - rollout.returns[i];
        total += diff * diff / n;
        value.backward(cache, &[2.0 * diff / n], grads)?;
    }
    Ok(total)
}

/// Averages over all minibatch updates of one [`PpoAgent::update`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PpoDiagnostics {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
}

/// Clipped-surrogate policy gradient with a separate value network.
#[derive(Debug, Clone)]
pub struct PpoAgent {
    pub config: PpoConfig,
    pub policy: Mlp,
    pub value: Mlp,
    pub policy_adam: Adam,
    pub value_adam: Adam,
    pub updates: u64,
    rng: ChaCha8Rng,
}

impl PpoAgent {
    pub fn new(obs_len: usize, action_count: usize, config: PpoConfig, seed: u64) -> Result<Self, AgentError> {
        config.validate()?;
        let mut sizes = vec![obs_len];
        sizes.extend(&config.hidden);
        let mut policy_sizes = sizes.clone();
        policy_sizes.push(action_count);
        sizes.push(1);
        let policy = Mlp::init(&policy_sizes, seed)?;
        let value = Mlp::init(&sizes, seed.wrapping_add(1))?;
        Self::from_parts(config, policy, value, None, seed)
    }

    pub fn from_parts(
        config: PpoConfig,
        policy: Mlp,
        value: Mlp,
        adams: Option<(Adam, Adam)>,
        seed: u64,
    ) -> Result<Self, AgentError> {
        config.validate()?;
        if value.output_size() != 1 || value.input_size() != policy.input_size() {
            return Err(AgentError::InvalidConfig(
                "value network must map the policy's input to one output".into(),
            ));
        }
        let (policy_adam, value_adam) = adams.unwrap_or_else(|| {
            (
                Adam::new(&policy, config.learning_rate),
                Adam::new(&value, config.learning_rate),
            )
        });
        Ok(Self {
            config,
            policy,
            value,
            policy_adam,
            value_adam,
            updates: 0,
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x5851_f42d_4c95_7f2d),
        })
    }

    pub fn obs_len(&self) -> usize {
        self.policy.input_size()
    }

    pub fn action_count(&self) -> usize {
        self.policy.output_size()
    }

    pub fn probabilities(&self, obs: &[f64]) -> Result<Vec<f64>, AgentError> {
        Ok(softmax(&self.policy.forward(obs)?))
    }

    pub fn value_of(&self, obs: &[f64]) -> Result<f64, AgentError> {
        Ok(self.value.forward(obs)?[0])
    }

    /// Samples an action; returns `(action, log_prob, value)`.
    pub fn policy<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<(usize, f64, f64), AgentError> {
        let logp = log_softmax(&self.policy.forward(obs)?);
        let probs: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
        let a = sample_index(&probs, rng);
        Ok((a, logp[a], self.value_of(obs)?))
    }

    /// Argmax of the logits.
    pub fn greedy(&self, obs: &[f64]) -> Result<usize, AgentError> {
        Ok(argmax(&self.policy.forward(obs)?))
    }

    /// Runs `epochs_per_update` passes of shuffled minibatches over a
    /// finished rollout.
    pub fn update(&mut self, rollout: &Rollout) -> Result<PpoDiagnostics, AgentError> {
        rollout.check_complete()?;
        if rollout.obs_len != self.obs_len() {
            return Err(AgentError::IncompleteRollout(format!(
                "rollout observations have length {}, policy expects {}",
                rollout.obs_len,
                self.obs_len()
            )));
        }
        let mut indices: Vec<usize> = (0..rollout.len()).collect();
        let mut diag = PpoDiagnostics::default();
        let mut batches = 0usize;
        let mut p_grads = Gradients::zeros_like(&self.policy);
        let mut v_grads = Gradients::zeros_like(&self.value);
        let mut p_cache = ForwardCache::default();
        let mut v_cache = ForwardCache::default();
        for _ in 0..self.config.epochs_per_update {
            indices.shuffle(&mut self.rng);
            for chunk in indices.chunks(self.config.minibatch_size) {
                let batch = SurrogateBatch {
                    rollout,
                    indices: chunk,
                    clip_ratio: self.config.clip_ratio,
                    entropy_coef: self.config.entropy_coef,
                };
                p_grads.zero();
                let stats = surrogate_inner(&self.policy, &batch, Some((&mut p_grads, &mut p_cache)))?;
                v_grads.zero();
                let v_loss = value_loss_inner(&self.value, rollout, chunk, &mut v_grads, &mut v_cache)?;
                if let Some(max) = self.config.max_grad_norm {
                    p_grads.clip_norm(max);
                    v_grads.clip_norm(max);
                }
                self.policy_adam.step(&mut self.policy, &p_grads)?;
                self.value_adam.step(&mut self.value, &v_grads)?;

                diag.policy_loss += stats.loss;
                diag.value_loss += v_loss;
                diag.entropy += stats.entropy;
                diag.clip_fraction += stats.clip_fraction;
                diag.approx_kl += stats.approx_kl;
                batches += 1;
            }
        }
        let k = batches as f64;
        diag.policy_loss /= k;
        diag.value_loss /= k;
        diag.entropy /= k;
        diag.clip_fraction /= k;
        diag.approx_kl /= k;
        self.updates += 1;
        Ok(diag)
    }
}
