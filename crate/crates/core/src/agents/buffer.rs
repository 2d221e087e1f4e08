use rand::Rng;

use super::AgentError;

/// An owned transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub done: bool,
}

impl Transition {
    pub fn as_ref(&self) -> TransitionRef<'_> {
        TransitionRef {
            obs: &self.obs,
            action: self.action,
            reward: self.reward,
            next_obs: &self.next_obs,
            done: self.done,
        }
    }
}

/// A transition borrowed from a buffer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionRef<'a> {
    pub obs: &'a [f64],
    pub action: usize,
    pub reward: f64,
    pub next_obs: &'a [f64],
    pub done: bool,
}

/// Fixed-capacity ring of transitions; the oldest is overwritten first.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    obs_len: usize,
    obs: Vec<f64>,
    next_obs: Vec<f64>,
    actions: Vec<usize>,
    rewards: Vec<f64>,
    dones: Vec<bool>,
    inserted: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, obs_len: usize) -> Result<Self, AgentError> {
        if capacity == 0 || obs_len == 0 {
            return Err(AgentError::InvalidConfig(
                "replay buffer capacity and observation length must be positive".into(),
            ));
        }
        Ok(Self {
            capacity,
            obs_len,
            obs: Vec::new(),
            next_obs: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            dones: Vec::new(),
            inserted: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Total number of transitions ever pushed.
    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn push(&mut self, t: TransitionRef<'_>) -> Result<(), AgentError> {
        if t.obs.len() != self.obs_len || t.next_obs.len() != self.obs_len {
            return Err(AgentError::Nn(crate::nn::NnError::DimensionMismatch {
                expected: self.obs_len,
                found: if t.obs.len() != self.obs_len { t.obs.len() } else { t.next_obs.len() },
            }));
        }
        let n = self.obs_len;
        if self.len() < self.capacity {
            self.obs.extend_from_slice(t.obs);
            self.next_obs.extend_from_slice(t.next_obs);
            self.actions.push(t.action);
            self.rewards.push(t.reward);
            self.dones.push(t.done);
        } else {
            let slot = (self.inserted % self.capacity as u64) as usize;
            self.obs[slot * n..(slot + 1) * n].copy_from_slice(t.obs);
            self.next_obs[slot * n..(slot + 1) * n].copy_from_slice(t.next_obs);
            self.actions[slot] = t.action;
            self.rewards[slot] = t.reward;
            self.dones[slot] = t.done;
        }
        self.inserted += 1;
        Ok(())
    }

    /// The `i`-th stored transition, oldest first.
    pub fn get(&self, i: usize) -> Option<TransitionRef<'_>> {
        if i >= self.len() {
            return None;
        }
        let slot = if self.len() < self.capacity {
            i
        } else {
            ((self.inserted as usize % self.capacity) + i) % self.capacity
        };
        Some(self.at_slot(slot))
    }

    fn at_slot(&self, slot: usize) -> TransitionRef<'_> {
        let n = self.obs_len;
        TransitionRef {
            obs: &self.obs[slot * n..(slot + 1) * n],
            action: self.actions[slot],
            reward: self.rewards[slot],
            next_obs: &self.next_obs[slot * n..(slot + 1) * n],
            done: self.dones[slot],
        }
    }

    /// `n` transitions drawn uniformly with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<TransitionRef<'_>> {
        if self.is_empty() {
            return Vec::new();
        }
        (0..n).map(|_| self.at_slot(rng.random_range(0..self.len()))).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = TransitionRef<'_>> {
        (0..self.len()).map(|i| self.get(i).expect("in range"))
    }
}
