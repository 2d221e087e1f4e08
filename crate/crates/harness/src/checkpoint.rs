//! Binary checkpoint files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      8 bytes  "STS2CKPT"
//! version    u16
//! meta_len   u32
//! meta       meta_len bytes of JSON (algo, sizes, counters, layer shapes)
//! arrays     f64 values, for each network in `meta.nets` order:
//!            parameters (layer by layer, weights [out][in] then biases),
//!            then Adam first and second moments if present
//! ```
//!
//! Values are stored as 64-bit floats so a reloaded network reproduces the
//! saved one bit for bit. Anything after the last array is an error.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sts2::agents::{Algo, DqnAgent, DqnConfig, FrozenPolicy, PpoAgent, PpoConfig};
use sts2::nn::{param_count, Adam, Mlp};
use sts2::sim::PlayerId;
use thiserror::Error;

pub const MAGIC: &[u8; 8] = b"STS2CKPT";
pub const VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] io::Error),
    #[error("not a checkpoint: expected magic {:?}, found {found:?}", String::from_utf8_lossy(MAGIC))]
    BadMagic { found: Vec<u8> },
    #[error("checkpoint version {found} is not supported (this build reads {VERSION})")]
    UnsupportedVersion { found: u16 },
    #[error("checkpoint truncated: needed {needed} more bytes at offset {offset}, {available} available")]
    Truncated { offset: usize, needed: usize, available: usize },
    #[error("checkpoint has {0} unexpected trailing bytes")]
    TrailingBytes(usize),
    #[error("checkpoint metadata: {0}")]
    Metadata(String),
    #[error("checkpoint shape mismatch: {0}")]
    Shape(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct AdamMeta {
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    step_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct NetMeta {
    role: String,
    sizes: Vec<usize>,
    adam: Option<AdamMeta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Meta {
    algo: Algo,
    obs_len: usize,
    action_count: usize,
    env_steps: u64,
    config_hash: String,
    controlled: Vec<PlayerId>,
    nets: Vec<NetMeta>,
}

/// One network with its optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct NetState {
    pub role: String,
    pub net: Mlp,
    pub adam: Option<Adam>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub algo: Algo,
    pub obs_len: usize,
    pub action_count: usize,
    pub env_steps: u64,
    /// Hash of the experiment config that produced the checkpoint.
    pub config_hash: String,
    /// Players the acting network drove; more than one for joint control.
    pub controlled: Vec<PlayerId>,
    /// The acting network comes first (`online` or `policy`).
    pub nets: Vec<NetState>,
}

impl Checkpoint {
    pub fn from_dqn(agent: &DqnAgent, config_hash: &str, controlled: Vec<PlayerId>) -> Self {
        Self {
            algo: Algo::Dqn,
            obs_len: agent.online.input_size(),
            action_count: agent.online.output_size(),
            env_steps: agent.env_steps,
            config_hash: config_hash.to_string(),
            controlled,
            nets: vec![
                NetState {
                    role: "online".into(),
                    net: agent.online.clone(),
                    adam: Some(agent.adam.clone()),
                },
                NetState {
                    role: "target".into(),
                    net: agent.target.clone(),
                    adam: None,
                },
            ],
        }
    }

    pub fn from_ppo(agent: &PpoAgent, env_steps: u64, config_hash: &str, controlled: Vec<PlayerId>) -> Self {
        Self {
            algo: Algo::Ppo,
            obs_len: agent.policy.input_size(),
            action_count: agent.policy.output_size(),
            env_steps,
            config_hash: config_hash.to_string(),
            controlled,
            nets: vec![
                NetState {
                    role: "policy".into(),
                    net: agent.policy.clone(),
                    adam: Some(agent.policy_adam.clone()),
                },
                NetState {
                    role: "value".into(),
                    net: agent.value.clone(),
                    adam: Some(agent.value_adam.clone()),
                },
            ],
        }
    }

    /// Greedy player built from the acting network.
    pub fn frozen_policy(&self) -> FrozenPolicy {
        FrozenPolicy::new(self.algo, self.nets[0].net.clone())
    }

    fn net(&self, role: &str) -> Result<&NetState, CheckpointError> {
        self.nets
            .iter()
            .find(|n| n.role == role)
            .ok_or_else(|| CheckpointError::Shape(format!("no {role:?} network")))
    }

    /// Resumes a DQN learner (the replay buffer is not saved).
    pub fn to_dqn(&self, config: DqnConfig, seed: u64) -> Result<DqnAgent, CheckpointError> {
        if self.algo != Algo::Dqn {
            return Err(CheckpointError::Shape(format!("{} checkpoint, expected dqn", self.algo.name())));
        }
        let online = self.net("online")?;
        let mut agent = DqnAgent::from_parts(config, online.net.clone(), online.adam.clone(), seed)
            .map_err(|e| CheckpointError::Shape(e.to_string()))?;
        agent.target = self.net("target")?.net.clone();
        agent.env_steps = self.env_steps;
        Ok(agent)
    }

    pub fn to_ppo(&self, config: PpoConfig, seed: u64) -> Result<PpoAgent, CheckpointError> {
        if self.algo != Algo::Ppo {
            return Err(CheckpointError::Shape(format!("{} checkpoint, expected ppo", self.algo.name())));
        }
        let policy = self.net("policy")?;
        let value = self.net("value")?;
        let adams = policy.adam.clone().zip(value.adam.clone());
        PpoAgent::from_parts(config, policy.net.clone(), value.net.clone(), adams, seed)
            .map_err(|e| CheckpointError::Shape(e.to_string()))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let meta = Meta {
            algo: self.algo,
            obs_len: self.obs_len,
            action_count: self.action_count,
            env_steps: self.env_steps,
            config_hash: self.config_hash.clone(),
            controlled: self.controlled.clone(),
            nets: self
                .nets
                .iter()
                .map(|n| NetMeta {
                    role: n.role.clone(),
                    sizes: n.net.sizes().to_vec(),
                    adam: n.adam.as_ref().map(|a| AdamMeta {
                        learning_rate: a.learning_rate,
                        beta1: a.beta1,
                        beta2: a.beta2,
                        epsilon: a.epsilon,
                        step_count: a.step_count,
                    }),
                })
                .collect(),
        };
        let meta = serde_json::to_vec(&meta).expect("metadata serializes");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(&meta);
        let mut put = |values: &[f64]| {
            for v in values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        };
        for n in &self.nets {
            put(n.net.params());
            if let Some(adam) = &n.adam {
                let (m, v) = adam.moments();
                put(m);
                put(v);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(MAGIC.len())?;
        if magic != MAGIC {
            return Err(CheckpointError::BadMagic { found: magic.to_vec() });
        }
        let version = u16::from_le_bytes(r.take(2)?.try_into().expect("two bytes"));
        if version != VERSION {
            return Err(CheckpointError::UnsupportedVersion { found: version });
        }
        let meta_len = u32::from_le_bytes(r.take(4)?.try_into().expect("four bytes")) as usize;
        let meta: Meta =
            serde_json::from_slice(r.take(meta_len)?).map_err(|e| CheckpointError::Metadata(e.to_string()))?;
        if meta.nets.is_empty() {
            return Err(CheckpointError::Metadata("no networks".into()));
        }
        let mut nets = Vec::with_capacity(meta.nets.len());
        for n in &meta.nets {
            let count = param_count(&n.sizes);
            let net = Mlp::from_params(&n.sizes, r.f64s(count)?).map_err(|e| CheckpointError::Shape(e.to_string()))?;
            let adam = match &n.adam {
                None => None,
                Some(a) => {
                    let m = r.f64s(count)?;
                    let v = r.f64s(count)?;
                    Some(
                        Adam::from_parts(a.learning_rate, a.beta1, a.beta2, a.epsilon, a.step_count, m, v)
                            .map_err(|e| CheckpointError::Shape(e.to_string()))?,
                    )
                }
            };
            nets.push(NetState {
                role: n.role.clone(),
                net,
                adam,
            });
        }
        if r.pos != bytes.len() {
            return Err(CheckpointError::TrailingBytes(bytes.len() - r.pos));
        }
        let acting = &nets[0].net;
        if acting.input_size() != meta.obs_len || acting.output_size() != meta.action_count {
            return Err(CheckpointError::Shape(format!(
                "acting network is {}->{}, metadata says {}->{}",
                acting.input_size(),
                acting.output_size(),
                meta.obs_len,
                meta.action_count
            )));
        }
        Ok(Self {
            algo: meta.algo,
            obs_len: meta.obs_len,
            action_count: meta.action_count,
            env_steps: meta.env_steps,
            config_hash: meta.config_hash,
            controlled: meta.controlled,
            nets,
        })
    }

    /// Writes atomically: a sibling temp file is renamed into place.
    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let tmp = path.with_extension("ckpt.tmp");
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&self.to_bytes())?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::from_bytes(&fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let available = self.bytes.len() - self.pos;
        if n > available {
            return Err(CheckpointError::Truncated {
                offset: self.pos,
                needed: n,
                available,
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, CheckpointError> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| CheckpointError::Metadata("size overflow".into()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("eight bytes")))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn trained_dqn() -> DqnAgent {
        let mut agent = DqnAgent::new(13, 6, DqnConfig::default(), 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ts: Vec<_> = (0..32)
            .map(|_| sts2::agents::Transition {
                obs: (0..13).map(|_| rng.random_range(-1.0..1.0)).collect(),
                action: rng.random_range(0..6),
                reward: 1.0,
                next_obs: vec![0.0; 13],
                done: false,
            })
            .collect();
        let refs: Vec<_> = ts.iter().map(|t| t.as_ref()).collect();
        agent.learn(&refs).unwrap();
        agent
    }

    #[test]
    fn round_trip_is_exact() {
        let agent = trained_dqn();
        let ckpt = Checkpoint::from_dqn(&agent, "abc", vec![PlayerId::home(0)]);
        let back = Checkpoint::from_bytes(&ckpt.to_bytes()).unwrap();
        assert_eq!(back, ckpt);
        let resumed = back.to_dqn(DqnConfig::default(), 3).unwrap();
        assert_eq!(resumed.online, agent.online);
        assert_eq!(resumed.adam, agent.adam);

        let ppo = PpoAgent::new(13, 36, PpoConfig::default(), 2).unwrap();
        let ckpt = Checkpoint::from_ppo(&ppo, 77, "h", vec![PlayerId::home(0), PlayerId::home(1)]);
        let back = Checkpoint::from_bytes(&ckpt.to_bytes()).unwrap();
        assert_eq!(back, ckpt);
        assert!(back.to_dqn(DqnConfig::default(), 0).is_err());
        assert_eq!(back.to_ppo(PpoConfig::default(), 2).unwrap().policy, ppo.policy);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let bytes = Checkpoint::from_dqn(&trained_dqn(), "abc", vec![]).to_bytes();
        for cut in [0, 5, 9, 14, 40, bytes.len() - 1] {
            assert!(matches!(
                Checkpoint::from_bytes(&bytes[..cut]),
                Err(CheckpointError::Truncated { .. })
            ));
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        let err = Checkpoint::from_bytes(&bad).unwrap_err();
        assert!(matches!(err, CheckpointError::BadMagic { .. }));
        assert!(err.to_string().contains("STS2CKPT"));
        let mut bad = bytes.clone();
        bad[8] = 9;
        assert!(matches!(
            Checkpoint::from_bytes(&bad),
            Err(CheckpointError::UnsupportedVersion { found: 9 })
        ));
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(Checkpoint::from_bytes(&long), Err(CheckpointError::TrailingBytes(1))));
        let mut bad = bytes;
        bad[14] = b'#';
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(CheckpointError::Metadata(_))));
    }

    #[test]
    fn save_and_load_through_a_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ckpt");
        let ckpt = Checkpoint::from_dqn(&trained_dqn(), "abc", vec![PlayerId::home(0)]);
        ckpt.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), ckpt);
        assert!(matches!(
            Checkpoint::load(&dir.path().join("missing")),
            Err(CheckpointError::Io(_))
        ));
    }
}
