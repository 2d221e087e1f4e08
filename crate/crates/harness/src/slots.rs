//! Who controls each player, and how those choices turn into actions.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};
use sts2::agents::{FrozenPolicy, JointActionCodec};
use sts2::scripted::{scripted_action, Difficulty, ScriptedProfile};
use sts2::sim::{encode_observation_into, observation_len, Action, GameConfig, GameState, PlayerId, TeamId};

use crate::checkpoint::Checkpoint;
use crate::error::{HarnessError, Result};

/// Controller of one player slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SlotSpec {
    Scripted {
        #[serde(default = "normal")]
        difficulty: Difficulty,
        /// Full profile override; `difficulty` picks the defaults otherwise.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        profile: Option<ScriptedProfile>,
    },
    /// Driven by the experiment's learning agent.
    Learner,
    /// Greedy play from a saved checkpoint.
    Frozen { checkpoint: PathBuf },
    /// A human client of the match server.
    Human,
}

fn normal() -> Difficulty {
    Difficulty::Normal
}

impl SlotSpec {
    pub fn scripted(difficulty: Difficulty) -> Self {
        SlotSpec::Scripted {
            difficulty,
            profile: None,
        }
    }

    pub fn frozen(path: impl Into<PathBuf>) -> Self {
        SlotSpec::Frozen {
            checkpoint: path.into(),
        }
    }
}

/// A slot key in config files: `home0`, `away1`, ...
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SlotKey(pub PlayerId);

impl fmt::Display for SlotKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let team = match self.0.team {
            TeamId::Home => "home",
            TeamId::Away => "away",
        };
        write!(f, "{team}{}", self.0.index)
    }
}

impl FromStr for SlotKey {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.parse::<PlayerId>().map(SlotKey)
    }
}

impl Serialize for SlotKey {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SlotKey {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(de::Error::custom)
    }
}

/// Every player of a match mapped to its controller.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SlotAssignment(pub BTreeMap<SlotKey, SlotSpec>);

impl SlotAssignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, id: PlayerId, spec: SlotSpec) -> Self {
        self.0.insert(SlotKey(id), spec);
        self
    }

    pub fn get(&self, id: PlayerId) -> Option<&SlotSpec> {
        self.0.get(&SlotKey(id))
    }

    pub fn iter(&self) -> impl Iterator<Item = (PlayerId, &SlotSpec)> {
        self.0.iter().map(|(k, v)| (k.0, v))
    }

    pub fn learners(&self) -> Vec<PlayerId> {
        self.iter()
            .filter(|(_, s)| matches!(s, SlotSpec::Learner))
            .map(|(id, _)| id)
            .collect()
    }

    /// Every player of a `k`-a-side match appears exactly once.
    pub fn validate(&self, k: usize) -> Result<()> {
        for (id, _) in self.iter() {
            if id.index >= k {
                return Err(HarnessError::Config(format!(
                    "slot {} does not exist in a {k}-a-side match",
                    SlotKey(id)
                )));
            }
        }
        for team in TeamId::BOTH {
            for index in 0..k {
                let id = PlayerId::new(team, index);
                if self.get(id).is_none() {
                    return Err(HarnessError::Config(format!("slot {} is unassigned", SlotKey(id))));
                }
            }
        }
        Ok(())
    }

    /// Same controllers with the teams exchanged.
    pub fn swapped(&self) -> Self {
        Self(
            self.0
                .iter()
                .map(|(k, v)| (SlotKey(k.0.mirrored()), v.clone()))
                .collect(),
        )
    }
}

/// A resolved controller for one or more slots.
#[derive(Debug, Clone)]
pub enum Control {
    Scripted(ScriptedProfile),
    /// Greedy network play. With a codec the network picks one joint action
    /// for all of `slots`, observing from the first one.
    Policy {
        policy: Arc<FrozenPolicy>,
        codec: Option<JointActionCodec>,
    },
    /// Filled in by the trainer.
    Learner,
    /// Filled in by the match server; coasts otherwise.
    Human,
}

#[derive(Debug, Clone)]
pub struct Controller {
    pub slots: Vec<PlayerId>,
    pub control: Control,
}

/// All controllers of a match, ready to produce actions.
#[derive(Debug, Clone)]
pub struct Lineup {
    k: usize,
    pub controllers: Vec<Controller>,
}

impl Lineup {
    /// Resolves a slot assignment, loading checkpoints with `load`.
    /// Frozen slots that share a checkpoint whose action count is `6^n` for
    /// the `n` slots sharing it are driven jointly.
    pub fn resolve(
        slots: &SlotAssignment,
        game: &GameConfig,
        mut load: impl FnMut(&std::path::Path) -> Result<Checkpoint>,
    ) -> Result<Self> {
        slots.validate(game.k)?;
        let obs_len = observation_len(game.k);
        let mut controllers = Vec::new();
        let mut frozen: BTreeMap<PathBuf, Vec<PlayerId>> = BTreeMap::new();
        for (id, spec) in slots.iter() {
            match spec {
                SlotSpec::Scripted { difficulty, profile } => {
                    let profile = profile.unwrap_or_else(|| ScriptedProfile::for_difficulty(*difficulty, game));
                    profile.validate(game)?;
                    controllers.push(Controller {
                        slots: vec![id],
                        control: Control::Scripted(profile),
                    });
                }
                SlotSpec::Learner => controllers.push(Controller {
                    slots: vec![id],
                    control: Control::Learner,
                }),
                SlotSpec::Human => controllers.push(Controller {
                    slots: vec![id],
                    control: Control::Human,
                }),
                SlotSpec::Frozen { checkpoint } => frozen.entry(checkpoint.clone()).or_default().push(id),
            }
        }
        for (path, ids) in frozen {
            let ckpt = load(&path)?;
            let policy = Arc::new(ckpt.frozen_policy());
            if policy.obs_len() != obs_len {
                return Err(HarnessError::Incompatible(format!(
                    "{}: policy observes {} values, a {}-a-side match provides {obs_len}",
                    path.display(),
                    policy.obs_len(),
                    game.k
                )));
            }
            controllers.extend(group_policy(&path, policy, ids)?);
        }
        Ok(Self { k: game.k, controllers })
    }

    /// A lineup from already-built controllers.
    pub fn from_controllers(k: usize, controllers: Vec<Controller>) -> Self {
        Self { k, controllers }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn slots_with(&self, pred: impl Fn(&Control) -> bool) -> Vec<PlayerId> {
        self.controllers
            .iter()
            .filter(|c| pred(&c.control))
            .flat_map(|c| c.slots.iter().copied())
            .collect()
    }

    /// Writes actions for scripted and policy slots into `actions` (indexed
    /// by slot); learner and human slots are left untouched.
    pub fn fill(&self, state: &GameState, game: &GameConfig, obs: &mut Vec<f64>, actions: &mut [Option<Action>]) {
        for c in &self.controllers {
            match &c.control {
                Control::Scripted(profile) => {
                    let id = c.slots[0];
                    actions[id.slot(self.k)] = Some(scripted_action(state, game, id, profile));
                }
                Control::Policy { policy, codec } => {
                    obs.resize(observation_len(self.k), 0.0);
                    encode_observation_into(state, game, c.slots[0], obs);
                    let index = policy.greedy(obs).expect("observation size checked at resolve");
                    match codec {
                        None => actions[c.slots[0].slot(self.k)] = Action::from_index(index),
                        Some(codec) => {
                            let joint = codec.decode(index).expect("joint index in range");
                            for (id, a) in c.slots.iter().zip(joint) {
                                actions[id.slot(self.k)] = Some(a);
                            }
                        }
                    }
                }
                Control::Learner | Control::Human => {}
            }
        }
    }
}

fn group_policy(path: &std::path::Path, policy: Arc<FrozenPolicy>, ids: Vec<PlayerId>) -> Result<Vec<Controller>> {
    let actions = policy.action_count();
    if actions == Action::COUNT {
        return Ok(ids
            .into_iter()
            .map(|id| Controller {
                slots: vec![id],
                control: Control::Policy {
                    policy: policy.clone(),
                    codec: None,
                },
            })
            .collect());
    }
    let joint_ok = ids.len() > 1
        && ids.iter().all(|id| id.team == ids[0].team)
        && Action::COUNT.checked_pow(ids.len() as u32) == Some(actions);
    if !joint_ok {
        return Err(HarnessError::Incompatible(format!(
            "{}: {actions} actions cannot drive {} slot(s)",
            path.display(),
            ids.len()
        )));
    }
    let codec = JointActionCodec::new(ids.clone())?;
    Ok(vec![Controller {
        slots: ids,
        control: Control::Policy {
            policy,
            codec: Some(codec),
        },
    }])
}
