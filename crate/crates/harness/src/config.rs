//! Experiment files.
//!
//! An experiment is a TOML document; unknown keys are rejected everywhere.
//!
//! ```toml
//! name = "my-run"
//! seed = 7
//! budget = 200000
//! eval_every = 50000
//! eval_episodes = 100
//!
//! [game]
//! k = 1
//! randomize_start = true
//!
//! [slots]
//! home0 = { kind = "learner" }
//! away0 = { kind = "scripted", difficulty = "normal" }
//!
//! [reward]
//! preset = "individual_possession"
//!
//! [algo]
//! kind = "dqn"
//! [algo.dqn]
//! learning_rate = 0.0005
//!
//! [[curriculum]]
//! name = "open nets"
//! opponent = "easy"
//! open_net_fraction = 0.5
//! advance_when = { steps = 50000 }
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sts2::agents::{Algo, DqnConfig, PpoConfig};
use sts2::rewards::{RewardPreset, RewardSpec};
use sts2::scripted::Difficulty;
use sts2::sim::{GameConfig, PlayerId};

use crate::error::{HarnessError, Result};
use crate::slots::{SlotAssignment, SlotSpec};

/// Either a named preset or explicit weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum RewardChoice {
    Preset(RewardPreset),
    Custom(RewardSpec),
}

impl Default for RewardChoice {
    fn default() -> Self {
        RewardChoice::Preset(RewardPreset::Sparse)
    }
}

impl RewardChoice {
    pub fn spec(&self) -> RewardSpec {
        match self {
            RewardChoice::Preset(p) => p.spec(),
            RewardChoice::Custom(s) => *s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgoConfig {
    pub kind: Algo,
    #[serde(default)]
    pub dqn: DqnConfig,
    #[serde(default)]
    pub ppo: PpoConfig,
}

impl AlgoConfig {
    pub fn dqn(config: DqnConfig) -> Self {
        Self {
            kind: Algo::Dqn,
            dqn: config,
            ppo: PpoConfig::default(),
        }
    }

    pub fn ppo(config: PpoConfig) -> Self {
        Self {
            kind: Algo::Ppo,
            dqn: DqnConfig::default(),
            ppo: config,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdvanceWhen {
    /// After this many environment steps inside the stage.
    Steps(u64),
    /// At the first periodic evaluation where the learner team's score rate
    /// (percent) reaches this value.
    EvalScoreRateAtLeast(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurriculumStage {
    pub name: String,
    /// Replaces the difficulty of every scripted opponent of the learner.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub opponent: Option<Difficulty>,
    /// Share of training episodes that start with the learner holding the
    /// ball in front of an undefended net.
    #[serde(default)]
    pub open_net_fraction: f64,
    pub advance_when: AdvanceWhen,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    /// Environment steps to train for.
    pub budget: u64,
    pub eval_every: u64,
    pub eval_episodes: usize,
    #[serde(default)]
    pub game: GameConfig,
    pub slots: SlotAssignment,
    #[serde(default)]
    pub reward: RewardChoice,
    pub algo: AlgoConfig,
    /// One network picks a joint action for all learner slots.
    #[serde(default)]
    pub centralized: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub curriculum: Vec<CurriculumStage>,
}

fn invalid(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> std::result::Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    /// Reads and validates an experiment file. Relative checkpoint paths
    /// are taken relative to the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut config = Self::from_toml(&text).map_err(|source| HarnessError::Toml {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        for spec in config.slots.0.values_mut() {
            if let SlotSpec::Frozen { checkpoint } = spec {
                if checkpoint.is_relative() {
                    *checkpoint = base.join(&*checkpoint);
                }
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment configs serialize to TOML")
    }

    /// Short content hash of the whole configuration.
    pub fn hash_hex(&self) -> String {
        let json = serde_json::to_vec(self).expect("experiment configs serialize");
        let digest = Sha256::digest(&json);
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Learner slots in slot order.
    pub fn learners(&self) -> Vec<PlayerId> {
        self.slots.learners()
    }

    pub fn validate(&self) -> Result<()> {
        self.game.validate()?;
        self.slots.validate(self.game.k)?;
        if self.name.trim().is_empty() {
            return Err(invalid("name must not be empty"));
        }
        if self.budget == 0 {
            return Err(invalid("budget must be positive"));
        }
        if self.eval_every == 0 {
            return Err(invalid("eval_every must be positive"));
        }
        if self.eval_episodes == 0 {
            return Err(invalid("eval_episodes must be positive"));
        }
        if self.slots.iter().any(|(_, s)| matches!(s, SlotSpec::Human)) {
            return Err(invalid("human slots are only valid in the match server"));
        }
        let learners = self.learners();
        if self.centralized {
            if learners.len() < 2 {
                return Err(invalid("centralized control needs at least two learner slots"));
            }
            if learners.iter().any(|l| l.team != learners[0].team) {
                return Err(invalid("centralized learner slots must be on one team"));
            }
        } else if learners.len() != 1 {
            return Err(invalid(format!(
                "exactly one learner slot is trained per experiment (found {}); use centralized = true for joint control",
                learners.len()
            )));
        }
        self.reward.spec().validate().map_err(|e| invalid(e.to_string()))?;
        match self.algo.kind {
            Algo::Dqn => self.algo.dqn.validate()?,
            Algo::Ppo => self.algo.ppo.validate()?,
        }
        for (i, stage) in self.curriculum.iter().enumerate() {
            if !(0.0..=1.0).contains(&stage.open_net_fraction) {
                return Err(invalid(format!(
                    "curriculum stage {i}: open_net_fraction must be in [0, 1]"
                )));
            }
            match stage.advance_when {
                AdvanceWhen::Steps(0) => {
                    return Err(invalid(format!("curriculum stage {i}: steps must be positive")));
                }
                AdvanceWhen::EvalScoreRateAtLeast(x) if !(0.0..=100.0).contains(&x) => {
                    return Err(invalid(format!(
                        "curriculum stage {i}: score rate threshold is a percentage"
                    )));
                }
                _ => {}
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example() -> ExperimentConfig {
        let text = include_str!("config.rs")
            .lines()
            .skip_while(|l| !l.starts_with("//! ```toml"))
            .skip(1)
            .take_while(|l| !l.starts_with("//! ```"))
            .map(|l| l.trim_start_matches("//!").trim_start())
            .collect::<Vec<_>>()
            .join("\n");
        ExperimentConfig::from_toml(&text).unwrap()
    }

    #[test]
    fn module_example_parses_and_validates() {
        let c = example();
        c.validate().unwrap();
        assert_eq!(c.reward.spec(), RewardPreset::IndividualPossession.spec());
        assert_eq!(c.algo.dqn.learning_rate, 0.0005);
        assert_eq!(c.algo.dqn.batch_size, DqnConfig::default().batch_size);
        assert_eq!(c.curriculum[0].advance_when, AdvanceWhen::Steps(50_000));
        assert!(c.game.randomize_start);
    }

    #[test]
    fn toml_round_trip() {
        let c = example();
        let back = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash_hex(), c.hash_hex());
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let c = example();
        let text = c.to_toml();
        assert!(ExperimentConfig::from_toml(&format!("bogus = 1\n{text}")).is_err());
        assert!(ExperimentConfig::from_toml(&text.replace("[game]", "[game]\nfoo = 2")).is_err());

        let mut bad = c.clone();
        bad.budget = 0;
        assert!(bad.validate().is_err());
        let mut bad = c.clone();
        bad.slots = bad.slots.with(PlayerId::away(0), SlotSpec::Learner);
        assert!(bad.validate().is_err());
        bad.centralized = true;
        assert!(bad.validate().is_err(), "learners on different teams");
        let mut bad = c;
        bad.curriculum[0].open_net_fraction = 1.5;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn custom_reward_weights() {
        let c: RewardChoice = toml::from_str("[custom]\nscore_reward = 2.0\n").unwrap();
        assert_eq!(c.spec().score_reward, 2.0);
        assert_eq!(c.spec().concede_reward, -1.0);
    }
}
