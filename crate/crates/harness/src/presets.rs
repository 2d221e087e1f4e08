//! The standard experiment set.
//!
//! | preset | setup |
//! |--------|-------|
//! | `EXP-T1` | 1v1, DQN vs scripted, sparse reward |
//! | `EXP-T2` | 1v1, DQN vs scripted, individual possession shaping |
//! | `EXP-T3` | 1v1, PPO vs the frozen `EXP-T2` DQN |
//! | `EXP-PPO-LOCALMIN` | 1v1, PPO vs scripted, possession shaping, fixed faceoff starts |
//! | `EXP-T4` | 2v2, one DQN beside a scripted teammate, individual possession |
//! | `EXP-T4b` | as `EXP-T4` with team-scoped possession |
//! | `EXP-T5` | as `EXP-T4` with a penalty when the teammate loses the ball |
//! | `EXP-T6` | 2v2, a second DQN beside the frozen `EXP-T4` DQN |
//! | `EXP-CROSS` | a PPO team against the DQN team of `EXP-T4` + `EXP-T6` |
//! | `EXP-CENTRAL` | 2v2, one DQN choosing joint actions for both home players |
//!
//! Presets that depend on earlier ones train those first (or reuse their
//! final checkpoints when present) inside the same artifacts directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sts2::agents::{DqnConfig, EpsilonSchedule, PpoConfig};
use sts2::rewards::RewardPreset;
use sts2::scripted::Difficulty;
use sts2::sim::{GameConfig, PlayerId, TeamId};

use crate::checkpoint::Checkpoint;
use crate::config::{AlgoConfig, ExperimentConfig, RewardChoice};
use crate::derive_seed;
use crate::error::{HarnessError, Result};
use crate::evaluate::{crossplay, evaluate, CrossplayOutcome, Team};
use crate::slots::{SlotAssignment, SlotSpec};
use crate::stats::MatchStats;
use crate::train::train;

pub const NAMES: [&str; 10] = [
    "EXP-T1",
    "EXP-T2",
    "EXP-T3",
    "EXP-PPO-LOCALMIN",
    "EXP-T4",
    "EXP-T4b",
    "EXP-T5",
    "EXP-T6",
    "EXP-CROSS",
    "EXP-CENTRAL",
];

/// Helper runs that only exist to build the PPO team of `EXP-CROSS`.
const CROSS_PPO_FIRST: &str = "EXP-CROSS-PPO1";
const CROSS_PPO_SECOND: &str = "EXP-CROSS-PPO2";

const SEED: u64 = 2024;
const BUDGET_1V1: u64 = 3_000_000;
const BUDGET_2V2: u64 = 3_000_000;
const BUDGET_PPO: u64 = 2_000_000;
const BUDGET_CENTRAL: u64 = 200_000;

fn scripted() -> SlotSpec {
    SlotSpec::scripted(Difficulty::Normal)
}

fn game(k: usize) -> GameConfig {
    GameConfig {
        randomize_start: true,
        ..GameConfig::with_k(k)
    }
}

/// DQN settings used by every DQN preset.
pub fn preset_dqn() -> DqnConfig {
    DqnConfig {
        hidden: vec![64, 64],
        learning_rate: 1e-4,
        epsilon: EpsilonSchedule {
            start: 1.0,
            end: 0.05,
            decay_steps: 200_000,
        },
        ..DqnConfig::default()
    }
}

pub fn preset_ppo() -> PpoConfig {
    PpoConfig::default()
}

fn base(name: &str, k: usize, budget: u64, slots: SlotAssignment, reward: RewardPreset, algo: AlgoConfig) -> ExperimentConfig {
    ExperimentConfig {
        name: name.to_string(),
        seed: SEED,
        budget,
        eval_every: budget / 10,
        eval_episodes: 50,
        game: game(k),
        slots,
        reward: RewardChoice::Preset(reward),
        algo,
        centralized: false,
        curriculum: Vec::new(),
    }
}

fn one_v_one(opponent: SlotSpec) -> SlotAssignment {
    SlotAssignment::new()
        .with(PlayerId::home(0), SlotSpec::Learner)
        .with(PlayerId::away(0), opponent)
}

fn two_v_two(home0: SlotSpec, home1: SlotSpec) -> SlotAssignment {
    SlotAssignment::new()
        .with(PlayerId::home(0), home0)
        .with(PlayerId::home(1), home1)
        .with(PlayerId::away(0), scripted())
        .with(PlayerId::away(1), scripted())
}

/// Final checkpoint of a preset run inside `artifacts`.
pub fn final_checkpoint(artifacts: &Path, name: &str) -> PathBuf {
    artifacts.join(name).join("final.ckpt")
}

/// The experiment configuration behind a training preset. Frozen
/// checkpoints point into `artifacts`.
pub fn preset_config(name: &str, artifacts: &Path) -> Result<ExperimentConfig> {
    let dqn = || AlgoConfig::dqn(preset_dqn());
    let ppo = || AlgoConfig::ppo(preset_ppo());
    let frozen = |dep: &str| SlotSpec::frozen(final_checkpoint(artifacts, dep));
    let config = match name {
        "EXP-T1" => base(name, 1, BUDGET_1V1, one_v_one(scripted()), RewardPreset::Sparse, dqn()),
        "EXP-T2" => base(
            name,
            1,
            BUDGET_1V1,
            one_v_one(scripted()),
            RewardPreset::IndividualPossession,
            dqn(),
        ),
        "EXP-T3" => base(
            name,
            1,
            BUDGET_PPO,
            one_v_one(frozen("EXP-T2")),
            RewardPreset::IndividualPossession,
            ppo(),
        ),
        "EXP-PPO-LOCALMIN" => ExperimentConfig {
            game: GameConfig::with_k(1),
            ..base(
                name,
                1,
                BUDGET_PPO,
                one_v_one(scripted()),
                RewardPreset::IndividualPossession,
                ppo(),
            )
        },
        "EXP-T4" => base(
            name,
            2,
            BUDGET_2V2,
            two_v_two(SlotSpec::Learner, scripted()),
            RewardPreset::IndividualPossession,
            dqn(),
        ),
        "EXP-T4b" => base(
            name,
            2,
            BUDGET_2V2,
            two_v_two(SlotSpec::Learner, scripted()),
            RewardPreset::TeamPossession,
            dqn(),
        ),
        "EXP-T5" => base(
            name,
            2,
            BUDGET_2V2,
            two_v_two(SlotSpec::Learner, scripted()),
            RewardPreset::TeammateAssist,
            dqn(),
        ),
        "EXP-T6" => base(
            name,
            2,
            BUDGET_2V2,
            two_v_two(frozen("EXP-T4"), SlotSpec::Learner),
            RewardPreset::IndividualPossession,
            dqn(),
        ),
        CROSS_PPO_FIRST => base(
            name,
            2,
            BUDGET_PPO,
            two_v_two(SlotSpec::Learner, scripted()),
            RewardPreset::IndividualPossession,
            ppo(),
        ),
        CROSS_PPO_SECOND => base(
            name,
            2,
            BUDGET_PPO,
            two_v_two(frozen(CROSS_PPO_FIRST), SlotSpec::Learner),
            RewardPreset::IndividualPossession,
            ppo(),
        ),
        "EXP-CENTRAL" => ExperimentConfig {
            centralized: true,
            ..base(
                name,
                2,
                BUDGET_CENTRAL,
                two_v_two(SlotSpec::Learner, SlotSpec::Learner),
                RewardPreset::CentralizedTeam,
                dqn(),
            )
        },
        "EXP-CROSS" => {
            return Err(HarnessError::Config(
                "EXP-CROSS is a cross-play of other presets and has no training config of its own".into(),
            ))
        }
        other => return Err(HarnessError::UnknownPreset(other.to_string())),
    };
    Ok(config)
}

/// Training presets a preset depends on, in the order they must run.
pub fn prerequisites(name: &str) -> &'static [&'static str] {
    match name {
        "EXP-T3" => &["EXP-T2"],
        "EXP-T6" => &["EXP-T4"],
        CROSS_PPO_SECOND => &[CROSS_PPO_FIRST],
        "EXP-CROSS" => &["EXP-T4", "EXP-T6", CROSS_PPO_FIRST, CROSS_PPO_SECOND],
        _ => &[],
    }
}

#[derive(Debug, Clone, Default)]
pub struct PresetOptions {
    /// Replaces every training budget (prerequisites included); evaluation
    /// intervals scale with it.
    pub budget: Option<u64>,
    /// Episodes of the final evaluation.
    pub eval_episodes: usize,
    /// Retrain even when a matching final checkpoint exists.
    pub force: bool,
}

impl PresetOptions {
    pub fn new() -> Self {
        Self {
            budget: None,
            eval_episodes: 500,
            force: false,
        }
    }
}

/// What a preset produced.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PresetReport {
    pub name: String,
    /// Final checkpoint of the preset's own training run.
    pub checkpoint: Option<PathBuf>,
    /// Greedy evaluation of the final policy in the preset's own setup.
    pub stats: MatchStats,
    pub crossplay: Option<CrossplayOutcome>,
}

impl PresetReport {
    /// Human-readable summary table.
    pub fn table(&self) -> String {
        let mut s = format!("{}\n", self.name);
        match &self.crossplay {
            Some(x) => {
                s += "team A (home rows) vs team B (away rows), ends swapped half the time\n";
                s += &x.combined.table();
            }
            None => s += &self.stats.table(),
        }
        s
    }
}

fn with_options(mut config: ExperimentConfig, options: &PresetOptions) -> ExperimentConfig {
    if let Some(b) = options.budget {
        config.budget = b;
        config.eval_every = (b / 10).max(1);
    }
    config
}

/// Trains `name` into `artifacts/<name>/` unless an up-to-date final
/// checkpoint is already there, and returns its path.
fn ensure_trained(name: &str, artifacts: &Path, options: &PresetOptions) -> Result<PathBuf> {
    for dep in prerequisites(name) {
        ensure_trained(dep, artifacts, options)?;
    }
    let config = with_options(preset_config(name, artifacts)?, options);
    let path = final_checkpoint(artifacts, name);
    if !options.force {
        if let Ok(existing) = Checkpoint::load(&path) {
            if existing.config_hash == config.hash_hex() {
                log::info!("{name}: reusing {}", path.display());
                return Ok(path);
            }
        }
    }
    log::info!("{name}: training for {} steps", config.budget);
    train(&config, Some(&artifacts.join(name)))?;
    Ok(path)
}

/// The preset's own slot layout with the learner slots replaced by the
/// trained checkpoint.
fn evaluation_slots(config: &ExperimentConfig, ckpt: &Path) -> SlotAssignment {
    let mut slots = config.slots.clone();
    for spec in slots.0.values_mut() {
        if matches!(spec, SlotSpec::Learner) {
            *spec = SlotSpec::frozen(ckpt);
        }
    }
    slots
}

/// Runs a preset end to end inside `artifacts` and writes
/// `artifacts/<name>/report.json`.
pub fn run_preset(name: &str, artifacts: &Path, options: &PresetOptions) -> Result<PresetReport> {
    if !NAMES.contains(&name) {
        return Err(HarnessError::UnknownPreset(name.to_string()));
    }
    let eval_seed = derive_seed(SEED, 0xe7a1);
    let report = if name == "EXP-CROSS" {
        for dep in prerequisites(name) {
            ensure_trained(dep, artifacts, options)?;
        }
        let ppo_team = Team::of_checkpoints([
            final_checkpoint(artifacts, CROSS_PPO_FIRST),
            final_checkpoint(artifacts, CROSS_PPO_SECOND),
        ]);
        let dqn_team = Team::of_checkpoints([
            final_checkpoint(artifacts, "EXP-T4"),
            final_checkpoint(artifacts, "EXP-T6"),
        ]);
        let outcome = crossplay(&game(2), &ppo_team, &dqn_team, options.eval_episodes, eval_seed)?;
        PresetReport {
            name: name.to_string(),
            checkpoint: None,
            stats: outcome.combined.clone(),
            crossplay: Some(outcome),
        }
    } else {
        let ckpt = ensure_trained(name, artifacts, options)?;
        let config = preset_config(name, artifacts)?;
        let stats = evaluate(
            &config.game,
            &evaluation_slots(&config, &ckpt),
            options.eval_episodes,
            eval_seed,
        )?;
        PresetReport {
            name: name.to_string(),
            checkpoint: Some(ckpt),
            stats,
            crossplay: None,
        }
    };
    let dir = artifacts.join(name);
    fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
    let path = dir.join("report.json");
    let json = serde_json::to_string_pretty(&report).expect("reports serialize");
    fs::write(&path, json).map_err(|e| HarnessError::io(&path, e))?;
    Ok(report)
}

/// Learner team of a training preset, for reading its score rate.
pub fn learner_team(config: &ExperimentConfig) -> TeamId {
    config.learners().first().map_or(TeamId::Home, |p| p.team)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_training_preset_validates() {
        let dir = Path::new("artifacts");
        for name in NAMES.iter().chain(&[CROSS_PPO_FIRST, CROSS_PPO_SECOND]) {
            match preset_config(name, dir) {
                Ok(c) => c.validate().unwrap(),
                Err(e) => assert_eq!(*name, "EXP-CROSS", "{e}"),
            }
        }
        assert!(matches!(
            preset_config("EXP-T9", dir),
            Err(HarnessError::UnknownPreset(_))
        ));
    }

    #[test]
    fn preset_contents() {
        let dir = Path::new("a");
        assert!(preset_config("EXP-T1", dir).unwrap().reward.spec().is_sparse());
        assert_eq!(preset_config("EXP-T5", dir).unwrap().reward.spec().teammate_loss_penalty, -0.8);
        let c = preset_config("EXP-CENTRAL", dir).unwrap();
        assert!(c.centralized);
        assert_eq!(c.learners().len(), 2);
        assert_eq!(c.reward.spec().possession_scope, sts2::rewards::PossessionScope::Team);
        let t3 = preset_config("EXP-T3", dir).unwrap();
        assert_eq!(
            t3.slots.get(PlayerId::away(0)),
            Some(&SlotSpec::frozen(final_checkpoint(dir, "EXP-T2")))
        );
        assert!(!preset_config("EXP-PPO-LOCALMIN", dir).unwrap().game.randomize_start);
    }
}
