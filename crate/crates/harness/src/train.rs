//! The training loop.
//!
//! One learning agent drives the learner slots; every other slot is played
//! by its resolved controller. Seeds for the agent, its exploration stream,
//! the training match and evaluation are all derived from the experiment
//! seed, so a run is reproducible bit for bit.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sts2::agents::{Algo, DqnAgent, FrozenPolicy, JointActionCodec, PpoAgent, PpoDiagnostics, Rollout, TransitionRef};
use sts2::nn::Mlp;
use sts2::rewards::RewardSpec;
use sts2::scripted::ScriptedProfile;
use sts2::sim::{encode_observation_into, observation_len, Action, GameConfig, Match, PlayerId, StartLayout};

use crate::checkpoint::Checkpoint;
use crate::config::{AdvanceWhen, ExperimentConfig};
use crate::derive_seed;
use crate::error::{HarnessError, Result};
use crate::evaluate::{evaluate_lineup, load_checkpoint};
use crate::slots::{Control, Controller, Lineup};
use crate::stats::MatchStats;

const AGENT_STREAM: u64 = 0xa1;
const EXPLORE_STREAM: u64 = 0xa2;
const MATCH_STREAM: u64 = 0xa3;
const EVAL_STREAM: u64 = 0xe0;

/// One line of the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub step: u64,
    /// Curriculum stage index; equals the number of stages once the
    /// curriculum is complete.
    pub stage: usize,
    pub stage_name: String,
    pub episodes: u64,
    /// Mean undiscounted return of episodes finished since the last record.
    pub mean_episode_return: Option<f64>,
    /// Mean training loss since the last record (DQN TD loss, PPO policy loss).
    pub mean_loss: Option<f64>,
    pub updates: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ppo: Option<PpoDiagnostics>,
    /// Learner team's share of goals in the evaluation, percent.
    pub learner_score_rate: Option<f64>,
    pub learner_possession: Option<f64>,
    pub eval: MatchStats,
}

impl MetricsRecord {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("metrics serialize")
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub metrics: Vec<MetricsRecord>,
    /// Evaluation at the end of the budget.
    pub final_eval: MatchStats,
    /// Where the final checkpoint was written, if an output directory was given.
    pub checkpoint_path: Option<PathBuf>,
}

impl TrainOutcome {
    pub fn final_record(&self) -> &MetricsRecord {
        self.metrics.last().expect("training always writes a final record")
    }
}

enum Learner {
    Dqn(Box<DqnAgent>),
    Ppo {
        agent: Box<PpoAgent>,
        rollout: Rollout,
        last: Option<PpoDiagnostics>,
    },
}

impl Learner {
    fn acting_net(&self) -> &Mlp {
        match self {
            Learner::Dqn(a) => &a.online,
            Learner::Ppo { agent, .. } => &agent.policy,
        }
    }

    fn algo(&self) -> Algo {
        match self {
            Learner::Dqn(_) => Algo::Dqn,
            Learner::Ppo { .. } => Algo::Ppo,
        }
    }

    fn updates(&self) -> u64 {
        match self {
            Learner::Dqn(a) => a.updates,
            Learner::Ppo { agent, .. } => agent.updates,
        }
    }
}

/// Output files of a run.
struct Outputs {
    dir: PathBuf,
    metrics: BufWriter<File>,
}

impl Outputs {
    fn create(dir: &Path, config: &ExperimentConfig) -> Result<Self> {
        let ckpts = dir.join("checkpoints");
        fs::create_dir_all(&ckpts).map_err(|e| HarnessError::io(&ckpts, e))?;
        let cfg = dir.join("config.toml");
        fs::write(&cfg, config.to_toml()).map_err(|e| HarnessError::io(&cfg, e))?;
        let path = dir.join("metrics.ndjson");
        let file = File::create(&path).map_err(|e| HarnessError::io(&path, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            metrics: BufWriter::new(file),
        })
    }

    fn record(&mut self, r: &MetricsRecord) -> Result<()> {
        let path = self.dir.join("metrics.ndjson");
        writeln!(self.metrics, "{}", r.to_json_line())
            .and_then(|_| self.metrics.flush())
            .map_err(|e| HarnessError::io(path, e))
    }
}

/// Lineup for a curriculum stage: opponents of the learner switch to the
/// stage's difficulty.
fn stage_lineup(base: &Lineup, config: &ExperimentConfig, stage: usize, learner_team: sts2::sim::TeamId) -> Lineup {
    let Some(difficulty) = config.curriculum.get(stage).and_then(|s| s.opponent) else {
        return base.clone();
    };
    let profile = ScriptedProfile::for_difficulty(difficulty, &config.game);
    let controllers = base
        .controllers
        .iter()
        .map(|c| match c.control {
            Control::Scripted(_) if c.slots[0].team != learner_team => Controller {
                slots: c.slots.clone(),
                control: Control::Scripted(profile),
            },
            _ => c.clone(),
        })
        .collect();
    Lineup::from_controllers(base.k(), controllers)
}

/// `base` with the learner slots played greedily by `net`.
fn with_policy(base: &Lineup, net: &Mlp, algo: Algo, codec: Option<&JointActionCodec>) -> Lineup {
    let policy = Arc::new(FrozenPolicy::new(algo, net.clone()));
    let mut controllers: Vec<Controller> = base
        .controllers
        .iter()
        .filter(|c| !matches!(c.control, Control::Learner))
        .cloned()
        .collect();
    let learners = base.slots_with(|c| matches!(c, Control::Learner));
    match codec {
        Some(codec) => controllers.push(Controller {
            slots: codec.agents().to_vec(),
            control: Control::Policy {
                policy,
                codec: Some(codec.clone()),
            },
        }),
        None => controllers.extend(learners.into_iter().map(|id| Controller {
            slots: vec![id],
            control: Control::Policy {
                policy: policy.clone(),
                codec: None,
            },
        })),
    }
    Lineup::from_controllers(base.k(), controllers)
}

fn mean(sum: f64, n: u64) -> Option<f64> {
    (n > 0).then(|| sum / n as f64)
}

/// Mean reward of the learner slots for one tick.
fn learner_reward(spec: &RewardSpec, events: &[sts2::sim::GameEvent], learners: &[PlayerId]) -> f64 {
    learners.iter().map(|&l| spec.reward_for(events, l)).sum::<f64>() / learners.len() as f64
}

/// Trains the experiment to its budget. With `out_dir`, writes
/// `config.toml`, `metrics.ndjson`, a checkpoint per evaluation under
/// `checkpoints/` and `final.ckpt`.
pub fn train(config: &ExperimentConfig, out_dir: Option<&Path>) -> Result<TrainOutcome> {
    config.validate()?;
    let game = &config.game;
    let k = game.k;
    let learners = config.learners();
    let viewer = learners[0];
    let codec = if config.centralized {
        Some(JointActionCodec::new(learners.clone())?)
    } else {
        None
    };
    let n_actions = codec.as_ref().map_or(Action::COUNT, |c| c.joint_count());
    let obs_len = observation_len(k);
    let spec = config.reward.spec();
    let config_hash = config.hash_hex();

    let base = Lineup::resolve(&config.slots, game, load_checkpoint)?;
    let mut outputs = out_dir.map(|d| Outputs::create(d, config)).transpose()?;

    let agent_seed = derive_seed(config.seed, AGENT_STREAM);
    let mut learner = match config.algo.kind {
        Algo::Dqn => Learner::Dqn(Box::new(DqnAgent::new(obs_len, n_actions, config.algo.dqn.clone(), agent_seed)?)),
        Algo::Ppo => Learner::Ppo {
            agent: Box::new(PpoAgent::new(obs_len, n_actions, config.algo.ppo.clone(), agent_seed)?),
            rollout: Rollout::new(obs_len),
            last: None,
        },
    };
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, EXPLORE_STREAM));
    let eval_seed = derive_seed(config.seed, EVAL_STREAM);
    let mut m = Match::new(GameConfig {
        seed: derive_seed(config.seed, MATCH_STREAM),
        ..game.clone()
    })?;

    let mut stage = 0usize;
    let mut stage_start = 0u64;
    let mut lineup = stage_lineup(&base, config, stage, viewer.team);

    let start_episode = |m: &mut Match, rng: &mut ChaCha8Rng, stage: usize| {
        let frac = config.curriculum.get(stage).map_or(0.0, |s| s.open_net_fraction);
        if frac > 0.0 && rng.random::<f64>() < frac {
            m.reset_with(StartLayout::OpenNet { attacker: viewer });
        } else {
            m.reset_episode();
        }
    };
    start_episode(&mut m, &mut rng, stage);

    let mut obs = vec![0.0; obs_len];
    let mut next_obs = vec![0.0; obs_len];
    let mut scratch = Vec::new();
    let mut actions = vec![None; 2 * k];
    let mut events = Vec::new();
    encode_observation_into(m.state(), game, viewer, &mut obs);

    let mut metrics = Vec::new();
    let mut episodes = 0u64;
    let mut episode_return = 0.0;
    let (mut return_sum, mut return_n) = (0.0, 0u64);
    let (mut loss_sum, mut loss_n) = (0.0, 0u64);
    let mut final_eval = None;

    for step in 1..=config.budget {
        actions.iter_mut().for_each(|a| *a = None);
        lineup.fill(m.state(), game, &mut scratch, &mut actions);
        let (action, ppo_extra) = match &learner {
            Learner::Dqn(agent) => (agent.act(&obs, &mut rng)?, None),
            Learner::Ppo { agent, .. } => {
                let (a, logp, v) = agent.policy(&obs, &mut rng)?;
                (a, Some((logp, v)))
            }
        };
        match &codec {
            Some(codec) => {
                for (id, a) in codec.agents().iter().zip(codec.decode(action)?) {
                    actions[id.slot(k)] = Some(a);
                }
            }
            None => actions[viewer.slot(k)] = Action::from_index(action),
        }
        events.clear();
        m.step_slots_into(&actions, &mut events)?;
        let reward = learner_reward(&spec, &events, &learners);
        let done = m.is_finished();
        episode_return += reward;
        encode_observation_into(m.state(), game, viewer, &mut next_obs);

        match &mut learner {
            Learner::Dqn(agent) => {
                let t = TransitionRef {
                    obs: &obs,
                    action,
                    reward,
                    next_obs: &next_obs,
                    done,
                };
                if let Some(l) = agent.observe(t)? {
                    loss_sum += l;
                    loss_n += 1;
                }
            }
            Learner::Ppo { agent, rollout, last } => {
                let (logp, v) = ppo_extra.expect("ppo acts with log-prob and value");
                rollout.push(&obs, action, logp, v, reward, done);
                if rollout.len() == agent.config.rollout_length {
                    let bootstrap = if done { 0.0 } else { agent.value_of(&next_obs)? };
                    let c = &agent.config;
                    rollout.finish(bootstrap, c.gamma, c.gae_lambda, c.normalize_advantages)?;
                    let d = agent.update(rollout)?;
                    rollout.clear();
                    loss_sum += d.policy_loss;
                    loss_n += 1;
                    *last = Some(d);
                }
            }
        }

        if done {
            episodes += 1;
            return_sum += episode_return;
            return_n += 1;
            episode_return = 0.0;
            start_episode(&mut m, &mut rng, stage);
            encode_observation_into(m.state(), game, viewer, &mut next_obs);
        }
        std::mem::swap(&mut obs, &mut next_obs);

        if let Some(AdvanceWhen::Steps(n)) = config.curriculum.get(stage).map(|s| s.advance_when) {
            if step - stage_start >= n {
                stage += 1;
                stage_start = step;
                lineup = stage_lineup(&base, config, stage, viewer.team);
                log::info!("{}: step {step}: curriculum stage {stage}", config.name);
            }
        }

        if step % config.eval_every == 0 || step == config.budget {
            let eval_lineup = with_policy(&base, learner.acting_net(), learner.algo(), codec.as_ref());
            let eval = evaluate_lineup(game, &eval_lineup, config.eval_episodes, eval_seed, false)?.stats;
            let record = MetricsRecord {
                step,
                stage,
                stage_name: config
                    .curriculum
                    .get(stage)
                    .map_or_else(|| "base".to_string(), |s| s.name.clone()),
                episodes,
                mean_episode_return: mean(return_sum, return_n),
                mean_loss: mean(loss_sum, loss_n),
                updates: learner.updates(),
                epsilon: match &learner {
                    Learner::Dqn(a) => Some(a.epsilon()),
                    Learner::Ppo { .. } => None,
                },
                ppo: match &learner {
                    Learner::Ppo { last, .. } => *last,
                    Learner::Dqn(_) => None,
                },
                learner_score_rate: eval.team_score_rate(viewer.team),
                learner_possession: eval.team_possession_share(viewer.team),
                eval,
            };
            (return_sum, return_n, loss_sum, loss_n) = (0.0, 0, 0.0, 0);
            log::info!(
                "{}: step {step} stage {} episodes {episodes}: score rate {:?}, possession {:?}, loss {:?}",
                config.name,
                record.stage_name,
                record.learner_score_rate,
                record.learner_possession,
                record.mean_loss
            );
            if let Some(AdvanceWhen::EvalScoreRateAtLeast(x)) = config.curriculum.get(stage).map(|s| s.advance_when) {
                if record.learner_score_rate.is_some_and(|r| r >= x) {
                    stage += 1;
                    stage_start = step;
                    lineup = stage_lineup(&base, config, stage, viewer.team);
                    log::info!("{}: step {step}: curriculum stage {stage}", config.name);
                }
            }
            if let Some(out) = outputs.as_mut() {
                out.record(&record)?;
                let ckpt = snapshot(&learner, step, &config_hash, &learners);
                ckpt.save(&out.dir.join("checkpoints").join(format!("step-{step:09}.ckpt")))?;
            }
            if step == config.budget {
                final_eval = Some(record.eval.clone());
            }
            metrics.push(record);
        }
    }

    let checkpoint = snapshot(&learner, config.budget, &config_hash, &learners);
    let checkpoint_path = match &outputs {
        Some(out) => {
            let p = out.dir.join("final.ckpt");
            checkpoint.save(&p)?;
            Some(p)
        }
        None => None,
    };
    Ok(TrainOutcome {
        checkpoint,
        metrics,
        final_eval: final_eval.expect("the last step always evaluates"),
        checkpoint_path,
    })
}

fn snapshot(learner: &Learner, step: u64, config_hash: &str, learners: &[PlayerId]) -> Checkpoint {
    match learner {
        Learner::Dqn(a) => Checkpoint::from_dqn(a, config_hash, learners.to_vec()),
        Learner::Ppo { agent, .. } => Checkpoint::from_ppo(agent, step, config_hash, learners.to_vec()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{AlgoConfig, CurriculumStage, RewardChoice};
    use crate::slots::{SlotAssignment, SlotSpec};
    use sts2::agents::{DqnConfig, PpoConfig};
    use sts2::rewards::RewardPreset;
    use sts2::scripted::Difficulty;

    fn smoke(algo: AlgoConfig) -> ExperimentConfig {
        ExperimentConfig {
            name: "smoke".into(),
            seed: 5,
            budget: 1_000,
            eval_every: 500,
            eval_episodes: 2,
            game: GameConfig {
                episode_length: 300,
                ..GameConfig::with_k(1)
            },
            slots: SlotAssignment::new()
                .with(PlayerId::home(0), SlotSpec::Learner)
                .with(PlayerId::away(0), SlotSpec::scripted(Difficulty::Normal)),
            reward: RewardChoice::Preset(RewardPreset::IndividualPossession),
            algo,
            centralized: false,
            curriculum: Vec::new(),
        }
    }

    fn small_dqn() -> AlgoConfig {
        AlgoConfig::dqn(DqnConfig {
            hidden: vec![16],
            learning_starts: 100,
            ..DqnConfig::default()
        })
    }

    #[test]
    fn smoke_run_writes_loadable_checkpoint_and_metrics() {
        let dir = tempfile::tempdir().unwrap();
        let out = train(&smoke(small_dqn()), Some(dir.path())).unwrap();
        assert_eq!(out.metrics.len(), 2);
        let loaded = Checkpoint::load(out.checkpoint_path.as_ref().unwrap()).unwrap();
        assert_eq!(loaded, out.checkpoint);
        assert_eq!(loaded.env_steps, 1_000);
        let lines = fs::read_to_string(dir.path().join("metrics.ndjson")).unwrap();
        assert_eq!(lines.lines().count(), 2);
        assert!(dir.path().join("checkpoints/step-000000500.ckpt").exists());
    }

    #[test]
    fn same_seed_same_metrics() {
        let ppo = AlgoConfig::ppo(PpoConfig {
            hidden: vec![8],
            rollout_length: 256,
            minibatch_size: 64,
            ..PpoConfig::default()
        });
        for algo in [small_dqn(), ppo] {
            let c = smoke(algo);
            let a = train(&c, None).unwrap();
            let b = train(&c, None).unwrap();
            let lines = |o: &TrainOutcome| o.metrics.iter().map(|r| r.to_json_line()).collect::<Vec<_>>();
            assert_eq!(lines(&a), lines(&b));
            assert_eq!(a.checkpoint, b.checkpoint);
        }
    }

    #[test]
    fn curriculum_stages_only_move_forward() {
        let mut c = smoke(small_dqn());
        c.budget = 1_500;
        c.curriculum = vec![
            CurriculumStage {
                name: "open".into(),
                opponent: Some(Difficulty::Easy),
                open_net_fraction: 1.0,
                advance_when: AdvanceWhen::Steps(400),
            },
            CurriculumStage {
                name: "gate".into(),
                opponent: None,
                open_net_fraction: 0.0,
                advance_when: AdvanceWhen::EvalScoreRateAtLeast(0.0),
            },
        ];
        let out = train(&c, None).unwrap();
        let stages: Vec<_> = out.metrics.iter().map(|r| r.stage).collect();
        assert_eq!(stages, vec![1, 2, 2]);
        assert_eq!(out.final_record().stage_name, "base");
    }

    #[test]
    fn centralized_uses_joint_actions() {
        let mut c = smoke(small_dqn());
        c.game.k = 2;
        c.centralized = true;
        c.slots = SlotAssignment::new()
            .with(PlayerId::home(0), SlotSpec::Learner)
            .with(PlayerId::home(1), SlotSpec::Learner)
            .with(PlayerId::away(0), SlotSpec::scripted(Difficulty::Normal))
            .with(PlayerId::away(1), SlotSpec::scripted(Difficulty::Normal));
        let out = train(&c, None).unwrap();
        assert_eq!(out.checkpoint.action_count, 36);
        assert_eq!(out.checkpoint.controlled, vec![PlayerId::home(0), PlayerId::home(1)]);
    }
}
