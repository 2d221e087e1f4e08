//! Event-driven reward shaping.
//!
//! A [`RewardSpec`] turns the events of one tick into a scalar per learner.
//! Every term is a weight times a count of qualifying events, so rewards are
//! linear in the spec.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::{EventKind, Exchange, GameEvent, PlayerId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PossessionScope {
    /// Only the player who gained/lost the ball is credited.
    Individual,
    /// Every learner on the gaining/losing player's team is credited.
    Team,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardSpec {
    pub score_reward: f64,
    pub concede_reward: f64,
    pub possession_gain: f64,
    pub possession_loss: f64,
    pub possession_scope: PossessionScope,
    /// Added to a learner whenever a teammate (not the learner) loses the ball
    /// to the opposing team. Teammate gains earn nothing.
    pub teammate_loss_penalty: f64,
    /// Ignore possession changes tagged as within-team passes.
    pub exclude_within_team_passes: bool,
    /// Count pickups of a loose ball (and releases into a loose ball, such as
    /// shots) as possession changes.
    pub count_loose_ball: bool,
}

impl Default for RewardSpec {
    fn default() -> Self {
        RewardPreset::Sparse.spec()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardPreset {
    /// ±1 for scoring / conceding only.
    Sparse,
    /// Sparse plus ±0.8 for the learner's own gains and losses.
    IndividualPossession,
    /// Sparse plus ±0.8 whenever anyone on the learner's team gains or loses.
    TeamPossession,
    /// Individual possession plus −0.8 when a teammate loses the ball.
    TeammateAssist,
    /// Team-scoped possession shaping for a joint-action learner.
    CentralizedTeam,
}

impl RewardPreset {
    pub const ALL: [RewardPreset; 5] = [
        RewardPreset::Sparse,
        RewardPreset::IndividualPossession,
        RewardPreset::TeamPossession,
        RewardPreset::TeammateAssist,
        RewardPreset::CentralizedTeam,
    ];

    pub fn spec(self) -> RewardSpec {
        let sparse = RewardSpec {
            score_reward: 1.0,
            concede_reward: -1.0,
            possession_gain: 0.0,
            possession_loss: 0.0,
            possession_scope: PossessionScope::Individual,
            teammate_loss_penalty: 0.0,
            exclude_within_team_passes: true,
            count_loose_ball: true,
        };
        let individual = RewardSpec {
            possession_gain: 0.8,
            possession_loss: -0.8,
            ..sparse
        };
        match self {
            RewardPreset::Sparse => sparse,
            RewardPreset::IndividualPossession => individual,
            RewardPreset::TeamPossession | RewardPreset::CentralizedTeam => RewardSpec {
                possession_scope: PossessionScope::Team,
                ..individual
            },
            RewardPreset::TeammateAssist => RewardSpec {
                teammate_loss_penalty: -0.8,
                ..individual
            },
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum RewardError {
    #[error("events span ticks {first} and {other}; rewards are computed per tick")]
    MixedTicks { first: u64, other: u64 },
    #[error("no learners given")]
    NoLearners,
    #[error("reward weights must be finite")]
    NonFinite,
}

impl RewardSpec {
    pub fn validate(&self) -> Result<(), RewardError> {
        let all = [
            self.score_reward,
            self.concede_reward,
            self.possession_gain,
            self.possession_loss,
            self.teammate_loss_penalty,
        ];
        if all.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(RewardError::NonFinite)
        }
    }

    /// True when every shaping term is zero.
    pub fn is_sparse(&self) -> bool {
        self.possession_gain == 0.0 && self.possession_loss == 0.0 && self.teammate_loss_penalty == 0.0
    }

    /// Weight-wise sum. Defined only for specs that agree on scope and
    /// filtering flags, which is where rewards are additive.
    pub fn checked_add(&self, other: &RewardSpec) -> Option<RewardSpec> {
        if self.possession_scope != other.possession_scope
            || self.exclude_within_team_passes != other.exclude_within_team_passes
            || self.count_loose_ball != other.count_loose_ball
        {
            return None;
        }
        Some(RewardSpec {
            score_reward: self.score_reward + other.score_reward,
            concede_reward: self.concede_reward + other.concede_reward,
            possession_gain: self.possession_gain + other.possession_gain,
            possession_loss: self.possession_loss + other.possession_loss,
            teammate_loss_penalty: self.teammate_loss_penalty + other.teammate_loss_penalty,
            ..*self
        })
    }

    fn counts(&self, exchange: Exchange) -> bool {
        match exchange {
            Exchange::OpponentTeam => true,
            Exchange::OwnTeamPass => !self.exclude_within_team_passes,
            Exchange::Loose => self.count_loose_ball,
        }
    }

    fn credits(&self, learner: PlayerId, player: PlayerId) -> bool {
        match self.possession_scope {
            PossessionScope::Individual => player == learner,
            PossessionScope::Team => player.team == learner.team,
        }
    }

    /// Reward of one learner for one tick's events. Does not check that the
    /// events share a tick; see [`compute_rewards`].
    pub fn reward_for(&self, events: &[GameEvent], learner: PlayerId) -> f64 {
        let mut scored = 0u32;
        let mut conceded = 0u32;
        let mut gains = 0u32;
        let mut losses = 0u32;
        let mut mate_losses = 0u32;
        for e in events {
            match e.kind {
                EventKind::Goal { scorer } => {
                    if scorer.team == learner.team {
                        scored += 1;
                    } else {
                        conceded += 1;
                    }
                }
                EventKind::PossessionGained { player, prior } => {
                    if self.counts(prior) && self.credits(learner, player) {
                        gains += 1;
                    }
                }
                EventKind::PossessionLost { player, to } => {
                    if self.counts(to) && self.credits(learner, player) {
                        losses += 1;
                    }
                    if to == Exchange::OpponentTeam && player.team == learner.team && player != learner {
                        mate_losses += 1;
                    }
                }
                _ => {}
            }
        }
        f64::from(scored) * self.score_reward
            + f64::from(conceded) * self.concede_reward
            + f64::from(gains) * self.possession_gain
            + f64::from(losses) * self.possession_loss
            + f64::from(mate_losses) * self.teammate_loss_penalty
    }
}

/// Rewards for every learner from the events of a single tick.
pub fn compute_rewards(
    events: &[GameEvent],
    learners: &[PlayerId],
    spec: &RewardSpec,
) -> Result<BTreeMap<PlayerId, f64>, RewardError> {
    if learners.is_empty() {
        return Err(RewardError::NoLearners);
    }
    if let Some(first) = events.first() {
        if let Some(other) = events.iter().find(|e| e.tick != first.tick) {
            return Err(RewardError::MixedTicks {
                first: first.tick,
                other: other.tick,
            });
        }
    }
    Ok(learners.iter().map(|&l| (l, spec.reward_for(events, l))).collect())
}
