//! The rule-based controller used as opponent, teammate and curriculum
//! baseline.
//!
//! Each call walks a fixed rule cascade and returns the first match:
//!
//! | rule | condition | action |
//! |------|-----------|--------|
//! | R1 | I carry, in range, shooting lane clear | `Shoot` |
//! | R2 | I carry, the pass target is closer to goal, lane clear | `Pass` |
//! | R3 | I carry | move toward the attacked goal |
//! | R4 | opponent carries inside its own half | fall back to my post (on the shooting line for the nearest defender), never across the center line |
//! | R5 | opponent carries inside my half | chase the carrier |
//! | R6 | ball loose or in flight, I am my team's nearest | move to the ball |
//! | R7 | otherwise | move to a support spot next to the team's anchor |
//!
//! R4 is what makes a carrier that idles in its own half untouchable.

use serde::{Deserialize, Serialize};

use crate::sim::{
    integrate_player, pass_target, segment_distance, Action, BallState, GameConfig, GameState, PlayerId, SimError,
    TeamId, Vec2,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedProfile {
    /// Maximum distance to the goal center for a shot, arena units.
    pub shoot_range: f64,
    /// Minimum distance of every opponent from a shot or pass lane.
    pub open_lane_clearance: f64,
    /// Support spot relative to the anchor, in the attacking frame
    /// (`x` lateral away from the anchor's side, `y` toward the attacked goal).
    pub support_offset: Vec2,
    /// Distance of the defensive post from the own goal line, as a fraction
    /// of `half_length`.
    pub defend_depth: f64,
    pub difficulty: Difficulty,
}

impl ScriptedProfile {
    pub fn normal(config: &GameConfig) -> Self {
        Self {
            shoot_range: 0.45 * config.half_length,
            open_lane_clearance: 0.08,
            support_offset: Vec2::new(0.25, 0.15),
            defend_depth: 0.25,
            difficulty: Difficulty::Normal,
        }
    }

    /// Shoots only from close in and only through wide lanes.
    pub fn easy(config: &GameConfig) -> Self {
        Self {
            shoot_range: 0.3 * config.half_length,
            open_lane_clearance: 0.16,
            difficulty: Difficulty::Easy,
            ..Self::normal(config)
        }
    }

    pub fn for_difficulty(difficulty: Difficulty, config: &GameConfig) -> Self {
        match difficulty {
            Difficulty::Easy => Self::easy(config),
            Difficulty::Normal => Self::normal(config),
        }
    }

    pub fn validate(&self, config: &GameConfig) -> Result<(), SimError> {
        let bad = |field, bound: &str| SimError::InvalidConfig {
            field,
            bound: bound.to_string(),
        };
        if !(self.shoot_range > 0.0 && self.shoot_range <= config.half_length) {
            return Err(bad("shoot_range", "0 < shoot_range <= half_length"));
        }
        if !(self.defend_depth > 0.0 && self.defend_depth <= 1.0) {
            return Err(bad("defend_depth", "0 < defend_depth <= 1"));
        }
        if !(self.open_lane_clearance >= 0.0) {
            return Err(bad("open_lane_clearance", "open_lane_clearance >= 0"));
        }
        if !self.support_offset.is_finite() {
            return Err(bad("support_offset", "finite"));
        }
        Ok(())
    }
}

/// Which rule fired; exposed for tests and diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    Shoot,
    Pass,
    Advance,
    HoldPost,
    Chase,
    FetchBall,
    Support,
}

/// The scripted action for `me`. Pure: no hidden state and no randomness.
pub fn scripted_action(state: &GameState, config: &GameConfig, me: PlayerId, profile: &ScriptedProfile) -> Action {
    decide(state, config, me, profile).0
}

pub fn decide(state: &GameState, config: &GameConfig, me: PlayerId, profile: &ScriptedProfile) -> (Action, Rule) {
    let s = me.team.attack_sign();
    let my_pos = state.player(me).pos;
    let goal = Vec2::new(0.0, s * config.half_length);

    match state.ball {
        BallState::Controlled { owner } if owner == me => {
            if my_pos.distance(goal) <= profile.shoot_range
                && lane_clear(state, me.team.opponent(), my_pos, goal, profile.open_lane_clearance)
            {
                return (Action::Shoot, Rule::Shoot);
            }
            if let Some(mate) = pass_target(state, me) {
                let mate_pos = state.player(mate).pos;
                if mate_pos.distance(goal) < my_pos.distance(goal)
                    && lane_clear(state, me.team.opponent(), my_pos, mate_pos, profile.open_lane_clearance)
                {
                    return (Action::Pass, Rule::Pass);
                }
            }
            (move_toward(state, me, goal, |_| true), Rule::Advance)
        }
        BallState::Controlled { owner } if owner.team != me.team => {
            let carrier = state.player(owner).pos;
            // The carrier's own half is the half I attack.
            if s * carrier.y > 0.0 {
                let post = guard_post(state, config, me, profile, carrier);
                let y_now = s * my_pos.y;
                let action = move_toward(state, me, post, |a| {
                    let next = integrate_player(config, me.team, *state.player(me), Some(a));
                    let y_next = s * next.pos.y;
                    y_next <= 0.0 || y_next <= y_now
                });
                (action, Rule::HoldPost)
            } else {
                (move_toward(state, me, carrier, |_| true), Rule::Chase)
            }
        }
        BallState::Controlled { owner } => {
            let target = support_spot(config, state.player(owner).pos, me.team, profile);
            (move_toward(state, me, target, |_| true), Rule::Support)
        }
        BallState::Loose { pos, .. } | BallState::InFlight { pos, .. } => {
            let nearest = nearest_to(state, me.team, pos);
            if nearest == me {
                (move_toward(state, me, pos, |_| true), Rule::FetchBall)
            } else {
                let anchor = state.player(nearest).pos;
                let target = support_spot(config, anchor, me.team, profile);
                (move_toward(state, me, target, |_| true), Rule::Support)
            }
        }
    }
}

/// True when every player of `defenders` is at least `clearance` away from
/// the segment `from..to`.
pub fn lane_clear(state: &GameState, defenders: TeamId, from: Vec2, to: Vec2, clearance: f64) -> bool {
    state
        .team_ids(defenders)
        .all(|id| segment_distance(from, to, state.player(id).pos).0 >= clearance)
}

pub fn defensive_post(config: &GameConfig, me: PlayerId, profile: &ScriptedProfile, k: usize) -> Vec2 {
    let s = me.team.attack_sign();
    let spread = 0.5 * config.half_width;
    let x = if k > 1 {
        -spread + 2.0 * spread * me.index as f64 / (k - 1) as f64
    } else {
        0.0
    };
    let y = -s * config.half_length * (1.0 - profile.defend_depth);
    Vec2::new(x, y)
}

/// Where `me` holds while the opposing carrier sits in its own half: the
/// team member nearest to the carrier's shooting line stands on it,
/// `defend_depth` in front of the own goal; the others keep their static
/// posts.
pub fn guard_post(state: &GameState, config: &GameConfig, me: PlayerId, profile: &ScriptedProfile, carrier: Vec2) -> Vec2 {
    let own_goal = Vec2::new(0.0, -me.team.attack_sign() * config.half_length);
    let depth = profile.defend_depth * config.half_length;
    let lane = own_goal + (carrier - own_goal).normalized().unwrap_or(Vec2::ZERO) * depth;
    if nearest_to(state, me.team, lane) == me {
        lane
    } else {
        defensive_post(config, me, profile, state.players_per_team())
    }
}

fn support_spot(config: &GameConfig, anchor: Vec2, team: TeamId, profile: &ScriptedProfile) -> Vec2 {
    let s = team.attack_sign();
    let side = if anchor.x <= 0.0 { 1.0 } else { -1.0 };
    let spot = anchor + Vec2::new(side * profile.support_offset.x, s * profile.support_offset.y);
    Vec2::new(
        spot.x.clamp(-config.half_width, config.half_width),
        spot.y.clamp(-config.half_length, config.half_length),
    )
}

fn nearest_to(state: &GameState, team: TeamId, point: Vec2) -> PlayerId {
    state
        .team_ids(team)
        .map(|id| (state.player(id).pos.distance(point), id))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.index.cmp(&b.1.index)))
        .map(|(_, id)| id)
        .expect("team has at least one player")
}

/// The movement action (among those `allowed`) whose direction is best
/// aligned with `target`. Candidates are tried Forward, Backward, Left, Right,
/// so ties resolve to Forward. Falls back to Backward when nothing is allowed.
fn move_toward(
    state: &GameState,
    me: PlayerId,
    target: Vec2,
    allowed: impl Fn(Action) -> bool,
) -> Action {
    let delta = target - state.player(me).pos;
    let mut best: Option<(f64, Action)> = None;
    for a in Action::MOVES {
        if !allowed(a) {
            continue;
        }
        let dir = a.direction(me.team).expect("movement action");
        let score = dir.dot(delta);
        if best.is_none_or(|(bs, _)| score > bs) {
            best = Some((score, a));
        }
    }
    best.map_or(Action::Backward, |(_, a)| a)
}
