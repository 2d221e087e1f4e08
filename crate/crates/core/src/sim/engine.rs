use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::types::*;
use super::{GameConfig, SimError};

/// How players and ball are placed at the start of an episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StartLayout {
    /// Mirrored faceoff spots, ball loose at the center spot.
    Faceoff,
    /// Positions, velocities and the ball drawn uniformly from the match RNG.
    Random,
    /// `attacker` holds the ball in the opponent half with every opponent
    /// placed behind it, so the net is undefended.
    OpenNet { attacker: PlayerId },
}

/// Depth of the faceoff spots, as a fraction of `half_length`.
const FACEOFF_DEPTH: f64 = 0.2;
/// The team that just conceded lines up this much closer to the center spot.
const KICKOFF_DEPTH: f64 = 0.1;

/// A running match: configuration, current state and the match RNG stream.
///
/// The RNG is a seeded ChaCha8 stream owned by the match. Draws happen in a
/// fixed order: random layouts draw `x, y, heading, speed` per player in slot
/// order and then the ball's `x, y`; open-net layouts draw the attacker's
/// `x, y`, then `x, y` for every other player in slot order; each tick, a
/// carrier's opponents inside `steal_radius` each draw one uniform in slot
/// order until one steals.
#[derive(Debug, Clone)]
pub struct Match {
    config: GameConfig,
    state: GameState,
    rng: ChaCha8Rng,
    actions: Vec<Option<Action>>,
}

impl Match {
    /// Starts a match: tick 0, score 0-0, in faceoff. Uses the random layout
    /// when `config.randomize_start` is set.
    pub fn new(config: GameConfig) -> Result<Self, SimError> {
        config.validate()?;
        let k = config.k;
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        let state = GameState {
            tick: 0,
            players: vec![PlayerState::default(); 2 * k],
            ball: BallState::Loose {
                pos: Vec2::ZERO,
                vel: Vec2::ZERO,
            },
            score: Score::default(),
            phase: GamePhase::Play,
        };
        let mut m = Self {
            config,
            state,
            rng,
            actions: vec![None; 2 * k],
        };
        m.reset_episode();
        Ok(m)
    }

    /// Builds a match around an arbitrary state. The state must have `2k`
    /// players; `rng_seed` seeds the stream used from here on.
    pub fn from_state(config: GameConfig, state: GameState, rng_seed: u64) -> Result<Self, SimError> {
        config.validate()?;
        if state.players.len() != 2 * config.k {
            return Err(SimError::InvalidArgument(format!(
                "state has {} players, config expects {}",
                state.players.len(),
                2 * config.k
            )));
        }
        let k = config.k;
        Ok(Self {
            config,
            state,
            rng: ChaCha8Rng::seed_from_u64(rng_seed),
            actions: vec![None; 2 * k],
        })
    }

    pub fn config(&self) -> &GameConfig {
        &self.config
    }

    pub fn state(&self) -> &GameState {
        &self.state
    }

    pub fn k(&self) -> usize {
        self.config.k
    }

    pub fn is_finished(&self) -> bool {
        matches!(self.state.phase, GamePhase::Finished { .. })
    }

    pub fn possession(&self) -> Option<PlayerId> {
        self.state.ball.owner()
    }

    /// Starts a fresh episode with the configured layout.
    pub fn reset_episode(&mut self) {
        let layout = if self.config.randomize_start {
            StartLayout::Random
        } else {
            StartLayout::Faceoff
        };
        self.reset_with(layout);
    }

    pub fn reset_with(&mut self, layout: StartLayout) {
        self.state.tick = 0;
        self.state.score = Score::default();
        match layout {
            StartLayout::Faceoff => self.place_faceoff(None),
            StartLayout::Random => self.place_random(),
            StartLayout::OpenNet { attacker } => self.place_open_net(attacker),
        }
        self.state.phase = self.faceoff_phase();
    }

    fn faceoff_phase(&self) -> GamePhase {
        match self.config.faceoff_countdown {
            0 => GamePhase::Play,
            countdown => GamePhase::Faceoff { countdown },
        }
    }

    fn place_faceoff(&mut self, conceding: Option<TeamId>) {
        let k = self.config.k;
        let w = self.config.half_width;
        let l = self.config.half_length;
        for slot in 0..2 * k {
            let id = PlayerId::from_slot(slot, k);
            let x = -w + 2.0 * w * (id.index + 1) as f64 / (k + 1) as f64;
            let depth = if conceding == Some(id.team) {
                KICKOFF_DEPTH
            } else {
                FACEOFF_DEPTH
            };
            self.state.players[slot] = PlayerState {
                pos: Vec2::new(x, -id.team.attack_sign() * depth * l),
                vel: Vec2::ZERO,
            };
        }
        self.state.ball = BallState::Loose {
            pos: Vec2::ZERO,
            vel: Vec2::ZERO,
        };
    }

    fn place_random(&mut self) {
        let w = self.config.half_width;
        let l = self.config.half_length;
        let vmax = self.config.max_speed;
        for p in self.state.players.iter_mut() {
            let x = self.rng.random_range(-w..=w);
            let y = self.rng.random_range(-l..=l);
            let heading = self.rng.random_range(0.0..std::f64::consts::TAU);
            let speed = self.rng.random_range(0.0..=vmax);
            *p = PlayerState {
                pos: Vec2::new(x, y),
                vel: Vec2::new(heading.cos(), heading.sin()) * speed,
            };
        }
        let x = self.rng.random_range(-w..=w);
        let y = self.rng.random_range(-l..=l);
        self.state.ball = BallState::Loose {
            pos: Vec2::new(x, y),
            vel: Vec2::ZERO,
        };
    }

    fn place_open_net(&mut self, attacker: PlayerId) {
        let k = self.config.k;
        let w = self.config.half_width;
        let l = self.config.half_length;
        let s = attacker.team.attack_sign();
        // Attacker between 15% and 60% of half_length in front of the net.
        let ax = self.rng.random_range(-0.6 * w..=0.6 * w);
        let depth = self.rng.random_range(0.15 * l..=0.6 * l);
        let apos = Vec2::new(ax, s * (l - depth));
        for slot in 0..2 * k {
            let id = PlayerId::from_slot(slot, k);
            if id == attacker {
                continue;
            }
            let x = self.rng.random_range(-w..=w);
            let u = self.rng.random_range(0.0..=1.0);
            // Everyone else stays at least 0.2 behind the attacker.
            let behind = -l + u * ((l - depth) - 0.2 - (-l)).max(0.0);
            self.state.players[slot] = PlayerState {
                pos: Vec2::new(x, s * behind),
                vel: Vec2::ZERO,
            };
        }
        self.state.players[attacker.slot(k)] = PlayerState {
            pos: apos,
            vel: Vec2::ZERO,
        };
        self.state.ball = BallState::Controlled { owner: attacker };
    }

    /// Advances one tick. `actions` maps players to their action; players not
    /// listed (or mapped to `None`) coast.
    pub fn step(&mut self, actions: &[(PlayerId, Option<Action>)]) -> Result<Vec<GameEvent>, SimError> {
        let k = self.config.k;
        let mut dense = vec![None; 2 * k];
        let mut seen = vec![false; 2 * k];
        for &(id, action) in actions {
            if id.index >= k {
                return Err(SimError::UnknownPlayer(id));
            }
            let slot = id.slot(k);
            if seen[slot] {
                return Err(SimError::InvalidArgument(format!("duplicate action for {id}")));
            }
            seen[slot] = true;
            dense[slot] = action;
        }
        let mut events = Vec::new();
        self.step_slots_into(&dense, &mut events)?;
        Ok(events)
    }

    /// Dense variant of [`Match::step`]: `actions[slot]` for every player.
    pub fn step_slots(&mut self, actions: &[Option<Action>]) -> Result<Vec<GameEvent>, SimError> {
        let mut events = Vec::new();
        self.step_slots_into(actions, &mut events)?;
        Ok(events)
    }

    /// Allocation-free stepping: events for this tick are appended to `events`.
    pub fn step_slots_into(
        &mut self,
        actions: &[Option<Action>],
        events: &mut Vec<GameEvent>,
    ) -> Result<(), SimError> {
        if self.is_finished() {
            return Err(SimError::Finished);
        }
        if actions.len() != 2 * self.config.k {
            return Err(SimError::InvalidArgument(format!(
                "expected {} actions, got {}",
                2 * self.config.k,
                actions.len()
            )));
        }
        self.actions.copy_from_slice(actions);
        self.state.tick += 1;
        let tick = self.state.tick;

        match self.state.phase {
            GamePhase::Faceoff { countdown } => {
                self.state.phase = if countdown <= 1 {
                    GamePhase::Play
                } else {
                    GamePhase::Faceoff {
                        countdown: countdown - 1,
                    }
                };
            }
            GamePhase::Play => self.play_tick(tick, events),
            GamePhase::Finished { .. } => unreachable!(),
        }

        if tick >= self.config.episode_length {
            self.state.phase = GamePhase::Finished {
                reason: EndReason::Timeout,
            };
            events.push(GameEvent::new(
                tick,
                EventKind::EpisodeEnded {
                    reason: EndReason::Timeout,
                },
            ));
        }
        Ok(())
    }

    fn play_tick(&mut self, tick: u64, events: &mut Vec<GameEvent>) {
        let k = self.config.k;

        // (1) movement
        for slot in 0..2 * k {
            let team = PlayerId::from_slot(slot, k).team;
            self.state.players[slot] =
                integrate_player(&self.config, team, self.state.players[slot], self.actions[slot]);
        }

        // (2) carrier's ball action
        if let BallState::Controlled { owner } = self.state.ball {
            match self.actions[owner.slot(k)] {
                Some(Action::Pass) => {
                    if let Some(target) = pass_target(&self.state, owner) {
                        let from = self.state.player(owner).pos;
                        let to = self.state.player(target).pos;
                        let vel = (to - from).normalized().unwrap_or(Vec2::ZERO) * self.config.pass_speed;
                        self.state.ball = BallState::InFlight {
                            pos: from,
                            vel,
                            flight: Flight::Pass { from: owner, target },
                        };
                        events.push(GameEvent::new(
                            tick,
                            EventKind::PossessionLost {
                                player: owner,
                                to: Exchange::OwnTeamPass,
                            },
                        ));
                    }
                }
                Some(Action::Shoot) => {
                    let from = self.state.player(owner).pos;
                    let s = owner.team.attack_sign();
                    let goal = Vec2::new(0.0, s * self.config.half_length);
                    let dir = (goal - from).normalized().unwrap_or(Vec2::new(0.0, s));
                    self.state.ball = BallState::InFlight {
                        pos: from,
                        vel: dir * self.config.shot_speed,
                        flight: Flight::Shot { shooter: owner },
                    };
                    events.push(GameEvent::new(tick, EventKind::ShotTaken { shooter: owner }));
                    events.push(GameEvent::new(
                        tick,
                        EventKind::PossessionLost {
                            player: owner,
                            to: Exchange::Loose,
                        },
                    ));
                }
                _ => {}
            }
        }

        // (3) ball flight
        let mut goal_by = None;
        let mut changed_hands = false;
        match self.state.ball {
            BallState::InFlight {
                pos,
                vel,
                flight: Flight::Shot { shooter },
            } => match self.advance_shot(pos, vel, shooter) {
                ShotOutcome::Blocked(blocker) => {
                    self.state.ball = BallState::Controlled { owner: blocker };
                    changed_hands = true;
                    events.push(GameEvent::new(tick, EventKind::ShotBlocked { shooter, blocker }));
                    events.push(GameEvent::new(
                        tick,
                        EventKind::PossessionGained {
                            player: blocker,
                            prior: Exchange::OpponentTeam,
                        },
                    ));
                }
                ShotOutcome::Goal => goal_by = Some(shooter),
                ShotOutcome::Missed { pos, vel } => {
                    self.state.ball = BallState::Loose { pos, vel };
                    events.push(GameEvent::new(tick, EventKind::ShotMissed { shooter }));
                }
                ShotOutcome::Flying { pos } => {
                    self.state.ball = BallState::InFlight {
                        pos,
                        vel,
                        flight: Flight::Shot { shooter },
                    };
                }
            },
            BallState::InFlight {
                pos,
                flight: Flight::Pass { from, target },
                ..
            } => match self.advance_pass(pos, from, target) {
                PassOutcome::Intercepted(by) => {
                    self.state.ball = BallState::Controlled { owner: by };
                    changed_hands = true;
                    events.push(GameEvent::new(tick, EventKind::PassIntercepted { from, by }));
                    events.push(GameEvent::new(
                        tick,
                        EventKind::PossessionGained {
                            player: by,
                            prior: Exchange::OpponentTeam,
                        },
                    ));
                }
                PassOutcome::Completed => {
                    self.state.ball = BallState::Controlled { owner: target };
                    changed_hands = true;
                    events.push(GameEvent::new(tick, EventKind::PassCompleted { from, to: target }));
                    events.push(GameEvent::new(
                        tick,
                        EventKind::PossessionGained {
                            player: target,
                            prior: Exchange::OwnTeamPass,
                        },
                    ));
                }
                PassOutcome::Flying { pos, vel } => {
                    self.state.ball = BallState::InFlight {
                        pos,
                        vel,
                        flight: Flight::Pass { from, target },
                    };
                }
            },
            BallState::Loose { pos, vel } => {
                let (pos, vel) = self.roll_loose(pos, vel);
                self.state.ball = BallState::Loose { pos, vel };
            }
            BallState::Controlled { .. } => {}
        }

        // (4) possession contest
        match self.state.ball {
            BallState::Loose { pos, .. } => {
                if let Some(claimer) = self.nearest_within(pos, self.config.pickup_radius) {
                    self.state.ball = BallState::Controlled { owner: claimer };
                    events.push(GameEvent::new(
                        tick,
                        EventKind::PossessionGained {
                            player: claimer,
                            prior: Exchange::Loose,
                        },
                    ));
                }
            }
            BallState::Controlled { owner } if !changed_hands => {
                if let Some(thief) = self.try_steal(owner) {
                    self.state.ball = BallState::Controlled { owner: thief };
                    events.push(GameEvent::new(
                        tick,
                        EventKind::PossessionLost {
                            player: owner,
                            to: Exchange::OpponentTeam,
                        },
                    ));
                    events.push(GameEvent::new(
                        tick,
                        EventKind::PossessionGained {
                            player: thief,
                            prior: Exchange::OpponentTeam,
                        },
                    ));
                }
            }
            _ => {}
        }

        // (5) scoring
        if let Some(scorer) = goal_by {
            self.state.score.bump(scorer.team);
            events.push(GameEvent::new(tick, EventKind::Goal { scorer }));
            self.place_faceoff(Some(scorer.team.opponent()));
            self.state.phase = self.faceoff_phase();
        }
    }

    fn advance_shot(&self, p0: Vec2, vel: Vec2, shooter: PlayerId) -> ShotOutcome {
        let w = self.config.half_width;
        let l = self.config.half_length;
        let s = shooter.team.attack_sign();
        let p1 = p0 + vel;

        let mut end = p1;
        let mut crosses_line = false;
        if s * p1.y >= l {
            crosses_line = true;
            let dy = p1.y - p0.y;
            let t = if dy != 0.0 { ((s * l - p0.y) / dy).clamp(0.0, 1.0) } else { 0.0 };
            end = p0 + (p1 - p0) * t;
            end.y = s * l;
        }
        let mut hits_wall = false;
        if end.x.abs() > w {
            hits_wall = true;
            crosses_line = false;
            let wall = w.copysign(end.x);
            let t = ((wall - p0.x) / (end.x - p0.x)).clamp(0.0, 1.0);
            end = p0 + (end - p0) * t;
            end.x = wall;
        }

        if let Some(blocker) = self.first_on_segment(p0, end, shooter.team.opponent()) {
            return ShotOutcome::Blocked(blocker);
        }
        let decay = 1.0 - self.config.friction_coeff;
        if crosses_line {
            if end.x.abs() <= 0.5 * self.config.goal_mouth_width {
                ShotOutcome::Goal
            } else {
                ShotOutcome::Missed {
                    pos: end,
                    vel: Vec2::new(vel.x, -vel.y) * decay,
                }
            }
        } else if hits_wall {
            ShotOutcome::Missed {
                pos: end,
                vel: Vec2::new(-vel.x, vel.y) * decay,
            }
        } else {
            ShotOutcome::Flying { pos: p1 }
        }
    }

    fn advance_pass(&self, p0: Vec2, from: PlayerId, target: PlayerId) -> PassOutcome {
        let q = self.state.player(target).pos;
        let to_target = q - p0;
        let dist = to_target.norm();
        let p1 = if dist <= self.config.pass_speed {
            q
        } else {
            p0 + to_target * (self.config.pass_speed / dist)
        };
        if let Some(by) = self.first_on_segment(p0, p1, from.team.opponent()) {
            return PassOutcome::Intercepted(by);
        }
        if p1.distance(q) <= self.config.pickup_radius {
            PassOutcome::Completed
        } else {
            PassOutcome::Flying { pos: p1, vel: p1 - p0 }
        }
    }

    /// Player of `team` within `block_radius` of the segment that the ball
    /// reaches first (ties: closer to the segment, then claim order).
    fn first_on_segment(&self, a: Vec2, b: Vec2, team: TeamId) -> Option<PlayerId> {
        let r = self.config.block_radius;
        self.state
            .team_ids(team)
            .filter_map(|id| {
                let (d, t) = segment_distance(a, b, self.state.player(id).pos);
                (d <= r).then_some((t, d, id))
            })
            .min_by(|x, y| {
                x.0.total_cmp(&y.0)
                    .then(x.1.total_cmp(&y.1))
                    .then(x.2.claim_key().cmp(&y.2.claim_key()))
            })
            .map(|(_, _, id)| id)
    }

    fn roll_loose(&self, pos: Vec2, vel: Vec2) -> (Vec2, Vec2) {
        let w = self.config.half_width;
        let l = self.config.half_length;
        let mut p = pos + vel;
        let mut v = vel * (1.0 - self.config.friction_coeff);
        if p.x.abs() > w {
            p.x = w.copysign(p.x);
            v.x = -v.x;
        }
        if p.y.abs() > l {
            p.y = l.copysign(p.y);
            v.y = -v.y;
        }
        (p, v)
    }

    fn nearest_within(&self, point: Vec2, radius: f64) -> Option<PlayerId> {
        self.state
            .ids()
            .filter_map(|id| {
                let d = self.state.player(id).pos.distance(point);
                (d <= radius).then_some((d, id))
            })
            .min_by(|a, b| claim_order(*a, *b))
            .map(|(_, id)| id)
    }

    fn try_steal(&mut self, carrier: PlayerId) -> Option<PlayerId> {
        let cpos = self.state.player(carrier).pos;
        let p = self.config.steal_probability_per_tick;
        let r = self.config.steal_radius;
        let k = self.config.k;
        for i in 0..k {
            let id = PlayerId::new(carrier.team.opponent(), i);
            if self.state.player(id).pos.distance(cpos) <= r {
                let u: f64 = self.rng.random();
                if u < p {
                    return Some(id);
                }
            }
        }
        None
    }
}

enum ShotOutcome {
    Blocked(PlayerId),
    Goal,
    Missed { pos: Vec2, vel: Vec2 },
    Flying { pos: Vec2 },
}

enum PassOutcome {
    Intercepted(PlayerId),
    Completed,
    Flying { pos: Vec2, vel: Vec2 },
}

fn claim_order(a: (f64, PlayerId), b: (f64, PlayerId)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.claim_key().cmp(&b.1.claim_key()))
}

/// One tick of player kinematics: acceleration along the action's axis, then
/// friction, then the speed cap, then position update and wall clamp.
pub fn integrate_player(config: &GameConfig, team: TeamId, player: PlayerState, action: Option<Action>) -> PlayerState {
    let mut vel = player.vel;
    if let Some(dir) = action.and_then(|a| a.direction(team)) {
        vel += dir * config.accel_per_tick;
    }
    vel = vel * (1.0 - config.friction_coeff);
    let speed = vel.norm();
    if speed > config.max_speed {
        vel = vel * (config.max_speed / speed);
    }
    let mut pos = player.pos + vel;
    let w = config.half_width;
    let l = config.half_length;
    if pos.x.abs() > w {
        pos.x = w.copysign(pos.x);
        vel.x = 0.0;
    }
    if pos.y.abs() > l {
        pos.y = l.copysign(pos.y);
        vel.y = 0.0;
    }
    PlayerState { pos, vel }
}

/// Teammate a pass from `carrier` goes to: the nearest one, lowest index on
/// ties. `None` when the carrier has no teammates.
pub fn pass_target(state: &GameState, carrier: PlayerId) -> Option<PlayerId> {
    let from = state.player(carrier).pos;
    state
        .team_ids(carrier.team)
        .filter(|&id| id != carrier)
        .map(|id| (state.player(id).pos.distance(from), id))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.index.cmp(&b.1.index)))
        .map(|(_, id)| id)
}

/// The possession bit: the controlling player, if any. In-flight and loose
/// balls are possessionless.
pub fn possession_indicator(state: &GameState) -> Option<PlayerId> {
    state.ball.owner()
}
