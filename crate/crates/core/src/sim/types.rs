use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// A point or displacement in arena units.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    /// Unit vector in the same direction, or `None` for the zero vector.
    pub fn normalized(self) -> Option<Vec2> {
        let n = self.norm();
        (n > 0.0).then(|| Vec2::new(self.x / n, self.y / n))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Reflection across the x axis (y negated).
    pub fn mirror_y(self) -> Vec2 {
        Vec2::new(self.x, -self.y)
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, rhs: Vec2) {
        self.x += rhs.x;
        self.y += rhs.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x * rhs, self.y * rhs)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Distance from `p` to the segment `a..b`, together with the segment
/// parameter `t ∈ [0, 1]` of the closest point.
pub fn segment_distance(a: Vec2, b: Vec2, p: Vec2) -> (f64, f64) {
    let ab = b - a;
    let len_sq = ab.norm_sq();
    let t = if len_sq > 0.0 {
        ((p - a).dot(ab) / len_sq).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let closest = a + ab * t;
    (p.distance(closest), t)
}

/// Home attacks the +y goal, Away attacks the −y goal, for the whole match.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TeamId {
    Home,
    Away,
}

impl TeamId {
    pub const BOTH: [TeamId; 2] = [TeamId::Home, TeamId::Away];

    /// +1 for Home, −1 for Away: the sign of the y axis this team attacks.
    pub fn attack_sign(self) -> f64 {
        match self {
            TeamId::Home => 1.0,
            TeamId::Away => -1.0,
        }
    }

    pub fn opponent(self) -> TeamId {
        match self {
            TeamId::Home => TeamId::Away,
            TeamId::Away => TeamId::Home,
        }
    }

    pub(crate) fn ordinal(self) -> usize {
        match self {
            TeamId::Home => 0,
            TeamId::Away => 1,
        }
    }
}

impl fmt::Display for TeamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TeamId::Home => f.write_str("Home"),
            TeamId::Away => f.write_str("Away"),
        }
    }
}

/// A player seat. Derived ordering is Home before Away, then by index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PlayerId {
    pub team: TeamId,
    pub index: usize,
}

impl PlayerId {
    pub const fn new(team: TeamId, index: usize) -> Self {
        Self { team, index }
    }

    pub const fn home(index: usize) -> Self {
        Self::new(TeamId::Home, index)
    }

    pub const fn away(index: usize) -> Self {
        Self::new(TeamId::Away, index)
    }

    /// Dense slot in `0..2k`: Home players first.
    pub fn slot(self, k: usize) -> usize {
        self.team.ordinal() * k + self.index
    }

    pub fn from_slot(slot: usize, k: usize) -> Self {
        if slot < k {
            Self::home(slot)
        } else {
            Self::away(slot - k)
        }
    }

    /// Same seat on the other team.
    pub fn mirrored(self) -> Self {
        Self::new(self.team.opponent(), self.index)
    }

    /// Tie-break key for contested loose balls: lowest index first, then Home
    /// before Away.
    pub(crate) fn claim_key(self) -> (usize, usize) {
        (self.index, self.team.ordinal())
    }
}

impl fmt::Display for PlayerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.team, self.index)
    }
}

/// Parses `home0`, `Home#0`, `away1`, ...
impl FromStr for PlayerId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        let (team, rest) = if let Some(rest) = lower.strip_prefix("home") {
            (TeamId::Home, rest)
        } else if let Some(rest) = lower.strip_prefix("away") {
            (TeamId::Away, rest)
        } else {
            return Err(format!("player id must start with home/away: {s:?}"));
        };
        let index = rest
            .trim_start_matches('#')
            .parse::<usize>()
            .map_err(|_| format!("bad player index in {s:?}"))?;
        Ok(PlayerId::new(team, index))
    }
}

/// The discrete per-tick action alphabet. One action per player per tick;
/// combinations are not representable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    Left,
    Right,
    Forward,
    Backward,
    Pass,
    Shoot,
}

impl Action {
    pub const COUNT: usize = 6;
    pub const ALL: [Action; 6] = [
        Action::Left,
        Action::Right,
        Action::Forward,
        Action::Backward,
        Action::Pass,
        Action::Shoot,
    ];
    pub const MOVES: [Action; 4] = [Action::Forward, Action::Backward, Action::Left, Action::Right];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Action> {
        Self::ALL.get(index).copied()
    }

    pub fn is_movement(self) -> bool {
        !matches!(self, Action::Pass | Action::Shoot)
    }

    /// Unit world-frame direction of a movement action for a team.
    ///
    /// Forward/Backward follow the team's attack direction. Left/Right are the
    /// lateral axis and are the same world direction for both teams, so the
    /// frame is a reflection (not a rotation) of the attacker's view; this keeps
    /// the whole game symmetric under y-mirroring.
    pub fn direction(self, team: TeamId) -> Option<Vec2> {
        let s = team.attack_sign();
        match self {
            Action::Forward => Some(Vec2::new(0.0, s)),
            Action::Backward => Some(Vec2::new(0.0, -s)),
            Action::Left => Some(Vec2::new(-1.0, 0.0)),
            Action::Right => Some(Vec2::new(1.0, 0.0)),
            Action::Pass | Action::Shoot => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::Left => "Left",
            Action::Right => "Right",
            Action::Forward => "Forward",
            Action::Backward => "Backward",
            Action::Pass => "Pass",
            Action::Shoot => "Shoot",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Action {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Action::ALL
            .iter()
            .copied()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown action {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlayerState {
    pub pos: Vec2,
    pub vel: Vec2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Flight {
    Pass { from: PlayerId, target: PlayerId },
    Shot { shooter: PlayerId },
}

impl Flight {
    pub fn origin(self) -> PlayerId {
        match self {
            Flight::Pass { from, .. } => from,
            Flight::Shot { shooter } => shooter,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum BallState {
    Controlled { owner: PlayerId },
    InFlight { pos: Vec2, vel: Vec2, flight: Flight },
    Loose { pos: Vec2, vel: Vec2 },
}

impl BallState {
    pub fn owner(&self) -> Option<PlayerId> {
        match *self {
            BallState::Controlled { owner } => Some(owner),
            _ => None,
        }
    }

    pub fn is_loose(&self) -> bool {
        matches!(self, BallState::Loose { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndReason {
    Timeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "phase", rename_all = "snake_case")]
pub enum GamePhase {
    /// Players hold their spots for `countdown` more ticks.
    Faceoff { countdown: u32 },
    Play,
    Finished { reason: EndReason },
}

impl GamePhase {
    pub fn name(&self) -> &'static str {
        match self {
            GamePhase::Faceoff { .. } => "faceoff",
            GamePhase::Play => "play",
            GamePhase::Finished { .. } => "finished",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Score {
    pub home: u32,
    pub away: u32,
}

impl Score {
    pub fn of(&self, team: TeamId) -> u32 {
        match team {
            TeamId::Home => self.home,
            TeamId::Away => self.away,
        }
    }

    pub(crate) fn bump(&mut self, team: TeamId) {
        match team {
            TeamId::Home => self.home += 1,
            TeamId::Away => self.away += 1,
        }
    }
}

/// Full simulation snapshot. `players` is indexed by [`PlayerId::slot`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameState {
    pub tick: u64,
    pub players: Vec<PlayerState>,
    pub ball: BallState,
    pub score: Score,
    pub phase: GamePhase,
}

impl GameState {
    pub fn players_per_team(&self) -> usize {
        self.players.len() / 2
    }

    pub fn player(&self, id: PlayerId) -> &PlayerState {
        &self.players[id.slot(self.players_per_team())]
    }

    pub fn ids(&self) -> impl Iterator<Item = PlayerId> + '_ {
        let k = self.players_per_team();
        (0..2 * k).map(move |s| PlayerId::from_slot(s, k))
    }

    pub fn team_ids(&self, team: TeamId) -> impl Iterator<Item = PlayerId> {
        (0..self.players_per_team()).map(move |i| PlayerId::new(team, i))
    }

    pub fn contains(&self, id: PlayerId) -> bool {
        id.index < self.players_per_team()
    }

    /// Ball position; a controlled ball sits on its owner.
    pub fn ball_pos(&self) -> Vec2 {
        match self.ball {
            BallState::Controlled { owner } => self.player(owner).pos,
            BallState::InFlight { pos, .. } | BallState::Loose { pos, .. } => pos,
        }
    }

    /// The y-mirrored state: every player swaps team (same index), all y
    /// coordinates are negated and the score is swapped.
    pub fn mirrored(&self) -> GameState {
        let k = self.players_per_team();
        let mut players = vec![PlayerState::default(); 2 * k];
        for id in self.ids() {
            let p = self.player(id);
            players[id.mirrored().slot(k)] = PlayerState {
                pos: p.pos.mirror_y(),
                vel: p.vel.mirror_y(),
            };
        }
        let ball = match self.ball {
            BallState::Controlled { owner } => BallState::Controlled { owner: owner.mirrored() },
            BallState::Loose { pos, vel } => BallState::Loose {
                pos: pos.mirror_y(),
                vel: vel.mirror_y(),
            },
            BallState::InFlight { pos, vel, flight } => BallState::InFlight {
                pos: pos.mirror_y(),
                vel: vel.mirror_y(),
                flight: match flight {
                    Flight::Pass { from, target } => Flight::Pass {
                        from: from.mirrored(),
                        target: target.mirrored(),
                    },
                    Flight::Shot { shooter } => Flight::Shot { shooter: shooter.mirrored() },
                },
            },
        };
        GameState {
            tick: self.tick,
            players,
            ball,
            score: Score {
                home: self.score.away,
                away: self.score.home,
            },
            phase: self.phase,
        }
    }
}

/// Who the ball came from (on gain) or went to (on loss).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exchange {
    OpponentTeam,
    OwnTeamPass,
    Loose,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventKind {
    Goal { scorer: PlayerId },
    PossessionGained { player: PlayerId, prior: Exchange },
    PossessionLost { player: PlayerId, to: Exchange },
    ShotTaken { shooter: PlayerId },
    ShotBlocked { shooter: PlayerId, blocker: PlayerId },
    ShotMissed { shooter: PlayerId },
    PassCompleted { from: PlayerId, to: PlayerId },
    PassIntercepted { from: PlayerId, by: PlayerId },
    EpisodeEnded { reason: EndReason },
}

/// A game event stamped with the tick that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameEvent {
    pub tick: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

impl GameEvent {
    pub fn new(tick: u64, kind: EventKind) -> Self {
        Self { tick, kind }
    }
}
