//! Per-player match statistics in the score-rate / possession table format.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sts2::replay::ReplayLog;
use sts2::sim::{EventKind, GameEvent, GameState, PlayerId, TeamId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PlayerTally {
    pub goals: u64,
    /// Ticks this player controlled the ball.
    pub possession_ticks: u64,
    /// Subset of `possession_ticks` spent in the player's own half.
    pub own_half_possession_ticks: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MatchStats {
    #[serde(with = "by_slot")]
    pub players: BTreeMap<PlayerId, PlayerTally>,
    pub episodes: u64,
    pub home_wins: u64,
    pub away_wins: u64,
    pub draws: u64,
    /// Episodes that reached the time limit at 0-0.
    pub scoreless: u64,
}

/// Row of the summary table: one player's shares in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlayerRow {
    pub player: PlayerId,
    pub goals: u64,
    pub score_rate: f64,
    pub possession: f64,
}

fn percent(part: u64, total: u64) -> Option<f64> {
    (total > 0).then(|| 100.0 * part as f64 / total as f64)
}

impl MatchStats {
    /// Empty tally for a `k`-a-side match.
    pub fn new(k: usize) -> Self {
        let players = TeamId::BOTH
            .into_iter()
            .flat_map(|t| (0..k).map(move |i| (PlayerId::new(t, i), PlayerTally::default())))
            .collect();
        Self {
            players,
            ..Self::default()
        }
    }

    /// Counts one simulated tick: goals among `events` and the owner of the
    /// ball in the post-step `state`.
    pub fn record_tick(&mut self, state: &GameState, events: &[GameEvent]) {
        for e in events {
            if let EventKind::Goal { scorer } = e.kind {
                self.players.entry(scorer).or_default().goals += 1;
            }
        }
        if let Some(owner) = state.ball.owner() {
            let tally = self.players.entry(owner).or_default();
            tally.possession_ticks += 1;
            if state.player(owner).pos.y * owner.team.attack_sign() < 0.0 {
                tally.own_half_possession_ticks += 1;
            }
        }
    }

    /// Closes an episode given its final state.
    pub fn end_episode(&mut self, final_state: &GameState) {
        self.episodes += 1;
        let s = final_state.score;
        match s.home.cmp(&s.away) {
            std::cmp::Ordering::Greater => self.home_wins += 1,
            std::cmp::Ordering::Less => self.away_wins += 1,
            std::cmp::Ordering::Equal => {
                self.draws += 1;
                if s.home == 0 {
                    self.scoreless += 1;
                }
            }
        }
    }

    pub fn merge(&mut self, other: &MatchStats) {
        for (id, t) in &other.players {
            let mine = self.players.entry(*id).or_default();
            mine.goals += t.goals;
            mine.possession_ticks += t.possession_ticks;
            mine.own_half_possession_ticks += t.own_half_possession_ticks;
        }
        self.episodes += other.episodes;
        self.home_wins += other.home_wins;
        self.away_wins += other.away_wins;
        self.draws += other.draws;
        self.scoreless += other.scoreless;
    }

    pub fn total_goals(&self) -> u64 {
        self.players.values().map(|t| t.goals).sum()
    }

    pub fn total_possession(&self) -> u64 {
        self.players.values().map(|t| t.possession_ticks).sum()
    }

    pub fn tally(&self, id: PlayerId) -> PlayerTally {
        self.players.get(&id).copied().unwrap_or_default()
    }

    /// Share of all goals scored by `id`, in percent. `None` without goals.
    pub fn score_rate(&self, id: PlayerId) -> Option<f64> {
        percent(self.tally(id).goals, self.total_goals())
    }

    /// Share of all possessed ticks held by `id`, in percent.
    pub fn possession_share(&self, id: PlayerId) -> Option<f64> {
        percent(self.tally(id).possession_ticks, self.total_possession())
    }

    pub fn team_goals(&self, team: TeamId) -> u64 {
        self.players.iter().filter(|(id, _)| id.team == team).map(|(_, t)| t.goals).sum()
    }

    pub fn team_score_rate(&self, team: TeamId) -> Option<f64> {
        percent(self.team_goals(team), self.total_goals())
    }

    pub fn team_possession_share(&self, team: TeamId) -> Option<f64> {
        let mine = self
            .players
            .iter()
            .filter(|(id, _)| id.team == team)
            .map(|(_, t)| t.possession_ticks)
            .sum();
        percent(mine, self.total_possession())
    }

    /// Fraction in percent of `id`'s possession spent in its own half.
    pub fn own_half_share(&self, id: PlayerId) -> Option<f64> {
        let t = self.tally(id);
        percent(t.own_half_possession_ticks, t.possession_ticks)
    }

    pub fn scoreless_share(&self) -> Option<f64> {
        percent(self.scoreless, self.episodes)
    }

    /// Table rows; missing shares (no goals, no possession) print as 0.
    pub fn rows(&self) -> Vec<PlayerRow> {
        self.players
            .iter()
            .map(|(&player, t)| PlayerRow {
                player,
                goals: t.goals,
                score_rate: self.score_rate(player).unwrap_or(0.0),
                possession: self.possession_share(player).unwrap_or(0.0),
            })
            .collect()
    }

    /// Same statistics with every player moved to the other team, used to
    /// fold end-swapped cross-play halves together.
    pub fn swapped(&self) -> Self {
        Self {
            players: self.players.iter().map(|(id, t)| (id.mirrored(), *t)).collect(),
            episodes: self.episodes,
            home_wins: self.away_wins,
            away_wins: self.home_wins,
            draws: self.draws,
            scoreless: self.scoreless,
        }
    }

    /// Recounts statistics from replay logs alone, reading the recorded
    /// frames rather than re-simulating.
    pub fn from_replays<'a>(logs: impl IntoIterator<Item = &'a ReplayLog>) -> Self {
        let mut out = Self::default();
        for log in logs {
            for id in (0..log.header.config.k).flat_map(|i| [PlayerId::home(i), PlayerId::away(i)]) {
                out.players.entry(id).or_default();
            }
            for tick in &log.ticks {
                for e in &tick.events {
                    if let EventKind::Goal { scorer } = e.kind {
                        out.players.entry(scorer).or_default().goals += 1;
                    }
                }
                for frame in tick.players.iter().filter(|f| f.has_ball) {
                    let id = frame.id();
                    let t = out.players.entry(id).or_default();
                    t.possession_ticks += 1;
                    let own_half = match frame.team {
                        TeamId::Home => frame.y < 0.0,
                        TeamId::Away => frame.y > 0.0,
                    };
                    if own_half {
                        t.own_half_possession_ticks += 1;
                    }
                }
            }
            out.episodes += 1;
            let score = log.ticks.last().map(|t| t.score).unwrap_or_default();
            if score.home > score.away {
                out.home_wins += 1;
            } else if score.away > score.home {
                out.away_wins += 1;
            } else {
                out.draws += 1;
                if score.home == 0 {
                    out.scoreless += 1;
                }
            }
        }
        out
    }

    /// Plain-text table: one line per player plus a summary line.
    pub fn table(&self) -> String {
        let mut s = format!("{:<8} {:>6} {:>11} {:>11}\n", "player", "goals", "score rate", "possession");
        for r in self.rows() {
            s += &format!(
                "{:<8} {:>6} {:>10.1}% {:>10.1}%\n",
                r.player.to_string(),
                r.goals,
                r.score_rate,
                r.possession
            );
        }
        s += &format!(
            "{} episodes: home {} / away {} / draw {} ({} scoreless)\n",
            self.episodes, self.home_wins, self.away_wins, self.draws, self.scoreless
        );
        s
    }
}

/// Player-keyed maps serialize with `home0`-style string keys.
pub(crate) mod by_slot {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use sts2::sim::PlayerId;

    use crate::slots::SlotKey;

    pub fn serialize<V: Serialize, S: Serializer>(map: &BTreeMap<PlayerId, V>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_map(map.iter().map(|(k, v)| (SlotKey(*k), v)))
    }

    pub fn deserialize<'de, V: Deserialize<'de>, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<PlayerId, V>, D::Error> {
        let raw = BTreeMap::<SlotKey, V>::deserialize(d)?;
        Ok(raw.into_iter().map(|(k, v)| (k.0, v)).collect())
    }
}
