//! Greedy evaluation and cross-play.
//!
//! Episode `i` of an evaluation runs in a fresh match seeded with
//! `derive_seed(seed, i)`, so episodes are independent of each other and of
//! scheduling. They run in parallel and are merged in episode order.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sts2::replay::{ReplayHeader, ReplayLog, TickRecord};
use sts2::sim::{GameConfig, Match, PlayerId, TeamId};

use crate::checkpoint::Checkpoint;
use crate::derive_seed;
use crate::error::{HarnessError, Result};
use crate::slots::{Control, Lineup, SlotAssignment, SlotSpec};
use crate::stats::MatchStats;

#[derive(Debug, Clone, Default)]
pub struct EvalOutcome {
    pub stats: MatchStats,
    /// One log per episode when recording was requested.
    pub replays: Vec<ReplayLog>,
}

/// Loads checkpoints from disk; the default loader for [`Lineup::resolve`].
pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path).map_err(|e| match e {
        crate::checkpoint::CheckpointError::Io(source) => HarnessError::io(path, source),
        other => HarnessError::Checkpoint(other),
    })
}

/// Plays one episode with every slot driven by `lineup`.
pub fn play_episode(game: &GameConfig, lineup: &Lineup, record: bool) -> Result<(MatchStats, Option<ReplayLog>)> {
    let mut m = Match::new(game.clone())?;
    let mut stats = MatchStats::new(game.k);
    let mut ticks = Vec::new();
    let mut actions = vec![None; 2 * game.k];
    let mut events = Vec::new();
    let mut obs = Vec::new();
    while !m.is_finished() {
        actions.iter_mut().for_each(|a| *a = None);
        lineup.fill(m.state(), game, &mut obs, &mut actions);
        events.clear();
        m.step_slots_into(&actions, &mut events)?;
        stats.record_tick(m.state(), &events);
        if record {
            ticks.push(TickRecord::capture(m.state(), &events, &actions));
        }
    }
    stats.end_episode(m.state());
    let log = record.then(|| ReplayLog {
        header: ReplayHeader::new(game),
        ticks,
    });
    Ok((stats, log))
}

/// Runs `episodes` greedy episodes of an already-resolved lineup.
pub fn evaluate_lineup(
    game: &GameConfig,
    lineup: &Lineup,
    episodes: usize,
    seed: u64,
    record: bool,
) -> Result<EvalOutcome> {
    if episodes == 0 {
        return Err(HarnessError::Config("evaluation needs at least one episode".into()));
    }
    if let Some(c) = lineup
        .controllers
        .iter()
        .find(|c| matches!(c.control, Control::Learner | Control::Human))
    {
        return Err(HarnessError::Config(format!(
            "slot {} has no policy to evaluate",
            crate::slots::SlotKey(c.slots[0])
        )));
    }
    let results: Vec<_> = (0..episodes)
        .into_par_iter()
        .map(|i| {
            let game = GameConfig {
                seed: derive_seed(seed, i as u64),
                ..game.clone()
            };
            play_episode(&game, lineup, record)
        })
        .collect();
    let mut out = EvalOutcome {
        stats: MatchStats::new(game.k),
        replays: Vec::new(),
    };
    for r in results {
        let (stats, log) = r?;
        out.stats.merge(&stats);
        out.replays.extend(log);
    }
    Ok(out)
}

/// Evaluates a slot assignment with no learner or human slots.
pub fn evaluate(game: &GameConfig, slots: &SlotAssignment, episodes: usize, seed: u64) -> Result<MatchStats> {
    let lineup = Lineup::resolve(slots, game, load_checkpoint)?;
    Ok(evaluate_lineup(game, &lineup, episodes, seed, false)?.stats)
}

/// Controllers for the `k` seats of one team, index order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Team(pub Vec<SlotSpec>);

impl Team {
    /// Every seat played by the policy in one checkpoint (joint or shared).
    pub fn single(path: impl Into<PathBuf>, k: usize) -> Self {
        let path = path.into();
        Self((0..k).map(|_| SlotSpec::frozen(path.clone())).collect())
    }

    /// One checkpoint per seat.
    pub fn of_checkpoints(paths: impl IntoIterator<Item = PathBuf>) -> Self {
        Self(paths.into_iter().map(SlotSpec::frozen).collect())
    }

    fn place(&self, team: TeamId, slots: SlotAssignment) -> SlotAssignment {
        self.0
            .iter()
            .enumerate()
            .fold(slots, |s, (i, spec)| s.with(PlayerId::new(team, i), spec.clone()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossplayOutcome {
    /// Team A at home.
    pub a_home: MatchStats,
    /// Team A away, relabelled so team A reads as Home.
    pub a_away: MatchStats,
    /// Both halves, team A as Home.
    pub combined: MatchStats,
}

impl CrossplayOutcome {
    pub fn a_score_rate(&self) -> Option<f64> {
        self.combined.team_score_rate(TeamId::Home)
    }
}

/// Team A against team B over `episodes` episodes: the first half with A at
/// home, the rest with ends swapped.
pub fn crossplay(game: &GameConfig, a: &Team, b: &Team, episodes: usize, seed: u64) -> Result<CrossplayOutcome> {
    if episodes < 2 {
        return Err(HarnessError::Config("cross-play needs at least two episodes".into()));
    }
    for team in [a, b] {
        if team.0.len() != game.k {
            return Err(HarnessError::Incompatible(format!(
                "team has {} seats, match is {}-a-side",
                team.0.len(),
                game.k
            )));
        }
    }
    let home_first = b.place(TeamId::Away, a.place(TeamId::Home, SlotAssignment::new()));
    let away_first = a.place(TeamId::Away, b.place(TeamId::Home, SlotAssignment::new()));
    let half = episodes / 2;
    let a_home = evaluate(game, &home_first, half, derive_seed(seed, 0))?;
    let a_away = evaluate(game, &away_first, episodes - half, derive_seed(seed, 1))?.swapped();
    let mut combined = a_home.clone();
    combined.merge(&a_away);
    Ok(CrossplayOutcome {
        a_home,
        a_away,
        combined,
    })
}
