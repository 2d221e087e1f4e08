//! Newline-delimited JSON replay logs.
//!
//! A log is a header line followed by one line per simulated tick:
//!
//! ```text
//! {"type":"header","version":1,"seed":7,"config":{...},"config_hash":"..."}
//! {"type":"tick","tick":1,"players":[...],"ball":{...},"score":{...},"phase":{...},"events":[...],"actions":[...]}
//! ```
//!
//! The header carries everything needed to rebuild the match, so running the
//! recorded actions through a fresh [`Match`] regenerates the log byte for
//! byte; [`verify`] does exactly that.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::{Action, BallState, GameConfig, GameEvent, GamePhase, GameState, Match, PlayerId, Score, SimError, TeamId};

pub const REPLAY_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayHeader {
    pub version: u32,
    pub seed: u64,
    pub config: GameConfig,
    pub config_hash: String,
}

impl ReplayHeader {
    pub fn new(config: &GameConfig) -> Self {
        Self {
            version: REPLAY_VERSION,
            seed: config.seed,
            config: config.clone(),
            config_hash: config.hash_hex(),
        }
    }
}

/// One player's position, velocity and possession flag, flattened for the
/// wire.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlayerFrame {
    pub team: TeamId,
    pub index: usize,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub has_ball: bool,
}

impl PlayerFrame {
    pub fn all(state: &GameState) -> Vec<PlayerFrame> {
        let owner = state.ball.owner();
        state
            .ids()
            .map(|id| {
                let p = state.player(id);
                PlayerFrame {
                    team: id.team,
                    index: id.index,
                    x: p.pos.x,
                    y: p.pos.y,
                    vx: p.vel.x,
                    vy: p.vel.y,
                    has_ball: owner == Some(id),
                }
            })
            .collect()
    }

    pub fn id(&self) -> PlayerId {
        PlayerId::new(self.team, self.index)
    }
}

/// The post-step state of one tick, the events it produced and the actions
/// that drove it (in slot order; `null` = coast).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub tick: u64,
    pub players: Vec<PlayerFrame>,
    pub ball: BallState,
    pub score: Score,
    pub phase: GamePhase,
    pub events: Vec<GameEvent>,
    pub actions: Vec<Option<Action>>,
}

impl TickRecord {
    pub fn capture(state: &GameState, events: &[GameEvent], actions: &[Option<Action>]) -> Self {
        Self {
            tick: state.tick,
            players: PlayerFrame::all(state),
            ball: state.ball,
            score: state.score,
            phase: state.phase,
            events: events.to_vec(),
            actions: actions.to_vec(),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum Line {
    Header(ReplayHeader),
    Tick(TickRecord),
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("replay i/o: {0}")]
    Io(#[from] io::Error),
    #[error("replay line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error("replay has no header line")]
    MissingHeader,
    #[error("replay line {line}: unexpected header")]
    DuplicateHeader { line: usize },
    #[error("unsupported replay version {found} (expected {REPLAY_VERSION})")]
    Version { found: u32 },
    #[error("replay line {line}: tick {found} does not follow tick {previous}")]
    TickOrder { line: usize, previous: u64, found: u64 },
    #[error("replay line {line}: expected {expected} actions, found {found}")]
    ActionCount { line: usize, expected: usize, found: usize },
    #[error("re-simulation diverged at tick {tick}")]
    Diverged { tick: u64 },
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// A fully loaded replay.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayLog {
    pub header: ReplayHeader,
    pub ticks: Vec<TickRecord>,
}

impl ReplayLog {
    pub fn read(reader: impl BufRead) -> Result<Self, ReplayError> {
        let mut header: Option<ReplayHeader> = None;
        let mut ticks: Vec<TickRecord> = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line_no = i + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: Line = serde_json::from_str(&line).map_err(|source| ReplayError::Parse {
                line: line_no,
                source,
            })?;
            match (parsed, &header) {
                (Line::Header(h), None) => {
                    if h.version != REPLAY_VERSION {
                        return Err(ReplayError::Version { found: h.version });
                    }
                    header = Some(h);
                }
                (Line::Header(_), Some(_)) => return Err(ReplayError::DuplicateHeader { line: line_no }),
                (Line::Tick(_), None) => return Err(ReplayError::MissingHeader),
                (Line::Tick(t), Some(h)) => {
                    let previous = ticks.last().map_or(0, |p| p.tick);
                    if t.tick != previous + 1 {
                        return Err(ReplayError::TickOrder {
                            line: line_no,
                            previous,
                            found: t.tick,
                        });
                    }
                    let expected = 2 * h.config.k;
                    if t.actions.len() != expected || t.players.len() != expected {
                        return Err(ReplayError::ActionCount {
                            line: line_no,
                            expected,
                            found: t.actions.len().min(t.players.len()),
                        });
                    }
                    ticks.push(t);
                }
            }
        }
        let header = header.ok_or(ReplayError::MissingHeader)?;
        Ok(Self { header, ticks })
    }

    pub fn parse(text: &str) -> Result<Self, ReplayError> {
        Self::read(text.as_bytes())
    }

    pub fn write(&self, out: impl Write) -> io::Result<()> {
        let mut w = ReplayWriter::new(out, &self.header)?;
        for t in &self.ticks {
            w.write_tick(t)?;
        }
        w.finish().map(|_| ())
    }

    pub fn to_ndjson(&self) -> String {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    /// All events in tick order.
    pub fn events(&self) -> impl Iterator<Item = &GameEvent> {
        self.ticks.iter().flat_map(|t| t.events.iter())
    }
}

/// Streams a replay: the header is written on construction.
pub struct ReplayWriter<W: Write> {
    out: W,
}

impl<W: Write> ReplayWriter<W> {
    pub fn new(mut out: W, header: &ReplayHeader) -> io::Result<Self> {
        write_line(&mut out, &Line::Header(header.clone()))?;
        Ok(Self { out })
    }

    pub fn write_tick(&mut self, record: &TickRecord) -> io::Result<()> {
        // Serialize through a borrowed view to avoid cloning the record.
        #[derive(Serialize)]
        struct TickLine<'a> {
            #[serde(rename = "type")]
            kind: &'static str,
            #[serde(flatten)]
            record: &'a TickRecord,
        }
        serde_json::to_writer(
            &mut self.out,
            &TickLine {
                kind: "tick",
                record,
            },
        )?;
        self.out.write_all(b"\n")
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

fn write_line<W: Write>(out: &mut W, line: &Line) -> io::Result<()> {
    serde_json::to_writer(&mut *out, line)?;
    out.write_all(b"\n")
}

/// Steps a fresh match built from `config` until it finishes, asking
/// `controller` for the dense action vector each tick, and records the log.
pub fn record_episode(
    config: &GameConfig,
    mut controller: impl FnMut(&Match) -> Vec<Option<Action>>,
) -> Result<ReplayLog, ReplayError> {
    let mut m = Match::new(config.clone())?;
    let mut ticks = Vec::with_capacity(config.episode_length as usize);
    let mut events = Vec::new();
    while !m.is_finished() {
        let actions = controller(&m);
        events.clear();
        m.step_slots_into(&actions, &mut events)?;
        ticks.push(TickRecord::capture(m.state(), &events, &actions));
    }
    Ok(ReplayLog {
        header: ReplayHeader::new(config),
        ticks,
    })
}

/// Re-simulates `log` from its header and recorded actions and checks that
/// every tick record is reproduced exactly.
pub fn verify(log: &ReplayLog) -> Result<(), ReplayError> {
    let mut m = Match::new(log.header.config.clone())?;
    let mut events = Vec::new();
    for recorded in &log.ticks {
        events.clear();
        m.step_slots_into(&recorded.actions, &mut events)?;
        if TickRecord::capture(m.state(), &events, &recorded.actions) != *recorded {
            return Err(ReplayError::Diverged { tick: recorded.tick });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scripted::{scripted_action, ScriptedProfile};

    fn scripted_log(config: &GameConfig) -> ReplayLog {
        let profile = ScriptedProfile::normal(config);
        record_episode(config, |m| {
            m.state()
                .ids()
                .map(|id| Some(scripted_action(m.state(), m.config(), id, &profile)))
                .collect()
        })
        .unwrap()
    }

    fn short_config(seed: u64) -> GameConfig {
        GameConfig {
            episode_length: 400,
            seed,
            ..GameConfig::with_k(2)
        }
    }

    #[test]
    fn round_trips_through_text() {
        let log = scripted_log(&short_config(3));
        let text = log.to_ndjson();
        assert_eq!(text.lines().count(), 401);
        let back = ReplayLog::parse(&text).unwrap();
        assert_eq!(back, log);
        assert_eq!(back.to_ndjson(), text);
    }

    #[test]
    fn verify_accepts_recorded_and_rejects_tampered() {
        let log = scripted_log(&short_config(5));
        verify(&log).unwrap();
        let mut bad = log.clone();
        bad.ticks[100].players[0].x += 1e-12;
        assert!(matches!(verify(&bad), Err(ReplayError::Diverged { tick: 101 })));
    }

    #[test]
    fn header_only_log_is_empty() {
        let header = ReplayHeader::new(&short_config(1));
        let text = ReplayLog {
            header: header.clone(),
            ticks: vec![],
        }
        .to_ndjson();
        let log = ReplayLog::parse(&text).unwrap();
        assert_eq!(log.header, header);
        assert!(log.ticks.is_empty());
    }

    #[test]
    fn malformed_logs_are_rejected() {
        assert!(matches!(ReplayLog::parse(""), Err(ReplayError::MissingHeader)));
        assert!(matches!(
            ReplayLog::parse("{\"type\":\"header\""),
            Err(ReplayError::Parse { line: 1, .. })
        ));
        let log = scripted_log(&short_config(2));
        let mut lines: Vec<String> = log.to_ndjson().lines().map(str::to_string).collect();
        lines.remove(3);
        assert!(matches!(
            ReplayLog::parse(&lines.join("\n")),
            Err(ReplayError::TickOrder { line: 4, previous: 2, found: 4 })
        ));
        let text = log.to_ndjson().replacen("\"version\":1", "\"version\":9", 1);
        assert!(matches!(ReplayLog::parse(&text), Err(ReplayError::Version { found: 9 })));
    }

    #[test]
    fn tick_line_has_expected_fields() {
        let log = scripted_log(&short_config(4));
        let line = log.to_ndjson().lines().nth(1).unwrap().to_string();
        let v: serde_json::Value = serde_json::from_str(&line).unwrap();
        for key in ["type", "tick", "players", "ball", "score", "phase", "events", "actions"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["players"].as_array().unwrap().len(), 4);
    }
}
