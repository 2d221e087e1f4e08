//! The session state machine, free of any I/O.
//!
//! A [`Session`] owns the match and the client registry. Transports feed it
//! client text with [`Session::handle`], call [`Session::tick`] at the tick
//! rate and deliver whatever [`Session::drain`] returns. Because inputs are
//! only consumed by `tick`, an input handled before tick `t` is part of the
//! action set of tick `t`; later ones wait for `t + 1`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use sts2::replay::{ReplayHeader, ReplayLog, TickRecord};
use sts2::sim::{Action, GameConfig, GameEvent, GameState, Match, PlayerId};
use sts2_harness::evaluate::load_checkpoint;
use sts2_harness::slots::{Control, Lineup, SlotAssignment, SlotKey};
use sts2_harness::{Checkpoint, HarnessError};

use crate::error::{Result, ServerError};
use crate::protocol::{ClientMessage, ControlCmd, ServerMessage, SlotInfo};

pub const DEFAULT_TICK_RATE: f64 = 30.0;

pub type ClientId = u64;

#[derive(Debug, Clone)]
pub struct SessionConfig {
    pub game: GameConfig,
    /// Human slots allowed.
    pub slots: SlotAssignment,
    /// Ticks per second of real-time pacing.
    pub tick_rate: f64,
    /// Where to write the replay log when the match finishes.
    pub record_replay: Option<PathBuf>,
}

impl SessionConfig {
    pub fn new(game: GameConfig, slots: SlotAssignment) -> Self {
        Self {
            game,
            slots,
            tick_rate: DEFAULT_TICK_RATE,
            record_replay: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tick_rate.is_finite() && self.tick_rate > 0.0) {
            return Err(ServerError::Config(format!("tick rate must be positive, got {}", self.tick_rate)));
        }
        self.game.validate()?;
        Ok(())
    }
}

struct Live {
    config: SessionConfig,
    game: Match,
    lineup: Lineup,
    /// Human seats and the client bound to each.
    humans: BTreeMap<PlayerId, Option<ClientId>>,
    /// Latest input per human seat since the previous tick.
    pending: BTreeMap<PlayerId, Action>,
    ticks: Vec<TickRecord>,
    obs: Vec<f64>,
    events: Vec<GameEvent>,
    replay_written: bool,
}

struct Playback {
    log: ReplayLog,
    tick_rate: f64,
    /// Index of the next record to stream.
    cursor: usize,
    warnings: Vec<String>,
}

enum Source {
    Live(Box<Live>),
    Playback(Playback),
}

struct Client {
    greeted: bool,
    name: String,
    slot: Option<PlayerId>,
}

enum Target {
    All,
    One(ClientId),
}

/// One serialized message for one client.
#[derive(Debug, Clone, PartialEq)]
pub struct Outgoing {
    pub to: ClientId,
    pub text: String,
}

/// What a call to [`Session::tick`] did.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TickOutcome {
    /// Paused or already over.
    Idle,
    Advanced,
    /// Advanced, and the match (or the playback) just ended.
    Finished,
}

pub struct Session {
    source: Source,
    running: bool,
    clients: BTreeMap<ClientId, Client>,
    next_client: ClientId,
    seq: u64,
    outbox: Vec<(Target, ServerMessage)>,
    kicked: BTreeSet<ClientId>,
}

impl Session {
    /// A live match. Frozen slots load their checkpoints from disk.
    pub fn live(config: SessionConfig) -> Result<Self> {
        Self::live_with(config, load_checkpoint)
    }

    pub fn live_with(
        config: SessionConfig,
        load: impl FnMut(&Path) -> sts2_harness::Result<Checkpoint>,
    ) -> Result<Self> {
        config.validate()?;
        let lineup = Lineup::resolve(&config.slots, &config.game, load)?;
        if !lineup.slots_with(|c| matches!(c, Control::Learner)).is_empty() {
            return Err(ServerError::Config("learner slots cannot be served".into()));
        }
        let humans: BTreeMap<_, _> = lineup
            .slots_with(|c| matches!(c, Control::Human))
            .into_iter()
            .map(|id| (id, None))
            .collect();
        let game = Match::new(config.game.clone()).map_err(HarnessError::from)?;
        let running = humans.is_empty();
        Ok(Self::with_source(
            Source::Live(Box::new(Live {
                config,
                game,
                lineup,
                humans,
                pending: BTreeMap::new(),
                ticks: Vec::new(),
                obs: Vec::new(),
                events: Vec::new(),
                replay_written: false,
            })),
            running,
        ))
    }

    /// Streams a recorded match without simulating. When `expected_hash`
    /// differs from the log's configuration hash, every client is warned in
    /// its handshake.
    pub fn playback(log: ReplayLog, tick_rate: f64, expected_hash: Option<&str>) -> Result<Self> {
        if !(tick_rate.is_finite() && tick_rate > 0.0) {
            return Err(ServerError::Config(format!("tick rate must be positive, got {tick_rate}")));
        }
        let mut warnings = Vec::new();
        if let Some(expected) = expected_hash {
            if expected != log.header.config_hash {
                warnings.push(format!(
                    "replay config hash {} does not match the requested {expected}",
                    log.header.config_hash
                ));
            }
        }
        let actual = log.header.config.hash_hex();
        if actual != log.header.config_hash {
            warnings.push(format!(
                "replay header claims config hash {} but its config hashes to {actual}",
                log.header.config_hash
            ));
        }
        Ok(Self::with_source(
            Source::Playback(Playback {
                log,
                tick_rate,
                cursor: 0,
                warnings,
            }),
            true,
        ))
    }

    fn with_source(source: Source, running: bool) -> Self {
        Self {
            source,
            running,
            clients: BTreeMap::new(),
            next_client: 1,
            seq: 0,
            outbox: Vec::new(),
            kicked: BTreeSet::new(),
        }
    }

    pub fn tick_rate(&self) -> f64 {
        match &self.source {
            Source::Live(l) => l.config.tick_rate,
            Source::Playback(p) => p.tick_rate,
        }
    }

    pub fn game_config(&self) -> &GameConfig {
        match &self.source {
            Source::Live(l) => &l.config.game,
            Source::Playback(p) => &p.log.header.config,
        }
    }

    pub fn is_running(&self) -> bool {
        self.running
    }

    /// The live match has ended or the playback has streamed every record.
    pub fn is_over(&self) -> bool {
        match &self.source {
            Source::Live(l) => l.game.is_finished(),
            Source::Playback(p) => p.cursor >= p.log.ticks.len(),
        }
    }

    /// The state clients currently see, if any.
    pub fn current_state(&self) -> Option<&GameState> {
        match &self.source {
            Source::Live(l) => Some(l.game.state()),
            Source::Playback(_) => None,
        }
    }

    /// The log of the live match so far.
    pub fn replay(&self) -> Option<ReplayLog> {
        match &self.source {
            Source::Live(l) => Some(ReplayLog {
                header: ReplayHeader::new(&l.config.game),
                ticks: l.ticks.clone(),
            }),
            Source::Playback(_) => None,
        }
    }

    /// The seat a client is bound to.
    pub fn binding(&self, client: ClientId) -> Option<PlayerId> {
        self.clients.get(&client).and_then(|c| c.slot)
    }

    pub fn client_name(&self, client: ClientId) -> Option<&str> {
        self.clients.get(&client).map(|c| c.name.as_str())
    }

    /// The oldest connected client controls start, pause and reset.
    pub fn owner(&self) -> Option<ClientId> {
        self.clients.keys().next().copied()
    }

    pub fn connect(&mut self) -> ClientId {
        let id = self.next_client;
        self.next_client += 1;
        self.clients.insert(
            id,
            Client {
                greeted: false,
                name: String::new(),
                slot: None,
            },
        );
        id
    }

    pub fn disconnect(&mut self, client: ClientId) {
        let was_owner = self.owner() == Some(client);
        let Some(c) = self.clients.remove(&client) else {
            return;
        };
        if let (Some(slot), Source::Live(live)) = (c.slot, &mut self.source) {
            live.humans.insert(slot, None);
            live.pending.remove(&slot);
        }
        if was_owner {
            if let Some(next) = self.owner() {
                self.push_status(Target::One(next));
            }
        }
    }

    /// Clients to disconnect after their pending messages are delivered.
    pub fn take_kicked(&mut self) -> Vec<ClientId> {
        let kicked = std::mem::take(&mut self.kicked);
        for &c in &kicked {
            self.disconnect(c);
        }
        kicked.into_iter().collect()
    }

    fn push(&mut self, to: Target, msg: impl FnOnce(u64) -> ServerMessage) {
        self.seq += 1;
        self.outbox.push((to, msg(self.seq)));
    }

    fn error(&mut self, client: ClientId, msg: impl Into<String>) {
        let msg = msg.into();
        self.push(Target::One(client), |seq| ServerMessage::Error { msg, seq });
    }

    /// Error reply followed by disconnection of that client only.
    pub fn violation(&mut self, client: ClientId, msg: impl Into<String>) {
        self.error(client, msg);
        self.kicked.insert(client);
    }

    fn push_status(&mut self, to: Target) {
        let running = self.running;
        let owner = self.owner();
        match to {
            Target::All => {
                let greeted: Vec<_> = self.clients.iter().filter(|(_, c)| c.greeted).map(|(&id, _)| id).collect();
                for id in greeted {
                    self.push(Target::One(id), |seq| ServerMessage::Status {
                        running,
                        owner: owner == Some(id),
                        seq,
                    });
                }
            }
            Target::One(id) => self.push(Target::One(id), |seq| ServerMessage::Status {
                running,
                owner: owner == Some(id),
                seq,
            }),
        }
    }

    fn slot_infos(&self) -> Vec<SlotInfo> {
        match &self.source {
            Source::Live(live) => live
                .lineup
                .controllers
                .iter()
                .flat_map(|c| {
                    let kind = match c.control {
                        Control::Human => "human",
                        Control::Scripted(_) => "scripted",
                        Control::Policy { .. } => "policy",
                        Control::Learner => "learner",
                    };
                    c.slots.iter().map(move |&id| (id, kind))
                })
                .map(|(id, kind)| SlotInfo {
                    team: id.team,
                    index: id.index,
                    controller: kind.to_string(),
                    bound: live.humans.get(&id).is_some_and(Option::is_some),
                })
                .collect(),
            Source::Playback(p) => {
                let k = p.log.header.config.k;
                (0..2 * k)
                    .map(|s| {
                        let id = PlayerId::from_slot(s, k);
                        SlotInfo {
                            team: id.team,
                            index: id.index,
                            controller: "replay".into(),
                            bound: false,
                        }
                    })
                    .collect()
            }
        }
    }

    /// Processes one message of text from `client`.
    pub fn handle(&mut self, client: ClientId, text: &str) {
        let Some(c) = self.clients.get(&client) else {
            return;
        };
        if self.kicked.contains(&client) {
            return;
        }
        let greeted = c.greeted;
        let msg = match ClientMessage::parse(text) {
            Ok(m) => m,
            Err(e) if greeted => return self.error(client, e.to_string()),
            Err(e) => return self.violation(client, format!("{e}; the first message must be hello")),
        };
        match msg {
            ClientMessage::Hello { name } => self.hello(client, name),
            _ if !greeted => self.violation(client, "the first message must be hello"),
            ClientMessage::Assign { slot } => self.assign(client, slot),
            ClientMessage::Input { action } => self.input(client, action),
            ClientMessage::Control { cmd } => self.control(client, cmd),
        }
    }

    fn hello(&mut self, client: ClientId, name: String) {
        if let Some(c) = self.clients.get_mut(&client) {
            c.greeted = true;
            c.name = name;
        }
        let slots = self.slot_infos();
        let owner = self.owner() == Some(client);
        let (mode, warnings) = match &self.source {
            Source::Live(_) => ("live", Vec::new()),
            Source::Playback(p) => ("replay", p.warnings.clone()),
        };
        let game = self.game_config().clone();
        let tick_rate = self.tick_rate();
        self.push(Target::One(client), |seq| ServerMessage::Hello {
            client,
            owner,
            mode: mode.to_string(),
            k: game.k,
            tick_rate,
            episode_length: game.episode_length,
            config_hash: game.hash_hex(),
            slots,
            warnings,
            seq,
        });
        self.push_status(Target::One(client));
        if let Some(state) = self.current_state() {
            let state = state.clone();
            self.push(Target::One(client), |seq| ServerMessage::state(&state, seq));
        }
    }

    fn assign(&mut self, client: ClientId, slot: PlayerId) {
        let Source::Live(live) = &mut self.source else {
            return self.error(client, "a replay session has no slots to assign");
        };
        let current = self.clients.get(&client).and_then(|c| c.slot);
        match live.humans.get(&slot) {
            None if slot.index >= live.config.game.k => self.error(client, format!("no slot {}", SlotKey(slot))),
            None => self.error(client, format!("slot {} is not a human slot", SlotKey(slot))),
            Some(Some(holder)) if *holder == client => {
                self.push(Target::One(client), |seq| ServerMessage::Assigned { slot: slot.into(), seq })
            }
            Some(Some(_)) => self.error(client, "slot taken"),
            Some(None) => {
                if let Some(bound) = current {
                    return self.error(client, format!("already bound to {}", SlotKey(bound)));
                }
                live.humans.insert(slot, Some(client));
                if let Some(c) = self.clients.get_mut(&client) {
                    c.slot = Some(slot);
                }
                self.push(Target::One(client), |seq| ServerMessage::Assigned { slot: slot.into(), seq });
            }
        }
    }

    fn input(&mut self, client: ClientId, action: Action) {
        let Some(slot) = self.binding(client) else {
            return self.error(client, "no slot bound; assign one first");
        };
        if let Source::Live(live) = &mut self.source {
            live.pending.insert(slot, action);
        }
    }

    fn control(&mut self, client: ClientId, cmd: ControlCmd) {
        if self.owner() != Some(client) {
            return self.error(client, "only the session owner may start, pause or reset");
        }
        match cmd {
            ControlCmd::Start => {
                if self.is_over() {
                    return self.error(client, "the match is over; reset first");
                }
                if let Source::Live(live) = &self.source {
                    let unbound: Vec<String> = live
                        .humans
                        .iter()
                        .filter(|(_, c)| c.is_none())
                        .map(|(&id, _)| SlotKey(id).to_string())
                        .collect();
                    if !unbound.is_empty() {
                        return self.error(client, format!("unbound human slots: {}", unbound.join(", ")));
                    }
                }
                self.running = true;
            }
            ControlCmd::Pause => self.running = false,
            ControlCmd::Reset => {
                self.running = false;
                match &mut self.source {
                    Source::Live(live) => {
                        live.game = Match::new(live.config.game.clone()).expect("config validated at creation");
                        live.pending.clear();
                        live.ticks.clear();
                        live.replay_written = false;
                    }
                    Source::Playback(p) => p.cursor = 0,
                }
                if let Some(state) = self.current_state() {
                    let state = state.clone();
                    self.push(Target::All, |seq| ServerMessage::state(&state, seq));
                }
            }
        }
        self.push_status(Target::All);
    }

    /// Advances one tick when running: gathers every controller's action,
    /// steps the match, broadcasts the state and its events, and writes the
    /// replay when the match ends.
    pub fn tick(&mut self) -> Result<TickOutcome> {
        if !self.running || self.is_over() {
            return Ok(TickOutcome::Idle);
        }
        let (state, events) = match &mut self.source {
            Source::Live(live) => {
                let live = &mut **live;
                let k = live.config.game.k;
                let mut actions = vec![None; 2 * k];
                live.lineup
                    .fill(live.game.state(), &live.config.game, &mut live.obs, &mut actions);
                for (&slot, _) in live.humans.iter() {
                    actions[slot.slot(k)] = live.pending.remove(&slot);
                }
                live.events.clear();
                live.game
                    .step_slots_into(&actions, &mut live.events)
                    .map_err(HarnessError::from)?;
                let state = live.game.state().clone();
                live.ticks.push(TickRecord::capture(&state, &live.events, &actions));
                (state, live.events.clone())
            }
            Source::Playback(p) => {
                let record = &p.log.ticks[p.cursor];
                p.cursor += 1;
                let state = state_of(record);
                (state, record.events.clone())
            }
        };
        self.push(Target::All, |seq| ServerMessage::state(&state, seq));
        for e in &events {
            self.push(Target::All, |seq| ServerMessage::event(e, seq));
        }
        if !self.is_over() {
            return Ok(TickOutcome::Advanced);
        }
        self.running = false;
        self.write_replay()?;
        self.push_status(Target::All);
        Ok(TickOutcome::Finished)
    }

    fn write_replay(&mut self) -> Result<()> {
        let Source::Live(live) = &mut self.source else {
            return Ok(());
        };
        let Some(path) = live.config.record_replay.clone() else {
            return Ok(());
        };
        if live.replay_written {
            return Ok(());
        }
        let log = ReplayLog {
            header: ReplayHeader::new(&live.config.game),
            ticks: std::mem::take(&mut live.ticks),
        };
        let written = File::create(&path).and_then(|f| log.write(BufWriter::new(f)));
        live.ticks = log.ticks;
        written.map_err(|source| ServerError::Io { path, source })?;
        live.replay_written = true;
        Ok(())
    }

    /// Serialized messages ready for delivery, in emission order. Broadcasts
    /// reach every client that has completed the handshake.
    pub fn drain(&mut self) -> Vec<Outgoing> {
        let mut out = Vec::new();
        for (to, msg) in self.outbox.drain(..) {
            let text = msg.to_json();
            match to {
                Target::One(id) => {
                    if self.clients.contains_key(&id) {
                        out.push(Outgoing { to: id, text });
                    }
                }
                Target::All => out.extend(
                    self.clients
                        .iter()
                        .filter(|(_, c)| c.greeted)
                        .map(|(&id, _)| Outgoing { to: id, text: text.clone() }),
                ),
            }
        }
        out
    }
}

/// Rebuilds the broadcast view of a recorded tick.
fn state_of(record: &TickRecord) -> GameState {
    let k = record.players.len() / 2;
    let mut players = vec![Default::default(); 2 * k];
    for f in &record.players {
        players[f.id().slot(k)] = sts2::sim::PlayerState {
            pos: sts2::sim::Vec2::new(f.x, f.y),
            vel: sts2::sim::Vec2::new(f.vx, f.vy),
        };
    }
    GameState {
        tick: record.tick,
        players,
        ball: record.ball,
        score: record.score,
        phase: record.phase,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use sts2::scripted::Difficulty;
    use sts2_harness::SlotSpec;

    fn one_human() -> Session {
        let game = GameConfig {
            episode_length: 50,
            ..GameConfig::with_k(1)
        };
        let slots = SlotAssignment::new()
            .with(PlayerId::home(0), SlotSpec::Human)
            .with(PlayerId::away(0), SlotSpec::scripted(Difficulty::Normal));
        Session::live(SessionConfig::new(game, slots)).unwrap()
    }

    fn texts(s: &mut Session, to: ClientId) -> Vec<serde_json::Value> {
        s.drain()
            .into_iter()
            .filter(|o| o.to == to)
            .map(|o| serde_json::from_str(&o.text).unwrap())
            .collect()
    }

    #[test]
    fn human_sessions_wait_for_the_owner() {
        let mut s = one_human();
        assert!(!s.is_running());
        let a = s.connect();
        s.handle(a, r#"{"type":"hello","name":"a"}"#);
        s.handle(a, r#"{"type":"control","cmd":"start"}"#);
        let msgs = texts(&mut s, a);
        assert_eq!(msgs[0]["type"], "hello");
        assert_eq!(msgs[0]["owner"], true);
        assert!(msgs.last().unwrap()["msg"].as_str().unwrap().contains("home0"));
        s.handle(a, r#"{"type":"assign","slot":{"team":"home","index":0}}"#);
        s.handle(a, r#"{"type":"control","cmd":"start"}"#);
        assert!(s.is_running());
        assert_eq!(s.tick().unwrap(), TickOutcome::Advanced);
    }

    #[test]
    fn seq_increases_across_every_message() {
        let mut s = one_human();
        let a = s.connect();
        let b = s.connect();
        s.handle(a, r#"{"type":"hello","name":"a"}"#);
        s.handle(b, r#"{"type":"hello","name":"b"}"#);
        s.handle(b, r#"{"type":"input","action":"Left"}"#);
        let seqs: Vec<u64> = s
            .drain()
            .iter()
            .map(|o| serde_json::from_str::<serde_json::Value>(&o.text).unwrap()["seq"].as_u64().unwrap())
            .collect();
        assert!(seqs.windows(2).all(|w| w[0] < w[1]), "{seqs:?}");
    }

    #[test]
    fn ownership_passes_to_the_oldest_client() {
        let mut s = one_human();
        let a = s.connect();
        let b = s.connect();
        s.handle(a, r#"{"type":"hello","name":"a"}"#);
        s.handle(b, r#"{"type":"hello","name":"b"}"#);
        assert_eq!(s.owner(), Some(a));
        s.disconnect(a);
        assert_eq!(s.owner(), Some(b));
        let msgs = texts(&mut s, b);
        assert_eq!(msgs.last().unwrap()["type"], "status");
        assert_eq!(msgs.last().unwrap()["owner"], true);
    }
}
