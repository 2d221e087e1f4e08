use proptest::prelude::*;
use serde_json::Value;
use sts2::replay::ReplayLog;
use sts2::scripted::Difficulty;
use sts2::sim::{Action, GameConfig, PlayerId};
use sts2_harness::evaluate::{load_checkpoint, play_episode};
use sts2_harness::{Lineup, SlotAssignment, SlotSpec};
use sts2_server::{ClientId, Session, SessionConfig, TickOutcome};

fn scripted() -> SlotSpec {
    SlotSpec::scripted(Difficulty::Normal)
}

fn game(k: usize, length: u64) -> GameConfig {
    GameConfig {
        episode_length: length,
        randomize_start: true,
        seed: 11,
        ..GameConfig::with_k(k)
    }
}

/// Home#0 human, Away#0 human when `two_humans`, the rest scripted.
fn human_session(two_humans: bool) -> Session {
    let slots = SlotAssignment::new()
        .with(PlayerId::home(0), SlotSpec::Human)
        .with(PlayerId::away(0), if two_humans { SlotSpec::Human } else { scripted() });
    Session::live(SessionConfig::new(game(1, 200), slots)).unwrap()
}

fn messages(s: &mut Session, to: ClientId) -> Vec<Value> {
    s.drain()
        .into_iter()
        .filter(|o| o.to == to)
        .map(|o| serde_json::from_str(&o.text).unwrap())
        .collect()
}

fn last_error(msgs: &[Value]) -> String {
    msgs.iter()
        .rev()
        .find(|m| m["type"] == "error")
        .map(|m| m["msg"].as_str().unwrap().to_string())
        .unwrap_or_default()
}

fn greet(s: &mut Session, name: &str) -> ClientId {
    let c = s.connect();
    s.handle(c, &format!(r#"{{"type":"hello","name":"{name}"}}"#));
    c
}

fn assign(s: &mut Session, c: ClientId, team: &str, index: usize) {
    s.handle(c, &format!(r#"{{"type":"assign","slot":{{"team":"{team}","index":{index}}}}}"#));
}

fn input(s: &mut Session, c: ClientId, action: &str) {
    s.handle(c, &format!(r#"{{"type":"input","action":"{action}"}}"#));
}

fn control(s: &mut Session, c: ClientId, cmd: &str) {
    s.handle(c, &format!(r#"{{"type":"control","cmd":"{cmd}"}}"#));
}

fn last_actions(s: &Session) -> Vec<Option<Action>> {
    s.replay().unwrap().ticks.last().unwrap().actions.clone()
}

fn started() -> (Session, ClientId) {
    let mut s = human_session(false);
    let a = greet(&mut s, "a");
    assign(&mut s, a, "home", 0);
    control(&mut s, a, "start");
    assert!(s.is_running());
    (s, a)
}

#[test]
fn input_before_a_tick_is_applied_at_that_tick() {
    let (mut s, a) = started();
    input(&mut s, a, "Left");
    input(&mut s, a, "Forward");
    s.tick().unwrap();
    assert_eq!(last_actions(&s)[0], Some(Action::Forward), "latest input wins");
    s.tick().unwrap();
    assert_eq!(last_actions(&s)[0], None, "no input means coast");
    input(&mut s, a, "Shoot");
    assert_eq!(last_actions(&s)[0], None, "not applied retroactively");
    s.tick().unwrap();
    assert_eq!(last_actions(&s)[0], Some(Action::Shoot));
}

#[test]
fn bound_slots_cannot_be_taken() {
    let mut s = human_session(true);
    let a = greet(&mut s, "a");
    let b = greet(&mut s, "b");
    assign(&mut s, a, "home", 0);
    assign(&mut s, b, "home", 0);
    assert_eq!(last_error(&messages(&mut s, b)), "slot taken");
    assert_eq!(s.binding(a), Some(PlayerId::home(0)));
    assert_eq!(s.binding(b), None);
    assign(&mut s, b, "away", 3);
    assert!(last_error(&messages(&mut s, b)).contains("no slot away3"));
    assign(&mut s, b, "away", 0);
    assign(&mut s, b, "home", 0);
    assert!(last_error(&messages(&mut s, b)).contains("slot taken"));
    assert_eq!(s.binding(b), Some(PlayerId::away(0)));
}

#[test]
fn unknown_actions_are_rejected_and_not_queued() {
    let (mut s, a) = started();
    messages(&mut s, a);
    input(&mut s, a, "Jump");
    assert!(last_error(&messages(&mut s, a)).contains("unknown action"));
    s.tick().unwrap();
    assert_eq!(last_actions(&s)[0], None);
}

#[test]
fn scripted_slots_reject_assignment_and_unbound_clients_cannot_steer() {
    let mut s = human_session(false);
    let a = greet(&mut s, "a");
    assign(&mut s, a, "away", 0);
    assert!(last_error(&messages(&mut s, a)).contains("not a human slot"));
    input(&mut s, a, "Forward");
    assert!(last_error(&messages(&mut s, a)).contains("no slot bound"));
}

#[test]
fn only_the_owner_controls_the_match() {
    let mut s = human_session(true);
    let a = greet(&mut s, "a");
    let b = greet(&mut s, "b");
    assign(&mut s, a, "home", 0);
    assign(&mut s, b, "away", 0);
    control(&mut s, b, "start");
    assert!(last_error(&messages(&mut s, b)).contains("owner"));
    assert!(!s.is_running());
    control(&mut s, a, "start");
    assert!(s.is_running());
    s.tick().unwrap();
    control(&mut s, b, "reset");
    assert_eq!(s.current_state().unwrap().tick, 1);
    control(&mut s, a, "reset");
    assert_eq!(s.current_state().unwrap().tick, 0);
    assert!(!s.is_running());
}

#[test]
fn malformed_json_gets_an_error_without_disconnecting() {
    let mut s = human_session(false);
    let a = greet(&mut s, "a");
    s.handle(a, "{not json");
    assert!(last_error(&messages(&mut s, a)).starts_with("malformed message"));
    assert!(s.take_kicked().is_empty());
}

#[test]
fn skipping_the_handshake_disconnects_only_that_client() {
    let mut s = human_session(false);
    let a = greet(&mut s, "a");
    s.drain();
    let b = s.connect();
    input(&mut s, b, "Shoot");
    let out = s.drain();
    assert!(out.iter().all(|o| o.to == b));
    assert!(out[0].text.contains("hello"));
    assert_eq!(s.take_kicked(), vec![b]);
    assert_eq!(s.owner(), Some(a));
    assign(&mut s, a, "home", 0);
    assert_eq!(s.binding(a), Some(PlayerId::home(0)));
}

#[test]
fn state_ticks_strictly_increase_per_client() {
    let (mut s, a) = started();
    messages(&mut s, a);
    let mut ticks = Vec::new();
    loop {
        let outcome = s.tick().unwrap();
        ticks.extend(
            messages(&mut s, a)
                .iter()
                .filter(|m| m["type"] == "state")
                .map(|m| m["tick"].as_u64().unwrap()),
        );
        if outcome == TickOutcome::Finished {
            break;
        }
    }
    assert_eq!(ticks, (1..=200).collect::<Vec<u64>>());
    assert!(ticks.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn served_match_without_humans_equals_the_headless_run() {
    let game = game(2, 600);
    let slots = (0..4).fold(SlotAssignment::new(), |s, i| s.with(PlayerId::from_slot(i, 2), scripted()));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("served.ndjson");
    let mut config = SessionConfig::new(game.clone(), slots.clone());
    config.record_replay = Some(path.clone());
    let mut s = Session::live(config).unwrap();
    assert!(s.is_running(), "no humans, so the match starts by itself");
    let mut outcome = TickOutcome::Advanced;
    while outcome != TickOutcome::Finished {
        outcome = s.tick().unwrap();
    }
    assert_eq!(s.tick().unwrap(), TickOutcome::Idle);

    let lineup = Lineup::resolve(&slots, &game, load_checkpoint).unwrap();
    let (_, headless) = play_episode(&game, &lineup, true).unwrap();
    let headless = headless.unwrap();
    assert_eq!(s.replay().unwrap(), headless);
    let written = ReplayLog::parse(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(written, headless);
    assert_eq!(written.to_ndjson(), headless.to_ndjson());
}

fn recorded_log() -> ReplayLog {
    let game = game(1, 120);
    let slots = SlotAssignment::new()
        .with(PlayerId::home(0), scripted())
        .with(PlayerId::away(0), scripted());
    let lineup = Lineup::resolve(&slots, &game, load_checkpoint).unwrap();
    play_episode(&game, &lineup, true).unwrap().1.unwrap()
}

fn streamed_states(s: &mut Session, c: ClientId) -> Vec<Value> {
    let mut states = Vec::new();
    loop {
        let outcome = s.tick().unwrap();
        states.extend(messages(s, c).into_iter().filter(|m| m["type"] == "state"));
        if outcome != TickOutcome::Advanced {
            return states;
        }
    }
}

#[test]
fn playback_streams_the_recorded_states() {
    let log = recorded_log();
    let mut live = Session::live(SessionConfig::new(
        log.header.config.clone(),
        SlotAssignment::new()
            .with(PlayerId::home(0), scripted())
            .with(PlayerId::away(0), scripted()),
    ))
    .unwrap();
    let watcher = greet(&mut live, "w");
    messages(&mut live, watcher);
    let live_states = streamed_states(&mut live, watcher);

    let mut replay = Session::playback(log.clone(), 30.0, None).unwrap();
    let c = greet(&mut replay, "c");
    let hello = &messages(&mut replay, c)[0];
    assert_eq!(hello["mode"], "replay");
    assert_eq!(hello["warnings"].as_array().unwrap().len(), 0);
    let replayed = streamed_states(&mut replay, c);
    assert_eq!(replayed.len(), log.ticks.len());
    let strip = |v: &Value| {
        let mut v = v.clone();
        v.as_object_mut().unwrap().remove("seq");
        v
    };
    assert_eq!(
        replayed.iter().map(strip).collect::<Vec<_>>(),
        live_states.iter().map(strip).collect::<Vec<_>>()
    );
    assert!(replay.is_over());
}

#[test]
fn header_only_replay_ends_cleanly() {
    let mut log = recorded_log();
    log.ticks.clear();
    let text = log.to_ndjson();
    let log = ReplayLog::parse(&text).unwrap();
    let mut s = Session::playback(log, 30.0, None).unwrap();
    let c = greet(&mut s, "c");
    messages(&mut s, c);
    assert!(s.is_over());
    assert_eq!(s.tick().unwrap(), TickOutcome::Idle);
    assert!(messages(&mut s, c).is_empty());
}

#[test]
fn config_hash_mismatch_is_surfaced_as_a_warning() {
    let mut s = Session::playback(recorded_log(), 30.0, Some("0011223344556677")).unwrap();
    let c = greet(&mut s, "c");
    let hello = &messages(&mut s, c)[0];
    let warnings = hello["warnings"].as_array().unwrap();
    assert_eq!(warnings.len(), 1);
    assert!(warnings[0].as_str().unwrap().contains("0011223344556677"));
}

#[derive(Debug, Clone)]
enum Attack {
    Text(String),
    Tick,
}

fn attack() -> impl Strategy<Value = Attack> {
    let team = prop_oneof![Just("home"), Just("away"), Just("HOME"), Just("referee")];
    prop_oneof![
        (team, 0usize..3).prop_map(|(t, i)| Attack::Text(format!(
            r#"{{"type":"assign","slot":{{"team":"{t}","index":{i}}}}}"#
        ))),
        prop_oneof![Just("Forward"), Just("Shoot"), Just("Jump"), Just("")]
            .prop_map(|a| Attack::Text(format!(r#"{{"type":"input","action":"{a}"}}"#))),
        prop_oneof![Just("start"), Just("pause"), Just("reset"), Just("halt")]
            .prop_map(|c| Attack::Text(format!(r#"{{"type":"control","cmd":"{c}"}}"#))),
        Just(Attack::Text(r#"{"type":"hello","name":"again"}"#.into())),
        Just(Attack::Text(r#"{"type":"input","action":"Shoot","slot":{"team":"home","index":0}}"#.into())),
        "\\PC{0,20}".prop_map(Attack::Text),
        Just(Attack::Tick),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    /// Whatever a second client sends, the owner's seat, its inputs and its
    /// control over the match are unaffected.
    #[test]
    fn clients_cannot_touch_seats_they_do_not_own(
        attacks in prop::collection::vec(attack(), 1..60),
        victim in prop::collection::vec(prop::option::of(0usize..6), 60),
    ) {
        let mut s = human_session(true);
        let a = greet(&mut s, "a");
        let b = greet(&mut s, "b");
        assign(&mut s, a, "home", 0);
        assign(&mut s, b, "away", 0);
        control(&mut s, a, "start");
        prop_assert!(s.is_running());
        let mut ticks = 0;
        for (i, step) in attacks.iter().enumerate() {
            let sent = victim[i].map(|x| Action::ALL[x]);
            if let Some(action) = sent {
                input(&mut s, a, action.name());
            }
            match step {
                Attack::Text(t) => s.handle(b, t),
                Attack::Tick => {}
            }
            s.drain();
            prop_assert_eq!(s.binding(a), Some(PlayerId::home(0)));
            prop_assert!(s.is_running());
            prop_assert_eq!(s.owner(), Some(a));
            if s.tick().unwrap() != TickOutcome::Idle {
                ticks += 1;
                prop_assert_eq!(last_actions(&s)[0], sent);
            }
        }
        prop_assert_eq!(s.current_state().unwrap().tick, ticks);
    }
}
