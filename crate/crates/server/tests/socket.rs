use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use serde_json::Value;
use sts2::scripted::Difficulty;
use sts2::sim::{GameConfig, PlayerId};
use sts2_harness::evaluate::{load_checkpoint, play_episode};
use sts2_harness::{Lineup, SlotAssignment, SlotSpec};
use sts2_server::{Server, Session, SessionConfig};
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};
use tokio::net::TcpStream;
use tokio::sync::oneshot;
use tokio_tungstenite::tungstenite::Message;

fn human_vs_scripted(tick_rate: f64) -> Session {
    let slots = SlotAssignment::new()
        .with(PlayerId::home(0), SlotSpec::Human)
        .with(PlayerId::away(0), SlotSpec::scripted(Difficulty::Normal));
    let mut config = SessionConfig::new(
        GameConfig {
            episode_length: 400,
            ..GameConfig::with_k(1)
        },
        slots,
    );
    config.tick_rate = tick_rate;
    Session::live(config).unwrap()
}

async fn start(session: Session) -> (String, oneshot::Sender<()>, tokio::task::JoinHandle<Session>) {
    let server = Server::bind("127.0.0.1:0", session).await.unwrap();
    let addr = server.local_addr().unwrap().to_string();
    let (stop, stopped) = oneshot::channel::<()>();
    let handle = tokio::spawn(async move {
        server
            .run(async {
                let _ = stopped.await;
            })
            .await
            .unwrap()
    });
    (addr, stop, handle)
}

struct LineClient {
    lines: tokio::io::Lines<BufReader<tokio::net::tcp::OwnedReadHalf>>,
    write: tokio::net::tcp::OwnedWriteHalf,
}

impl LineClient {
    async fn connect(addr: &str) -> Self {
        let (read, write) = TcpStream::connect(addr).await.unwrap().into_split();
        Self {
            lines: BufReader::new(read).lines(),
            write,
        }
    }

    async fn send(&mut self, text: &str) {
        self.write.write_all(format!("{text}\n").as_bytes()).await.unwrap();
    }

    async fn next(&mut self) -> Option<Value> {
        let line = tokio::time::timeout(Duration::from_secs(10), self.lines.next_line())
            .await
            .expect("server answered in time")
            .unwrap()?;
        Some(serde_json::from_str(&line).unwrap())
    }

    async fn next_of(&mut self, kind: &str) -> Value {
        loop {
            let m = self.next().await.expect("connection open");
            if m["type"] == kind {
                return m;
            }
        }
    }
}

#[tokio::test]
async fn ndjson_client_plays_a_match() {
    let (addr, stop, handle) = start(human_vs_scripted(500.0)).await;
    let mut c = LineClient::connect(&addr).await;
    c.send(r#"{"type":"hello","name":"ann"}"#).await;
    let hello = c.next_of("hello").await;
    assert_eq!(hello["owner"], true);
    assert_eq!(hello["mode"], "live");
    assert_eq!(hello["slots"][0]["controller"], "human");
    c.send(r#"{"type":"assign","slot":{"team":"home","index":0}}"#).await;
    assert_eq!(c.next_of("assigned").await["slot"]["team"], "home");
    c.send(r#"{"type":"control","cmd":"start"}"#).await;

    let mut last_tick = 0;
    let mut last_seq = 0;
    for _ in 0..40 {
        c.send(r#"{"type":"input","action":"Forward"}"#).await;
        let state = c.next_of("state").await;
        let (tick, seq) = (state["tick"].as_u64().unwrap(), state["seq"].as_u64().unwrap());
        assert!(tick > last_tick || last_tick == 0);
        assert!(seq > last_seq);
        assert_eq!(state["players"].as_array().unwrap().len(), 2);
        (last_tick, last_seq) = (tick, seq);
    }
    stop.send(()).unwrap();
    let session = handle.await.unwrap();
    let log = session.replay().unwrap();
    assert!(log.ticks.len() >= 40);
    assert!(log
        .ticks
        .iter()
        .any(|t| t.actions[0] == Some(sts2::sim::Action::Forward)));
}

#[tokio::test]
async fn websocket_clients_are_detected_by_their_upgrade_request() {
    let (addr, stop, handle) = start(human_vs_scripted(100.0)).await;
    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/")).await.unwrap();
    ws.send(Message::Text(r#"{"type":"hello","name":"web"}"#.into()))
        .await
        .unwrap();
    let first = tokio::time::timeout(Duration::from_secs(10), ws.next())
        .await
        .unwrap()
        .unwrap()
        .unwrap();
    let hello: Value = serde_json::from_str(first.to_text().unwrap()).unwrap();
    assert_eq!(hello["type"], "hello");
    assert_eq!(hello["k"], 1);

    // A raw client on the same port after the WebSocket one.
    let mut raw = LineClient::connect(&addr).await;
    raw.send(r#"{"type":"hello","name":"raw"}"#).await;
    let hello = raw.next_of("hello").await;
    assert_eq!(hello["owner"], false);
    stop.send(()).unwrap();
    handle.await.unwrap();
}

#[tokio::test]
async fn protocol_violations_close_only_the_offending_connection() {
    let (addr, stop, handle) = start(human_vs_scripted(100.0)).await;
    let mut good = LineClient::connect(&addr).await;
    good.send(r#"{"type":"hello","name":"good"}"#).await;
    good.next_of("hello").await;

    let mut bad = LineClient::connect(&addr).await;
    bad.send(r#"{"type":"input","action":"Shoot"}"#).await;
    let err = bad.next_of("error").await;
    assert!(err["msg"].as_str().unwrap().contains("hello"));
    assert!(bad.next().await.is_none(), "server closed the connection");

    let mut huge = LineClient::connect(&addr).await;
    huge.send(r#"{"type":"hello","name":"h"}"#).await;
    huge.next_of("hello").await;
    huge.send(&"x".repeat(sts2_server::net::MAX_MESSAGE_BYTES + 10)).await;
    assert!(huge.next_of("error").await["msg"].as_str().unwrap().contains("longer"));
    loop {
        if huge.next().await.is_none() {
            break;
        }
    }

    good.send(r#"{"type":"assign","slot":{"team":"home","index":0}}"#).await;
    assert_eq!(good.next_of("assigned").await["slot"]["index"], 0);
    stop.send(()).unwrap();
    handle.await.unwrap();
}

#[tokio::test]
async fn headless_server_runs_to_completion_and_matches_the_offline_run() {
    let game = GameConfig {
        episode_length: 150,
        randomize_start: true,
        seed: 5,
        ..GameConfig::with_k(2)
    };
    let slots = (0..4).fold(SlotAssignment::new(), |s, i| {
        s.with(PlayerId::from_slot(i, 2), SlotSpec::scripted(Difficulty::Easy))
    });
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("match.ndjson");
    let mut config = SessionConfig::new(game.clone(), slots.clone());
    config.tick_rate = 1000.0;
    config.record_replay = Some(path.clone());
    let server = Server::bind("127.0.0.1:0", Session::live(config).unwrap())
        .await
        .unwrap()
        .exit_when_over(true);
    let session = server.run(std::future::pending()).await.unwrap();
    assert!(session.is_over());

    let lineup = Lineup::resolve(&slots, &game, load_checkpoint).unwrap();
    let offline = play_episode(&game, &lineup, true).unwrap().1.unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap(), offline.to_ndjson());
}
