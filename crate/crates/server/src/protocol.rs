//! Wire messages: one JSON object per message, tagged by `type`.
//!
//! Client to server:
//!
//! ```json
//! {"type":"hello","name":"ann"}
//! {"type":"assign","slot":{"team":"home","index":0}}
//! {"type":"input","action":"Shoot"}
//! {"type":"control","cmd":"start"}
//! ```
//!
//! Server to client messages all carry `seq`, a counter that increases with
//! every message the session emits. Besides `state`, `event` and `error`
//! the server sends `hello` (the handshake reply), `assigned` and `status`.

use serde::{Deserialize, Serialize};
use sts2::replay::PlayerFrame;
use sts2::sim::{Action, BallState, EventKind, Flight, GameEvent, GameState, PlayerId, Score, TeamId};

/// A seat as it appears on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireSlot {
    pub team: TeamId,
    pub index: usize,
}

impl From<PlayerId> for WireSlot {
    fn from(id: PlayerId) -> Self {
        Self {
            team: id.team,
            index: id.index,
        }
    }
}

impl From<WireSlot> for PlayerId {
    fn from(s: WireSlot) -> Self {
        PlayerId::new(s.team, s.index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlCmd {
    Start,
    Pause,
    Reset,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClientMessage {
    Hello { name: String },
    Assign { slot: PlayerId },
    Input { action: Action },
    Control { cmd: ControlCmd },
}

/// The loosely typed shape, validated into [`ClientMessage`].
#[derive(Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum RawClient {
    Hello {
        #[serde(default)]
        name: String,
    },
    Assign {
        slot: WireSlot,
    },
    Input {
        action: String,
    },
    Control {
        cmd: String,
    },
}

/// Why a client message was refused. The display text is what the client
/// receives in its `error` message.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProtocolError {
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("unknown action {0:?}")]
    UnknownAction(String),
    #[error("unknown control command {0:?}")]
    UnknownCommand(String),
}

impl ClientMessage {
    pub fn parse(text: &str) -> Result<Self, ProtocolError> {
        let raw: RawClient = serde_json::from_str(text).map_err(|e| ProtocolError::Malformed(e.to_string()))?;
        Ok(match raw {
            RawClient::Hello { name } => ClientMessage::Hello { name },
            RawClient::Assign { slot } => ClientMessage::Assign { slot: slot.into() },
            RawClient::Input { action } => ClientMessage::Input {
                action: action.parse().map_err(|_| ProtocolError::UnknownAction(action))?,
            },
            RawClient::Control { cmd } => ClientMessage::Control {
                cmd: match cmd.as_str() {
                    "start" => ControlCmd::Start,
                    "pause" => ControlCmd::Pause,
                    "reset" => ControlCmd::Reset,
                    _ => return Err(ProtocolError::UnknownCommand(cmd)),
                },
            },
        })
    }

    /// The JSON text a client sends for this message.
    pub fn to_json(&self) -> String {
        let value = match self {
            ClientMessage::Hello { name } => serde_json::json!({"type": "hello", "name": name}),
            ClientMessage::Assign { slot } => serde_json::json!({"type": "assign", "slot": WireSlot::from(*slot)}),
            ClientMessage::Input { action } => serde_json::json!({"type": "input", "action": action.name()}),
            ClientMessage::Control { cmd } => {
                let cmd = match cmd {
                    ControlCmd::Start => "start",
                    ControlCmd::Pause => "pause",
                    ControlCmd::Reset => "reset",
                };
                serde_json::json!({"type": "control", "cmd": cmd})
            }
        };
        value.to_string()
    }
}

/// The ball, flattened: `state` is `controlled`, `in_flight` or `loose`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireBall {
    pub state: String,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub owner: Option<WireSlot>,
    /// `pass` or `shot` while in flight.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
}

impl WireBall {
    pub fn of(state: &GameState) -> Self {
        let pos = state.ball_pos();
        let (name, vel, owner, kind) = match state.ball {
            BallState::Controlled { owner } => ("controlled", state.player(owner).vel, Some(owner.into()), None),
            BallState::InFlight { vel, flight, .. } => {
                let kind = match flight {
                    Flight::Pass { .. } => "pass",
                    Flight::Shot { .. } => "shot",
                };
                ("in_flight", vel, None, Some(kind.to_string()))
            }
            BallState::Loose { vel, .. } => ("loose", vel, None, None),
        };
        Self {
            state: name.to_string(),
            x: pos.x,
            y: pos.y,
            vx: vel.x,
            vy: vel.y,
            owner,
            kind,
        }
    }
}

/// How a seat is driven, as reported in the handshake.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotInfo {
    pub team: TeamId,
    pub index: usize,
    /// `human`, `scripted` or `policy`.
    pub controller: String,
    /// Whether a client is bound to this human seat.
    pub bound: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Hello {
        client: u64,
        owner: bool,
        /// `live` or `replay`.
        mode: String,
        k: usize,
        tick_rate: f64,
        episode_length: u64,
        config_hash: String,
        slots: Vec<SlotInfo>,
        warnings: Vec<String>,
        seq: u64,
    },
    Assigned {
        slot: WireSlot,
        seq: u64,
    },
    Status {
        running: bool,
        owner: bool,
        seq: u64,
    },
    State {
        tick: u64,
        players: Vec<PlayerFrame>,
        ball: WireBall,
        score: Score,
        phase: String,
        seq: u64,
    },
    Event {
        tick: u64,
        event: EventKind,
        seq: u64,
    },
    Error {
        msg: String,
        seq: u64,
    },
}

impl ServerMessage {
    pub fn state(state: &GameState, seq: u64) -> Self {
        ServerMessage::State {
            tick: state.tick,
            players: PlayerFrame::all(state),
            ball: WireBall::of(state),
            score: state.score,
            phase: state.phase.name().to_string(),
            seq,
        }
    }

    pub fn event(event: &GameEvent, seq: u64) -> Self {
        ServerMessage::Event {
            tick: event.tick,
            event: event.kind,
            seq,
        }
    }

    pub fn seq(&self) -> u64 {
        match *self {
            ServerMessage::Hello { seq, .. }
            | ServerMessage::Assigned { seq, .. }
            | ServerMessage::Status { seq, .. }
            | ServerMessage::State { seq, .. }
            | ServerMessage::Event { seq, .. }
            | ServerMessage::Error { seq, .. } => seq,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use sts2::sim::{GameConfig, Match};

    #[test]
    fn parses_the_client_alphabet() {
        assert_eq!(
            ClientMessage::parse(r#"{"type":"hello","name":"ann"}"#),
            Ok(ClientMessage::Hello { name: "ann".into() })
        );
        assert_eq!(
            ClientMessage::parse(r#"{"type":"assign","slot":{"team":"away","index":1}}"#),
            Ok(ClientMessage::Assign {
                slot: PlayerId::away(1)
            })
        );
        assert_eq!(
            ClientMessage::parse(r#"{"type":"input","action":"Shoot","seq":4}"#),
            Ok(ClientMessage::Input { action: Action::Shoot })
        );
        assert_eq!(
            ClientMessage::parse(r#"{"type":"control","cmd":"pause"}"#),
            Ok(ClientMessage::Control { cmd: ControlCmd::Pause })
        );
    }

    #[test]
    fn rejects_outside_the_alphabet() {
        assert_eq!(
            ClientMessage::parse(r#"{"type":"input","action":"Jump"}"#),
            Err(ProtocolError::UnknownAction("Jump".into()))
        );
        assert_eq!(
            ClientMessage::parse(r#"{"type":"control","cmd":"stop"}"#),
            Err(ProtocolError::UnknownCommand("stop".into()))
        );
        for bad in ["{", "[]", r#"{"type":"fly"}"#, r#"{"type":"assign"}"#, r#"{"action":"Shoot"}"#] {
            assert!(matches!(ClientMessage::parse(bad), Err(ProtocolError::Malformed(_))), "{bad}");
        }
    }

    #[test]
    fn client_messages_round_trip() {
        for msg in [
            ClientMessage::Hello { name: "x".into() },
            ClientMessage::Assign { slot: PlayerId::home(1) },
            ClientMessage::Input { action: Action::Left },
            ClientMessage::Control { cmd: ControlCmd::Reset },
        ] {
            assert_eq!(ClientMessage::parse(&msg.to_json()), Ok(msg));
        }
    }

    #[test]
    fn state_message_uses_the_normative_field_names() {
        let m = Match::new(GameConfig::with_k(1)).unwrap();
        let json: serde_json::Value = serde_json::from_str(&ServerMessage::state(m.state(), 7).to_json()).unwrap();
        assert_eq!(json["type"], "state");
        assert_eq!(json["seq"], 7);
        assert_eq!(json["phase"], "faceoff");
        for key in ["team", "index", "x", "y", "vx", "vy", "has_ball"] {
            assert!(json["players"][0].get(key).is_some(), "{key}");
        }
        assert_eq!(json["players"][0]["team"], "home");
        assert!(json["score"]["home"].is_u64() && json["score"]["away"].is_u64());
        assert!(json["ball"]["state"].is_string());
    }
}
