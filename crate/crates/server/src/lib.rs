//! Live match server for the sts2 simulator.
//!
//! A [`Session`] runs one match at a real-time tick rate, mixing human,
//! scripted and checkpoint controllers, or streams a recorded replay. The
//! [`net::Server`] exposes it over TCP to WebSocket and raw NDJSON clients
//! speaking the JSON messages in [`protocol`].

pub mod error;
pub mod net;
pub mod protocol;
pub mod session;

pub use error::{Result, ServerError};
pub use net::Server;
pub use protocol::{ClientMessage, ControlCmd, ServerMessage};
pub use session::{ClientId, Session, SessionConfig, TickOutcome};
