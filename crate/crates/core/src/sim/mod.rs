//! Deterministic fixed-timestep k-vs-k match engine.
//!
//! The arena spans `[-half_width, half_width] x [-half_length, half_length]`.
//! Home attacks the goal on the `y = +half_length` line, Away the one on
//! `y = -half_length`; both goal mouths are centered on `x = 0`.
//!
//! A tick of play resolves in a fixed order:
//!
//! 1. movement: accelerate along the action axis, friction, speed cap,
//!    integrate, wall clamp;
//! 2. the carrier's ball action (`Pass` to the nearest teammate, `Shoot`
//!    toward the center of the attacked goal mouth);
//! 3. ball flight: blocks/interceptions, goals, misses, pass completion,
//!    loose-ball rolling;
//! 4. possession contest: loose-ball pickup, then steal attempts;
//! 5. scoring: a goal bumps the score and restarts from a faceoff in which
//!    the conceding team lines up closer to the ball;
//! 6. timeout at `episode_length`.
//!
//! Goals do not end an episode; only the timeout does.

mod config;
mod engine;
mod observe;
mod types;

pub use config::GameConfig;
pub use engine::{integrate_player, pass_target, possession_indicator, Match, StartLayout};
pub use observe::{encode_observation, encode_observation_into, observation_len};
pub use types::*;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("invalid config: {field}: {bound}")]
    InvalidConfig { field: &'static str, bound: String },
    #[error("episode is finished; reset before stepping")]
    Finished,
    #[error("unknown player {0}")]
    UnknownPlayer(PlayerId),
    #[error("{0}")]
    InvalidArgument(String),
}
