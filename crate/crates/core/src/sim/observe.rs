//! Canonical observation vector.
//!
//! Layout for a k-vs-k match (length `10k + 3`): one block of five values per
//! player, viewer first, then the viewer's teammates by index, then opponents
//! by index:
//!
//! ```text
//! [x / half_width, y' / half_length, vx / max_speed, vy' / max_speed, has_ball]
//! ```
//!
//! followed by `[attack, ball_loose, ticks_remaining / episode_length]`.
//!
//! Coordinates are expressed in the viewer's attacking frame: `y' = sign * y`
//! where `sign` is the viewer team's attack sign, so "up" is always toward
//! the goal the viewer attacks. Consequently the `attack` entry, which is the
//! attack direction measured in that frame, is always `+1`, and a Home viewer
//! and the mirrored Away viewer of the y-mirrored state see identical vectors.
//! This is what lets one policy play either end.

use super::types::{BallState, GameState, PlayerId};
use super::GameConfig;

pub fn observation_len(k: usize) -> usize {
    10 * k + 3
}

/// Encodes `state` from `viewer`'s point of view.
pub fn encode_observation(state: &GameState, config: &GameConfig, viewer: PlayerId) -> Vec<f64> {
    let mut out = vec![0.0; observation_len(state.players_per_team())];
    encode_observation_into(state, config, viewer, &mut out);
    out
}

/// Writes the observation into `out`, which must have length `10k + 3`.
pub fn encode_observation_into(state: &GameState, config: &GameConfig, viewer: PlayerId, out: &mut [f64]) {
    let k = state.players_per_team();
    assert_eq!(out.len(), observation_len(k), "observation buffer length");
    let sign = viewer.team.attack_sign();
    let owner = state.ball.owner();

    let order = std::iter::once(viewer)
        .chain(state.team_ids(viewer.team).filter(|&id| id != viewer))
        .chain(state.team_ids(viewer.team.opponent()));
    for (block, id) in out.chunks_exact_mut(5).zip(order) {
        let p = state.player(id);
        block[0] = p.pos.x / config.half_width;
        block[1] = sign * p.pos.y / config.half_length;
        block[2] = p.vel.x / config.max_speed;
        block[3] = sign * p.vel.y / config.max_speed;
        block[4] = if owner == Some(id) { 1.0 } else { 0.0 };
    }

    let tail = &mut out[10 * k..];
    tail[0] = 1.0;
    tail[1] = if matches!(state.ball, BallState::Loose { .. }) { 1.0 } else { 0.0 };
    let remaining = config.episode_length.saturating_sub(state.tick);
    tail[2] = remaining as f64 / config.episode_length as f64;
}
