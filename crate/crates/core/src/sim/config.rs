use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::SimError;

/// Match parameters. Distances are arena units, speeds are arena units per
/// tick and times are ticks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GameConfig {
    /// Players per team.
    pub k: usize,
    pub half_width: f64,
    pub half_length: f64,
    pub goal_mouth_width: f64,
    pub max_speed: f64,
    pub accel_per_tick: f64,
    /// Fraction of velocity lost every tick, in `[0, 1)`.
    pub friction_coeff: f64,
    pub pickup_radius: f64,
    pub steal_radius: f64,
    pub steal_probability_per_tick: f64,
    pub pass_speed: f64,
    pub shot_speed: f64,
    pub block_radius: f64,
    pub episode_length: u64,
    pub faceoff_countdown: u32,
    pub randomize_start: bool,
    pub seed: u64,
}

impl Default for GameConfig {
    fn default() -> Self {
        Self {
            k: 1,
            half_width: 0.5,
            half_length: 1.0,
            goal_mouth_width: 0.3,
            max_speed: 0.02,
            accel_per_tick: 0.004,
            friction_coeff: 0.05,
            pickup_radius: 0.05,
            steal_radius: 0.06,
            steal_probability_per_tick: 0.05,
            pass_speed: 0.05,
            shot_speed: 0.08,
            block_radius: 0.05,
            episode_length: 3000,
            faceoff_countdown: 30,
            randomize_start: false,
            seed: 0,
        }
    }
}

impl GameConfig {
    pub fn with_k(k: usize) -> Self {
        Self {
            k,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        fn bad(field: &'static str, bound: &str) -> SimError {
            SimError::InvalidConfig {
                field,
                bound: bound.to_string(),
            }
        }
        fn positive(field: &'static str, v: f64) -> Result<(), SimError> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(bad(field, "must be finite and > 0"))
            }
        }

        if self.k == 0 {
            return Err(bad("k", "k >= 1"));
        }
        positive("half_width", self.half_width)?;
        positive("half_length", self.half_length)?;
        positive("goal_mouth_width", self.goal_mouth_width)?;
        if self.goal_mouth_width >= 2.0 * self.half_width {
            return Err(bad("goal_mouth_width", "goal_mouth_width < 2 * half_width"));
        }
        positive("max_speed", self.max_speed)?;
        positive("accel_per_tick", self.accel_per_tick)?;
        if !(0.0..1.0).contains(&self.friction_coeff) {
            return Err(bad("friction_coeff", "0 <= friction_coeff < 1"));
        }
        positive("pickup_radius", self.pickup_radius)?;
        positive("steal_radius", self.steal_radius)?;
        if !(0.0..=1.0).contains(&self.steal_probability_per_tick) {
            return Err(bad(
                "steal_probability_per_tick",
                "0 <= steal_probability_per_tick <= 1",
            ));
        }
        positive("pass_speed", self.pass_speed)?;
        positive("shot_speed", self.shot_speed)?;
        positive("block_radius", self.block_radius)?;
        if self.episode_length == 0 {
            return Err(bad("episode_length", "episode_length > 0"));
        }
        Ok(())
    }

    /// Short stable digest of the configuration (first 8 bytes of SHA-256 of
    /// its canonical JSON form), as lowercase hex.
    pub fn hash_hex(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&json);
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn hash_u64(&self) -> u64 {
        u64::from_str_radix(&self.hash_hex(), 16).expect("hex digest")
    }
}
