//! Simple team sports simulator.
//!
//! A deterministic k-vs-k arena game with a six-action alphabet, the rule-based
//! opponent used as a baseline, event-driven reward shaping, and the small
//! dense networks plus DQN/PPO learners that train against it.

pub mod agents;
pub mod nn;
pub mod replay;
pub mod rewards;
pub mod scripted;
pub mod sim;

pub use rewards::{compute_rewards, RewardPreset, RewardSpec};
pub use scripted::{scripted_action, Difficulty, ScriptedProfile};
pub use sim::{Action, GameConfig, GameEvent, GameState, Match, PlayerId, TeamId};
