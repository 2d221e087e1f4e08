//! Argument parsing helpers behind the `sts2` command.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use sts2::scripted::Difficulty;
use sts2::sim::{observation_len, GameConfig, PlayerId};
use sts2_harness::{Checkpoint, SlotAssignment, SlotKey, SlotSpec};
use sts2_server::session::{SessionConfig, DEFAULT_TICK_RATE};

/// Players per team of the match a checkpoint was trained in.
pub fn k_of(ckpt: &Checkpoint) -> Result<usize> {
    let k = ckpt.obs_len.saturating_sub(3) / 10;
    if k == 0 || observation_len(k) != ckpt.obs_len {
        bail!("checkpoint observes {} values, which fits no match size", ckpt.obs_len);
    }
    Ok(k)
}

/// One slot value of a `--slots` list.
///
/// `human`, `scripted`, `scripted:easy`, `scripted:normal`, `checkpoint`
/// (the `--checkpoint` file) or a checkpoint path.
pub fn parse_slot_value(value: &str, checkpoint: Option<&Path>) -> Result<SlotSpec> {
    Ok(match value {
        "human" => SlotSpec::Human,
        "scripted" | "scripted:normal" => SlotSpec::scripted(Difficulty::Normal),
        "scripted:easy" => SlotSpec::scripted(Difficulty::Easy),
        "checkpoint" => match checkpoint {
            Some(p) => SlotSpec::frozen(p),
            None => bail!("slot value `checkpoint` needs --checkpoint"),
        },
        "learner" => bail!("learner slots only exist during training"),
        path if path.starts_with("scripted:") => bail!("unknown difficulty in {path:?} (easy or normal)"),
        path => SlotSpec::frozen(path),
    })
}

/// Parses `home0=human,away0=scripted:easy,...`. Slots not listed play
/// scripted on normal difficulty.
pub fn parse_slots(list: &str, k: usize, checkpoint: Option<&Path>) -> Result<SlotAssignment> {
    let mut given = BTreeMap::new();
    for entry in list.split(',').map(str::trim).filter(|e| !e.is_empty()) {
        let (key, value) = entry
            .split_once('=')
            .with_context(|| format!("slot entry {entry:?} is not key=value"))?;
        let id: PlayerId = key.parse().map_err(anyhow::Error::msg)?;
        if id.index >= k {
            bail!("slot {} does not exist in a {k}-a-side match", SlotKey(id));
        }
        if given.insert(id, parse_slot_value(value.trim(), checkpoint)?).is_some() {
            bail!("slot {} listed twice", SlotKey(id));
        }
    }
    Ok(fill_scripted(given, k))
}

fn fill_scripted(mut given: BTreeMap<PlayerId, SlotSpec>, k: usize) -> SlotAssignment {
    (0..2 * k).fold(SlotAssignment::new(), |slots, s| {
        let id = PlayerId::from_slot(s, k);
        let spec = given
            .remove(&id)
            .unwrap_or_else(|| SlotSpec::scripted(Difficulty::Normal));
        slots.with(id, spec)
    })
}

/// Default evaluation lineup: the checkpoint in the slots it was trained
/// for, scripted players elsewhere.
pub fn checkpoint_slots(ckpt: &Checkpoint, path: &Path) -> Result<SlotAssignment> {
    let k = k_of(ckpt)?;
    let given = ckpt
        .controlled
        .iter()
        .map(|&id| (id, SlotSpec::frozen(path)))
        .collect();
    Ok(fill_scripted(given, k))
}

/// A match-server session file.
///
/// ```toml
/// tick_rate = 30
/// record_replay = "match.ndjson"
///
/// [game]
/// k = 2
///
/// [slots]
/// home0 = { kind = "human" }
/// home1 = { kind = "frozen", checkpoint = "runs/t4/final.ckpt" }
/// away0 = { kind = "scripted" }
/// away1 = { kind = "scripted", difficulty = "easy" }
/// ```
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionFile {
    #[serde(default)]
    pub game: GameConfig,
    pub slots: SlotAssignment,
    #[serde(default = "default_tick_rate")]
    pub tick_rate: f64,
    #[serde(default)]
    pub record_replay: Option<PathBuf>,
}

fn default_tick_rate() -> f64 {
    DEFAULT_TICK_RATE
}

impl SessionFile {
    /// Reads a session file; relative paths inside it are relative to the
    /// file.
    pub fn load(path: &Path) -> Result<SessionConfig> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let file: SessionFile = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut slots = file.slots;
        for spec in slots.0.values_mut() {
            if let SlotSpec::Frozen { checkpoint } = spec {
                if checkpoint.is_relative() {
                    *checkpoint = base.join(&*checkpoint);
                }
            }
        }
        Ok(SessionConfig {
            game: file.game,
            slots,
            tick_rate: file.tick_rate,
            record_replay: file.record_replay.map(|p| if p.is_relative() { base.join(p) } else { p }),
        })
    }
}

/// The book's chapters, compiled and run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/simulator.md")]
    mod simulator {}
    #[doc = include_str!("../../../book/src/scripted.md")]
    mod scripted {}
    #[doc = include_str!("../../../book/src/rewards.md")]
    mod rewards {}
    #[doc = include_str!("../../../book/src/agents.md")]
    mod agents {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/checkpoints.md")]
    mod checkpoints {}
    #[doc = include_str!("../../../book/src/server.md")]
    mod server {}
    #[doc = include_str!("../../../book/src/reproducing.md")]
    mod reproducing {}
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slot_lists_fill_the_rest_with_scripted_players() {
        let slots = parse_slots("home0=human, away1=scripted:easy", 2, None).unwrap();
        assert_eq!(slots.get(PlayerId::home(0)), Some(&SlotSpec::Human));
        assert_eq!(slots.get(PlayerId::away(1)), Some(&SlotSpec::scripted(Difficulty::Easy)));
        assert_eq!(slots.get(PlayerId::home(1)), Some(&SlotSpec::scripted(Difficulty::Normal)));
        assert_eq!(slots.0.len(), 4);
    }

    #[test]
    fn slot_lists_reject_nonsense() {
        for bad in ["home0", "home2=human", "mid0=human", "home0=human,home0=scripted", "home0=learner"] {
            assert!(parse_slots(bad, 2, None).is_err(), "{bad}");
        }
        assert!(parse_slots("home0=checkpoint", 1, None).is_err());
        let ckpt = Path::new("a.ckpt");
        assert_eq!(
            parse_slots("home0=checkpoint", 1, Some(ckpt)).unwrap().get(PlayerId::home(0)),
            Some(&SlotSpec::frozen(ckpt))
        );
    }

    #[test]
    fn session_files_resolve_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.toml");
        std::fs::write(
            &path,
            "tick_rate = 60\nrecord_replay = \"m.ndjson\"\n[game]\nk = 1\n[slots]\nhome0 = { kind = \"human\" }\naway0 = { kind = \"frozen\", checkpoint = \"x.ckpt\" }\n",
        )
        .unwrap();
        let config = SessionFile::load(&path).unwrap();
        assert_eq!(config.tick_rate, 60.0);
        assert_eq!(config.record_replay, Some(dir.path().join("m.ndjson")));
        assert_eq!(
            config.slots.get(PlayerId::away(0)),
            Some(&SlotSpec::frozen(dir.path().join("x.ckpt")))
        );
        std::fs::write(&path, "[slots]\nhome0 = { kind = \"human\" }\nspeed = 3\n").unwrap();
        assert!(SessionFile::load(&path).is_err());
    }
}
