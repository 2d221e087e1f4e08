use std::path::Path;
use std::process::{Command, Output};

fn sts2(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sts2"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn ok(args: &[&str]) -> String {
    let out = sts2(args);
    assert!(
        out.status.success(),
        "sts2 {args:?} failed:\n{}\n{}",
        stdout(&out),
        String::from_utf8_lossy(&out.stderr)
    );
    stdout(&out)
}

fn write_experiment(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("tiny.toml");
    std::fs::write(
        &path,
        r#"name = "tiny"
seed = 3
budget = 1500
eval_every = 1000
eval_episodes = 2

[game]
k = 1
episode_length = 300

[slots]
home0 = { kind = "learner" }
away0 = { kind = "scripted", difficulty = "easy" }

[reward]
preset = "individual_possession"

[algo]
kind = "dqn"
[algo.dqn]
hidden = [16]
learning_starts = 200
"#,
    )
    .unwrap();
    path
}

#[test]
fn train_then_evaluate_and_crossplay_the_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_experiment(dir.path());
    let out = dir.path().join("run");
    let text = ok(&["train", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(text.contains("score rate"), "{text}");
    let ckpt = out.join("final.ckpt");
    assert!(ckpt.exists());
    let metrics = std::fs::read_to_string(out.join("metrics.ndjson")).unwrap();
    assert_eq!(metrics.lines().count(), 2);

    let json = ok(&["eval", "--checkpoint", ckpt.to_str().unwrap(), "--episodes", "3", "--json"]);
    let stats: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(stats["episodes"], 3);
    assert!(stats["players"]["home0"].is_object());

    let table = ok(&[
        "eval",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--slots",
        "away0=checkpoint,home0=scripted:easy",
        "--episodes",
        "2",
    ]);
    assert!(table.contains("Away#0"), "{table}");

    let c = ckpt.to_str().unwrap();
    let cross = ok(&["crossplay", "--a", c, "--b", c, "--episodes", "4", "--json"]);
    let outcome: serde_json::Value = serde_json::from_str(&cross).unwrap();
    assert_eq!(outcome["combined"]["episodes"], 4);
}

#[test]
fn bad_inputs_fail_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    std::fs::write(&config, "name = \"x\"\nbogus = 1\n").unwrap();
    let out = sts2(&["train", "--config", config.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));

    let out = sts2(&["preset", "EXP-T9"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown preset"));

    let junk = dir.path().join("junk.ckpt");
    std::fs::write(&junk, b"not a checkpoint at all").unwrap();
    let out = sts2(&["eval", "--checkpoint", junk.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("STS2CKPT"));
}

#[test]
fn preset_list_names_every_experiment() {
    let text = ok(&["preset"]);
    assert_eq!(text.lines().count(), 10);
    assert!(text.contains("EXP-PPO-LOCALMIN"));
}

#[test]
fn selfcheck_passes() {
    let text = ok(&["selfcheck"]);
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 7, "{text}");
}

#[test]
fn headless_serve_records_a_verifiable_replay() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("match.ndjson");
    ok(&[
        "serve",
        "--k",
        "1",
        "--slots",
        "home0=scripted,away0=scripted:easy",
        "--addr",
        "127.0.0.1:0",
        "--tick-rate",
        "2000",
        "--record",
        log.to_str().unwrap(),
        "--exit-when-over",
    ]);
    let text = ok(&["replay", "--in", log.to_str().unwrap(), "--verify"]);
    assert!(text.contains("3000 ticks"), "{text}");
    assert!(text.contains("re-simulation matches every tick"), "{text}");
}
