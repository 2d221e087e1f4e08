use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use sts2::replay::{verify, ReplayLog};
use sts2::sim::GameConfig;
use sts2_cli::{checkpoint_slots, k_of, parse_slots, SessionFile};
use sts2_harness::evaluate::load_checkpoint;
use sts2_harness::presets::{self, PresetOptions};
use sts2_harness::selfcheck;
use sts2_harness::{crossplay, evaluate, train, ExperimentConfig, MatchStats, SlotAssignment, Team};
use sts2_server::{Server, Session, SessionConfig};

#[derive(Parser)]
#[command(name = "sts2", version, about = "Simulator, training harness and match server for sts2")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an agent from an experiment file.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the file's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the file's step budget.
        #[arg(long)]
        budget: Option<u64>,
        /// Output directory; defaults to runs/<name>.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Greedy evaluation of a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Lineup such as `home0=checkpoint,away0=scripted:easy`; unlisted
        /// slots play scripted. Defaults to the checkpoint's own slots.
        #[arg(long)]
        slots: Option<String>,
        #[arg(long, default_value_t = 500)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Print the statistics as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Two teams of checkpoints against each other, swapping ends halfway.
    Crossplay {
        /// Team A: one checkpoint for every seat, or one per seat.
        #[arg(long, value_delimiter = ',', required = true)]
        a: Vec<PathBuf>,
        /// Team B, in the same form.
        #[arg(long, value_delimiter = ',', required = true)]
        b: Vec<PathBuf>,
        #[arg(long, default_value_t = 500)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        json: bool,
    },
    /// Run one of the standard experiments.
    Preset {
        /// Preset name; omit to list them.
        name: Option<String>,
        #[arg(long, default_value = "artifacts")]
        artifacts: PathBuf,
        /// Replaces the training budgets (smoke runs).
        #[arg(long)]
        budget: Option<u64>,
        #[arg(long, default_value_t = 500)]
        episodes: usize,
        /// Retrain even when final checkpoints are up to date.
        #[arg(long)]
        force: bool,
    },
    /// Inspect a replay log.
    Replay {
        #[arg(long = "in")]
        input: PathBuf,
        /// Re-simulate the log and check every tick.
        #[arg(long)]
        verify: bool,
    },
    /// Fast correctness suites.
    Selfcheck {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Host a live match (or replay a log) for WebSocket and NDJSON clients.
    Serve {
        /// Session file with game, slots, tick rate and replay path.
        #[arg(long, conflicts_with_all = ["slots", "replay"])]
        session: Option<PathBuf>,
        /// Players per team when no session file is given.
        #[arg(long, default_value_t = 1)]
        k: usize,
        /// Lineup such as `home0=human`; unlisted slots play scripted.
        #[arg(long, default_value = "home0=human")]
        slots: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        tick_rate: Option<f64>,
        /// Write the replay here when the match ends.
        #[arg(long)]
        record: Option<PathBuf>,
        /// Stream this replay instead of playing a match.
        #[arg(long)]
        replay: Option<PathBuf>,
        /// Config hash the replay is expected to have.
        #[arg(long, requires = "replay")]
        expect_hash: Option<String>,
        #[arg(long, default_value = "127.0.0.1:7878")]
        addr: String,
        /// Exit when the match or replay ends.
        #[arg(long)]
        exit_when_over: bool,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn print_stats(stats: &MatchStats, json: bool) {
    if json {
        println!("{}", serde_json::to_string_pretty(stats).expect("stats serialize"));
    } else {
        print!("{}", stats.table());
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Train {
            config,
            seed,
            budget,
            out,
        } => {
            let mut experiment = ExperimentConfig::load(&config)?;
            if let Some(seed) = seed {
                experiment.seed = seed;
            }
            if let Some(budget) = budget {
                experiment.budget = budget;
                experiment.eval_every = experiment.eval_every.min(budget);
            }
            experiment.validate()?;
            let out = out.unwrap_or_else(|| Path::new("runs").join(&experiment.name));
            let outcome = train(&experiment, Some(&out))?;
            print!("{}", outcome.final_eval.table());
            if let Some(path) = outcome.checkpoint_path {
                println!("checkpoint: {}", path.display());
            }
        }
        Command::Eval {
            checkpoint,
            slots,
            episodes,
            seed,
            json,
        } => {
            let ckpt = load_checkpoint(&checkpoint)?;
            let k = k_of(&ckpt)?;
            let slots: SlotAssignment = match slots {
                Some(list) => parse_slots(&list, k, Some(&checkpoint))?,
                None => checkpoint_slots(&ckpt, &checkpoint)?,
            };
            let stats = evaluate(&GameConfig::with_k(k), &slots, episodes, seed)?;
            print_stats(&stats, json);
        }
        Command::Crossplay {
            a,
            b,
            episodes,
            seed,
            json,
        } => {
            let k = k_of(&load_checkpoint(&a[0])?)?;
            let team = |paths: Vec<PathBuf>| match paths.len() {
                1 => Ok(Team::single(paths[0].clone(), k)),
                n if n == k => Ok(Team::of_checkpoints(paths)),
                n => bail!("a team needs 1 or {k} checkpoints, got {n}"),
            };
            let outcome = crossplay(&GameConfig::with_k(k), &team(a)?, &team(b)?, episodes, seed)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&outcome)?);
            } else {
                println!("team A (home rows) vs team B (away rows), ends swapped half the time");
                print_stats(&outcome.combined, false);
            }
        }
        Command::Preset {
            name,
            artifacts,
            budget,
            episodes,
            force,
        } => {
            let Some(name) = name else {
                for n in presets::NAMES {
                    println!("{n}");
                }
                return Ok(ExitCode::SUCCESS);
            };
            let options = PresetOptions {
                budget,
                eval_episodes: episodes,
                force,
            };
            let report = presets::run_preset(&name, &artifacts, &options)?;
            print!("{}", report.table());
        }
        Command::Replay { input, verify: check } => {
            let text = std::fs::read_to_string(&input).with_context(|| format!("reading {}", input.display()))?;
            let log = ReplayLog::parse(&text)?;
            let h = &log.header;
            println!(
                "{}-a-side, seed {}, config {}, {} ticks",
                h.config.k,
                h.seed,
                h.config_hash,
                log.ticks.len()
            );
            if let Some(last) = log.ticks.last() {
                println!("final score {}-{}, phase {}", last.score.home, last.score.away, last.phase.name());
            }
            print!("{}", MatchStats::from_replays([&log]).table());
            if check {
                verify(&log)?;
                println!("re-simulation matches every tick");
            }
        }
        Command::Selfcheck { seed } => {
            let results = selfcheck::run_quick(seed);
            for r in &results {
                println!("{r}");
            }
            if results.iter().any(|r| !r.passed) {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Serve {
            session,
            k,
            slots,
            seed,
            tick_rate,
            record,
            replay,
            expect_hash,
            addr,
            exit_when_over,
        } => {
            let session = match (session, replay) {
                (_, Some(path)) => {
                    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                    let rate = tick_rate.unwrap_or(sts2_server::session::DEFAULT_TICK_RATE);
                    Session::playback(ReplayLog::parse(&text)?, rate, expect_hash.as_deref())?
                }
                (file, None) => {
                    let mut config = match file {
                        Some(file) => SessionFile::load(&file)?,
                        None => SessionConfig::new(GameConfig::with_k(k), parse_slots(&slots, k, None)?),
                    };
                    if let Some(seed) = seed {
                        config.game.seed = seed;
                    }
                    if let Some(rate) = tick_rate {
                        config.tick_rate = rate;
                    }
                    if record.is_some() {
                        config.record_replay = record;
                    }
                    Session::live(config)?
                }
            };
            let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
            runtime.block_on(async {
                let server = Server::bind(&addr, session).await?.exit_when_over(exit_when_over);
                log::info!("listening on {}", server.local_addr()?);
                let shutdown = async {
                    let _ = tokio::signal::ctrl_c().await;
                };
                server.run(shutdown).await?;
                anyhow::Ok(())
            })?;
        }
    }
    Ok(ExitCode::SUCCESS)
}
