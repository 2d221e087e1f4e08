//! Fast correctness suites: determinism, gradients, reward accounting, the
//! scripted defender's center-line rule, the statistics oracle, simulator
//! throughput and checkpoint round-trips.
//!
//! Each suite returns a [`CheckResult`]; sizes are parameters so the CLI can
//! run quick versions and the acceptance target the full ones.

use std::fmt;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sts2::agents::{
    dqn_loss, dqn_loss_and_grad, surrogate_loss, surrogate_loss_and_grad, DqnAgent, DqnConfig, LossKind, PpoAgent,
    PpoConfig, Rollout, SurrogateBatch, Transition,
};
use sts2::nn::Mlp;
use sts2::replay::record_episode;
use sts2::rewards::{compute_rewards, PossessionScope, RewardSpec};
use sts2::scripted::{decide, scripted_action, Rule, ScriptedProfile};
use sts2::sim::{
    integrate_player, observation_len, Action, BallState, EventKind, Exchange, GameConfig, GameEvent, GamePhase,
    GameState, Match, PlayerId, PlayerState, Score, TeamId, Vec2,
};

use crate::checkpoint::{Checkpoint, CheckpointError};
use crate::evaluate::evaluate_lineup;
use crate::slots::{Lineup, SlotAssignment, SlotSpec};
use crate::stats::MatchStats;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &'static str, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name,
            passed,
            detail: detail.into(),
        }
    }
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{verdict} {}: {}", self.name, self.detail)
    }
}

fn scripted_controls(m: &Match, profiles: &[ScriptedProfile]) -> Vec<Option<Action>> {
    let state = m.state();
    state
        .ids()
        .zip(profiles)
        .map(|(id, p)| Some(scripted_action(state, m.config(), id, p)))
        .collect()
}

/// Pairs of full scripted episodes from random configurations must produce
/// byte-identical replay logs.
pub fn determinism(pairs: usize, seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mismatches = Vec::new();
    let mut ticks = 0usize;
    for _ in 0..pairs {
        let config = GameConfig {
            k: rng.random_range(1..=3),
            randomize_start: rng.random(),
            seed: rng.random(),
            steal_probability_per_tick: rng.random_range(0.0..0.2),
            ..GameConfig::default()
        };
        let profiles: Vec<_> = (0..2 * config.k)
            .map(|_| {
                if rng.random() {
                    ScriptedProfile::normal(&config)
                } else {
                    ScriptedProfile::easy(&config)
                }
            })
            .collect();
        let run = || record_episode(&config, |m| scripted_controls(m, &profiles)).map(|log| log.to_ndjson());
        match (run(), run()) {
            (Ok(a), Ok(b)) if a == b => ticks += config.episode_length as usize,
            (Ok(_), Ok(_)) => mismatches.push(format!("seed {} differs", config.seed)),
            (Err(e), _) | (_, Err(e)) => mismatches.push(format!("seed {}: {e}", config.seed)),
        }
    }
    let detail = if mismatches.is_empty() {
        format!("{pairs} episode pairs ({ticks} ticks each side) byte-identical")
    } else {
        mismatches.join("; ")
    };
    CheckResult::new("determinism", mismatches.is_empty(), detail)
}

fn relative_error(fd: f64, analytic: f64) -> f64 {
    (fd - analytic).abs() / fd.abs().max(analytic.abs()).max(1e-6)
}

/// Largest relative error between `grad` and central differences of `loss`.
fn max_fd_error(net: &Mlp, grad: &[f64], h: f64, loss: impl Fn(&Mlp) -> f64) -> f64 {
    (0..net.params().len())
        .map(|i| {
            let mut plus = net.clone();
            plus.params_mut()[i] += h;
            let mut minus = net.clone();
            minus.params_mut()[i] -= h;
            relative_error((loss(&plus) - loss(&minus)) / (2.0 * h), grad[i])
        })
        .fold(0.0, f64::max)
}

/// DQN TD-loss and PPO clipped-surrogate gradients against central finite
/// differences with step `1e-6`.
pub fn gradients(instances: usize, seed: u64) -> CheckResult {
    const H: f64 = 1e-6;
    const TOL: f64 = 1e-4;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_dqn: f64 = 0.0;
    let mut worst_ppo: f64 = 0.0;
    for _ in 0..instances {
        let obs_len = rng.random_range(2..6);
        let actions = rng.random_range(2..6);
        let hidden = rng.random_range(2..7);
        let sizes = [obs_len, hidden, actions];
        let online = Mlp::init(&sizes, rng.random()).expect("valid sizes");
        let target = Mlp::init(&sizes, rng.random()).expect("valid sizes");
        let batch: Vec<Transition> = (0..rng.random_range(1..9))
            .map(|_| Transition {
                obs: (0..obs_len).map(|_| rng.random_range(-1.0..1.0)).collect(),
                action: rng.random_range(0..actions),
                reward: rng.random_range(-1.0..1.0),
                next_obs: (0..obs_len).map(|_| rng.random_range(-1.0..1.0)).collect(),
                done: rng.random_bool(0.2),
            })
            .collect();
        let refs: Vec<_> = batch.iter().map(Transition::as_ref).collect();
        let gamma = rng.random_range(0.5..1.0);
        for kind in [LossKind::Mse, LossKind::Huber] {
            let (_, g) = dqn_loss_and_grad(&online, &target, &refs, gamma, kind).expect("valid batch");
            let err = max_fd_error(&online, g.as_slice(), H, |net| {
                dqn_loss(net, &target, &refs, gamma, kind).expect("valid batch")
            });
            worst_dqn = worst_dqn.max(err);
        }

        let agent = PpoAgent::new(
            obs_len,
            actions,
            PpoConfig {
                hidden: vec![hidden],
                ..PpoConfig::default()
            },
            rng.random(),
        )
        .expect("valid config");
        let n = rng.random_range(2..13);
        let mut rollout = Rollout::new(obs_len);
        for t in 0..n {
            let obs: Vec<f64> = (0..obs_len).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (a, logp, v) = agent.policy(&obs, &mut rng).expect("valid obs");
            // Perturb the behaviour log-probs so some ratios leave the clip range.
            let logp = logp + rng.random_range(-0.5..0.5);
            rollout.push(&obs, a, logp, v, rng.random_range(-1.0..1.0), t == n - 1);
        }
        rollout.finish(0.0, 0.99, 0.95, true).expect("complete rollout");
        let indices: Vec<usize> = (0..n).collect();
        let batch = SurrogateBatch {
            rollout: &rollout,
            indices: &indices,
            clip_ratio: 0.2,
            entropy_coef: rng.random_range(0.0..0.05),
        };
        let (_, g) = surrogate_loss_and_grad(&agent.policy, &batch).expect("valid batch");
        let err = max_fd_error(&agent.policy, g.as_slice(), H, |net| {
            surrogate_loss(net, &batch).expect("valid batch")
        });
        worst_ppo = worst_ppo.max(err);
    }
    CheckResult::new(
        "gradients",
        worst_dqn <= TOL && worst_ppo <= TOL,
        format!(
            "{instances} instances: max relative error DQN {worst_dqn:.2e}, PPO {worst_ppo:.2e} (tolerance {TOL:.0e})"
        ),
    )
}

fn random_player(rng: &mut ChaCha8Rng, k: usize) -> PlayerId {
    PlayerId::from_slot(rng.random_range(0..2 * k), k)
}

fn random_exchange(rng: &mut ChaCha8Rng) -> Exchange {
    [Exchange::OpponentTeam, Exchange::OwnTeamPass, Exchange::Loose][rng.random_range(0..3)]
}

fn random_events(rng: &mut ChaCha8Rng, k: usize, tick: u64) -> Vec<GameEvent> {
    (0..rng.random_range(0..8))
        .map(|_| {
            let p = random_player(rng, k);
            let kind = match rng.random_range(0..5) {
                0 => EventKind::Goal { scorer: p },
                1 => EventKind::PossessionGained {
                    player: p,
                    prior: random_exchange(rng),
                },
                2 => EventKind::PossessionLost {
                    player: p,
                    to: random_exchange(rng),
                },
                3 => EventKind::ShotTaken { shooter: p },
                _ => EventKind::PassCompleted {
                    from: p,
                    to: random_player(rng, k),
                },
            };
            GameEvent::new(tick, kind)
        })
        .collect()
}

/// Weights that are multiples of 1/8 so sums and scalings are exact.
fn dyadic(rng: &mut ChaCha8Rng) -> f64 {
    f64::from(rng.random_range(-16i32..=16)) / 8.0
}

fn random_spec(rng: &mut ChaCha8Rng, scope: PossessionScope, flags: (bool, bool)) -> RewardSpec {
    RewardSpec {
        score_reward: dyadic(rng),
        concede_reward: dyadic(rng),
        possession_gain: dyadic(rng),
        possession_loss: dyadic(rng),
        possession_scope: scope,
        teammate_loss_penalty: dyadic(rng),
        exclude_within_team_passes: flags.0,
        count_loose_ball: flags.1,
    }
}

/// Reward properties on random single-tick event streams: zero-sum scoring,
/// team-scope equality, individual-scope locality, linearity and the
/// teammate asymmetry.
pub fn reward_accounting(streams: usize, seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures: Vec<String> = Vec::new();
    let mut fail = |what: &str, i: usize| {
        if failures.len() < 5 {
            failures.push(format!("{what} (stream {i})"));
        }
    };
    for i in 0..streams {
        let k = rng.random_range(1..=3);
        let tick = rng.random_range(0..3000);
        let events = random_events(&mut rng, k, tick);
        let all: Vec<PlayerId> = (0..2 * k).map(|s| PlayerId::from_slot(s, k)).collect();
        let flags = (rng.random(), rng.random());

        // Zero-sum: symmetric scoring weights, no shaping.
        let w = dyadic(&mut rng);
        let sparse = RewardSpec {
            score_reward: w,
            concede_reward: -w,
            possession_gain: 0.0,
            possession_loss: 0.0,
            teammate_loss_penalty: 0.0,
            ..random_spec(&mut rng, PossessionScope::Individual, flags)
        };
        let r = compute_rewards(&events, &all, &sparse).expect("one tick");
        for h in 0..k {
            for a in 0..k {
                if r[&PlayerId::home(h)] + r[&PlayerId::away(a)] != 0.0 {
                    fail("zero-sum", i);
                }
            }
        }

        // Team scope without teammate penalty: teammates earn the same.
        let team = RewardSpec {
            teammate_loss_penalty: 0.0,
            ..random_spec(&mut rng, PossessionScope::Team, flags)
        };
        let r = compute_rewards(&events, &all, &team).expect("one tick");
        for t in TeamId::BOTH {
            if (1..k).any(|j| r[&PlayerId::new(t, j)] != r[&PlayerId::new(t, 0)]) {
                fail("team equality", i);
            }
        }

        // Individual scope: other players' possession events are irrelevant.
        let indiv = RewardSpec {
            teammate_loss_penalty: 0.0,
            ..random_spec(&mut rng, PossessionScope::Individual, flags)
        };
        let learner = random_player(&mut rng, k);
        let own: Vec<GameEvent> = events
            .iter()
            .copied()
            .filter(|e| match e.kind {
                EventKind::PossessionGained { player, .. } | EventKind::PossessionLost { player, .. } => player == learner,
                _ => true,
            })
            .collect();
        if indiv.reward_for(&events, learner) != indiv.reward_for(&own, learner) {
            fail("individual locality", i);
        }

        // Linearity in the weights for matching scope and flags.
        let scope = if rng.random() {
            PossessionScope::Team
        } else {
            PossessionScope::Individual
        };
        let a = random_spec(&mut rng, scope, flags);
        let b = random_spec(&mut rng, scope, flags);
        let sum = a.checked_add(&b).expect("same scope and flags");
        let ra = compute_rewards(&events, &all, &a).expect("one tick");
        let rb = compute_rewards(&events, &all, &b).expect("one tick");
        let rs = compute_rewards(&events, &all, &sum).expect("one tick");
        if all.iter().any(|p| rs[p] != ra[p] + rb[p]) {
            fail("linearity", i);
        }

        // Teammate asymmetry: a teammate's gain is worth nothing, its loss to
        // the opponents costs exactly the penalty.
        if k > 1 {
            let spec = RewardSpec {
                teammate_loss_penalty: -0.75,
                ..random_spec(&mut rng, PossessionScope::Individual, flags)
            };
            let learner = random_player(&mut rng, k);
            let mate = PlayerId::new(learner.team, (learner.index + 1) % k);
            let base = spec.reward_for(&events, learner);
            let mut gained = events.clone();
            gained.push(GameEvent::new(
                tick,
                EventKind::PossessionGained {
                    player: mate,
                    prior: random_exchange(&mut rng),
                },
            ));
            let mut lost = events.clone();
            lost.push(GameEvent::new(
                tick,
                EventKind::PossessionLost {
                    player: mate,
                    to: Exchange::OpponentTeam,
                },
            ));
            if spec.reward_for(&gained, learner) != base || spec.reward_for(&lost, learner) != base - 0.75 {
                fail("teammate asymmetry", i);
            }
        }
    }
    let passed = failures.is_empty();
    let detail = if passed {
        format!("{streams} random event streams, all five properties exact")
    } else {
        failures.join("; ")
    };
    CheckResult::new("reward accounting", passed, detail)
}

/// Scripted defenders facing a carrier inside the carrier's own half never
/// choose a move that crosses (or goes deeper past) the center line when a
/// non-crossing move exists.
pub fn scripted_quirk(states: usize, seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0usize;
    let mut forced = 0usize;
    let mut decisions = 0usize;
    for _ in 0..states {
        let k = rng.random_range(1..=3);
        let config = GameConfig::with_k(k);
        let profile = if rng.random() {
            ScriptedProfile::normal(&config)
        } else {
            ScriptedProfile::easy(&config)
        };
        let (w, l, v) = (config.half_width, config.half_length, config.max_speed);
        let players: Vec<PlayerState> = (0..2 * k)
            .map(|_| {
                let heading = rng.random_range(0.0..std::f64::consts::TAU);
                let speed = rng.random_range(0.0..=v);
                PlayerState {
                    pos: Vec2::new(rng.random_range(-w..=w), rng.random_range(-l..=l)),
                    vel: Vec2::new(heading.cos(), heading.sin()) * speed,
                }
            })
            .collect();
        let carrier = random_player(&mut rng, k);
        let mut state = GameState {
            tick: 1,
            players,
            ball: BallState::Controlled { owner: carrier },
            score: Score::default(),
            phase: GamePhase::Play,
        };
        let slot = carrier.slot(k);
        let y = state.players[slot].pos.y.abs().max(1e-3);
        state.players[slot].pos.y = -carrier.team.attack_sign() * y;

        for me in state.team_ids(carrier.team.opponent()) {
            decisions += 1;
            let (action, rule) = decide(&state, &config, me, &profile);
            let now = *state.player(me);
            let s = me.team.attack_sign();
            let limit = (s * now.pos.y).max(0.0);
            let crosses = |a: Action| s * integrate_player(&config, me.team, now, Some(a)).pos.y > limit;
            let any_safe = Action::MOVES.iter().any(|&a| !crosses(a));
            if !any_safe {
                forced += 1;
            }
            if rule != Rule::HoldPost || !action.is_movement() || (crosses(action) && any_safe) {
                violations += 1;
            }
        }
    }
    CheckResult::new(
        "scripted center-line rule",
        violations == 0,
        format!(
            "{states} states, {decisions} defender decisions, {violations} violations ({forced} where momentum left no non-crossing move)"
        ),
    )
}

fn scripted_slots(k: usize) -> SlotAssignment {
    (0..2 * k).fold(SlotAssignment::new(), |s, slot| {
        s.with(
            PlayerId::from_slot(slot, k),
            SlotSpec::scripted(sts2::scripted::Difficulty::Normal),
        )
    })
}

fn sums_to_100(values: impl Iterator<Item = f64>) -> bool {
    (values.sum::<f64>() - 100.0).abs() < 1e-9
}

/// Online statistics of recorded evaluation episodes against a recount
/// from the replay logs alone.
pub fn stats_oracle(episodes: usize, seed: u64) -> CheckResult {
    let game = GameConfig {
        randomize_start: true,
        ..GameConfig::with_k(2)
    };
    let lineup = match Lineup::resolve(&scripted_slots(2), &game, |_| unreachable!("no checkpoints")) {
        Ok(l) => l,
        Err(e) => return CheckResult::new("stats oracle", false, e.to_string()),
    };
    let out = match evaluate_lineup(&game, &lineup, episodes, seed, true) {
        Ok(o) => o,
        Err(e) => return CheckResult::new("stats oracle", false, e.to_string()),
    };
    let recount = MatchStats::from_replays(&out.replays);
    let equal = recount == out.stats;
    let rows = out.stats.rows();
    let goals = out.stats.total_goals();
    let possessed = out.stats.total_possession();
    let score_ok = goals > 0 && sums_to_100(rows.iter().map(|r| r.score_rate));
    let poss_ok = possessed > 0 && sums_to_100(rows.iter().map(|r| r.possession));
    CheckResult::new(
        "stats oracle",
        equal && score_ok && poss_ok,
        format!(
            "{episodes} episodes: recount {}, {goals} goals, {possessed} possessed ticks, score-rate row sums to 100: {score_ok}, possession row: {poss_ok}",
            if equal { "identical" } else { "DIFFERS" }
        ),
    )
}

/// Ticks per second of a headless scripted 2v2 match on this thread.
pub fn throughput(duration: Duration, required: f64) -> CheckResult {
    let config = GameConfig {
        randomize_start: true,
        ..GameConfig::with_k(2)
    };
    let profiles = vec![ScriptedProfile::normal(&config); 4];
    let mut m = Match::new(config).expect("default config is valid");
    let mut actions = vec![None; 4];
    let mut events = Vec::new();
    let mut ticks = 0u64;
    let start = Instant::now();
    while start.elapsed() < duration {
        for _ in 0..1000 {
            if m.is_finished() {
                m.reset_episode();
            }
            let state = m.state();
            for (slot, p) in profiles.iter().enumerate() {
                actions[slot] = Some(scripted_action(state, m.config(), PlayerId::from_slot(slot, 2), p));
            }
            events.clear();
            m.step_slots_into(&actions, &mut events).expect("valid actions");
            ticks += 1;
        }
    }
    let rate = ticks as f64 / start.elapsed().as_secs_f64();
    CheckResult::new(
        "throughput",
        rate >= required,
        format!("{rate:.0} ticks/s over {ticks} ticks (required {required:.0})"),
    )
}

/// Save/load through a file reproduces greedy actions exactly; damaged
/// files fail with typed errors.
pub fn checkpoint_roundtrip(observations: usize, seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let obs_len = observation_len(2);
    let mut dqn = DqnAgent::new(
        obs_len,
        36,
        DqnConfig {
            learning_starts: 1,
            learn_every: 1,
            batch_size: 16,
            ..DqnConfig::default()
        },
        rng.random(),
    )
    .expect("valid config");
    let random_obs = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..obs_len).map(|_| rng.random_range(-1.1..1.1)).collect() };
    for _ in 0..64 {
        let (obs, next) = (random_obs(&mut rng), random_obs(&mut rng));
        let t = Transition {
            obs,
            action: rng.random_range(0..36),
            reward: rng.random_range(-1.0..1.0),
            next_obs: next,
            done: false,
        };
        dqn.observe(t.as_ref()).expect("valid transition");
    }
    let ppo = PpoAgent::new(obs_len, Action::COUNT, PpoConfig::default(), rng.random()).expect("valid config");
    let ckpts = [
        Checkpoint::from_dqn(&dqn, "selfcheck", vec![PlayerId::home(0), PlayerId::home(1)]),
        Checkpoint::from_ppo(&ppo, 0, "selfcheck", vec![PlayerId::home(0)]),
    ];

    let dir = std::env::temp_dir().join(format!("sts2-selfcheck-{}-{seed}", std::process::id()));
    let mut problems = Vec::new();
    if let Err(e) = std::fs::create_dir_all(&dir) {
        return CheckResult::new("checkpoint round-trip", false, e.to_string());
    }
    let mut compared = 0usize;
    for (i, ckpt) in ckpts.iter().enumerate() {
        let path = dir.join(format!("{i}.ckpt"));
        let loaded = ckpt.save(&path).and_then(|_| Checkpoint::load(&path));
        let loaded = match loaded {
            Ok(l) => l,
            Err(e) => {
                problems.push(format!("checkpoint {i}: {e}"));
                continue;
            }
        };
        if loaded != *ckpt {
            problems.push(format!("checkpoint {i}: loaded state differs"));
        }
        let (a, b) = (ckpt.frozen_policy(), loaded.frozen_policy());
        for _ in 0..observations {
            let obs = random_obs(&mut rng);
            compared += 1;
            if a.net.forward(&obs).ok() != b.net.forward(&obs).ok() || a.greedy(&obs).ok() != b.greedy(&obs).ok() {
                problems.push(format!("checkpoint {i}: greedy action differs"));
                break;
            }
        }
    }
    let _ = std::fs::remove_dir_all(&dir);

    let bytes = ckpts[0].to_bytes();
    let mut typed = 0;
    let mut expect = |what: &str, data: &[u8], ok: fn(&CheckpointError) -> bool| match Checkpoint::from_bytes(data) {
        Err(e) if ok(&e) => typed += 1,
        Err(e) => problems.push(format!("{what}: unexpected error {e}")),
        Ok(_) => problems.push(format!("{what}: accepted")),
    };
    for cut in [0, 7, 9, 13, 30, bytes.len() / 2, bytes.len() - 1] {
        expect("truncated", &bytes[..cut], |e| matches!(e, CheckpointError::Truncated { .. }));
    }
    let mut magic = bytes.clone();
    magic[..8].copy_from_slice(b"NOTACKPT");
    expect("bad magic", &magic, |e| {
        matches!(e, CheckpointError::BadMagic { .. }) && e.to_string().contains("STS2CKPT")
    });
    let mut version = bytes.clone();
    version[8] = 0xff;
    expect("bad version", &version, |e| matches!(e, CheckpointError::UnsupportedVersion { .. }));
    let mut trailing = bytes.clone();
    trailing.extend_from_slice(&[0; 3]);
    expect("trailing bytes", &trailing, |e| matches!(e, CheckpointError::TrailingBytes(3)));
    let mut meta = bytes.clone();
    meta[14] = b'!';
    expect("corrupt metadata", &meta, |e| matches!(e, CheckpointError::Metadata(_)));

    CheckResult::new(
        "checkpoint round-trip",
        problems.is_empty(),
        if problems.is_empty() {
            format!("{compared} observations agree across 2 checkpoints; {typed} damaged files rejected with typed errors")
        } else {
            problems.join("; ")
        },
    )
}

/// All suites at reduced sizes, for the `selfcheck` command.
pub fn run_quick(seed: u64) -> Vec<CheckResult> {
    vec![
        determinism(3, seed),
        gradients(20, seed),
        reward_accounting(2_000, seed),
        scripted_quirk(2_000, seed),
        stats_oracle(10, seed),
        throughput(Duration::from_secs(1), 50_000.0),
        checkpoint_roundtrip(200, seed),
    ]
}
