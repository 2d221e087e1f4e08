use proptest::prelude::*;
use sts2::rewards::{compute_rewards, PossessionScope, RewardPreset, RewardSpec};
use sts2::sim::{EventKind, Exchange, GameEvent, PlayerId};

const K: usize = 2;
const TICK: u64 = 17;

fn arb_player() -> impl Strategy<Value = PlayerId> {
    (0..2 * K).prop_map(|s| PlayerId::from_slot(s, K))
}

fn arb_exchange() -> impl Strategy<Value = Exchange> {
    prop_oneof![Just(Exchange::OpponentTeam), Just(Exchange::OwnTeamPass), Just(Exchange::Loose)]
}

fn arb_event() -> impl Strategy<Value = GameEvent> {
    let kind = prop_oneof![
        arb_player().prop_map(|scorer| EventKind::Goal { scorer }),
        (arb_player(), arb_exchange()).prop_map(|(player, prior)| EventKind::PossessionGained { player, prior }),
        (arb_player(), arb_exchange()).prop_map(|(player, to)| EventKind::PossessionLost { player, to }),
        arb_player().prop_map(|shooter| EventKind::ShotTaken { shooter }),
        (arb_player(), arb_player()).prop_map(|(from, to)| EventKind::PassCompleted { from, to }),
    ];
    kind.prop_map(|k| GameEvent::new(TICK, k))
}

fn arb_events() -> impl Strategy<Value = Vec<GameEvent>> {
    proptest::collection::vec(arb_event(), 0..8)
}

/// Weights that are small multiples of 1/8, so sums are exact in f64.
fn dyadic() -> impl Strategy<Value = f64> {
    (-16i32..=16).prop_map(|n| f64::from(n) / 8.0)
}

fn arb_spec() -> impl Strategy<Value = RewardSpec> {
    (
        (dyadic(), dyadic(), dyadic(), dyadic(), dyadic()),
        any::<bool>(),
        any::<bool>(),
        any::<bool>(),
    )
        .prop_map(|((s, c, g, l, t), team, excl, loose)| RewardSpec {
            score_reward: s,
            concede_reward: c,
            possession_gain: g,
            possession_loss: l,
            possession_scope: if team { PossessionScope::Team } else { PossessionScope::Individual },
            teammate_loss_penalty: t,
            exclude_within_team_passes: excl,
            count_loose_ball: loose,
        })
}

fn everyone() -> Vec<PlayerId> {
    (0..2 * K).map(|s| PlayerId::from_slot(s, K)).collect()
}

fn involves(e: &GameEvent, p: PlayerId) -> bool {
    match e.kind {
        EventKind::Goal { .. } => true,
        EventKind::PossessionGained { player, .. } | EventKind::PossessionLost { player, .. } => player == p,
        _ => false,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(3000))]

    #[test]
    fn scoring_is_zero_sum(events in arb_events(), w in dyadic()) {
        let spec = RewardSpec {
            score_reward: w,
            concede_reward: -w,
            ..RewardPreset::Sparse.spec()
        };
        let r = compute_rewards(&events, &everyone(), &spec).unwrap();
        prop_assert_eq!(r.values().sum::<f64>(), 0.0);
    }

    #[test]
    fn team_scope_rewards_teammates_equally(events in arb_events(), spec in arb_spec()) {
        let spec = RewardSpec {
            possession_scope: PossessionScope::Team,
            teammate_loss_penalty: 0.0,
            ..spec
        };
        let r = compute_rewards(&events, &everyone(), &spec).unwrap();
        prop_assert_eq!(r[&PlayerId::home(0)], r[&PlayerId::home(1)]);
        prop_assert_eq!(r[&PlayerId::away(0)], r[&PlayerId::away(1)]);
    }

    #[test]
    fn individual_scope_is_local(events in arb_events(), spec in arb_spec(), learner in arb_player()) {
        let spec = RewardSpec {
            possession_scope: PossessionScope::Individual,
            teammate_loss_penalty: 0.0,
            ..spec
        };
        let own: Vec<GameEvent> = events.iter().copied().filter(|e| involves(e, learner)).collect();
        let full = compute_rewards(&events, &[learner], &spec).unwrap();
        let local = compute_rewards(&own, &[learner], &spec).unwrap();
        prop_assert_eq!(full[&learner], local[&learner]);
    }

    #[test]
    fn rewards_are_linear_in_the_spec(events in arb_events(), a in arb_spec(), b in arb_spec()) {
        let b = RewardSpec {
            possession_scope: a.possession_scope,
            exclude_within_team_passes: a.exclude_within_team_passes,
            count_loose_ball: a.count_loose_ball,
            ..b
        };
        let sum = a.checked_add(&b).unwrap();
        let ra = compute_rewards(&events, &everyone(), &a).unwrap();
        let rb = compute_rewards(&events, &everyone(), &b).unwrap();
        let rs = compute_rewards(&events, &everyone(), &sum).unwrap();
        for p in everyone() {
            prop_assert_eq!(rs[&p], ra[&p] + rb[&p]);
        }
    }

    #[test]
    fn teammate_gain_earns_nothing_and_loss_costs_the_penalty(events in arb_events(), prior in arb_exchange()) {
        let spec = RewardPreset::TeammateAssist.spec();
        let me = PlayerId::home(0);
        let mate = PlayerId::home(1);
        let base = compute_rewards(&events, &[me], &spec).unwrap()[&me];

        let mut gained = events.clone();
        gained.push(GameEvent::new(TICK, EventKind::PossessionGained { player: mate, prior }));
        prop_assert_eq!(compute_rewards(&gained, &[me], &spec).unwrap()[&me], base);

        // 0.8 is not exact in binary; a dyadic copy of the preset keeps the
        // increment check exact.
        let dyadic = RewardSpec {
            possession_gain: 0.75,
            possession_loss: -0.75,
            teammate_loss_penalty: -0.75,
            ..spec
        };
        let base = compute_rewards(&events, &[me], &dyadic).unwrap()[&me];
        let mut lost = events.clone();
        lost.push(GameEvent::new(TICK, EventKind::PossessionLost { player: mate, to: Exchange::OpponentTeam }));
        prop_assert_eq!(compute_rewards(&lost, &[me], &dyadic).unwrap()[&me], base - 0.75);
    }
}

#[test]
fn mismatched_filters_do_not_add() {
    let a = RewardPreset::IndividualPossession.spec();
    let b = RewardPreset::TeamPossession.spec();
    assert!(a.checked_add(&b).is_none());
}
