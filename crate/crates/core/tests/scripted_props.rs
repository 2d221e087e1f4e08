use proptest::prelude::*;
use sts2::scripted::{decide, Rule};
use sts2::sim::{
    integrate_player, segment_distance, Action, BallState, GameConfig, GamePhase, GameState, PlayerId, PlayerState,
    Score, TeamId, Vec2,
};
use sts2::ScriptedProfile;

fn arb_player(cfg: &GameConfig) -> impl Strategy<Value = PlayerState> {
    let (w, l, v) = (cfg.half_width, cfg.half_length, cfg.max_speed);
    (-w..=w, -l..=l, -v..=v, -v..=v).prop_map(move |(x, y, vx, vy)| {
        let mut vel = Vec2::new(vx, vy);
        if vel.norm() > v {
            vel = vel * (v / vel.norm());
        }
        PlayerState {
            pos: Vec2::new(x, y),
            vel,
        }
    })
}

fn arb_state(k: usize) -> impl Strategy<Value = (GameState, usize)> {
    let cfg = GameConfig::with_k(k);
    (proptest::collection::vec(arb_player(&cfg), 2 * k), 0..2 * k).prop_map(move |(players, owner)| {
        (
            GameState {
                tick: 5,
                players,
                ball: BallState::Controlled {
                    owner: PlayerId::from_slot(owner, k),
                },
                score: Score::default(),
                phase: GamePhase::Play,
            },
            owner,
        )
    })
}

fn attack_y(team: TeamId, p: &PlayerState) -> f64 {
    team.attack_sign() * p.pos.y
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    /// A defender facing a carrier inside the carrier's own half never picks a
    /// move that takes it over the center line (or deeper past it).
    #[test]
    fn defender_never_crosses_center_line((mut state, owner) in arb_state(2), normal in any::<bool>()) {
        let cfg = GameConfig::with_k(2);
        let profile = if normal { ScriptedProfile::normal(&cfg) } else { ScriptedProfile::easy(&cfg) };
        let carrier = state.ball.owner().unwrap();
        // Put the carrier in its own half, the half its team defends.
        let y = &mut state.players[owner].pos.y;
        *y = -carrier.team.attack_sign() * y.abs().max(1e-3);
        for me in state.team_ids(carrier.team.opponent()) {
            let (action, rule) = decide(&state, &cfg, me, &profile);
            prop_assert_eq!(rule, Rule::HoldPost);
            prop_assert!(action.is_movement());
            let now = state.player(me);
            let limit = attack_y(me.team, now).max(0.0);
            let crosses = |a: Action| attack_y(me.team, &integrate_player(&cfg, me.team, *now, Some(a))) > limit;
            if crosses(action) {
                // Only when momentum makes every move cross does the fallback apply.
                prop_assert!(Action::MOVES.iter().all(|&a| crosses(a)));
                prop_assert_eq!(action, Action::Backward);
            }
        }
    }

    #[test]
    fn shoots_whenever_shot_preconditions_hold((state, owner) in arb_state(1)) {
        let cfg = GameConfig::with_k(1);
        let profile = ScriptedProfile::normal(&cfg);
        let me = PlayerId::from_slot(owner, 1);
        let pos = state.player(me).pos;
        let goal = Vec2::new(0.0, me.team.attack_sign() * cfg.half_length);
        let opp = state.player(PlayerId::new(me.team.opponent(), 0)).pos;
        let in_range = pos.distance(goal) <= profile.shoot_range;
        let clear = segment_distance(pos, goal, opp).0 >= profile.open_lane_clearance;
        let action = decide(&state, &cfg, me, &profile).0;
        prop_assert_eq!(action == Action::Shoot, in_range && clear);
    }
}
