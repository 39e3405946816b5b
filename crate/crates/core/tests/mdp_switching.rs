mod common;

use common::{composite_value, enumerate_switch_sets, mask_of, policy_value, random_mdp, random_policy};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use switchctl::envs::{RoomsWorld, RoomsWorldConfig};
use switchctl::mdp::{
    greedy_policy, policy_evaluation, q_from_values, sup_dist, value_iteration, StationaryPolicy, TabularMdp,
    ValueFunction,
};
use switchctl::policies::sample_row;
use switchctl::switching::{
    composite_exact_evaluate, intervention_value, solve_switch_operator, solve_switcher, switch_bellman_step,
    switch_set_value, SwitchCost, SwitchPolicy,
};

const TOL: f64 = 1e-10;

fn cost(c: f64) -> SwitchCost {
    SwitchCost::new(c).unwrap()
}

#[test]
fn policy_evaluation_matches_a_linear_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let mdp = random_mdp(&mut rng, 5, 3, 0.9);
        let pi = random_policy(&mut rng, 5, 3);
        let v = policy_evaluation(&mdp, &pi, 1e-12).unwrap();
        assert!(sup_dist(v.values(), &policy_value(&mdp, &pi)) < 1e-8);
    }
}

#[test]
fn greedy_policy_of_value_iteration_is_optimal() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..20 {
        let mdp = random_mdp(&mut rng, 6, 3, 0.9);
        let tol = 1e-9;
        let v = value_iteration(&mdp, tol).unwrap();
        let pi = greedy_policy(&mdp, &v).unwrap();
        let vp = policy_value(&mdp, &pi);
        let bound = 2.0 * tol * mdp.gamma() / (1.0 - mdp.gamma());
        assert!(sup_dist(&vp, v.values()) <= bound + 1e-12);
        let q = q_from_values(&mdp, &v).unwrap();
        for s in 0..mdp.n_states() {
            assert!((q.max(s) - v.values()[s]).abs() <= tol);
        }
    }
}

#[test]
fn optimality_operator_contracts() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mdp = random_mdp(&mut rng, 10, 3, 0.9);
    for _ in 0..100 {
        let a: Vec<f64> = (0..10).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let b: Vec<f64> = (0..10).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let d = sup_dist(&mdp.optimality_step(&a), &mdp.optimality_step(&b));
        assert!(d <= mdp.gamma() * sup_dist(&a, &b) + 1e-12);
    }
}

/// States 0..3 on a line, action 0 advances, action 1 stays; reaching 3 pays 1.
fn chain4() -> TabularMdp {
    TabularMdp::builder(4, 2, 0.9)
        .transition(0, 0, 1, 1.0)
        .transition(1, 0, 2, 1.0)
        .transition(2, 0, 3, 1.0)
        .reward(2, 0, 1.0)
        .transition(0, 1, 0, 1.0)
        .transition(1, 1, 1, 1.0)
        .transition(2, 1, 2, 1.0)
        .absorbing(3)
        .build()
        .unwrap()
}

#[test]
fn intervention_value_on_a_solved_chain() {
    let mdp = chain4();
    let quick = StationaryPolicy::uniform(4, 2);
    let deep = StationaryPolicy::deterministic(2, &[0, 0, 0, 0]).unwrap();
    let sol = solve_switcher(&mdp, &quick, &deep, cost(0.05), TOL).unwrap();
    // DEEPTHINK advances everywhere, and with c = 0.05 it is worth calling at every live state
    assert_eq!(sol.g_star.0, vec![true, true, true, false]);
    let want = [0.81 - 0.05 * (1.0 + 0.9 + 0.81), 0.9 - 0.05 * 1.9, 1.0 - 0.05, 0.0];
    assert!(sup_dist(sol.v_star.values(), &want) < 1e-8);
    let iv = intervention_value(&sol.q_star, 1, &deep, cost(0.05)).unwrap();
    assert!((iv - (0.9 * want[2] - 0.05)).abs() < 1e-8);
}

/// Best value over every mix of "switch" and each deterministic action.
fn brute_force_operator(mdp: &TabularMdp, deep: &StationaryPolicy, c: f64) -> Vec<f64> {
    let (n, na) = (mdp.n_states(), mdp.n_actions());
    let options = na + 1;
    let mut best = vec![f64::NEG_INFINITY; n];
    let total = options.pow(n as u32);
    for code in 0..total {
        let mut set = vec![false; n];
        let mut acts = vec![0; n];
        let mut k = code;
        for s in 0..n {
            let o = k % options;
            k /= options;
            if o == na {
                set[s] = true;
            } else {
                acts[s] = o;
            }
        }
        let quick = StationaryPolicy::deterministic(na, &acts).unwrap();
        let v = composite_value(mdp, &quick, deep, &set, c);
        for s in 0..n {
            best[s] = best[s].max(v[s]);
        }
    }
    best
}

#[test]
fn switching_operator_iteration_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..3 {
        let mdp = random_mdp(&mut rng, 6, 3, 0.8);
        let deep = random_policy(&mut rng, 6, 3);
        let c = rng.gen_range(0.0..0.5);
        let mut v = ValueFunction::zeros(6);
        for _ in 0..10 {
            let next = switch_bellman_step(&mdp, &v, &deep, cost(c)).unwrap();
            let plain = mdp.optimality_step(v.values());
            for (n, p) in next.values().iter().zip(&plain) {
                assert!(*n >= p - c - 1e-12);
            }
            v = next;
        }
        let sol = solve_switch_operator(&mdp, &deep, cost(c), TOL).unwrap();
        assert!(sup_dist(sol.v_star.values(), &brute_force_operator(&mdp, &deep, c)) < 1e-7);
    }
}

#[test]
fn rooms_miniature_matches_enumeration() {
    let config = RoomsWorldConfig { n_rooms: 3, goal_room: 2, subgoal_rewards: vec![], slip: 0.0, ..RoomsWorldConfig::default() };
    let (_, mdp, _) = RoomsWorld::build(config).unwrap();
    assert_eq!(mdp.n_states(), 5);
    let quick = StationaryPolicy::uniform(5, mdp.n_actions());
    let v = value_iteration(&mdp, 1e-12).unwrap();
    let deep = greedy_policy(&mdp, &v).unwrap();
    let sol = solve_switcher(&mdp, &quick, &deep, cost(0.3), TOL).unwrap();
    let e = enumerate_switch_sets(&mdp, &quick, &deep, 0.3, 1e-8);
    assert!(sup_dist(sol.v_star.values(), &e.best) < 1e-8);
    assert!(e.optimal_masks.contains(&mask_of(&sol.g_star.0)));
}

#[test]
fn persistence_evaluation_matches_monte_carlo() {
    // three states in a ring so every episode is long
    let mdp = TabularMdp::builder(3, 2, 0.9)
        .transition(0, 0, 1, 1.0)
        .transition(0, 1, 0, 0.5)
        .transition(0, 1, 2, 0.5)
        .transition(1, 0, 2, 1.0)
        .transition(1, 1, 0, 1.0)
        .transition(2, 0, 0, 1.0)
        .transition(2, 1, 1, 1.0)
        .reward(0, 0, 0.2)
        .reward(1, 0, 1.0)
        .reward(1, 1, -0.5)
        .reward(2, 0, 0.3)
        .reward(2, 1, 0.7)
        .build()
        .unwrap();
    let quick = StationaryPolicy::uniform(3, 2);
    let deep = StationaryPolicy::new(3, 2, vec![0.9, 0.1, 0.8, 0.2, 0.3, 0.7]).unwrap();
    let g = SwitchPolicy(vec![true, false, false]);
    let (p, c) = (0.5, 0.1);
    let exact = composite_exact_evaluate(&mdp, &quick, &deep, &g, p, cost(c), 1e-12).unwrap().values()[0];

    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let (episodes, len) = (10_000, 100);
    let mut returns = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let (mut s, mut on, mut disc, mut ret) = (0, false, 1.0, 0.0);
        for _ in 0..len {
            let deep_acts = if on && rng.gen_bool(p) {
                true
            } else {
                on = g.activates(s);
                if on {
                    ret -= disc * c;
                }
                on
            };
            let pi = if deep_acts { &deep } else { &quick };
            let a = sample_row(pi.row(s), &mut rng);
            ret += disc * mdp.reward(s, a);
            s = sample_row(mdp.row(s, a), &mut rng);
            disc *= 0.9;
        }
        returns.push(ret);
    }
    let mean = returns.iter().sum::<f64>() / episodes as f64;
    let var = returns.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (episodes - 1) as f64;
    let se = (var / episodes as f64).sqrt();
    assert!((mean - exact).abs() < 3.0 * se, "mc {mean} exact {exact} se {se}");

    let p0 = composite_exact_evaluate(&mdp, &quick, &deep, &g, 0.0, cost(c), 1e-12).unwrap();
    let plain = switch_set_value(&mdp, &quick, &deep, &g, cost(c), 1e-12).unwrap();
    assert!(p0.sup_dist(&plain) < 1e-9);
}

#[test]
fn switched_values_dominate_and_are_minimal() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for _ in 0..30 {
        let n = rng.gen_range(3..8);
        let mdp = random_mdp(&mut rng, n, 3, 0.9);
        let quick = random_policy(&mut rng, n, 3);
        let deep = random_policy(&mut rng, n, 3);
        let c = rng.gen_range(0.0..0.3);
        let sol = solve_switcher(&mdp, &quick, &deep, cost(c), TOL).unwrap();
        let vq = policy_value(&mdp, &quick);
        let vd = policy_value(&mdp, &deep);
        for s in 0..n {
            assert!(sol.v_star.values()[s] >= vq[s] - 1e-8);
            assert!(sol.v_star.values()[s] >= vd[s] - c / (1.0 - mdp.gamma()) - 1e-8);
        }
        for s in (0..n).filter(|&s| sol.g_star.0[s]) {
            if sol.deep_branch[s] - sol.stay_branch[s] < 1e-6 {
                continue;
            }
            let mut set = sol.g_star.0.clone();
            set[s] = false;
            let v = composite_value(&mdp, &quick, &deep, &set, c);
            let drop = (0..n).map(|t| sol.v_star.values()[t] - v[t]).fold(f64::NEG_INFINITY, f64::max);
            assert!(drop > 1e-9, "flipping state {s} did not lose value");
        }
    }
}

#[test]
fn value_falls_with_cost() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..20 {
        let mdp = random_mdp(&mut rng, 6, 3, 0.9);
        let quick = random_policy(&mut rng, 6, 3);
        let deep = random_policy(&mut rng, 6, 3);
        let mut prev: Option<Vec<f64>> = None;
        for c in [0.0, 0.05, 0.1, 0.3, 1.0] {
            let v = solve_switcher(&mdp, &quick, &deep, cost(c), TOL).unwrap().v_star.0;
            if let Some(p) = prev {
                assert!(v.iter().zip(&p).all(|(a, b)| *a <= b + 1e-9));
            }
            prev = Some(v);
        }
    }
}

fn instance() -> impl Strategy<Value = (u64, usize, f64)> {
    (any::<u64>(), 2usize..=8, 0.0f64..0.5)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn solver_agrees_with_enumeration((seed, n, c) in instance()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mdp = random_mdp(&mut rng, n, 2, 0.85);
        let quick = random_policy(&mut rng, n, 2);
        let deep = random_policy(&mut rng, n, 2);
        let sol = solve_switcher(&mdp, &quick, &deep, cost(c), TOL).unwrap();
        let e = enumerate_switch_sets(&mdp, &quick, &deep, c, 1e-7);
        prop_assert!(sup_dist(sol.v_star.values(), &e.best) < 1e-7);
    }

    #[test]
    fn switching_operator_contracts(seed in any::<u64>(), c in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mdp = random_mdp(&mut rng, 6, 3, 0.9);
        let deep = random_policy(&mut rng, 6, 3);
        let a = ValueFunction((0..6).map(|_| rng.gen_range(-5.0..5.0)).collect());
        let b = ValueFunction((0..6).map(|_| rng.gen_range(-5.0..5.0)).collect());
        let ta = switch_bellman_step(&mdp, &a, &deep, cost(c)).unwrap();
        let tb = switch_bellman_step(&mdp, &b, &deep, cost(c)).unwrap();
        prop_assert!(ta.sup_dist(&tb) <= 0.9 * a.sup_dist(&b) + 1e-12);
    }

    #[test]
    fn value_is_monotone_in_rewards(seed in any::<u64>(), bump in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mdp = random_mdp(&mut rng, 5, 3, 0.9);
        let raised: Vec<f64> = mdp.rewards().iter().map(|r| r + bump * rng.gen_range(0.0..1.0)).collect();
        let higher = mdp.with_rewards(raised).unwrap();
        let v = value_iteration(&mdp, 1e-11).unwrap();
        let w = value_iteration(&higher, 1e-11).unwrap();
        prop_assert!(v.values().iter().zip(w.values()).all(|(a, b)| *a <= b + 1e-9));
    }

    #[test]
    fn text_format_round_trips(seed in any::<u64>(), n in 1usize..8, na in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mdp = random_mdp(&mut rng, n.max(2), na, 0.95);
        let text = mdp.to_text();
        let back = TabularMdp::from_text(&text).unwrap();
        prop_assert_eq!(back.to_text(), text);
        prop_assert_eq!(back, mdp);
    }
}
