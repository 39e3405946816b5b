//! Independent oracles shared by the integration tests. Nothing here calls the
//! crate's solvers: values come from dense linear solves and brute-force
//! enumeration.

#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use switchctl::envs::{RoomsFeaturizer, RoomsWorld, RoomsWorldConfig};
use switchctl::mdp::{StationaryPolicy, TabularMdp};
use switchctl::policies::{calibrated_pair, CalibratedPair};
use switchctl::reporting::Workbench;

/// Solves `(I - gamma P) v = r` directly.
pub fn solve_chain(gamma: f64, p: &[f64], r: &[f64]) -> Vec<f64> {
    let n = r.len();
    let a = DMatrix::from_fn(n, n, |i, j| f64::from(u8::from(i == j)) - gamma * p[i * n + j]);
    let b = DVector::from_column_slice(r);
    let x = a.lu().solve(&b).expect("I - gamma P is nonsingular for gamma < 1");
    x.iter().copied().collect()
}

/// Exact value of the composite policy that plays `pi_deep` (paying `cost`)
/// where `set[s]` and `pi_quick` elsewhere.
pub fn composite_value(
    mdp: &TabularMdp,
    pi_quick: &StationaryPolicy,
    pi_deep: &StationaryPolicy,
    set: &[bool],
    cost: f64,
) -> Vec<f64> {
    let n = mdp.n_states();
    let mut p = vec![0.0; n * n];
    let mut r = vec![0.0; n];
    for s in 0..n {
        let pi = if set[s] { pi_deep } else { pi_quick };
        for a in 0..mdp.n_actions() {
            let w = pi.prob(s, a);
            r[s] += w * mdp.reward(s, a);
            for (s2, pr) in mdp.row(s, a).iter().enumerate() {
                p[s * n + s2] += w * pr;
            }
        }
        if set[s] {
            r[s] -= cost;
        }
    }
    solve_chain(mdp.gamma(), &p, &r)
}

pub fn policy_value(mdp: &TabularMdp, pi: &StationaryPolicy) -> Vec<f64> {
    composite_value(mdp, pi, pi, &vec![false; mdp.n_states()], 0.0)
}

pub struct Enumeration {
    /// Pointwise maximum over all switch sets.
    pub best: Vec<f64>,
    /// Masks whose value attains `best` at every state within `tol`.
    pub optimal_masks: Vec<u64>,
}

/// Evaluates all `2^|S|` switch sets.
pub fn enumerate_switch_sets(
    mdp: &TabularMdp,
    pi_quick: &StationaryPolicy,
    pi_deep: &StationaryPolicy,
    cost: f64,
    tol: f64,
) -> Enumeration {
    let n = mdp.n_states();
    assert!(n <= 16, "enumeration is for small MDPs");
    let values: Vec<Vec<f64>> = (0..1u64 << n)
        .map(|mask| {
            let set: Vec<bool> = (0..n).map(|s| mask >> s & 1 == 1).collect();
            composite_value(mdp, pi_quick, pi_deep, &set, cost)
        })
        .collect();
    let best: Vec<f64> =
        (0..n).map(|s| values.iter().map(|v| v[s]).fold(f64::NEG_INFINITY, f64::max)).collect();
    let optimal_masks = values
        .iter()
        .enumerate()
        .filter(|(_, v)| v.iter().zip(&best).all(|(x, b)| (x - b).abs() <= tol))
        .map(|(m, _)| m as u64)
        .collect();
    Enumeration { best, optimal_masks }
}

pub fn mask_of(set: &[bool]) -> u64 {
    set.iter().enumerate().fold(0, |m, (s, &g)| m | (u64::from(g) << s))
}

/// Dense random MDP with rewards in `[-1, 1]`; every row has at least two
/// reachable successors.
pub fn random_mdp(rng: &mut ChaCha8Rng, n_states: usize, n_actions: usize, gamma: f64) -> TabularMdp {
    let mut b = TabularMdp::builder(n_states, n_actions, gamma);
    for s in 0..n_states {
        for a in 0..n_actions {
            let mut w: Vec<f64> =
                (0..n_states).map(|_| if rng.gen_bool(0.6) { rng.gen_range(0.01..1.0) } else { 0.0 }).collect();
            let k = rng.gen_range(0..n_states);
            w[k] += 0.5;
            w[(k + 1) % n_states] += 0.5;
            let total: f64 = w.iter().sum();
            for (s2, x) in w.iter().enumerate() {
                if *x > 0.0 {
                    b = b.transition(s, a, s2, x / total);
                }
            }
            b = b.reward(s, a, rng.gen_range(-1.0..1.0));
        }
    }
    b.build().unwrap()
}

pub fn random_policy(rng: &mut ChaCha8Rng, n_states: usize, n_actions: usize) -> StationaryPolicy {
    let mut probs = Vec::with_capacity(n_states * n_actions);
    for _ in 0..n_states {
        let w: Vec<f64> = (0..n_actions).map(|_| rng.gen_range(0.0..1.0f64).powi(3)).collect();
        let total: f64 = w.iter().sum();
        probs.extend(w.iter().map(|x| x / total));
    }
    StationaryPolicy::new(n_states, n_actions, probs).unwrap()
}

/// Exact value of a Markov budget rule `rule(s, remaining)` on the chain over
/// `(s, remaining)` with `remaining` in `-1..=n`. Terminal states pay nothing.
pub fn budget_rule_value(
    mdp: &TabularMdp,
    pi_quick: &StationaryPolicy,
    pi_deep: &StationaryPolicy,
    n: i64,
    penalty: f64,
    cost: f64,
    rule: &dyn Fn(usize, i64) -> bool,
) -> Vec<f64> {
    let ns = mdp.n_states();
    let levels = (n + 2) as usize;
    let idx = |s: usize, rem: i64| s * levels + (rem + 1) as usize;
    let m = ns * levels;
    let mut p = vec![0.0; m * m];
    let mut r = vec![0.0; m];
    for s in 0..ns {
        for rem in -1..=n {
            let i = idx(s, rem);
            if mdp.is_terminal(s) {
                p[i * m + i] = 1.0;
                continue;
            }
            let g = rule(s, rem);
            let next_rem = if g { (rem - 1).max(-1) } else { rem };
            let pi = if g { pi_deep } else { pi_quick };
            for a in 0..mdp.n_actions() {
                let w = pi.prob(s, a);
                r[i] += w * mdp.reward(s, a);
                for (s2, pr) in mdp.row(s, a).iter().enumerate() {
                    p[i * m + idx(s2, next_rem)] += w * pr;
                }
            }
            if g {
                r[i] -= cost;
            }
            if next_rem < 0 {
                r[i] -= penalty;
            }
        }
    }
    solve_chain(mdp.gamma(), &p, &r)
}

/// Ten rooms off one hallway; the goal is in room 4.
pub fn rooms_config() -> RoomsWorldConfig {
    RoomsWorldConfig { n_rooms: 10, goal_room: 4, ..RoomsWorldConfig::default() }
}

pub struct RoomsSetup {
    pub mdp: TabularMdp,
    pub pair: CalibratedPair,
    pub bench: Workbench<RoomsWorld, RoomsFeaturizer>,
}

/// RoomsWorld with DEEPTHINK at noise 0.05 and QUICK calibrated to half its
/// value; call costs 1 and 5.
pub fn rooms_setup(config: RoomsWorldConfig) -> RoomsSetup {
    let (env, mdp, featurizer) = RoomsWorld::build(config).unwrap();
    let pair = calibrated_pair(&mdp, env.start_state(), 0.05, 0.5, 1.0, 5.0).unwrap();
    let bench = Workbench::new(env, featurizer, Arc::new(pair.quick.clone()), Arc::new(pair.deep.clone()));
    RoomsSetup { mdp, pair, bench }
}
