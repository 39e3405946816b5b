use rand::{Rng, RngCore};

use super::learner::LearningRate;
use super::{stream_rng, streams};
use crate::error::{Error, Result};
use crate::mdp::{QFunction, StationaryPolicy, TabularMdp};
use crate::policies::sample_row;
use crate::switching::{intervention_value, SwitchCost};

/// Sampled base-MDP transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaseTransition {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
    /// No continuation after this step.
    pub terminal: bool,
}

/// One switched Q-learning step on `Q(s, a)`:
///
/// `Q(s,a) += alpha * (r + gamma * max{ M Q(s'), max_a' Q(s', a') } - Q(s,a))`
///
/// where `M Q(s') = sum_a pi_deep(a|s') Q(s', a) - c`. Returns the new entry.
pub fn switched_q_update(
    q: &mut QFunction,
    t: &BaseTransition,
    pi_deep: &StationaryPolicy,
    cost: SwitchCost,
    gamma: f64,
    alpha: f64,
) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::invalid(format!("alpha {alpha} not in (0, 1]")));
    }
    if t.state >= q.n_states() || t.next_state >= q.n_states() || t.action >= q.n_actions() {
        return Err(Error::invalid("transition indices outside the Q table"));
    }
    let continuation = if t.terminal {
        0.0
    } else {
        intervention_value(q, t.next_state, pi_deep, cost)?.max(q.max(t.next_state))
    };
    let old = q.get(t.state, t.action);
    let new = old + alpha * (t.reward + gamma * continuation - old);
    q.set(t.state, t.action, new);
    Ok(new)
}

pub fn sample_next_state(mdp: &TabularMdp, s: usize, a: usize, rng: &mut dyn RngCore) -> usize {
    sample_row(mdp.row(s, a), rng)
}

/// Switched Q-learning from a generative model: every update draws a
/// state-action pair uniformly (so every pair is explored forever) and a
/// next state from the MDP. Step sizes follow `rate` per pair.
pub fn run_switched_q_learning(
    mdp: &TabularMdp,
    pi_deep: &StationaryPolicy,
    cost: SwitchCost,
    updates: usize,
    rate: LearningRate,
    seed: u64,
) -> Result<QFunction> {
    rate.validate()?;
    pi_deep.check_shape(mdp, "DEEPTHINK")?;
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let mut rng = stream_rng(seed, streams::MISC);
    let mut q = QFunction::zeros(ns, na);
    let mut visits = vec![0u64; ns * na];
    for _ in 0..updates {
        let s = rng.gen_range(0..ns);
        let a = rng.gen_range(0..na);
        let next = sample_next_state(mdp, s, a, &mut rng);
        let t = BaseTransition { state: s, action: a, reward: mdp.reward(s, a), next_state: next, terminal: false };
        let alpha = rate.alpha(visits[s * na + a]);
        switched_q_update(&mut q, &t, pi_deep, cost, mdp.gamma(), alpha)?;
        visits[s * na + a] += 1;
    }
    Ok(q)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn terminal_step_with_dominated_intervention_returns_reward() {
        let mut q = QFunction::zeros(2, 2);
        q.set(1, 0, 3.0);
        let pi = StationaryPolicy::deterministic(2, &[0, 1]).unwrap();
        let t = BaseTransition { state: 0, action: 1, reward: 2.5, next_state: 1, terminal: true };
        let v = switched_q_update(&mut q, &t, &pi, SwitchCost::new(10.0).unwrap(), 0.9, 1.0).unwrap();
        assert_eq!(v, 2.5);
    }

    #[test]
    fn dominating_intervention_sets_the_continuation() {
        let mut q = QFunction::zeros(2, 2);
        q.set(1, 0, 1.0);
        q.set(1, 1, 4.0);
        // DEEP plays the argmax at state 1 and c = 0, so the intervention
        // branch attains the continuation Q(1, 1) - c.
        let pi = StationaryPolicy::deterministic(2, &[0, 1]).unwrap();
        let t = BaseTransition { state: 0, action: 0, reward: 0.0, next_state: 1, terminal: false };
        let v = switched_q_update(&mut q, &t, &pi, SwitchCost::ZERO, 0.5, 1.0).unwrap();
        assert_eq!(v, 0.5 * 4.0);
        let err = switched_q_update(&mut q, &t, &pi, SwitchCost::ZERO, 0.5, 0.0);
        assert!(err.is_err());
    }
}
