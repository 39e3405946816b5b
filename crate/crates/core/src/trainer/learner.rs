use std::fmt::Write as _;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::buffer::ReplayTransition;
use super::rollout::{DecisionContext, Decider};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LearningRate {
    Constant { alpha: f64 },
    /// `alpha = 1 / (1 + visits)^exponent`, `exponent` in `(0.5, 1]`.
    RobbinsMonro { exponent: f64 },
}

impl LearningRate {
    /// Step size for an entry already updated `visits` times.
    pub fn alpha(&self, visits: u64) -> f64 {
        match *self {
            LearningRate::Constant { alpha } => alpha,
            LearningRate::RobbinsMonro { exponent } => (1.0 + visits as f64).powf(-exponent),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            LearningRate::Constant { alpha } if alpha > 0.0 && alpha <= 1.0 => Ok(()),
            LearningRate::RobbinsMonro { exponent } if exponent > 0.5 && exponent <= 1.0 => Ok(()),
            other => Err(Error::invalid(format!("invalid learning rate {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Exploration {
    /// Linear decay from `start` to `end` over the first `decay_fraction` of training.
    EpsilonGreedy { start: f64, end: f64, decay_fraction: f64 },
    /// Boltzmann sampling with soft (log-sum-exp) bootstrap targets.
    Softmax { temperature: f64 },
}

impl Default for Exploration {
    fn default() -> Self {
        Exploration::EpsilonGreedy { start: 1.0, end: 0.05, decay_fraction: 0.5 }
    }
}

impl Exploration {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Exploration::EpsilonGreedy { start, end, decay_fraction }
                if (0.0..=1.0).contains(&start) && (0.0..=1.0).contains(&end) && decay_fraction > 0.0 =>
            {
                Ok(())
            }
            Exploration::Softmax { temperature } if temperature > 0.0 && temperature.is_finite() => Ok(()),
            other => Err(Error::invalid(format!("invalid exploration schedule {other:?}"))),
        }
    }

    /// Exploration rate after `progress` (fraction of training done).
    pub fn epsilon(&self, progress: f64) -> f64 {
        match *self {
            Exploration::EpsilonGreedy { start, end, decay_fraction } => {
                if progress >= decay_fraction {
                    end
                } else {
                    start + (end - start) * progress / decay_fraction
                }
            }
            Exploration::Softmax { .. } => 0.0,
        }
    }
}

fn slot(levels: usize, state: usize, remaining: Option<i64>) -> usize {
    match remaining {
        Some(r) => state * levels + (r.clamp(-1, levels as i64 - 2) + 1) as usize,
        None => state * levels,
    }
}

/// Tabular switcher over `(state id, remaining budget)` x `{QUICK, DEEP}`.
/// The table grows as new state ids appear.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitcherLearner {
    gamma: f64,
    levels: usize,
    rate: LearningRate,
    exploration: Exploration,
    q: Vec<[f64; 2]>,
    visits: Vec<[u64; 2]>,
}

impl SwitcherLearner {
    pub fn new(gamma: f64, levels: usize, rate: LearningRate, exploration: Exploration) -> Result<Self> {
        if !(0.0..1.0).contains(&gamma) || levels == 0 {
            return Err(Error::invalid("learner needs gamma in [0, 1) and at least one budget level"));
        }
        rate.validate()?;
        exploration.validate()?;
        Ok(SwitcherLearner { gamma, levels, rate, exploration, q: Vec::new(), visits: Vec::new() })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn n_states(&self) -> usize {
        self.q.len() / self.levels
    }

    pub fn q(&self, state: usize, remaining: Option<i64>) -> [f64; 2] {
        self.q.get(slot(self.levels, state, remaining)).copied().unwrap_or([0.0; 2])
    }

    pub fn visits(&self, state: usize, remaining: Option<i64>) -> [u64; 2] {
        self.visits.get(slot(self.levels, state, remaining)).copied().unwrap_or([0; 2])
    }

    /// Greedy decision; DEEPTHINK only if it was tried here and is strictly better.
    pub fn greedy(&self, state: usize, remaining: Option<i64>) -> bool {
        prefers_deep(self.q(state, remaining), self.visits(state, remaining))
    }

    fn state_value(&self, state: usize, remaining: Option<i64>) -> f64 {
        let q = self.q(state, remaining);
        let n = self.visits(state, remaining);
        match self.exploration {
            Exploration::Softmax { temperature } => soft_max(q, temperature),
            Exploration::EpsilonGreedy { .. } => {
                if n[1] > 0 {
                    q[0].max(q[1])
                } else {
                    q[0]
                }
            }
        }
    }

    /// Behaviour decision during training.
    pub fn explore(&self, state: usize, remaining: Option<i64>, progress: f64, rng: &mut dyn RngCore) -> bool {
        match self.exploration {
            Exploration::EpsilonGreedy { .. } => {
                if rng.gen::<f64>() < self.exploration.epsilon(progress) {
                    rng.gen::<bool>()
                } else {
                    self.greedy(state, remaining)
                }
            }
            Exploration::Softmax { temperature } => {
                let q = self.q(state, remaining);
                let p_deep = 1.0 / (1.0 + ((q[0] - q[1]) / temperature).exp());
                rng.gen::<f64>() < p_deep
            }
        }
    }

    /// One Q-learning update; unconsulted (persistence) transitions are skipped.
    pub fn update(&mut self, t: &ReplayTransition) {
        if !t.consulted {
            return;
        }
        let continuation = if t.terminal {
            0.0
        } else {
            self.state_value(t.next_state, t.next_remaining)
        };
        let target = t.reward + self.gamma * continuation;
        let i = slot(self.levels, t.state, t.remaining);
        if i >= self.q.len() {
            let n = (t.state + 1) * self.levels;
            self.q.resize(n, [0.0; 2]);
            self.visits.resize(n, [0; 2]);
        }
        let g = usize::from(t.g);
        let alpha = self.rate.alpha(self.visits[i][g]);
        self.q[i][g] += alpha * (target - self.q[i][g]);
        self.visits[i][g] += 1;
    }

    pub fn exploring(&self, progress: f64) -> Exploring<'_> {
        Exploring { learner: self, progress }
    }

    pub fn snapshot(&self) -> GreedySwitch {
        GreedySwitch { levels: self.levels, q: self.q.clone(), visits: self.visits.clone() }
    }
}

fn prefers_deep(q: [f64; 2], visits: [u64; 2]) -> bool {
    visits[1] > 0 && q[1] > q[0]
}

fn soft_max(q: [f64; 2], t: f64) -> f64 {
    let m = q[0].max(q[1]);
    m + t * (((q[0] - m) / t).exp() + ((q[1] - m) / t).exp()).ln()
}

/// Learner in behaviour mode, for use as a [`Decider`] during training.
pub struct Exploring<'a> {
    learner: &'a SwitcherLearner,
    progress: f64,
}

impl Decider for Exploring<'_> {
    fn decide(&mut self, ctx: &DecisionContext, rng: &mut dyn RngCore) -> bool {
        self.learner.explore(ctx.state, ctx.remaining, self.progress, rng)
    }
}

/// Frozen greedy switch policy taken from a learner.
#[derive(Debug, Clone, PartialEq)]
pub struct GreedySwitch {
    levels: usize,
    q: Vec<[f64; 2]>,
    visits: Vec<[u64; 2]>,
}

impl GreedySwitch {
    pub fn activates(&self, state: usize, remaining: Option<i64>) -> bool {
        let i = slot(self.levels, state, remaining);
        match (self.q.get(i), self.visits.get(i)) {
            (Some(&q), Some(&n)) => prefers_deep(q, n),
            _ => false,
        }
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    /// `state,remaining,q_quick,q_deep,visits_quick,visits_deep,g`; the
    /// remaining column is empty for unbudgeted policies.
    pub fn to_text(&self) -> String {
        let mut out = String::from("state,remaining,q_quick,q_deep,visits_quick,visits_deep,g\n");
        for (i, (q, n)) in self.q.iter().zip(&self.visits).enumerate() {
            if n[0] + n[1] == 0 {
                continue;
            }
            let state = i / self.levels;
            let remaining = if self.levels > 1 { ((i % self.levels) as i64 - 1).to_string() } else { String::new() };
            let _ = writeln!(
                out,
                "{state},{remaining},{},{},{},{},{}",
                q[0],
                q[1],
                n[0],
                n[1],
                u8::from(prefers_deep(*q, *n))
            );
        }
        out
    }
}

impl Decider for GreedySwitch {
    fn decide(&mut self, ctx: &DecisionContext, _rng: &mut dyn RngCore) -> bool {
        self.activates(ctx.state, ctx.remaining)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tr(state: usize, g: bool, reward: f64, next: usize, terminal: bool) -> ReplayTransition {
        ReplayTransition {
            state,
            remaining: None,
            g,
            consulted: true,
            reward,
            next_state: next,
            next_remaining: None,
            terminal,
        }
    }

    #[test]
    fn epsilon_schedule_is_linear_then_flat() {
        let e = Exploration::default();
        assert_eq!(e.epsilon(0.0), 1.0);
        assert!((e.epsilon(0.25) - 0.525).abs() < 1e-12);
        assert_eq!(e.epsilon(0.5), 0.05);
        assert_eq!(e.epsilon(0.9), 0.05);
    }

    #[test]
    fn robbins_monro_rates() {
        let r = LearningRate::RobbinsMonro { exponent: 1.0 };
        assert_eq!(r.alpha(0), 1.0);
        assert_eq!(r.alpha(3), 0.25);
        assert!(LearningRate::RobbinsMonro { exponent: 0.5 }.validate().is_err());
        assert!(LearningRate::Constant { alpha: 0.0 }.validate().is_err());
    }

    #[test]
    fn untried_deep_is_never_greedy() {
        let mut l = SwitcherLearner::new(0.9, 1, LearningRate::Constant { alpha: 1.0 }, Exploration::default()).unwrap();
        l.update(&tr(0, false, -1.0, 0, true));
        assert_eq!(l.q(0, None), [-1.0, 0.0]);
        assert!(!l.greedy(0, None));
        l.update(&tr(0, true, -0.5, 0, true));
        assert!(l.greedy(0, None));
        assert!(l.snapshot().activates(0, None));
        assert!(!l.snapshot().activates(9, None));
    }

    #[test]
    fn bootstraps_unless_terminal() {
        let mut l = SwitcherLearner::new(0.5, 1, LearningRate::Constant { alpha: 1.0 }, Exploration::default()).unwrap();
        l.update(&tr(1, false, 4.0, 1, true));
        l.update(&tr(0, false, 1.0, 1, false));
        assert_eq!(l.q(0, None)[0], 3.0);
        let mut skipped = tr(0, true, 100.0, 1, true);
        skipped.consulted = false;
        l.update(&skipped);
        assert_eq!(l.visits(0, None), [1, 0]);
    }

    #[test]
    fn budget_levels_are_separate() {
        let mut l = SwitcherLearner::new(0.9, 4, LearningRate::Constant { alpha: 1.0 }, Exploration::default()).unwrap();
        let mut t = tr(2, true, 1.0, 2, true);
        t.remaining = Some(1);
        l.update(&t);
        assert!(l.greedy(2, Some(1)));
        assert!(!l.greedy(2, Some(0)));
        assert!(!l.greedy(2, Some(-1)));
        let text = l.snapshot().to_text();
        assert!(text.lines().any(|line| line == "2,1,0,1,0,1,1"), "{text}");
    }

    #[test]
    fn softmax_explores_both_branches() {
        let l = SwitcherLearner::new(0.9, 1, LearningRate::Constant { alpha: 0.1 }, Exploration::Softmax { temperature: 1.0 })
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let deep = (0..2000).filter(|_| l.explore(0, None, 0.0, &mut rng)).count();
        assert!((800..1200).contains(&deep), "{deep}");
        assert!((soft_max([0.0, 0.0], 1.0) - 2f64.ln()).abs() < 1e-12);
    }
}
