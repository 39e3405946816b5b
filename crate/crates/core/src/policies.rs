//! QUICK / DEEPTHINK action-policy surrogates and compute-cost accounting.
//!
//! A skilled surrogate is the optimal policy of an MDP corrupted with
//! epsilon-uniform noise. The QUICK tier is usually calibrated so that its
//! value is about half of DEEPTHINK's.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{greedy_policy, policy_evaluation, value_iteration, StationaryPolicy, TabularMdp};

pub const DEFAULT_QUICK_COST: f64 = 1.0;
pub const DEFAULT_DEEP_COST: f64 = 5.0;
pub const DEFAULT_DEEP_EPSILON: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Quick,
    Deep,
}

impl std::fmt::Display for Tier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Tier::Quick => "quick",
            Tier::Deep => "deep",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Descriptor {
    pub name: String,
    pub tier: Tier,
    pub call_cost: f64,
}

/// An action policy that can be called on a (true) environment state.
pub trait PolicyProvider: Send + Sync {
    fn act(&self, state: usize, rng: &mut dyn RngCore) -> usize;
    fn descriptor(&self) -> &Descriptor;

    fn call_cost(&self) -> f64 {
        self.descriptor().call_cost
    }

    fn tier(&self) -> Tier {
        self.descriptor().tier
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkillSpec {
    /// Probability of replacing the optimal action with a uniform one.
    pub epsilon: f64,
}

impl SkillSpec {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::invalid(format!("skill epsilon {epsilon} not in [0, 1]")));
        }
        Ok(SkillSpec { epsilon })
    }
}

/// Provider backed by a stationary table.
#[derive(Debug, Clone)]
pub struct TablePolicy {
    descriptor: Descriptor,
    policy: StationaryPolicy,
}

impl TablePolicy {
    pub fn new(name: impl Into<String>, tier: Tier, call_cost: f64, policy: StationaryPolicy) -> Result<Self> {
        if !(call_cost.is_finite() && call_cost >= 0.0) {
            return Err(Error::invalid(format!("call cost must be finite and >= 0, got {call_cost}")));
        }
        Ok(TablePolicy {
            descriptor: Descriptor { name: name.into(), tier, call_cost },
            policy,
        })
    }

    pub fn stationary(&self) -> &StationaryPolicy {
        &self.policy
    }
}

impl PolicyProvider for TablePolicy {
    fn act(&self, state: usize, rng: &mut dyn RngCore) -> usize {
        sample_row(self.policy.row(state), rng)
    }

    fn descriptor(&self) -> &Descriptor {
        &self.descriptor
    }
}

/// Inverse-CDF draw from a probability row.
pub fn sample_row(row: &[f64], rng: &mut dyn RngCore) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (a, &p) in row.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = a;
            if u < acc {
                return a;
            }
        }
    }
    last
}

/// `(1 - epsilon) * greedy + epsilon * uniform`, where `greedy` is optimal for `mdp`.
pub fn skilled_stationary(mdp: &TabularMdp, skill: SkillSpec) -> Result<StationaryPolicy> {
    let v = value_iteration(mdp, 1e-10)?;
    let greedy = greedy_policy(mdp, &v)?;
    let uniform = StationaryPolicy::uniform(mdp.n_states(), mdp.n_actions());
    greedy.mix(&uniform, 1.0 - skill.epsilon)
}

pub fn make_skilled_policy(
    mdp: &TabularMdp,
    skill: SkillSpec,
    tier: Tier,
    call_cost: f64,
) -> Result<TablePolicy> {
    let name = format!("{tier}(eps={})", skill.epsilon);
    TablePolicy::new(name, tier, call_cost, skilled_stationary(mdp, skill)?)
}

/// Finds the QUICK epsilon whose value at `start` is `ratio` times
/// `reference_value`, by bisection to `rel_tol` relative error.
///
/// Value is assumed nonincreasing in epsilon, which holds when every state
/// has a unique optimal action.
pub fn calibrate_epsilon(
    mdp: &TabularMdp,
    start: usize,
    reference_value: f64,
    ratio: f64,
    rel_tol: f64,
) -> Result<f64> {
    if start >= mdp.n_states() {
        return Err(Error::invalid(format!("start state {start} out of range")));
    }
    let target = ratio * reference_value;
    let value_at = |eps: f64| -> Result<f64> {
        let pi = skilled_stationary(mdp, SkillSpec::new(eps)?)?;
        Ok(policy_evaluation(mdp, &pi, 1e-10)?[start])
    };
    let within = |v: f64| (v - target).abs() <= rel_tol * target.abs();

    let (mut lo, mut hi) = (0.0, 1.0);
    let v_lo = value_at(lo)?;
    let v_hi = value_at(hi)?;
    if within(v_hi) {
        return Ok(hi);
    }
    if !(v_hi < target && target <= v_lo) {
        return Err(Error::invalid(format!(
            "target value {target} outside the attainable range [{v_hi}, {v_lo}]"
        )));
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        let v = value_at(mid)?;
        if within(v) {
            return Ok(mid);
        }
        if v > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::SolverFailure { iterations: 100, residual: hi - lo })
}

/// QUICK/DEEPTHINK surrogates for one environment.
#[derive(Debug, Clone)]
pub struct CalibratedPair {
    pub quick: TablePolicy,
    pub deep: TablePolicy,
    pub quick_epsilon: f64,
    pub quick_value: f64,
    pub deep_value: f64,
}

/// DEEPTHINK with noise `deep_epsilon`; QUICK's noise calibrated so that its
/// value at `start` is `ratio` times DEEPTHINK's (within 5% relative).
pub fn calibrated_pair(
    mdp: &TabularMdp,
    start: usize,
    deep_epsilon: f64,
    ratio: f64,
    quick_cost: f64,
    deep_cost: f64,
) -> Result<CalibratedPair> {
    let deep = make_skilled_policy(mdp, SkillSpec::new(deep_epsilon)?, Tier::Deep, deep_cost)?;
    let deep_value = policy_evaluation(mdp, deep.stationary(), 1e-10)?[start];
    let quick_epsilon = calibrate_epsilon(mdp, start, deep_value, ratio, 0.05)?;
    let quick = make_skilled_policy(mdp, SkillSpec::new(quick_epsilon)?, Tier::Quick, quick_cost)?;
    let quick_value = policy_evaluation(mdp, quick.stationary(), 1e-10)?[start];
    Ok(CalibratedPair { quick, deep, quick_epsilon, quick_value, deep_value })
}

/// Running total of compute spent on policy calls.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CostLedger {
    cumulative: f64,
    series: Vec<(u64, f64)>,
}

impl CostLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn cumulative(&self) -> f64 {
        self.cumulative
    }

    pub fn series(&self) -> &[(u64, f64)] {
        &self.series
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    pub fn record_call(&mut self, provider: &dyn PolicyProvider, step: u64) -> Result<()> {
        self.record(step, provider.call_cost())
    }

    pub fn record(&mut self, step: u64, cost: f64) -> Result<()> {
        if let Some(&(last, _)) = self.series.last() {
            if step < last {
                return Err(Error::invalid(format!("ledger step went backwards: {last} -> {step}")));
            }
        }
        if !(cost.is_finite() && cost >= 0.0) {
            return Err(Error::invalid(format!("call cost must be finite and >= 0, got {cost}")));
        }
        self.cumulative += cost;
        self.series.push((step, cost));
        Ok(())
    }

    /// Appends another ledger's entries after this one's.
    pub fn extend(&mut self, other: &CostLedger) -> Result<()> {
        for &(step, cost) in &other.series {
            self.record(step, cost)?;
        }
        Ok(())
    }

    /// Cumulative cost over the first `steps` entries.
    pub fn prefix_cost(&self, steps: usize) -> f64 {
        self.series.iter().take(steps).map(|(_, c)| c).sum()
    }
}
