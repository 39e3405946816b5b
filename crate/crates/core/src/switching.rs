//! Switching control between a cheap policy (QUICK) and an expensive one
//! (DEEPTHINK).
//!
//! Two operators live here and are kept deliberately separate:
//!
//! * [`switch_bellman_step`] is the switching Bellman operator in its
//!   operator form: `T_S v = max{ M Q, max_a Q }` with `Q = R + gamma P v`
//!   and the intervention value `M Q(s) = sum_a pi_deep(a|s) Q(s,a) - c`.
//!   The no-switch branch is the greedy maximum over all actions.
//! * [`solve_switcher`] solves the deployed two-actor problem: at states where
//!   the switch is off the QUICK policy acts, so the no-switch branch is
//!   `sum_a pi_quick(a|s) Q(s,a)`.
//!
//! [`NoSwitch`] selects between the two readings wherever both make sense.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mdp::{
    fixed_point, q_from_values, InducedChain, QFunction, StationaryPolicy, TabularMdp,
    ValueFunction, DEFAULT_MAX_ITERATIONS,
};

/// Nonnegative cost charged on every activation of the expensive policy.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct SwitchCost(f64);

impl SwitchCost {
    pub fn new(c: f64) -> Result<Self> {
        if !(c.is_finite() && c >= 0.0) {
            return Err(Error::invalid(format!("switch cost must be finite and >= 0, got {c}")));
        }
        Ok(SwitchCost(c))
    }

    pub const ZERO: SwitchCost = SwitchCost(0.0);

    pub fn value(self) -> f64 {
        self.0
    }
}

/// What the switcher compares the intervention value against.
#[derive(Debug, Clone, Copy)]
pub enum NoSwitch<'a> {
    /// Greedy maximum over all base actions (operator form).
    Greedy,
    /// Expected action value under the cheap actor (deployed form).
    Actor(&'a StationaryPolicy),
}

impl NoSwitch<'_> {
    pub fn value(&self, q: &QFunction, s: usize) -> f64 {
        match self {
            NoSwitch::Greedy => q.max(s),
            NoSwitch::Actor(pi) => pi.expect(s, q.row(s)),
        }
    }
}

/// Per-state activation decisions; `true` means DEEPTHINK is activated.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SwitchPolicy(pub Vec<bool>);

impl SwitchPolicy {
    pub fn never(n: usize) -> Self {
        SwitchPolicy(vec![false; n])
    }

    pub fn always(n: usize) -> Self {
        SwitchPolicy(vec![true; n])
    }

    /// Decodes bit `s` of `mask` as the decision at state `s`.
    pub fn from_mask(n: usize, mask: u64) -> Self {
        SwitchPolicy((0..n).map(|s| mask >> s & 1 == 1).collect())
    }

    pub fn activates(&self, s: usize) -> bool {
        self.0[s]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|g| **g).count()
    }
}

/// Solution of the switcher's problem.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchSolution {
    pub v_star: ValueFunction,
    /// One-step lookahead on `v_star` over base actions.
    pub q_star: QFunction,
    pub g_star: SwitchPolicy,
    /// Intervention branch value `M Q*(s)` at every state.
    pub deep_branch: Vec<f64>,
    /// No-switch branch value at every state.
    pub stay_branch: Vec<f64>,
}

impl SwitchSolution {
    /// Text table with one line per state: `state,remaining,value,branch,g`.
    /// `remaining` is left empty for unbudgeted solutions.
    pub fn to_text(&self) -> String {
        let mut out = String::from(SOLUTION_HEADER);
        out.push('\n');
        for s in 0..self.v_star.len() {
            let g = self.g_star.activates(s);
            let _ = writeln!(out, "{s},,{},{},{}", self.v_star[s], branch_name(g), u8::from(g));
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

pub(crate) const SOLUTION_HEADER: &str = "state,remaining,value,branch,g";

pub(crate) fn branch_name(g: bool) -> &'static str {
    if g {
        "deep"
    } else {
        "quick"
    }
}

/// One parsed row of a solution table.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionRow {
    pub state: usize,
    pub remaining: Option<i64>,
    pub value: f64,
    pub g: bool,
}

/// Parses the table written by [`SwitchSolution::to_text`] or
/// [`crate::budget::BudgetSolution::to_text`].
pub fn parse_solution_table(text: &str) -> Result<Vec<SolutionRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == SOLUTION_HEADER => {}
        _ => return Err(Error::Parse { line: 1, message: format!("expected header `{SOLUTION_HEADER}`") }),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let perr = |m: String| Error::Parse { line: i + 1, message: m };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(perr(format!("expected 5 fields, got {}", f.len())));
        }
        let state = f[0].parse().map_err(|e| perr(format!("state: {e}")))?;
        let remaining = if f[1].is_empty() {
            None
        } else {
            Some(f[1].parse().map_err(|e| perr(format!("remaining: {e}")))?)
        };
        let value = f[2].parse().map_err(|e| perr(format!("value: {e}")))?;
        let g = match f[4] {
            "0" => false,
            "1" => true,
            other => return Err(perr(format!("g must be 0 or 1, got `{other}`"))),
        };
        rows.push(SolutionRow { state, remaining, value, g });
    }
    Ok(rows)
}

fn check_state(q: &QFunction, s: usize) -> Result<()> {
    if s >= q.n_states() {
        return Err(Error::invalid(format!("state {s} out of range ({} states)", q.n_states())));
    }
    Ok(())
}

/// Intervention value `M Q(s) = sum_a pi_deep(a|s) Q(s,a) - c`.
pub fn intervention_value(
    q: &QFunction,
    s: usize,
    pi_deep: &StationaryPolicy,
    cost: SwitchCost,
) -> Result<f64> {
    check_state(q, s)?;
    if pi_deep.n_actions() != q.n_actions() || s >= pi_deep.n_states() {
        return Err(Error::invalid("DEEPTHINK policy does not match the Q table"));
    }
    Ok(pi_deep.expect(s, q.row(s)) - cost.value())
}

/// Activation rule: `1` iff `M Q(s) - max_a Q(s,a) > 0`. A zero gap resolves
/// to the cheap policy.
pub fn switch_rule(
    q: &QFunction,
    s: usize,
    pi_deep: &StationaryPolicy,
    cost: SwitchCost,
) -> Result<bool> {
    switch_rule_with(q, s, pi_deep, cost, NoSwitch::Greedy)
}

/// [`switch_rule`] against an explicit no-switch branch.
pub fn switch_rule_with(
    q: &QFunction,
    s: usize,
    pi_deep: &StationaryPolicy,
    cost: SwitchCost,
    stay: NoSwitch<'_>,
) -> Result<bool> {
    let deep = intervention_value(q, s, pi_deep, cost)?;
    Ok(deep - stay.value(q, s) > 0.0)
}

fn check_inputs(
    mdp: &TabularMdp,
    v: &[f64],
    pi_deep: &StationaryPolicy,
    stay: NoSwitch<'_>,
) -> Result<()> {
    if v.len() != mdp.n_states() {
        return Err(Error::invalid(format!(
            "value function has {} entries, MDP has {} states",
            v.len(),
            mdp.n_states()
        )));
    }
    pi_deep.check_shape(mdp, "DEEPTHINK")?;
    if let NoSwitch::Actor(pi) = stay {
        pi.check_shape(mdp, "QUICK")?;
    }
    Ok(())
}

/// `(deep_branch, stay_branch)` at every state for a given `v`.
fn branches(
    mdp: &TabularMdp,
    v: &[f64],
    pi_deep: &StationaryPolicy,
    cost: SwitchCost,
    stay: NoSwitch<'_>,
) -> (Vec<f64>, Vec<f64>) {
    let na = mdp.n_actions();
    let mut qrow = vec![0.0; na];
    let mut deep = Vec::with_capacity(mdp.n_states());
    let mut keep = Vec::with_capacity(mdp.n_states());
    for s in 0..mdp.n_states() {
        for (a, q) in qrow.iter_mut().enumerate() {
            *q = mdp.backup(s, a, v);
        }
        deep.push(pi_deep.expect(s, &qrow) - cost.value());
        keep.push(match stay {
            NoSwitch::Greedy => qrow.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            NoSwitch::Actor(pi) => pi.expect(s, &qrow),
        });
    }
    (deep, keep)
}

fn step_with(
    mdp: &TabularMdp,
    v: &[f64],
    pi_deep: &StationaryPolicy,
    cost: SwitchCost,
    stay: NoSwitch<'_>,
) -> Vec<f64> {
    let (deep, keep) = branches(mdp, v, pi_deep, cost, stay);
    deep.iter().zip(&keep).map(|(d, k)| d.max(*k)).collect()
}

/// One synchronous application of the switching Bellman operator
/// `T_S v = max{ M Q, max_a Q }`.
pub fn switch_bellman_step(
    mdp: &TabularMdp,
    v: &ValueFunction,
    pi_deep: &StationaryPolicy,
    cost: SwitchCost,
) -> Result<ValueFunction> {
    switch_step(mdp, v, pi_deep, cost, NoSwitch::Greedy)
}

/// [`switch_bellman_step`] with an explicit no-switch branch.
pub fn switch_step(
    mdp: &TabularMdp,
    v: &ValueFunction,
    pi_deep: &StationaryPolicy,
    cost: SwitchCost,
    stay: NoSwitch<'_>,
) -> Result<ValueFunction> {
    check_inputs(mdp, v.values(), pi_deep, stay)?;
    Ok(ValueFunction(step_with(mdp, v.values(), pi_deep, cost, stay)))
}

fn solve_with(
    mdp: &TabularMdp,
    pi_deep: &StationaryPolicy,
    cost: SwitchCost,
    stay: NoSwitch<'_>,
    tol: f64,
    max_iterations: usize,
) -> Result<SwitchSolution> {
    check_inputs(mdp, &vec![0.0; mdp.n_states()], pi_deep, stay)?;
    let v = fixed_point(vec![0.0; mdp.n_states()], tol, max_iterations, |v| {
        step_with(mdp, v, pi_deep, cost, stay)
    })?;
    let v_star = ValueFunction(v);
    let q_star = q_from_values(mdp, &v_star)?;
    let mut deep_branch = Vec::with_capacity(mdp.n_states());
    let mut stay_branch = Vec::with_capacity(mdp.n_states());
    let mut g = Vec::with_capacity(mdp.n_states());
    for s in 0..mdp.n_states() {
        let d = intervention_value(&q_star, s, pi_deep, cost)?;
        let k = stay.value(&q_star, s);
        g.push(d - k > 0.0);
        deep_branch.push(d);
        stay_branch.push(k);
    }
    Ok(SwitchSolution { v_star, q_star, g_star: SwitchPolicy(g), deep_branch, stay_branch })
}

/// Solves the deployed switcher problem: QUICK acts where the switch is off,
/// DEEPTHINK acts (at cost `c`) where it is on. `g_star` is extracted from the
/// converged branch values with ties going to QUICK.
pub fn solve_switcher(
    mdp: &TabularMdp,
    pi_quick: &StationaryPolicy,
    pi_deep: &StationaryPolicy,
    cost: SwitchCost,
    tol: f64,
) -> Result<SwitchSolution> {
    solve_switcher_capped(mdp, pi_quick, pi_deep, cost, tol, DEFAULT_MAX_ITERATIONS)
}

pub fn solve_switcher_capped(
    mdp: &TabularMdp,
    pi_quick: &StationaryPolicy,
    pi_deep: &StationaryPolicy,
    cost: SwitchCost,
    tol: f64,
    max_iterations: usize,
) -> Result<SwitchSolution> {
    solve_with(mdp, pi_deep, cost, NoSwitch::Actor(pi_quick), tol, max_iterations)
}

/// Fixed point of the operator form [`switch_bellman_step`].
pub fn solve_switch_operator(
    mdp: &TabularMdp,
    pi_deep: &StationaryPolicy,
    cost: SwitchCost,
    tol: f64,
) -> Result<SwitchSolution> {
    solve_with(mdp, pi_deep, cost, NoSwitch::Greedy, tol, DEFAULT_MAX_ITERATIONS)
}

/// Exact value of a fixed switch set when the switcher is consulted at every
/// step (no persistence).
pub fn switch_set_value(
    mdp: &TabularMdp,
    pi_quick: &StationaryPolicy,
    pi_deep: &StationaryPolicy,
    g: &SwitchPolicy,
    cost: SwitchCost,
    tol: f64,
) -> Result<ValueFunction> {
    pi_quick.check_shape(mdp, "QUICK")?;
    pi_deep.check_shape(mdp, "DEEPTHINK")?;
    check_switch_len(mdp, g)?;
    let chain = InducedChain::new(
        mdp,
        |s| if g.activates(s) { pi_deep.row(s).to_vec() } else { pi_quick.row(s).to_vec() },
        |s| if g.activates(s) { -cost.value() } else { 0.0 },
    );
    Ok(ValueFunction(chain.evaluate(tol, DEFAULT_MAX_ITERATIONS)?))
}

fn check_switch_len(mdp: &TabularMdp, g: &SwitchPolicy) -> Result<()> {
    if g.len() != mdp.n_states() {
        return Err(Error::invalid(format!(
            "switch policy has {} entries, MDP has {} states",
            g.len(),
            mdp.n_states()
        )));
    }
    Ok(())
}

/// Values of the composite process on the extended chain over
/// `(state, switch flag)`, returned as `(off, on)` layers.
///
/// With the flag off the switcher is consulted: `g(s)=1` lets DEEPTHINK act at
/// cost `c` and turns the flag on, `g(s)=0` lets QUICK act. With the flag on,
/// DEEPTHINK keeps acting without consultation (and without cost) with
/// probability `persistence_p`; otherwise the switcher is consulted as above,
/// and a `0` turns the flag off.
pub fn composite_exact_evaluate_layers(
    mdp: &TabularMdp,
    pi_quick: &StationaryPolicy,
    pi_deep: &StationaryPolicy,
    g: &SwitchPolicy,
    persistence_p: f64,
    cost: SwitchCost,
    tol: f64,
) -> Result<(ValueFunction, ValueFunction)> {
    pi_quick.check_shape(mdp, "QUICK")?;
    pi_deep.check_shape(mdp, "DEEPTHINK")?;
    check_switch_len(mdp, g)?;
    if !(0.0..=1.0).contains(&persistence_p) {
        return Err(Error::invalid(format!("persistence probability {persistence_p} not in [0, 1]")));
    }
    let n = mdp.n_states();
    let na = mdp.n_actions();
    let m = 2 * n;
    let mut p = vec![0.0; m * m];
    let mut r = vec![0.0; m];

    // Accumulates `weight` of "policy acts at s, landing in layer `layer`".
    let mut add = |row: usize, s: usize, pi: &StationaryPolicy, weight: f64, layer: usize, extra: f64| {
        if weight == 0.0 {
            return;
        }
        for a in 0..na {
            let wa = weight * pi.prob(s, a);
            if wa == 0.0 {
                continue;
            }
            r[row] += wa * mdp.reward(s, a);
            for (next, pr) in mdp.row(s, a).iter().enumerate() {
                p[row * m + layer * n + next] += wa * pr;
            }
        }
        r[row] += weight * extra;
    };

    for s in 0..n {
        let (consulted_pi, consulted_layer, consulted_extra) = if g.activates(s) {
            (pi_deep, 1, -cost.value())
        } else {
            (pi_quick, 0, 0.0)
        };
        // flag off: always consulted
        add(s, s, consulted_pi, 1.0, consulted_layer, consulted_extra);
        // flag on: persist, else consult
        add(n + s, s, pi_deep, persistence_p, 1, 0.0);
        add(n + s, s, consulted_pi, 1.0 - persistence_p, consulted_layer, consulted_extra);
    }

    let chain = InducedChain::from_parts(m, mdp.gamma(), p, r);
    let v = chain.evaluate(tol, DEFAULT_MAX_ITERATIONS)?;
    Ok((ValueFunction(v[..n].to_vec()), ValueFunction(v[n..].to_vec())))
}

/// Value from each state with the switch initially off; see
/// [`composite_exact_evaluate_layers`].
pub fn composite_exact_evaluate(
    mdp: &TabularMdp,
    pi_quick: &StationaryPolicy,
    pi_deep: &StationaryPolicy,
    g: &SwitchPolicy,
    persistence_p: f64,
    cost: SwitchCost,
    tol: f64,
) -> Result<ValueFunction> {
    composite_exact_evaluate_layers(mdp, pi_quick, pi_deep, g, persistence_p, cost, tol)
        .map(|(off, _)| off)
}

/// Activation and deactivation boundaries of a decision trace.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SwitchingTimes {
    /// Steps at which the decision moves into 1 from an inactive regime.
    pub times: Vec<usize>,
    /// Steps at which an active regime is first observed off again.
    pub deactivations: Vec<usize>,
}

/// Extracts activation times `tau_k = inf{ t > tau_{k-1} : g(s_t) = 1 }`
/// from a `(step, decision)` trace.
pub fn extract_switching_times(trace: &[(usize, bool)]) -> Result<SwitchingTimes> {
    if let Some(w) = trace.windows(2).find(|w| w[1].0 <= w[0].0) {
        return Err(Error::invalid(format!(
            "decision trace not strictly ordered by step ({} then {})",
            w[0].0, w[1].0
        )));
    }
    let mut out = SwitchingTimes::default();
    let mut active = false;
    for &(step, g) in trace {
        match (active, g) {
            (false, true) => out.times.push(step),
            (true, false) => out.deactivations.push(step),
            _ => {}
        }
        active = g;
    }
    Ok(out)
}
