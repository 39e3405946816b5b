//! Finite discounted MDPs and the exact dynamic-programming routines that the
//! rest of the crate treats as ground truth.
//!
//! Transitions are stored densely, indexed `(state, action, next_state)`.
//! Terminal states are absorbing zero-reward self-loops, so every quantity
//! here is an infinite-horizon discounted value.
//!
//! # File format
//!
//! MDPs round-trip through a line-oriented text format:
//!
//! ```text
//! # comments and blank lines are ignored
//! mdp 1
//! states 3
//! actions 1
//! gamma 0.9
//! terminal 2
//! t 0 0 1 1        # t <state> <action> <next_state> <prob>
//! t 1 0 2 1
//! t 2 0 2 1
//! r 1 0 1          # r <state> <action> <reward>
//! ```
//!
//! Omitted transition and reward entries are zero. `terminal` may list any
//! number of ids and may be repeated. The writer emits every nonzero entry in
//! index order using the shortest decimal representation that parses back to
//! the same `f64`, so `save -> load -> save` is byte-identical.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Tolerance on probability rows summing to one.
pub const PROB_TOL: f64 = 1e-9;

/// Iteration cap shared by the iterative solvers unless overridden.
pub const DEFAULT_MAX_ITERATIONS: usize = 200_000;

#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    transition: Vec<f64>,
    reward: Vec<f64>,
    gamma: f64,
    terminal: BTreeSet<usize>,
}

impl TabularMdp {
    /// Builds and validates an MDP. `transition` is `n_states * n_actions * n_states`
    /// long, `reward` is `n_states * n_actions`.
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        gamma: f64,
        terminal: impl IntoIterator<Item = usize>,
    ) -> Result<Self> {
        let mdp = TabularMdp {
            n_states,
            n_actions,
            transition,
            reward,
            gamma,
            terminal: terminal.into_iter().collect(),
        };
        mdp.validate()?;
        Ok(mdp)
    }

    /// Starts an all-zero MDP to be filled with [`MdpBuilder::transition`] and
    /// [`MdpBuilder::reward`].
    pub fn builder(n_states: usize, n_actions: usize, gamma: f64) -> MdpBuilder {
        MdpBuilder {
            n_states,
            n_actions,
            transition: vec![0.0; n_states * n_actions * n_states],
            reward: vec![0.0; n_states * n_actions],
            gamma,
            terminal: BTreeSet::new(),
        }
    }

    fn validate(&self) -> Result<()> {
        let (s, a) = (self.n_states, self.n_actions);
        if s == 0 || a == 0 {
            return Err(Error::invalid("MDP needs at least one state and one action"));
        }
        if self.transition.len() != s * a * s {
            return Err(Error::invalid(format!(
                "transition tensor has {} entries, expected {}",
                self.transition.len(),
                s * a * s
            )));
        }
        if self.reward.len() != s * a {
            return Err(Error::invalid(format!(
                "reward table has {} entries, expected {}",
                self.reward.len(),
                s * a
            )));
        }
        if !(self.gamma.is_finite() && (0.0..1.0).contains(&self.gamma)) {
            return Err(Error::invalid(format!("gamma {} not in [0, 1)", self.gamma)));
        }
        if let Some(i) = self.reward.iter().position(|r| !r.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite reward at (state {}, action {})",
                i / a,
                i % a
            )));
        }
        for st in 0..s {
            for ac in 0..a {
                let row = self.row(st, ac);
                if row.iter().any(|p| !(p.is_finite() && (0.0..=1.0).contains(p))) {
                    return Err(Error::invalid(format!(
                        "transition entry outside [0, 1] at (state {st}, action {ac})"
                    )));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > PROB_TOL {
                    return Err(Error::invalid(format!(
                        "transition row (state {st}, action {ac}) sums to {sum}"
                    )));
                }
            }
        }
        for &t in &self.terminal {
            if t >= s {
                return Err(Error::invalid(format!("terminal state {t} out of range")));
            }
            for ac in 0..a {
                if self.reward(t, ac) != 0.0 || (self.p(t, ac, t) - 1.0).abs() > PROB_TOL {
                    return Err(Error::invalid(format!(
                        "terminal state {t} must be a zero-reward self-loop"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn terminal_states(&self) -> &BTreeSet<usize> {
        &self.terminal
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal.contains(&s)
    }

    /// Next-state distribution for `(s, a)`.
    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.transition[start..start + self.n_states]
    }

    pub fn p(&self, s: usize, a: usize, next: usize) -> f64 {
        self.row(s, a)[next]
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    pub fn rewards(&self) -> &[f64] {
        &self.reward
    }

    /// Largest absolute one-step reward.
    pub fn max_abs_reward(&self) -> f64 {
        self.reward.iter().fold(0.0, |m, r| m.max(r.abs()))
    }

    /// `R(s,a) + gamma * sum_s' P(s'|s,a) v(s')`.
    pub fn backup(&self, s: usize, a: usize, v: &[f64]) -> f64 {
        let cont: f64 = self.row(s, a).iter().zip(v).map(|(p, x)| p * x).sum();
        self.reward(s, a) + self.gamma * cont
    }

    /// One synchronous application of the optimality operator.
    pub fn optimality_step(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n_states)
            .map(|s| {
                (0..self.n_actions)
                    .map(|a| self.backup(s, a, v))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect()
    }

    /// Returns a copy with a different reward table (validated).
    pub fn with_rewards(&self, reward: Vec<f64>) -> Result<Self> {
        TabularMdp::new(
            self.n_states,
            self.n_actions,
            self.transition.clone(),
            reward,
            self.gamma,
            self.terminal.iter().copied(),
        )
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "mdp 1");
        let _ = writeln!(out, "states {}", self.n_states);
        let _ = writeln!(out, "actions {}", self.n_actions);
        let _ = writeln!(out, "gamma {}", self.gamma);
        if !self.terminal.is_empty() {
            let ids: Vec<String> = self.terminal.iter().map(|t| t.to_string()).collect();
            let _ = writeln!(out, "terminal {}", ids.join(" "));
        }
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                for (next, p) in self.row(s, a).iter().enumerate() {
                    if *p != 0.0 {
                        let _ = writeln!(out, "t {s} {a} {next} {p}");
                    }
                }
            }
        }
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let r = self.reward(s, a);
                if r != 0.0 {
                    let _ = writeln!(out, "r {s} {a} {r}");
                }
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut header: Option<u32> = None;
        let mut n_states = None;
        let mut n_actions = None;
        let mut gamma = None;
        let mut terminal = Vec::new();
        let mut trans = Vec::new();
        let mut rewards = Vec::new();

        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let perr = |message: String| Error::Parse { line: line_no, message };
            let mut parts = line.split_whitespace();
            let key = parts.next().unwrap_or_default();
            let fields: Vec<&str> = parts.collect();
            let need = |n: usize| -> Result<()> {
                if fields.len() != n {
                    Err(perr(format!("`{key}` expects {n} fields, got {}", fields.len())))
                } else {
                    Ok(())
                }
            };
            let uint = |f: &str| f.parse::<usize>().map_err(|e| perr(format!("bad integer `{f}`: {e}")));
            let real = |f: &str| f.parse::<f64>().map_err(|e| perr(format!("bad number `{f}`: {e}")));
            match key {
                "mdp" => {
                    need(1)?;
                    let v = fields[0].parse::<u32>().map_err(|e| perr(e.to_string()))?;
                    if v != 1 {
                        return Err(perr(format!("unsupported format version {v}")));
                    }
                    header = Some(v);
                }
                "states" => {
                    need(1)?;
                    n_states = Some(uint(fields[0])?);
                }
                "actions" => {
                    need(1)?;
                    n_actions = Some(uint(fields[0])?);
                }
                "gamma" => {
                    need(1)?;
                    gamma = Some(real(fields[0])?);
                }
                "terminal" => {
                    for f in &fields {
                        terminal.push(uint(f)?);
                    }
                }
                "t" => {
                    need(4)?;
                    trans.push((line_no, uint(fields[0])?, uint(fields[1])?, uint(fields[2])?, real(fields[3])?));
                }
                "r" => {
                    need(3)?;
                    rewards.push((line_no, uint(fields[0])?, uint(fields[1])?, real(fields[2])?));
                }
                other => return Err(perr(format!("unknown record `{other}`"))),
            }
        }

        if header.is_none() {
            return Err(Error::Parse { line: 0, message: "missing `mdp 1` header".into() });
        }
        let missing = |what: &str| Error::Parse { line: 0, message: format!("missing `{what}`") };
        let n_states = n_states.ok_or_else(|| missing("states"))?;
        let n_actions = n_actions.ok_or_else(|| missing("actions"))?;
        let gamma = gamma.ok_or_else(|| missing("gamma"))?;

        let mut b = TabularMdp::builder(n_states, n_actions, gamma);
        for (line, s, a, next, p) in trans {
            if s >= n_states || a >= n_actions || next >= n_states {
                return Err(Error::Parse { line, message: "index out of range".into() });
            }
            b = b.transition(s, a, next, p);
        }
        for (line, s, a, r) in rewards {
            if s >= n_states || a >= n_actions {
                return Err(Error::Parse { line, message: "index out of range".into() });
            }
            b = b.reward(s, a, r);
        }
        b.terminal(terminal).build()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct MdpBuilder {
    n_states: usize,
    n_actions: usize,
    transition: Vec<f64>,
    reward: Vec<f64>,
    gamma: f64,
    terminal: BTreeSet<usize>,
}

impl MdpBuilder {
    pub fn transition(mut self, s: usize, a: usize, next: usize, p: f64) -> Self {
        self.transition[(s * self.n_actions + a) * self.n_states + next] = p;
        self
    }

    pub fn reward(mut self, s: usize, a: usize, r: f64) -> Self {
        self.reward[s * self.n_actions + a] = r;
        self
    }

    /// Marks states terminal. Does not add the self-loop; see [`MdpBuilder::absorbing`].
    pub fn terminal(mut self, states: impl IntoIterator<Item = usize>) -> Self {
        self.terminal.extend(states);
        self
    }

    /// Marks `s` terminal and makes it a zero-reward self-loop under every action.
    pub fn absorbing(mut self, s: usize) -> Self {
        for a in 0..self.n_actions {
            let start = (s * self.n_actions + a) * self.n_states;
            self.transition[start..start + self.n_states].fill(0.0);
            self.transition[start + s] = 1.0;
            self.reward[s * self.n_actions + a] = 0.0;
        }
        self.terminal.insert(s);
        self
    }

    pub fn build(self) -> Result<TabularMdp> {
        TabularMdp::new(
            self.n_states,
            self.n_actions,
            self.transition,
            self.reward,
            self.gamma,
            self.terminal,
        )
    }
}

/// State values `v(s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction(pub Vec<f64>);

impl ValueFunction {
    pub fn zeros(n: usize) -> Self {
        ValueFunction(vec![0.0; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Sup-norm distance to another value function of the same length.
    pub fn sup_dist(&self, other: &ValueFunction) -> f64 {
        sup_dist(&self.0, &other.0)
    }
}

impl std::ops::Index<usize> for ValueFunction {
    type Output = f64;
    fn index(&self, s: usize) -> &f64 {
        &self.0[s]
    }
}

/// Action values `Q(s, a)`, row-major by state.
#[derive(Debug, Clone, PartialEq)]
pub struct QFunction {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
}

impl QFunction {
    pub fn new(n_states: usize, n_actions: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_states * n_actions {
            return Err(Error::invalid(format!(
                "Q table has {} entries, expected {}",
                values.len(),
                n_states * n_actions
            )));
        }
        if values.iter().any(|q| !q.is_finite()) {
            return Err(Error::invalid("Q table contains non-finite entries"));
        }
        Ok(QFunction { n_states, n_actions, values })
    }

    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        QFunction { n_states, n_actions, values: vec![0.0; n_states * n_actions] }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }

    pub fn set(&mut self, s: usize, a: usize, q: f64) {
        self.values[s * self.n_actions + a] = q;
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn max(&self, s: usize) -> f64 {
        self.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `argmax_a Q(s, a)`, ties to the lowest action id.
    pub fn argmax(&self, s: usize) -> usize {
        argmax(self.row(s))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sup_dist(&self, other: &QFunction) -> f64 {
        sup_dist(&self.values, &other.values)
    }
}

/// Markov stochastic policy `pi(a | s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryPolicy {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl StationaryPolicy {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if n_states == 0 || n_actions == 0 || probs.len() != n_states * n_actions {
            return Err(Error::invalid(format!(
                "policy table has {} entries, expected {}",
                probs.len(),
                n_states * n_actions
            )));
        }
        for s in 0..n_states {
            let row = &probs[s * n_actions..(s + 1) * n_actions];
            if row.iter().any(|p| !(p.is_finite() && (0.0..=1.0).contains(p))) {
                return Err(Error::invalid(format!("policy row {s} has entries outside [0, 1]")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > PROB_TOL {
                return Err(Error::invalid(format!("policy row {s} sums to {sum}")));
            }
        }
        Ok(StationaryPolicy { n_states, n_actions, probs })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        StationaryPolicy {
            n_states,
            n_actions,
            probs: vec![1.0 / n_actions as f64; n_states * n_actions],
        }
    }

    /// Deterministic policy picking `actions[s]` in state `s`.
    pub fn deterministic(n_actions: usize, actions: &[usize]) -> Result<Self> {
        let mut probs = vec![0.0; actions.len() * n_actions];
        for (s, &a) in actions.iter().enumerate() {
            if a >= n_actions {
                return Err(Error::invalid(format!("action {a} out of range in state {s}")));
            }
            probs[s * n_actions + a] = 1.0;
        }
        StationaryPolicy::new(actions.len(), n_actions, probs)
    }

    /// `weight * self + (1 - weight) * other`, row by row.
    pub fn mix(&self, other: &StationaryPolicy, weight: f64) -> Result<Self> {
        if self.n_states != other.n_states || self.n_actions != other.n_actions {
            return Err(Error::invalid("cannot mix policies of different shapes"));
        }
        if !(0.0..=1.0).contains(&weight) {
            return Err(Error::invalid(format!("mixing weight {weight} not in [0, 1]")));
        }
        let probs = self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(p, q)| weight * p + (1.0 - weight) * q)
            .collect();
        Ok(StationaryPolicy { n_states: self.n_states, n_actions: self.n_actions, probs })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.n_actions + a]
    }

    /// `sum_a pi(a|s) * values[a]`.
    pub fn expect(&self, s: usize, values: &[f64]) -> f64 {
        self.row(s).iter().zip(values).map(|(p, x)| p * x).sum()
    }

    pub(crate) fn check_shape(&self, mdp: &TabularMdp, name: &str) -> Result<()> {
        if self.n_states != mdp.n_states() || self.n_actions != mdp.n_actions() {
            return Err(Error::invalid(format!(
                "{name} policy is {}x{}, MDP is {}x{}",
                self.n_states,
                self.n_actions,
                mdp.n_states(),
                mdp.n_actions()
            )));
        }
        Ok(())
    }
}

pub fn sup_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

fn check_tol(tol: f64) -> Result<()> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::invalid(format!("tolerance must be positive, got {tol}")));
    }
    Ok(())
}

/// Iterates `v <- step(v)` from `v0` until `|step(v) - v|_inf <= tol` and
/// returns that `v`.
pub(crate) fn fixed_point(
    mut v: Vec<f64>,
    tol: f64,
    max_iterations: usize,
    mut step: impl FnMut(&[f64]) -> Vec<f64>,
) -> Result<Vec<f64>> {
    check_tol(tol)?;
    let mut residual = f64::INFINITY;
    for _ in 0..max_iterations {
        let next = step(&v);
        residual = sup_dist(&next, &v);
        if residual <= tol {
            return Ok(v);
        }
        v = next;
    }
    Err(Error::SolverFailure { iterations: max_iterations, residual })
}

/// Optimal state values by synchronous value iteration.
///
/// The returned `v` satisfies `|Tv - v|_inf <= tol` for the optimality
/// operator `T`.
pub fn value_iteration(mdp: &TabularMdp, tol: f64) -> Result<ValueFunction> {
    value_iteration_capped(mdp, tol, DEFAULT_MAX_ITERATIONS)
}

pub fn value_iteration_capped(
    mdp: &TabularMdp,
    tol: f64,
    max_iterations: usize,
) -> Result<ValueFunction> {
    let v = fixed_point(vec![0.0; mdp.n_states()], tol, max_iterations, |v| {
        mdp.optimality_step(v)
    })?;
    Ok(ValueFunction(v))
}

/// Value of a fixed stationary policy, by synchronous sweeps of `T^pi`.
pub fn policy_evaluation(
    mdp: &TabularMdp,
    policy: &StationaryPolicy,
    tol: f64,
) -> Result<ValueFunction> {
    policy.check_shape(mdp, "evaluated")?;
    let chain = InducedChain::new(mdp, |s| policy.row(s).to_vec(), |_| 0.0);
    Ok(ValueFunction(chain.evaluate(tol, DEFAULT_MAX_ITERATIONS)?))
}

/// One-step lookahead `Q(s,a) = R(s,a) + gamma * sum_s' P(s'|s,a) v(s')`.
pub fn q_from_values(mdp: &TabularMdp, v: &ValueFunction) -> Result<QFunction> {
    if v.len() != mdp.n_states() {
        return Err(Error::invalid(format!(
            "value function has {} entries, MDP has {} states",
            v.len(),
            mdp.n_states()
        )));
    }
    if v.0.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("value function contains non-finite entries"));
    }
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let values = (0..ns)
        .flat_map(|s| (0..na).map(move |a| (s, a)))
        .map(|(s, a)| mdp.backup(s, a, &v.0))
        .collect();
    Ok(QFunction { n_states: ns, n_actions: na, values })
}

/// Deterministic policy greedy with respect to one-step lookahead on `v`.
pub fn greedy_policy(mdp: &TabularMdp, v: &ValueFunction) -> Result<StationaryPolicy> {
    let q = q_from_values(mdp, v)?;
    let actions: Vec<usize> = (0..mdp.n_states()).map(|s| q.argmax(s)).collect();
    StationaryPolicy::deterministic(mdp.n_actions(), &actions)
}

/// Markov chain with per-state reward obtained by fixing, at every state, a
/// distribution over actions. Internal building block for exact evaluation of
/// composite (QUICK/DEEPTHINK) policies.
pub(crate) struct InducedChain {
    n: usize,
    gamma: f64,
    /// Row-major `n x n` transition matrix.
    p: Vec<f64>,
    r: Vec<f64>,
}

impl InducedChain {
    /// `mix(s)` is the action distribution used at `s`; `extra(s)` is added to
    /// the expected reward (e.g. a negative switch cost).
    pub(crate) fn new(
        mdp: &TabularMdp,
        mut mix: impl FnMut(usize) -> Vec<f64>,
        mut extra: impl FnMut(usize) -> f64,
    ) -> Self {
        let n = mdp.n_states();
        let mut p = vec![0.0; n * n];
        let mut r = vec![0.0; n];
        for s in 0..n {
            let w = mix(s);
            for (a, &wa) in w.iter().enumerate() {
                if wa == 0.0 {
                    continue;
                }
                r[s] += wa * mdp.reward(s, a);
                for (next, &pr) in mdp.row(s, a).iter().enumerate() {
                    p[s * n + next] += wa * pr;
                }
            }
            r[s] += extra(s);
        }
        InducedChain { n, gamma: mdp.gamma(), p, r }
    }

    pub(crate) fn from_parts(n: usize, gamma: f64, p: Vec<f64>, r: Vec<f64>) -> Self {
        InducedChain { n, gamma, p, r }
    }

    pub(crate) fn step(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|s| {
                let row = &self.p[s * self.n..(s + 1) * self.n];
                self.r[s] + self.gamma * row.iter().zip(v).map(|(p, x)| p * x).sum::<f64>()
            })
            .collect()
    }

    pub(crate) fn evaluate(&self, tol: f64, max_iterations: usize) -> Result<Vec<f64>> {
        fixed_point(vec![0.0; self.n], tol, max_iterations, |v| self.step(v))
    }
}
