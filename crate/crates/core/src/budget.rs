//! Budgeted switching: the state is augmented with the number of remaining
//! DEEPTHINK activations, which makes a hard call budget Markov.
//!
//! Remaining budget lives in `{-1, 0, ..., n}`. All over-budget depths are
//! collapsed into `-1`: once the budget is exceeded every step pays the same
//! penalty, so deeper overdraft carries no extra information.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mdp::{
    argmax, fixed_point, q_from_values, QFunction, StationaryPolicy, TabularMdp, ValueFunction,
    DEFAULT_MAX_ITERATIONS,
};
use crate::switching::{branch_name, SwitchCost, SwitchPolicy, SOLUTION_HEADER};

/// Default cap on augmented state count.
pub const DEFAULT_STATE_CAP: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetSpec {
    /// Activation budget per episode.
    pub n: u32,
    /// Per-step reward reduction while over budget.
    pub penalty: f64,
    pub cost: SwitchCost,
}

impl BudgetSpec {
    pub fn new(n: u32, penalty: f64, cost: SwitchCost) -> Result<Self> {
        if !(penalty.is_finite() && penalty >= 0.0) {
            return Err(Error::invalid(format!("budget penalty must be finite and >= 0, got {penalty}")));
        }
        Ok(BudgetSpec { n, penalty, cost })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AugmentedState {
    pub base: usize,
    pub remaining: i64,
}

/// Budget accounting for one decision: an activation spends one unit, and the
/// remaining count never goes below `-1`.
pub fn budget_step(x: AugmentedState, g: bool) -> AugmentedState {
    let remaining = if g { (x.remaining - 1).max(-1) } else { x.remaining };
    AugmentedState { base: x.base, remaining }
}

/// Whether the step taking `x` through decision `g` is charged the budget penalty.
pub fn over_budget_after(x: AugmentedState, g: bool) -> bool {
    budget_step(x, g).remaining < 0
}

/// Tabular MDP over augmented states whose two actions are the switch
/// decision (`0` = QUICK acts, `1` = DEEPTHINK acts).
#[derive(Debug, Clone)]
pub struct BudgetedMdp {
    mdp: TabularMdp,
    n_base: usize,
    spec: BudgetSpec,
}

impl BudgetedMdp {
    pub fn mdp(&self) -> &TabularMdp {
        &self.mdp
    }

    pub fn spec(&self) -> BudgetSpec {
        self.spec
    }

    pub fn n_base(&self) -> usize {
        self.n_base
    }

    /// Budget levels per base state (`n + 2`, covering `-1..=n`).
    pub fn levels(&self) -> usize {
        self.spec.n as usize + 2
    }

    pub fn index(&self, x: AugmentedState) -> usize {
        debug_assert!(x.remaining >= -1 && x.remaining <= self.spec.n as i64);
        x.base * self.levels() + (x.remaining + 1) as usize
    }

    pub fn state(&self, i: usize) -> AugmentedState {
        AugmentedState {
            base: i / self.levels(),
            remaining: (i % self.levels()) as i64 - 1,
        }
    }

    /// Augmented state at episode start.
    pub fn initial(&self, base: usize) -> AugmentedState {
        AugmentedState { base, remaining: self.spec.n as i64 }
    }
}

/// Builds the budget-augmented switching MDP.
pub fn augment_with_budget(
    mdp: &TabularMdp,
    pi_quick: &StationaryPolicy,
    pi_deep: &StationaryPolicy,
    spec: BudgetSpec,
) -> Result<BudgetedMdp> {
    augment_with_budget_capped(mdp, pi_quick, pi_deep, spec, DEFAULT_STATE_CAP)
}

pub fn augment_with_budget_capped(
    mdp: &TabularMdp,
    pi_quick: &StationaryPolicy,
    pi_deep: &StationaryPolicy,
    spec: BudgetSpec,
    state_cap: usize,
) -> Result<BudgetedMdp> {
    pi_quick.check_shape(mdp, "QUICK")?;
    pi_deep.check_shape(mdp, "DEEPTHINK")?;
    let levels = spec.n as usize + 2;
    let total = mdp
        .n_states()
        .checked_mul(levels)
        .filter(|t| *t <= state_cap)
        .ok_or_else(|| {
            Error::invalid(format!(
                "augmented state count {} x {} exceeds cap {state_cap}",
                mdp.n_states(),
                levels
            ))
        })?;

    let shell = BudgetedMdp { mdp: mdp.clone(), n_base: mdp.n_states(), spec };
    let mut b = TabularMdp::builder(total, 2, mdp.gamma());
    let mut absorbing = Vec::new();
    for i in 0..total {
        let x = shell.state(i);
        if mdp.is_terminal(x.base) {
            absorbing.push(i);
            continue;
        }
        for (g, pi) in [(false, pi_quick), (true, pi_deep)] {
            let y = budget_step(x, g);
            let mut r = pi.expect(x.base, &row_rewards(mdp, x.base));
            if g {
                r -= spec.cost.value();
            }
            if y.remaining < 0 {
                r -= spec.penalty;
            }
            let action = usize::from(g);
            b = b.reward(i, action, r);
            let mut next = vec![0.0; mdp.n_states()];
            for a in 0..mdp.n_actions() {
                let w = pi.prob(x.base, a);
                if w == 0.0 {
                    continue;
                }
                for (s2, p) in mdp.row(x.base, a).iter().enumerate() {
                    next[s2] += w * p;
                }
            }
            for (s2, p) in next.into_iter().enumerate() {
                if p != 0.0 {
                    let j = shell.index(AugmentedState { base: s2, remaining: y.remaining });
                    b = b.transition(i, action, j, p);
                }
            }
        }
    }
    for i in absorbing {
        b = b.absorbing(i);
    }
    let aug = b.build()?;
    Ok(BudgetedMdp { mdp: aug, n_base: mdp.n_states(), spec })
}

fn row_rewards(mdp: &TabularMdp, s: usize) -> Vec<f64> {
    (0..mdp.n_actions()).map(|a| mdp.reward(s, a)).collect()
}

#[derive(Debug, Clone)]
pub struct BudgetSolution {
    pub v_star: ValueFunction,
    /// Action values over `{QUICK, DEEPTHINK}` per augmented state.
    pub q_star: QFunction,
    pub g_star: SwitchPolicy,
    levels: usize,
}

impl BudgetSolution {
    fn idx(&self, base: usize, remaining: i64) -> usize {
        base * self.levels + (remaining + 1) as usize
    }

    pub fn value(&self, base: usize, remaining: i64) -> f64 {
        self.v_star[self.idx(base, remaining)]
    }

    pub fn decision(&self, base: usize, remaining: i64) -> bool {
        self.g_star.activates(self.idx(base, remaining))
    }

    pub fn n_base(&self) -> usize {
        self.v_star.len() / self.levels
    }

    /// Largest budget level represented.
    pub fn budget(&self) -> i64 {
        self.levels as i64 - 2
    }

    /// Same table format as [`crate::switching::SwitchSolution::to_text`],
    /// with the `remaining` column filled in.
    pub fn to_text(&self) -> String {
        let mut out = String::from(SOLUTION_HEADER);
        out.push('\n');
        for base in 0..self.n_base() {
            for remaining in -1..=self.budget() {
                let g = self.decision(base, remaining);
                let _ = writeln!(
                    out,
                    "{base},{remaining},{},{},{}",
                    self.value(base, remaining),
                    branch_name(g),
                    u8::from(g)
                );
            }
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

/// Value iteration on the augmented MDP. The returned policy is Markov in
/// `(base state, remaining budget)`; ties go to QUICK.
pub fn solve_budgeted(bmdp: &BudgetedMdp, tol: f64) -> Result<BudgetSolution> {
    solve_budgeted_capped(bmdp, tol, DEFAULT_MAX_ITERATIONS)
}

pub fn solve_budgeted_capped(
    bmdp: &BudgetedMdp,
    tol: f64,
    max_iterations: usize,
) -> Result<BudgetSolution> {
    let mdp = bmdp.mdp();
    let v = fixed_point(vec![0.0; mdp.n_states()], tol, max_iterations, |v| mdp.optimality_step(v))?;
    let v_star = ValueFunction(v);
    let q_star = q_from_values(mdp, &v_star)?;
    let g = (0..mdp.n_states()).map(|i| argmax(q_star.row(i)) == 1).collect();
    Ok(BudgetSolution { v_star, q_star, g_star: SwitchPolicy(g), levels: bmdp.levels() })
}
