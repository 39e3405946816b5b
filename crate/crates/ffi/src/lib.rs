//! C interface to the `switchctl` solvers.
//!
//! Objects cross the boundary as opaque handles created by `*_new`, `*_load`
//! or a solver and released with the matching `*_free`. Every fallible call
//! returns a [`SwitchctlStatus`]; on failure the message is available from
//! [`switchctl_last_error`] on the same thread until the next failing call.
//! Panics are caught and reported as `SWITCHCTL_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use switchctl::budget::{augment_with_budget, solve_budgeted, BudgetSolution, BudgetSpec};
use switchctl::mdp::{value_iteration, StationaryPolicy, TabularMdp};
use switchctl::switching::{solve_switcher, SwitchCost, SwitchSolution};
use switchctl::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SwitchctlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    SolverFailure = 3,
    Io = 4,
    Panic = 5,
}

/// Tabular MDP.
pub struct SwitchctlMdp(TabularMdp);

/// Stationary policy `pi(a|s)`.
pub struct SwitchctlPolicy(StationaryPolicy);

/// Solution of the unbudgeted switching problem.
pub struct SwitchctlSwitchSolution(SwitchSolution);

/// Solution of the budgeted switching problem.
pub struct SwitchctlBudgetSolution(BudgetSolution);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("interior nul bytes were replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> SwitchctlStatus {
    match e.kind() {
        "solver" => SwitchctlStatus::SolverFailure,
        "io" => SwitchctlStatus::Io,
        _ => SwitchctlStatus::InvalidInput,
    }
}

struct Failure(SwitchctlStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(SwitchctlStatus::NullPointer, format!("{what} is null"))
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure(SwitchctlStatus::InvalidInput, message.into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SwitchctlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SwitchctlStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".to_string());
            set_error(format!("panic: {message}"));
            SwitchctlStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn give<T>(out: &mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

fn check_state(state: usize, n: usize) -> Result<(), Failure> {
    if state >= n {
        return Err(invalid(format!("state {state} outside {n} states")));
    }
    Ok(())
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn switchctl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn switchctl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses an MDP from its text format.
///
/// # Safety
/// `text` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn switchctl_mdp_from_text(text: *const c_char, out: *mut *mut SwitchctlMdp) -> SwitchctlStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let mdp = TabularMdp::from_text(c_str(text, "text")?)?;
        give(out, SwitchctlMdp(mdp));
        Ok(())
    })
}

/// Reads an MDP file.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn switchctl_mdp_load(path: *const c_char, out: *mut *mut SwitchctlMdp) -> SwitchctlStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let mdp = TabularMdp::load(c_str(path, "path")?)?;
        give(out, SwitchctlMdp(mdp));
        Ok(())
    })
}

/// # Safety
/// `mdp` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn switchctl_mdp_free(mdp: *mut SwitchctlMdp) {
    if !mdp.is_null() {
        drop(Box::from_raw(mdp));
    }
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn switchctl_mdp_shape(
    mdp: *const SwitchctlMdp,
    n_states: *mut usize,
    n_actions: *mut usize,
) -> SwitchctlStatus {
    guard(|| {
        let mdp = &borrow(mdp, "mdp")?.0;
        *out_ref(n_states, "n_states")? = mdp.n_states();
        *out_ref(n_actions, "n_actions")? = mdp.n_actions();
        Ok(())
    })
}

/// Optimal state values into `values[0..len]`; `len` must equal the state count.
///
/// # Safety
/// `values` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn switchctl_value_iteration(
    mdp: *const SwitchctlMdp,
    tol: f64,
    values: *mut f64,
    len: usize,
) -> SwitchctlStatus {
    guard(|| {
        let mdp = &borrow(mdp, "mdp")?.0;
        if len != mdp.n_states() {
            return Err(invalid(format!("buffer holds {len} values, MDP has {} states", mdp.n_states())));
        }
        if values.is_null() {
            return Err(null("values"));
        }
        let v = value_iteration(mdp, tol)?;
        std::slice::from_raw_parts_mut(values, len).copy_from_slice(v.values());
        Ok(())
    })
}

/// Policy from a row-major `n_states x n_actions` probability table.
///
/// # Safety
/// `probs` must point to `n_states * n_actions` doubles.
#[no_mangle]
pub unsafe extern "C" fn switchctl_policy_new(
    n_states: usize,
    n_actions: usize,
    probs: *const f64,
    out: *mut *mut SwitchctlPolicy,
) -> SwitchctlStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let len = n_states.checked_mul(n_actions).ok_or_else(|| invalid("policy table too large"))?;
        let probs = slice(probs, len, "probs")?;
        give(out, SwitchctlPolicy(StationaryPolicy::new(n_states, n_actions, probs.to_vec())?));
        Ok(())
    })
}

/// # Safety
/// `policy` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn switchctl_policy_free(policy: *mut SwitchctlPolicy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}

/// Solves the switching problem with switch cost `cost >= 0`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn switchctl_solve_switcher(
    mdp: *const SwitchctlMdp,
    quick: *const SwitchctlPolicy,
    deep: *const SwitchctlPolicy,
    cost: f64,
    tol: f64,
    out: *mut *mut SwitchctlSwitchSolution,
) -> SwitchctlStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let mdp = &borrow(mdp, "mdp")?.0;
        let quick = &borrow(quick, "quick")?.0;
        let deep = &borrow(deep, "deep")?.0;
        let sol = solve_switcher(mdp, quick, deep, SwitchCost::new(cost)?, tol)?;
        give(out, SwitchctlSwitchSolution(sol));
        Ok(())
    })
}

/// # Safety
/// `solution` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn switchctl_switch_solution_free(solution: *mut SwitchctlSwitchSolution) {
    if !solution.is_null() {
        drop(Box::from_raw(solution));
    }
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn switchctl_switch_solution_n_states(
    solution: *const SwitchctlSwitchSolution,
    out: *mut usize,
) -> SwitchctlStatus {
    guard(|| {
        *out_ref(out, "out")? = borrow(solution, "solution")?.0.v_star.len();
        Ok(())
    })
}

/// Optimal value `v*(state)`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn switchctl_switch_solution_value(
    solution: *const SwitchctlSwitchSolution,
    state: usize,
    out: *mut f64,
) -> SwitchctlStatus {
    guard(|| {
        let sol = &borrow(solution, "solution")?.0;
        check_state(state, sol.v_star.len())?;
        *out_ref(out, "out")? = sol.v_star.values()[state];
        Ok(())
    })
}

/// Switch decision `g*(state)`: 1 activates DEEPTHINK, 0 keeps QUICK.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn switchctl_switch_solution_activates(
    solution: *const SwitchctlSwitchSolution,
    state: usize,
    out: *mut u8,
) -> SwitchctlStatus {
    guard(|| {
        let sol = &borrow(solution, "solution")?.0;
        check_state(state, sol.g_star.len())?;
        *out_ref(out, "out")? = u8::from(sol.g_star.activates(state));
        Ok(())
    })
}

/// Solves the budgeted problem: at most `budget` activations per episode,
/// `penalty` per step once overdrawn, `cost` per activation.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn switchctl_solve_budgeted(
    mdp: *const SwitchctlMdp,
    quick: *const SwitchctlPolicy,
    deep: *const SwitchctlPolicy,
    budget: u32,
    penalty: f64,
    cost: f64,
    tol: f64,
    out: *mut *mut SwitchctlBudgetSolution,
) -> SwitchctlStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let mdp = &borrow(mdp, "mdp")?.0;
        let quick = &borrow(quick, "quick")?.0;
        let deep = &borrow(deep, "deep")?.0;
        let spec = BudgetSpec::new(budget, penalty, SwitchCost::new(cost)?)?;
        let sol = solve_budgeted(&augment_with_budget(mdp, quick, deep, spec)?, tol)?;
        give(out, SwitchctlBudgetSolution(sol));
        Ok(())
    })
}

/// # Safety
/// `solution` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn switchctl_budget_solution_free(solution: *mut SwitchctlBudgetSolution) {
    if !solution.is_null() {
        drop(Box::from_raw(solution));
    }
}

fn check_augmented(sol: &BudgetSolution, state: usize, remaining: i64) -> Result<(), Failure> {
    check_state(state, sol.n_base())?;
    if !(-1..=sol.budget()).contains(&remaining) {
        return Err(invalid(format!("remaining budget {remaining} not in -1..={}", sol.budget())));
    }
    Ok(())
}

/// Optimal value at `(state, remaining)`, `remaining` in `-1..=budget`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn switchctl_budget_solution_value(
    solution: *const SwitchctlBudgetSolution,
    state: usize,
    remaining: i64,
    out: *mut f64,
) -> SwitchctlStatus {
    guard(|| {
        let sol = &borrow(solution, "solution")?.0;
        check_augmented(sol, state, remaining)?;
        *out_ref(out, "out")? = sol.value(state, remaining);
        Ok(())
    })
}

/// Switch decision at `(state, remaining)`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn switchctl_budget_solution_activates(
    solution: *const SwitchctlBudgetSolution,
    state: usize,
    remaining: i64,
    out: *mut u8,
) -> SwitchctlStatus {
    guard(|| {
        let sol = &borrow(solution, "solution")?.0;
        check_augmented(sol, state, remaining)?;
        *out_ref(out, "out")? = u8::from(sol.decision(state, remaining));
        Ok(())
    })
}
