use std::ffi::{CStr, CString};
use std::ptr;

use switchctl_ffi::*;

const MDP: &str = include_str!("../../core/data/three_state.mdp");

fn last_error() -> String {
    let p = switchctl_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

struct Fixture {
    mdp: *mut SwitchctlMdp,
    quick: *mut SwitchctlPolicy,
    deep: *mut SwitchctlPolicy,
}

impl Fixture {
    fn new() -> Self {
        let text = CString::new(MDP).unwrap();
        let mut f = Fixture { mdp: ptr::null_mut(), quick: ptr::null_mut(), deep: ptr::null_mut() };
        unsafe {
            assert_eq!(switchctl_mdp_from_text(text.as_ptr(), &mut f.mdp), SwitchctlStatus::Ok);
            assert_eq!(switchctl_policy_new(3, 2, [0.5; 6].as_ptr(), &mut f.quick), SwitchctlStatus::Ok);
            let first = [1.0, 0.0, 1.0, 0.0, 1.0, 0.0];
            assert_eq!(switchctl_policy_new(3, 2, first.as_ptr(), &mut f.deep), SwitchctlStatus::Ok);
        }
        f
    }
}

impl Drop for Fixture {
    fn drop(&mut self) {
        unsafe {
            switchctl_mdp_free(self.mdp);
            switchctl_policy_free(self.quick);
            switchctl_policy_free(self.deep);
        }
    }
}

#[test]
fn value_iteration_and_shape() {
    let f = Fixture::new();
    let (mut ns, mut na) = (0, 0);
    let mut v = [0.0; 3];
    unsafe {
        assert_eq!(switchctl_mdp_shape(f.mdp, &mut ns, &mut na), SwitchctlStatus::Ok);
        assert_eq!((ns, na), (3, 2));
        assert_eq!(switchctl_value_iteration(f.mdp, 1e-12, v.as_mut_ptr(), 3), SwitchctlStatus::Ok);
        assert_eq!(switchctl_value_iteration(f.mdp, 1e-12, v.as_mut_ptr(), 2), SwitchctlStatus::InvalidInput);
    }
    assert!((v[0] - 0.9).abs() < 1e-9 && (v[1] - 1.0).abs() < 1e-9 && v[2] == 0.0);
}

#[test]
fn switch_solution_accessors() {
    let f = Fixture::new();
    let mut sol = ptr::null_mut();
    unsafe {
        assert_eq!(switchctl_solve_switcher(f.mdp, f.quick, f.deep, 0.01, 1e-12, &mut sol), SwitchctlStatus::Ok);
        let mut n = 0;
        assert_eq!(switchctl_switch_solution_n_states(sol, &mut n), SwitchctlStatus::Ok);
        assert_eq!(n, 3);
        let want = [(0.89, 1u8), (1.0, 0), (0.0, 0)];
        for (s, (value, g)) in want.into_iter().enumerate() {
            let (mut v, mut a) = (f64::NAN, 9u8);
            assert_eq!(switchctl_switch_solution_value(sol, s, &mut v), SwitchctlStatus::Ok);
            assert_eq!(switchctl_switch_solution_activates(sol, s, &mut a), SwitchctlStatus::Ok);
            assert!((v - value).abs() < 1e-9);
            assert_eq!(a, g);
        }
        let mut v = 0.0;
        assert_eq!(switchctl_switch_solution_value(sol, 3, &mut v), SwitchctlStatus::InvalidInput);
        assert!(last_error().contains("state 3"));
        switchctl_switch_solution_free(sol);
    }
}

#[test]
fn budget_solution_accessors() {
    let f = Fixture::new();
    let mut sol = ptr::null_mut();
    unsafe {
        assert_eq!(
            switchctl_solve_budgeted(f.mdp, f.quick, f.deep, 1, 100.0, 0.01, 1e-12, &mut sol),
            SwitchctlStatus::Ok
        );
        let (mut v, mut g) = (0.0, 0u8);
        assert_eq!(switchctl_budget_solution_value(sol, 0, 1, &mut v), SwitchctlStatus::Ok);
        assert!((v - 0.89).abs() < 1e-9);
        assert_eq!(switchctl_budget_solution_activates(sol, 0, 1, &mut g), SwitchctlStatus::Ok);
        assert_eq!(g, 1);
        assert_eq!(switchctl_budget_solution_activates(sol, 0, 0, &mut g), SwitchctlStatus::Ok);
        assert_eq!(g, 0);
        assert_eq!(switchctl_budget_solution_value(sol, 0, 2, &mut v), SwitchctlStatus::InvalidInput);
        assert_eq!(switchctl_budget_solution_value(sol, 0, -2, &mut v), SwitchctlStatus::InvalidInput);
        switchctl_budget_solution_free(sol);
    }
}

#[test]
fn error_codes() {
    let f = Fixture::new();
    let mut out = ptr::null_mut();
    unsafe {
        assert_eq!(switchctl_mdp_from_text(ptr::null(), &mut out), SwitchctlStatus::NullPointer);
        assert!(last_error().contains("text"));
        let bad = CString::new("mdp 1\nstates two\n").unwrap();
        assert_eq!(switchctl_mdp_from_text(bad.as_ptr(), &mut out), SwitchctlStatus::InvalidInput);
        assert!(out.is_null());
        let missing = CString::new("/definitely/not/here.mdp").unwrap();
        assert_eq!(switchctl_mdp_load(missing.as_ptr(), &mut out), SwitchctlStatus::Io);

        let mut sol = ptr::null_mut();
        assert_eq!(
            switchctl_solve_switcher(f.mdp, f.quick, f.deep, -1.0, 1e-12, &mut sol),
            SwitchctlStatus::InvalidInput
        );
        assert_eq!(
            switchctl_solve_switcher(f.mdp, ptr::null(), f.deep, 0.1, 1e-12, &mut sol),
            SwitchctlStatus::NullPointer
        );
        let mut pol = ptr::null_mut();
        assert_eq!(switchctl_policy_new(3, 2, [0.9; 6].as_ptr(), &mut pol), SwitchctlStatus::InvalidInput);

        // a slowly contracting self-loop cannot reach this tolerance within the iteration cap
        let slow = CString::new("mdp 1\nstates 1\nactions 1\ngamma 0.999999\nt 0 0 0 1\nr 0 0 1\n").unwrap();
        assert_eq!(switchctl_mdp_from_text(slow.as_ptr(), &mut out), SwitchctlStatus::Ok);
        let mut v = [0.0];
        assert_eq!(switchctl_value_iteration(out, 1e-300, v.as_mut_ptr(), 1), SwitchctlStatus::SolverFailure);
        assert!(last_error().contains("converge"));
        switchctl_mdp_free(out);

        switchctl_mdp_free(ptr::null_mut());
        switchctl_switch_solution_free(ptr::null_mut());
    }
}

#[test]
fn errors_are_per_thread() {
    unsafe {
        let mut out = ptr::null_mut();
        assert_eq!(switchctl_mdp_from_text(ptr::null(), &mut out), SwitchctlStatus::NullPointer);
    }
    let other = std::thread::spawn(|| switchctl_last_error().is_null()).join().unwrap();
    assert!(other);
    let version = unsafe { CStr::from_ptr(switchctl_version()) }.to_str().unwrap();
    assert_eq!(version, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export() {
    let header = include_str!("../include/switchctl.h");
    let source = include_str!("../src/lib.rs");
    let exports: Vec<&str> = source
        .split("extern \"C\" fn ")
        .skip(1)
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 17);
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
}
