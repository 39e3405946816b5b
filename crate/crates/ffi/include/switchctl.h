#ifndef SWITCHCTL_H
#define SWITCHCTL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>

typedef enum SwitchctlStatus {
  SWITCHCTL_STATUS_OK = 0,
  SWITCHCTL_STATUS_NULL_POINTER = 1,
  SWITCHCTL_STATUS_INVALID_INPUT = 2,
  SWITCHCTL_STATUS_SOLVER_FAILURE = 3,
  SWITCHCTL_STATUS_IO = 4,
  SWITCHCTL_STATUS_PANIC = 5,
} SwitchctlStatus;

// Solution of the budgeted switching problem.
typedef struct SwitchctlBudgetSolution SwitchctlBudgetSolution;

// Tabular MDP.
typedef struct SwitchctlMdp SwitchctlMdp;

// Stationary policy `pi(a|s)`.
typedef struct SwitchctlPolicy SwitchctlPolicy;

// Solution of the unbudgeted switching problem.
typedef struct SwitchctlSwitchSolution SwitchctlSwitchSolution;

// Message of the last failed call on this thread, or null. The pointer stays
// valid until the next failing call on the same thread.
const char *switchctl_last_error(void);

// Library version as a static nul-terminated string.
const char *switchctl_version(void);

// Parses an MDP from its text format.
//
// # Safety
// `text` must be a nul-terminated string and `out` a valid pointer.
enum SwitchctlStatus switchctl_mdp_from_text(const char *text, struct SwitchctlMdp **out);

// Reads an MDP file.
//
// # Safety
// `path` must be a nul-terminated string and `out` a valid pointer.
enum SwitchctlStatus switchctl_mdp_load(const char *path, struct SwitchctlMdp **out);

// # Safety
// `mdp` must come from this library and not be used afterwards. Null is ignored.
void switchctl_mdp_free(struct SwitchctlMdp *mdp);

// # Safety
// Pointers must be valid.
enum SwitchctlStatus switchctl_mdp_shape(const struct SwitchctlMdp *mdp,
                                         size_t *n_states,
                                         size_t *n_actions);

// Optimal state values into `values[0..len]`; `len` must equal the state count.
//
// # Safety
// `values` must point to `len` writable doubles.
enum SwitchctlStatus switchctl_value_iteration(const struct SwitchctlMdp *mdp,
                                               double tol,
                                               double *values,
                                               size_t len);

// Policy from a row-major `n_states x n_actions` probability table.
//
// # Safety
// `probs` must point to `n_states * n_actions` doubles.
enum SwitchctlStatus switchctl_policy_new(size_t n_states,
                                          size_t n_actions,
                                          const double *probs,
                                          struct SwitchctlPolicy **out);

// # Safety
// `policy` must come from this library and not be used afterwards. Null is ignored.
void switchctl_policy_free(struct SwitchctlPolicy *policy);

// Solves the switching problem with switch cost `cost >= 0`.
//
// # Safety
// Pointers must be valid.
enum SwitchctlStatus switchctl_solve_switcher(const struct SwitchctlMdp *mdp,
                                              const struct SwitchctlPolicy *quick,
                                              const struct SwitchctlPolicy *deep,
                                              double cost,
                                              double tol,
                                              struct SwitchctlSwitchSolution **out);

// # Safety
// `solution` must come from this library and not be used afterwards. Null is ignored.
void switchctl_switch_solution_free(struct SwitchctlSwitchSolution *solution);

// # Safety
// Pointers must be valid.
enum SwitchctlStatus switchctl_switch_solution_n_states(const struct SwitchctlSwitchSolution *solution,
                                                        size_t *out);

// Optimal value `v*(state)`.
//
// # Safety
// Pointers must be valid.
enum SwitchctlStatus switchctl_switch_solution_value(const struct SwitchctlSwitchSolution *solution,
                                                     size_t state,
                                                     double *out);

// Switch decision `g*(state)`: 1 activates DEEPTHINK, 0 keeps QUICK.
//
// # Safety
// Pointers must be valid.
enum SwitchctlStatus switchctl_switch_solution_activates(const struct SwitchctlSwitchSolution *solution,
                                                         size_t state,
                                                         uint8_t *out);

// Solves the budgeted problem: at most `budget` activations per episode,
// `penalty` per step once overdrawn, `cost` per activation.
//
// # Safety
// Pointers must be valid.
enum SwitchctlStatus switchctl_solve_budgeted(const struct SwitchctlMdp *mdp,
                                              const struct SwitchctlPolicy *quick,
                                              const struct SwitchctlPolicy *deep,
                                              uint32_t budget,
                                              double penalty,
                                              double cost,
                                              double tol,
                                              struct SwitchctlBudgetSolution **out);

// # Safety
// `solution` must come from this library and not be used afterwards. Null is ignored.
void switchctl_budget_solution_free(struct SwitchctlBudgetSolution *solution);

// Optimal value at `(state, remaining)`, `remaining` in `-1..=budget`.
//
// # Safety
// Pointers must be valid.
enum SwitchctlStatus switchctl_budget_solution_value(const struct SwitchctlBudgetSolution *solution,
                                                     size_t state,
                                                     int64_t remaining,
                                                     double *out);

// Switch decision at `(state, remaining)`.
//
// # Safety
// Pointers must be valid.
enum SwitchctlStatus switchctl_budget_solution_activates(const struct SwitchctlBudgetSolution *solution,
                                                         size_t state,
                                                         int64_t remaining,
                                                         uint8_t *out);

#endif  /* SWITCHCTL_H */
