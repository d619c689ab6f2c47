#ifndef RBSDE_H
#define RBSDE_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum RbsdeStatus {
  RBSDE_STATUS_OK = 0,
  RBSDE_STATUS_NULL_POINTER = 1,
  RBSDE_STATUS_INVALID_UTF8 = 2,
  RBSDE_STATUS_INVALID_CONFIG = 3,
  RBSDE_STATUS_INVALID_ARGUMENT = 4,
  // A blocking assumption check failed; nothing was solved.
  RBSDE_STATUS_ASSUMPTION_VIOLATION = 5,
  // The solution handle is valid but the iteration hit its limit.
  RBSDE_STATUS_NOT_CONVERGED = 6,
  RBSDE_STATUS_OUT_OF_RANGE = 7,
  RBSDE_STATUS_SOLVER_ERROR = 8,
  RBSDE_STATUS_PANIC = 9,
} RbsdeStatus;

// Parsed problem together with its solver settings.
typedef struct RbsdeProblem RbsdeProblem;

typedef struct RbsdeSolution RbsdeSolution;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null. The pointer is
// valid until the next `rbsde_*` call on the same thread.
const char *rbsde_last_error_message(void);

// Parses a problem JSON document.
//
// # Safety
// `json` must be a NUL-terminated string and `out` a writable pointer.
enum RbsdeStatus rbsde_problem_from_json(const char *json, struct RbsdeProblem **out);

// # Safety
// `problem` must come from [`rbsde_problem_from_json`] and not be freed twice.
void rbsde_problem_free(struct RbsdeProblem *problem);

// Overrides the Picard tolerance and iteration limit.
//
// # Safety
// `problem` must be a live handle.
enum RbsdeStatus rbsde_problem_set_solver(struct RbsdeProblem *problem,
                                          double tol,
                                          size_t max_iters);

// Runs the assumption checks. Returns [`RbsdeStatus::AssumptionViolation`]
// with the located failure in the error message when a blocking check fails.
//
// # Safety
// `problem` must be a live handle.
enum RbsdeStatus rbsde_problem_check(const struct RbsdeProblem *problem);

// Validates and solves. On [`RbsdeStatus::Ok`] or [`RbsdeStatus::NotConverged`]
// `*out` receives a solution handle.
//
// # Safety
// `problem` must be a live handle and `out` writable.
enum RbsdeStatus rbsde_solve(const struct RbsdeProblem *problem, struct RbsdeSolution **out);

// # Safety
// `solution` must come from [`rbsde_solve`] and not be freed twice.
void rbsde_solution_free(struct RbsdeSolution *solution);

// # Safety
// `solution` must be a live handle and `out` writable.
enum RbsdeStatus rbsde_solution_y_root(const struct RbsdeSolution *solution, double *out);

// `E[K_T]`.
//
// # Safety
// `solution` must be a live handle and `out` writable.
enum RbsdeStatus rbsde_solution_k_terminal_mean(const struct RbsdeSolution *solution, double *out);

// Ratio of the two sides of the a-priori estimate at the problem's β.
//
// # Safety
// `solution` must be a live handle and `out` writable.
enum RbsdeStatus rbsde_solution_estimate_ratio(const struct RbsdeSolution *solution, double *out);

// # Safety
// `solution` must be a live handle; `iterations` and `converged` writable.
enum RbsdeStatus rbsde_solution_iterations(const struct RbsdeSolution *solution,
                                           size_t *iterations,
                                           bool *converged);

// Number of time steps `N`; valid nodes are `0 <= j <= i <= N`.
//
// # Safety
// `solution` must be a live handle and `out` writable.
enum RbsdeStatus rbsde_solution_steps(const struct RbsdeSolution *solution, size_t *out);

// `Y`, `Z` and `ΔK` at node `(i, j)`.
//
// # Safety
// `solution` must be a live handle; `y`, `z` and `dk` writable.
enum RbsdeStatus rbsde_solution_node(const struct RbsdeSolution *solution,
                                     size_t i,
                                     size_t j,
                                     double *y,
                                     double *z,
                                     double *dk);

// `12/β² + 6/β`.
//
// # Safety
// `out` must be writable.
enum RbsdeStatus rbsde_contraction_factor(double beta, double *out);

// Smallest β whose contraction factor is at most `rho`.
//
// # Safety
// `out` must be writable.
enum RbsdeStatus rbsde_min_beta_for_factor(double rho, double *out);

// CRR binomial American put.
//
// # Safety
// `out` must be writable.
enum RbsdeStatus rbsde_crr_american_put(double spot,
                                        double strike,
                                        double rate,
                                        double sigma,
                                        double maturity,
                                        size_t steps,
                                        double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RBSDE_H */
