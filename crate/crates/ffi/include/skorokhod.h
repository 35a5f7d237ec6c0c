#ifndef SKOROKHOD_H
#define SKOROKHOD_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SkStatus {
  SK_STATUS_OK = 0,
  SK_STATUS_NULL_POINTER = 1,
  SK_STATUS_INVALID_ARGUMENT = 2,
  SK_STATUS_DIMENSION_MISMATCH = 3,
  SK_STATUS_NON_CONVERGENCE = 4,
  SK_STATUS_OUT_OF_DOMAIN = 5,
  SK_STATUS_STEP_CONDITION = 6,
  SK_STATUS_BLOWUP = 7,
  SK_STATUS_NON_CAUCHY = 8,
  SK_STATUS_NO_CONTRACTION = 9,
  SK_STATUS_CONFIG = 10,
  SK_STATUS_IO = 11,
  SK_STATUS_PANIC = 12,
} SkStatus;

/**
 * Maximal monotone operator.
 */
typedef struct SkOperator SkOperator;

/**
 * Solution pair `(u, eta)` on a time grid.
 */
typedef struct SkSolution SkSolution;

/**
 * Weighted Euclidean space.
 */
typedef struct SkSpace SkSpace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *sk_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *sk_version(void);

/**
 * Creates a space of dimension `dim`; `weights` may be NULL for unit weights.
 *
 * # Safety
 * `weights` is NULL or points to `dim` doubles; `out` is a valid pointer.
 */
enum SkStatus sk_space_new(uintptr_t dim, const double *weights, struct SkSpace **out);

/**
 * # Safety
 * `space` is NULL or a handle from [`sk_space_new`] not yet freed.
 */
void sk_space_free(struct SkSpace *space);

/**
 * Builds an operator from its JSON description, e.g.
 * `{"kind": "scalar-graph", "graph": "interval", "lo": 0, "hi": "inf"}`.
 *
 * # Safety
 * `space` is a live handle, `json` a NUL-terminated string, `out` valid.
 */
enum SkStatus sk_operator_from_json(const struct SkSpace *space,
                                    const char *json,
                                    struct SkOperator **out);

/**
 * # Safety
 * `op` is NULL or a handle from [`sk_operator_from_json`] not yet freed.
 */
void sk_operator_free(struct SkOperator *op);

/**
 * Writes `(I + eps (A + alpha I))^{-1} x` to `out`; both arrays hold `len` doubles.
 *
 * # Safety
 * Handles are live; `x` and `out` point to `len` doubles.
 */
enum SkStatus sk_operator_resolvent(const struct SkOperator *op,
                                    const struct SkSpace *space,
                                    double eps,
                                    const double *x,
                                    double *out,
                                    uintptr_t len);

/**
 * Writes the Yosida approximation `(x - J_eps x) / eps` to `out`.
 *
 * # Safety
 * Handles are live; `x` and `out` point to `len` doubles.
 */
enum SkStatus sk_operator_yosida(const struct SkOperator *op,
                                 const struct SkSpace *space,
                                 double eps,
                                 const double *x,
                                 double *out,
                                 uintptr_t len);

/**
 * Solves `du + A u dt ∋ f dt + dM` on `[0, horizon]` with `steps` proximal
 * steps. `forcing` is a constant vector of length `dim`; `noise` is NULL or
 * the values of `M` at the `steps + 1` nodes, node-major, starting at zero.
 *
 * # Safety
 * Handles are live; arrays have the stated lengths; `out` is valid.
 */
enum SkStatus sk_solve_prox(const struct SkSpace *space,
                            const struct SkOperator *op,
                            const double *u0,
                            const double *forcing,
                            const double *noise,
                            uintptr_t dim,
                            double horizon,
                            uintptr_t steps,
                            struct SkSolution **out);

/**
 * # Safety
 * `sol` is NULL or a handle from [`sk_solve_prox`] not yet freed.
 */
void sk_solution_free(struct SkSolution *sol);

/**
 * Number of time nodes, or 0 for a NULL handle.
 *
 * # Safety
 * `sol` is NULL or a live handle.
 */
uintptr_t sk_solution_nodes(const struct SkSolution *sol);

/**
 * # Safety
 * `sol` is NULL or a live handle.
 */
uintptr_t sk_solution_dim(const struct SkSolution *sol);

/**
 * Copies the time nodes into `out`, which holds `len = nodes` doubles.
 *
 * # Safety
 * `sol` is live and `out` points to `len` doubles.
 */
enum SkStatus sk_solution_times(const struct SkSolution *sol, double *out, uintptr_t len);

/**
 * Copies `u`, node-major, into `out` (`len = nodes * dim`).
 *
 * # Safety
 * `sol` is live and `out` points to `len` doubles.
 */
enum SkStatus sk_solution_u(const struct SkSolution *sol, double *out, uintptr_t len);

/**
 * Copies `eta`, node-major, into `out` (`len = nodes * dim`).
 *
 * # Safety
 * `sol` is live and `out` points to `len` doubles.
 */
enum SkStatus sk_solution_eta(const struct SkSolution *sol, double *out, uintptr_t len);

/**
 * Runs a scenario file and writes its artifacts to `out_dir` (NULL for the
 * scenario's own setting). `exit_code` receives the command-line exit status.
 *
 * # Safety
 * `path` is a NUL-terminated string, `out_dir` NULL or one, `exit_code` valid.
 */
enum SkStatus sk_run_scenario(const char *path, const char *out_dir, int *exit_code);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SKOROKHOD_H */
