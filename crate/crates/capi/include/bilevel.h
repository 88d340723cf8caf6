#ifndef BILEVEL_CAPI_H
#define BILEVEL_CAPI_H

/* Generated by cbindgen from bilevel-capi; do not edit by hand. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Outcome of the most recent call on this thread.
 */
typedef enum {
  BilevelStatus_Ok = 0,
  BilevelStatus_Error = 1,
  BilevelStatus_Infeasible = 2,
  BilevelStatus_SchemaError = 3,
} BilevelStatus;

/**
 * Opaque problem handle: the validated problem, its approximation family,
 * and the parameter schedule.
 */
typedef struct BilevelProblemHandle BilevelProblemHandle;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Status code of the most recent call on this thread.
 */
BilevelStatus bilevel_last_status(void);

/**
 * Message of the most recent failure on this thread, or null. The caller
 * frees the returned string with [`bilevel_string_free`].
 */
char *bilevel_last_error(void);

/**
 * Release a string allocated by this library.
 *
 * # Safety
 * `s` must be null or a pointer previously returned by one of these
 * functions, not yet freed.
 */
void bilevel_string_free(char *s);

/**
 * Parse a problem document from a JSON string. Null on failure.
 *
 * # Safety
 * `json` must be a valid NUL-terminated string.
 */
BilevelProblemHandle *bilevel_problem_parse(const char *json);

/**
 * Load a problem document from a file path. Null on failure.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string.
 */
BilevelProblemHandle *bilevel_problem_load(const char *path);

/**
 * Release a problem handle.
 *
 * # Safety
 * `h` must be null or a handle returned by the load/parse functions, not
 * yet freed.
 */
void bilevel_problem_free(BilevelProblemHandle *h);

/**
 * Solve the lifted formulation at accuracy `nu` and return the solve record
 * as JSON. With `use_oa` the full outer-approximation trace is returned
 * instead.
 *
 * # Safety
 * `h` must be a live handle from this library.
 */
char *bilevel_solve_json(const BilevelProblemHandle *h,
                         uint32_t nu,
                         bool use_oa,
                         bool want_minimal_lambda);

/**
 * Naive substitution baseline at accuracy `nu`, as a JSON solve record.
 *
 * # Safety
 * `h` must be a live handle from this library.
 */
char *bilevel_naive_json(const BilevelProblemHandle *h, uint32_t nu);

/**
 * Brute-force oracle for the exact problem, as JSON with the near-optimal
 * set.
 *
 * # Safety
 * `h` must be a live handle from this library.
 */
char *bilevel_oracle_json(const BilevelProblemHandle *h, double tie_tol);

/**
 * Accuracy sweep over `nu_from..=nu_to`, as a JSON convergence report.
 *
 * # Safety
 * `h` must be a live handle from this library.
 */
char *bilevel_sweep_json(const BilevelProblemHandle *h,
                         uint32_t nu_from,
                         uint32_t nu_to,
                         double tol);

/**
 * Accuracy sweep as fixed-column CSV rows.
 *
 * # Safety
 * `h` must be a live handle from this library.
 */
char *bilevel_sweep_csv(const BilevelProblemHandle *h,
                        uint32_t nu_from,
                        uint32_t nu_to,
                        double tol);

/**
 * Calmness certificate at the upper-level point `x` (length `x_len`). A
 * negative `rho` requests the pointwise certificate, a nonnegative one the
 * local certificate over the grid ball of that radius.
 *
 * # Safety
 * `h` must be a live handle; `x` must point to `x_len` readable doubles.
 */
char *bilevel_calmness_json(const BilevelProblemHandle *h,
                            const double *x,
                            uintptr_t x_len,
                            double rho,
                            double tol);

/**
 * Schedule validation report as JSON.
 *
 * # Safety
 * `h` must be a live handle from this library.
 */
char *bilevel_validate_json(const BilevelProblemHandle *h);

/**
 * Seeded random finite instance as a problem document.
 */
char *bilevel_generate_json(uint64_t seed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BILEVEL_CAPI_H */
