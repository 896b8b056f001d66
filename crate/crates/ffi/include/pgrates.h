#ifndef PGRATES_H
#define PGRATES_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum PgStatus {
  PG_STATUS_OK = 0,
  // A required pointer was null, a string was not UTF-8 or a length was wrong.
  PG_STATUS_INVALID_ARGUMENT = 1,
  PG_STATUS_INVALID_INPUT = 2,
  PG_STATUS_INVALID_CONFIG = 3,
  PG_STATUS_DIMENSION_MISMATCH = 4,
  PG_STATUS_PRECONDITION = 5,
  PG_STATUS_DEGENERATE = 6,
  PG_STATUS_NON_FINITE = 7,
  PG_STATUS_TRACE_TOO_SHORT = 8,
  PG_STATUS_NUMERICAL = 9,
  PG_STATUS_IO = 10,
  // A Rust panic was caught at the boundary.
  PG_STATUS_PANIC = 11,
} PgStatus;

// Tabular MDP handle.
typedef struct PgMdp PgMdp;

// Optimizer trace handle.
typedef struct PgTrace PgTrace;

// One recorded iteration. Fields that do not apply to the run are NaN.
typedef struct PgRecord {
  uint64_t t;
  double delta;
  double soft_delta;
  double opt_prob;
  double min_prob;
  double zeta_norm;
  double grad_norm;
  double tau_t;
} PgRecord;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer stays
// valid until the next call into this library on the same thread.
const char *pg_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *pg_version(void);

// Parses an MDP from JSON (full form or the `{"rewards": [...]}` bandit
// shorthand).
//
// # Safety
// `json` must be a NUL-terminated string and `out` a valid pointer.
enum PgStatus pg_mdp_from_json(const char *json, struct PgMdp **out);

// Single-state bandit with `num_actions` rewards.
//
// # Safety
// `rewards` must point to `num_actions` doubles and `out` be valid.
enum PgStatus pg_mdp_bandit(const double *rewards, size_t num_actions, struct PgMdp **out);

// # Safety
// `mdp` must be null or a handle from this library that was not yet freed.
void pg_mdp_free(struct PgMdp *mdp);

// # Safety
// `mdp` must be a live handle.
enum PgStatus pg_mdp_dims(const struct PgMdp *mdp, size_t *num_states, size_t *num_actions);

// `V^{π_θ}(μ)`. A null `mu` means the uniform distribution.
//
// # Safety
// `logits` must hold `num_states × num_actions` doubles, `mu` null or
// `num_states` doubles.
enum PgStatus pg_policy_value(const struct PgMdp *mdp,
                              const double *logits,
                              size_t len,
                              const double *mu,
                              double *out_value);

// Exact policy gradient at `θ`, written row-major to `out`. `tau = 0` gives
// the plain gradient, `tau > 0` the entropy-regularized one.
//
// # Safety
// `logits` and `out` must each hold `len` doubles, `mu` null or
// `num_states` doubles.
enum PgStatus pg_policy_gradient(const struct PgMdp *mdp,
                                 const double *logits,
                                 size_t len,
                                 const double *mu,
                                 double tau,
                                 double *out);

// Optimal state values into `v_star` (`num_states` doubles) and the optimal
// value gap into `delta_star`. Either output may be null.
//
// # Safety
// Non-null outputs must be valid for writes.
enum PgStatus pg_solve_optimal(const struct PgMdp *mdp, double *v_star, double *delta_star);

// Runs the optimizer on a JSON run config.
//
// # Safety
// `config_json` must be NUL-terminated and `out` valid.
enum PgStatus pg_run(const char *config_json, struct PgTrace **out);

// # Safety
// `trace` must be null or a live handle.
void pg_trace_free(struct PgTrace *trace);

// Number of recorded iterations, iterations executed and the instance's
// optimal value gap. Any output may be null.
//
// # Safety
// `trace` must be a live handle.
enum PgStatus pg_trace_info(const struct PgTrace *trace,
                            size_t *num_records,
                            size_t *iterations_run,
                            double *delta_star);

// # Safety
// `trace` must be a live handle and `out` valid.
enum PgStatus pg_trace_record(const struct PgTrace *trace, size_t index, struct PgRecord *out);

// The trace as CSV. Release the string with [`pg_string_free`].
//
// # Safety
// `trace` must be a live handle and `out` valid.
enum PgStatus pg_trace_csv(const struct PgTrace *trace, char **out);

// # Safety
// `s` must be null or a string returned by this library.
void pg_string_free(char *s);

// Runs a verification suite; writes the report and failure counts.
//
// # Safety
// `suite` must be NUL-terminated; outputs may be null.
enum PgStatus pg_verify(const char *suite,
                        size_t trials,
                        uint64_t seed,
                        size_t *num_checks,
                        size_t *num_failures);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PGRATES_H */
