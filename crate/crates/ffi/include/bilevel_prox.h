#ifndef BILEVEL_PROX_H
#define BILEVEL_PROX_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum BpStatus {
  BP_STATUS_OK = 0,
  BP_STATUS_NULL_POINTER = 1,
  BP_STATUS_INVALID_UTF8 = 2,
  BP_STATUS_PARSE = 3,
  BP_STATUS_SOLVER = 4,
  BP_STATUS_IO = 5,
  BP_STATUS_OUT_OF_RANGE = 6,
  BP_STATUS_CERTIFICATE = 7,
  BP_STATUS_UNSUPPORTED = 8,
  BP_STATUS_PANIC = 9,
} BpStatus;

typedef enum BpStopReason {
  BP_STOP_REASON_MAX_ITER = 0,
  BP_STOP_REASON_CRITERION = 1,
  BP_STOP_REASON_FAILURE = 2,
} BpStopReason;

// Opaque loaded problem.
typedef struct BpProblem BpProblem;

// Opaque solver trace.
typedef struct BpTrace BpTrace;

// Scalar columns of one trace row; absent values are NaN.
typedef struct BpRow {
  size_t k;
  double eps_k;
  double lambda_k;
  double eta_k;
  double f;
  double g_or_gap;
  double dist_to_ref;
  double step_norm;
  double eta1;
  double eta2;
  bool stop_flag;
} BpRow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. The pointer
// stays valid until the next failing call on the same thread.
const char *bp_last_error(void);

// Parses a JSON problem description into `*out`.
//
// # Safety
// `json` must be a NUL-terminated string and `out` a valid pointer.
enum BpStatus bp_problem_from_json(const char *json, struct BpProblem **out);

// Dimension of the problem, or 0 for NULL.
//
// # Safety
// `problem` must be NULL or a live handle.
size_t bp_problem_dim(const struct BpProblem *problem);

// Overrides the iteration limit of SBP and SMPEC runs.
//
// # Safety
// `problem` must be NULL or a live handle.
enum BpStatus bp_problem_set_max_iter(struct BpProblem *problem, size_t max_iter);

// Enables the ε₀ stopping test; `eps0` must be positive.
//
// # Safety
// `problem` must be NULL or a live handle.
enum BpStatus bp_problem_set_stop_eps0(struct BpProblem *problem, double eps0);

// # Safety
// `problem` must be NULL or a handle from [`bp_problem_from_json`] that
// has not been freed.
void bp_problem_free(struct BpProblem *problem);

// Runs the solver. On `BP_STATUS_OK` or a failure inside the loop
// (`BP_STATUS_SOLVER` with a non-NULL `*out`) the trace is stored in
// `*out`; a run that cannot start leaves `*out` NULL.
//
// # Safety
// `problem` must be a live handle and `out` a valid pointer.
enum BpStatus bp_solve(const struct BpProblem *problem, struct BpTrace **out);

// Number of rows (iterates) in the trace, or 0 for NULL.
//
// # Safety
// `trace` must be NULL or a live handle.
size_t bp_trace_len(const struct BpTrace *trace);

// Dimension of the iterates, or 0 for NULL.
//
// # Safety
// `trace` must be NULL or a live handle.
size_t bp_trace_dim(const struct BpTrace *trace);

// Copies iterate `index` into `out[0..len]`; `len` must equal the dimension.
//
// # Safety
// `trace` must be a live handle and `out` must hold `len` doubles.
enum BpStatus bp_trace_iterate(const struct BpTrace *trace, size_t index, double *out, size_t len);

// Scalar columns of row `index`.
//
// # Safety
// `trace` must be a live handle and `out` a valid pointer.
enum BpStatus bp_trace_row(const struct BpTrace *trace, size_t index, struct BpRow *out);

// Distance of the last iterate to the reference set; NaN when the problem
// has no reference or `trace` is NULL.
//
// # Safety
// `trace` must be NULL or a live handle.
double bp_trace_final_dist(const struct BpTrace *trace);

// Why the run ended. For `BP_STOP_REASON_FAILURE` the solver message is
// returned by [`bp_last_error`] right after [`bp_solve`].
//
// # Safety
// `trace` must be a live handle.
enum BpStopReason bp_trace_stop_reason(const struct BpTrace *trace);

// Writes the trace as CSV to `path`.
//
// # Safety
// `trace` must be a live handle and `path` a NUL-terminated string.
enum BpStatus bp_trace_write_csv(const struct BpTrace *trace, const char *path);

// # Safety
// `trace` must be NULL or a handle from [`bp_solve`] that has not been freed.
void bp_trace_free(struct BpTrace *trace);

// Re-checks every step certificate of `trace` against `problem`.
// Returns `BP_STATUS_CERTIFICATE` naming the failing row on a bad step.
//
// # Safety
// Both handles must be live.
enum BpStatus bp_verify_trace(const struct BpProblem *problem, const struct BpTrace *trace);

// Like [`bp_verify_trace`] for a CSV trace on disk.
//
// # Safety
// `problem` must be a live handle and `path` a NUL-terminated string.
enum BpStatus bp_verify_csv(const struct BpProblem *problem, const char *path);

// Dual gap of the problem's operator over its set at `x[0..len]`, to
// accuracy `tol`. Only SMPEC and penalty problems on compact sets have one.
//
// # Safety
// `problem` must be a live handle, `x` must hold `len` doubles and `out`
// must be a valid pointer.
enum BpStatus bp_dual_gap(const struct BpProblem *problem,
                          const double *x,
                          size_t len,
                          double tol,
                          double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BILEVEL_PROX_H */
