/* C interface to the outage probability laboratory. */

#ifndef OUTAGE_LAB_H
#define OUTAGE_LAB_H

/* Generated by cbindgen from the outage-lab-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status code returned by every fallible entry point.
typedef enum {
  // The call succeeded and the out-pointer holds the result.
  OL_STATUS_OK = 0,
  // A required pointer argument was null; nothing was written.
  OL_STATUS_NULL_POINTER = 1,
  // An argument failed validation; nothing was written.
  OL_STATUS_INVALID_ARGUMENT = 2,
  // A numerical procedure could not certify a result.
  OL_STATUS_NUMERICAL = 3,
  // An unexpected internal fault was contained; please report it.
  OL_STATUS_INTERNAL = 4,
} OlStatus;

// How an estimate was produced.
typedef enum {
  // Adaptive quadrature with a hard error bound.
  OL_METHOD_QUADRATURE = 0,
  // Monte Carlo over explicit channel matrices.
  OL_METHOD_MC_DIRECT = 1,
  // Monte Carlo over the reduced two-antenna variables.
  OL_METHOD_MC_REDUCED = 2,
  // Monte Carlo over the grouped power pattern reduction.
  OL_METHOD_MC_SPECIAL = 3,
} OlMethod;

// Outcome of one sign condition in the interior-minimum test.
typedef enum {
  // The condition holds beyond the tolerance.
  OL_CONDITION_MET = 0,
  // The condition fails beyond the tolerance.
  OL_CONDITION_FAILED = 1,
  // The value sits inside the tolerance band.
  OL_CONDITION_INCONCLUSIVE = 2,
} OlCondition;

// Verdict of the paired perturbation test on a uniform power pattern.
typedef enum {
  // Some perturbation lowers the outage probability.
  OL_PERTURBATION_REJECTED = 0,
  // Every tested perturbation raises the outage probability.
  OL_PERTURBATION_NOT_REJECTED = 1,
  // At least one comparison is within noise.
  OL_PERTURBATION_INCONCLUSIVE = 2,
} OlPerturbation;

// Opaque evaluation session holding the quadrature tolerances.
typedef struct OlSession OlSession;

// A probability estimate with its uncertainty and sampling counters.
typedef struct {
  // Estimated outage probability.
  double value;
  // Hard quadrature error bound or Monte Carlo standard error.
  double uncertainty;
  // Integrand evaluations or Monte Carlo draws behind the estimate.
  uint64_t n_samples;
  // Draws discarded after a numerical failure (Monte Carlo only).
  uint64_t n_eval_errors;
  // Which estimator produced the value.
  OlMethod method;
} OlEstimate;

// A derivative of the transfer curve with its hard error bound.
typedef struct {
  // Derivative value.
  double value;
  // Hard error bound; zero for closed-form boundary values.
  double err_bound;
  // Integrand evaluations spent.
  uint64_t evaluations;
} OlDerivative;

// Result of the two-sided slope test for a strictly interior minimizer.
typedef struct {
  // First derivative of the transfer curve at full concentration.
  double d1_at_zero;
  // Second derivative at full concentration.
  double d2_at_zero;
  // Second derivative at the uniform split.
  double d2_at_half;
  // Hard error bound on `d2_at_half`.
  double d2_at_half_err;
  // Tolerance band used for all sign tests.
  double tol;
  // Whether the curve initially descends from full concentration.
  OlCondition zero_side;
  // Whether the uniform split is a local maximum of the curve.
  OlCondition center_side;
  // Both sides met: an interior split beats both canonical candidates.
  bool counterexample_found;
  // At least one side could not be decided at this tolerance.
  bool inconclusive;
} OlTheorem1;

// Location and value of the best split found by the minimizer.
typedef struct {
  // Minimizing first power, in `[0, P/2]` by symmetry.
  double q_star;
  // Outage probability at `q_star`.
  double f_star;
  // Hard error bound on `f_star`.
  double f_star_err;
  // Outage probability at full concentration.
  double f_at_zero;
  // Outage probability at the uniform split.
  double f_at_half;
  // Hard error bound on `f_at_half`.
  double f_at_half_err;
  // Total integrand evaluations spent in the search.
  uint64_t evaluations;
} OlMinSplit;

// A paired Monte Carlo difference; `present` is false when the direction
// does not exist for the requested pattern.
typedef struct {
  // Whether this direction was tested.
  bool present;
  // Mean outage change caused by the perturbation.
  double delta;
  // Standard error of the mean; named to dodge the C `stderr` macro.
  double std_err;
} OlDelta;

// Result of the paired perturbation test around a uniform pattern.
typedef struct {
  // Number of active antennas in the tested pattern.
  uint32_t k;
  // Perturbation size that was applied.
  double eps;
  // Paired draws requested.
  uint64_t n_samples;
  // Draws discarded because a factorization failed.
  uint64_t n_eval_errors;
  // Outage change when power moves to an idle antenna (absent for k = t).
  OlDelta delta_prime;
  // Outage change for a transfer between active antennas (absent for k = 1).
  OlDelta delta_double_prime;
  // Combined verdict at three standard errors.
  OlPerturbation verdict;
} OlTheorem2;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Returns the library version as a static nul-terminated string.
const char *ol_version(void);

// Returns a static description of a status code; unknown codes included.
const char *ol_status_message(int32_t status);

// Returns the message of the most recent failure on the calling thread.
//
// Null when no failure has occurred yet. The pointer stays valid until the
// next failing call on the same thread.
const char *ol_last_error_message(void);

// Creates a session with explicit quadrature tolerances.
//
// Convergence is declared when the error bound drops below
// `max(abs_tol, rel_tol * |value|)`; at least one tolerance must be
// positive. The handle must be released with `ol_session_free`.
//
// # Safety
//
// `out_session` must be null (rejected with a status) or valid for a
// pointer-sized write.
OlStatus ol_session_new(double abs_tol,
                        double rel_tol,
                        uint32_t max_subdivisions,
                        OlSession **out_session);

// Creates a session with the library's default tolerances.
//
// # Safety
//
// `out_session` must be null (rejected with a status) or valid for a
// pointer-sized write.
OlStatus ol_session_default(OlSession **out_session);

// Releases a session handle; null is accepted and ignored.
//
// # Safety
//
// `session` must be null or a handle returned by `ol_session_new` or
// `ol_session_default` that has not been freed yet.
void ol_session_free(OlSession *session);

// Outage probability of the split `(q1, q2)` by adaptive quadrature.
//
// The channel has two transmit and `r` receive antennas; the rate is in
// nats and the power budget is `q1 + q2`. The estimate carries a hard
// error bound.
//
// # Safety
//
// `session` must be null (rejected with a status) or a live session handle;
// `out` must be null (rejected) or valid for a write of its pointee.
OlStatus ol_outage(const OlSession *session,
                   uint32_t r,
                   double rate_nats,
                   double q1,
                   double q2,
                   OlEstimate *out);

// Monte Carlo outage probability of `(q1, q2)` via the reduced variables.
//
// Deterministic in `(seed, stream_id)`; the estimate carries the binomial
// standard error.
//
// # Safety
//
// `out` must be null (rejected with a status) or valid for a write of its
// pointee.
OlStatus ol_outage_mc_reduced(uint32_t r,
                              double rate_nats,
                              double q1,
                              double q2,
                              uint64_t n_samples,
                              uint64_t seed,
                              uint64_t stream_id,
                              OlEstimate *out);

// Monte Carlo outage probability over explicit channel matrices.
//
// `powers` must hold exactly `t` nonnegative per-antenna powers; their sum
// is the budget. Works for any supported antenna counts, not only `t = 2`.
//
// # Safety
//
// `powers` must be null (rejected with a status) or point to `n_powers`
// readable doubles; `out` must be null (rejected) or valid for a write of
// its pointee.
OlStatus ol_outage_mc_direct(uint32_t t,
                             uint32_t r,
                             double rate_nats,
                             const double *powers,
                             size_t n_powers,
                             uint64_t n_samples,
                             uint64_t seed,
                             uint64_t stream_id,
                             OlEstimate *out);

// Monte Carlo outage probability of a grouped power pattern.
//
// The pattern puts `q0` on each of `k - 2` grouped antennas and `qa`, `qb`
// on the two remaining active ones; `k = 2` requires `q0 = 0`. Estimated
// through the eigenvalue reduction rather than explicit `t x t`
// determinants.
//
// # Safety
//
// `out` must be null (rejected with a status) or valid for a write of its
// pointee.
OlStatus ol_outage_mc_special(uint32_t t,
                              uint32_t r,
                              double rate_nats,
                              double q0,
                              double qa,
                              double qb,
                              uint32_t k,
                              uint64_t n_samples,
                              uint64_t seed,
                              uint64_t stream_id,
                              OlEstimate *out);

// First derivative of `q -> f(q, P - q)` at `q`, with a hard error bound.
//
// # Safety
//
// `session` must be null (rejected with a status) or a live session handle;
// `out` must be null (rejected) or valid for a write of its pointee.
OlStatus ol_transfer_first_derivative(const OlSession *session,
                                      uint32_t r,
                                      double rate_nats,
                                      double total_power,
                                      double q,
                                      OlDerivative *out);

// Second derivative of `q -> f(q, P - q)` at `q`, with a hard error bound.
//
// # Safety
//
// `session` must be null (rejected with a status) or a live session handle;
// `out` must be null (rejected) or valid for a write of its pointee.
OlStatus ol_transfer_second_derivative(const OlSession *session,
                                       uint32_t r,
                                       double rate_nats,
                                       double total_power,
                                       double q,
                                       OlDerivative *out);

// Two-sided slope test for a strictly interior optimal split.
//
// Sign decisions use the band `[-sign_tol, sign_tol]`; values inside it are
// reported as inconclusive rather than coerced to a verdict.
//
// # Safety
//
// `session` must be null (rejected with a status) or a live session handle;
// `out` must be null (rejected) or valid for a write of its pointee.
OlStatus ol_theorem1_check(const OlSession *session,
                           uint32_t r,
                           double rate_nats,
                           double total_power,
                           double sign_tol,
                           OlTheorem1 *out);

// Minimizes the outage probability over splits `(q, P - q)`.
//
// A coarse grid of `grid_points >= 3` samples on `[0, P/2]` locates the
// best basin; golden-section refinement narrows it. All values come from
// the quadrature estimator and carry hard bounds.
//
// # Safety
//
// `session` must be null (rejected with a status) or a live session handle;
// `out` must be null (rejected) or valid for a write of its pointee.
OlStatus ol_find_min_split(const OlSession *session,
                           uint32_t r,
                           double rate_nats,
                           double total_power,
                           uint32_t grid_points,
                           OlMinSplit *out);

// Paired Monte Carlo test of local optimality of the uniform `k` pattern.
//
// Spreads `total_power` uniformly over `k` of `t` antennas and compares the
// pattern against its `eps`-perturbations under common random numbers.
// Deterministic in `(seed, stream_id)`.
//
// # Safety
//
// `out` must be null (rejected with a status) or valid for a write of its
// pointee.
OlStatus ol_theorem2_check(uint32_t t,
                           uint32_t r,
                           double rate_nats,
                           double total_power,
                           uint32_t k,
                           double eps,
                           uint64_t n_samples,
                           uint64_t seed,
                           uint64_t stream_id,
                           OlTheorem2 *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OUTAGE_LAB_H */
