#ifndef ROTAPREC_H
#define ROTAPREC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>
#include <stdbool.h>

// Start from the GSVD precoder.
#define RP_INIT_GSVD 0

// Start from `V = I` with equal power.
#define RP_INIT_IDENTITY 1

#define RP_BRACKET_VERBATIM 0

#define RP_BRACKET_DESCENT 1

typedef enum RpStatus {
  RP_STATUS_OK = 0,
  RP_STATUS_NULL_POINTER = 1,
  RP_STATUS_INVALID_ARGUMENT = 2,
  RP_STATUS_NUMERICAL = 3,
  RP_STATUS_UNSUPPORTED = 4,
  RP_STATUS_BUFFER_TOO_SMALL = 5,
  RP_STATUS_PANIC = 6,
} RpStatus;

// Opaque channel pair `(H, G)`.
typedef struct RpChannel RpChannel;

// Opaque solved precoder.
typedef struct RpSolution RpSolution;

// Solver settings. Fill with `rp_solve_config_default` before changing fields.
typedef struct RpSolveConfig {
  double eps1;
  double eps2;
  size_t max_iters;
  // `RP_INIT_GSVD` or `RP_INIT_IDENTITY`
  int32_t init;
  // `RP_BRACKET_VERBATIM` or `RP_BRACKET_DESCENT`
  int32_t bracket_mode;
} RpSolveConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or an empty string.
// The pointer stays valid until the next failing call on the same thread.
const char *rp_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *rp_version(void);

// Build a channel from row-major `H` (`nr × nt`) and `G` (`ne × nt`).
//
// # Safety
// `h` and `g` must point to `nr*nt` and `ne*nt` doubles; `out` must be writable.
enum RpStatus rp_channel_new(const double *h,
                             size_t nr,
                             size_t nt,
                             const double *g,
                             size_t ne,
                             struct RpChannel **out);

// Draw an i.i.d. standard normal channel pair from `seed`.
//
// # Safety
// `out` must be writable.
enum RpStatus rp_channel_draw(size_t nt,
                              size_t nr,
                              size_t ne,
                              uint64_t seed,
                              struct RpChannel **out);

// # Safety
// `ch` must be a live channel handle; the out pointers may be null.
enum RpStatus rp_channel_dims(const struct RpChannel *ch, size_t *nt, size_t *nr, size_t *ne);

// Copy `H` row-major into `out` (at least `nr*nt` values).
//
// # Safety
// `ch` must be a live handle and `out` must hold `len` doubles.
enum RpStatus rp_channel_copy_h(const struct RpChannel *ch, double *out, size_t len);

// Copy `G` row-major into `out` (at least `ne*nt` values).
//
// # Safety
// `ch` must be a live handle and `out` must hold `len` doubles.
enum RpStatus rp_channel_copy_g(const struct RpChannel *ch, double *out, size_t len);

// # Safety
// `ch` must be null or a handle not yet freed.
void rp_channel_free(struct RpChannel *ch);

// Secrecy rate of the row-major `nt × nt` covariance `q`.
//
// # Safety
// `ch` must be live, `q` must hold `nt*nt` doubles, `rate` must be writable.
enum RpStatus rp_secrecy_rate_q(const struct RpChannel *ch,
                                const double *q,
                                size_t nt,
                                double *rate);

// # Safety
// `cfg` must be writable.
enum RpStatus rp_solve_config_default(struct RpSolveConfig *cfg);

// Run rotation-BFGS. `cfg` may be null for defaults.
//
// # Safety
// `ch` must be live, `cfg` null or readable, `out` writable.
enum RpStatus rp_solve(const struct RpChannel *ch,
                       double pt,
                       const struct RpSolveConfig *cfg,
                       struct RpSolution **out);

// GSVD precoder with optimal power allocation, without refinement.
//
// # Safety
// `ch` must be live and `out` writable.
enum RpStatus rp_gsvd_baseline(const struct RpChannel *ch, double pt, struct RpSolution **out);

// Brute-force reference rate for `nt ≤ 3`.
//
// # Safety
// `ch` must be live and `rate` writable.
enum RpStatus rp_grid_oracle(const struct RpChannel *ch,
                             double pt,
                             size_t grid_points,
                             size_t random_samples,
                             uint64_t seed,
                             double *rate);

// Rate in bits/s/Hz, or NaN for a null handle.
//
// # Safety
// `sol` must be null or live.
double rp_solution_rate(const struct RpSolution *sol);

// # Safety
// `sol` must be null or live.
size_t rp_solution_nt(const struct RpSolution *sol);

// # Safety
// `sol` must be null or live.
size_t rp_solution_iterations(const struct RpSolution *sol);

// # Safety
// `sol` must be null or live.
bool rp_solution_converged(const struct RpSolution *sol);

// Copy `Q` row-major (`nt*nt` values).
//
// # Safety
// `sol` must be live and `out` must hold `len` doubles.
enum RpStatus rp_solution_copy_q(const struct RpSolution *sol, double *out, size_t len);

// Copy `V` row-major (`nt*nt` values).
//
// # Safety
// `sol` must be live and `out` must hold `len` doubles.
enum RpStatus rp_solution_copy_v(const struct RpSolution *sol, double *out, size_t len);

// Copy the `nt` eigenvalues.
//
// # Safety
// `sol` must be live and `out` must hold `len` doubles.
enum RpStatus rp_solution_copy_lambda(const struct RpSolution *sol, double *out, size_t len);

// Copy the `nt(nt-1)/2` Givens angles in order `(0,1), (0,2), …`.
//
// # Safety
// `sol` must be live and `out` must hold `len` doubles.
enum RpStatus rp_solution_copy_theta(const struct RpSolution *sol, double *out, size_t len);

// # Safety
// `sol` must be null or a handle not yet freed.
void rp_solution_free(struct RpSolution *sol);

// Map `n` free eigenvalues to `n + 1` feasible ones summing to `pt`.
//
// # Safety
// `lambda_tilde` must hold `n` doubles (may be null when `n = 0`) and
// `out` must hold `out_len` doubles.
enum RpStatus rp_rectify(const double *lambda_tilde,
                         size_t n,
                         double pt,
                         double *out,
                         size_t out_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ROTAPREC_H */
