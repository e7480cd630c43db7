#ifndef PKSH_H
#define PKSH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes of every fallible call.
 */
typedef enum PkshStatus {
  PKSH_STATUS_OK = 0,
  PKSH_STATUS_NULL_POINTER = 1,
  PKSH_STATUS_INVALID_ARGUMENT = 2,
  PKSH_STATUS_NUMERICAL = 3,
  PKSH_STATUS_CONFIG = 4,
  PKSH_STATUS_IO = 5,
  /**
   * The threshold lemma's preconditions do not hold.
   */
  PKSH_STATUS_LEMMA_FAILED = 6,
  /**
   * A stage of a scenario run reported an error.
   */
  PKSH_STATUS_STAGE_FAILED = 7,
  PKSH_STATUS_PANIC = 8,
} PkshStatus;

/**
 * Effective diffusivity and drift.
 */
typedef struct PkshCoefficients PkshCoefficients;

/**
 * Weight fields `𝔢`, `𝔢_*` of a signal on the fast torus.
 */
typedef struct PkshWeight PkshWeight;

/**
 * Scalar data of one normal mode.
 */
typedef struct PkshMode {
  double mu_hat;
  double chi_hat;
  double delta_hat;
  double c_hat;
} PkshMode;

/**
 * Sign-change triad of a normal mode.
 */
typedef struct PkshTriad {
  double delta0;
  double delta2;
  double delta4;
  uint32_t sign_changes;
  bool neutral;
} PkshTriad;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static nul-terminated string.
 */
const char *pksh_version(void);

/**
 * Message of the last failure on this thread, or null. Valid until the
 * next call into the library from the same thread.
 */
const char *pksh_last_error(void);

/**
 * Weights of a tabulated signal `h` given in τ-major order
 * (`tau_points × Π xi_points` samples).
 *
 * # Safety
 * Array arguments must hold the documented number of values and `out`
 * must be writable.
 */
enum PkshStatus pksh_weight_new_tabulated(size_t dim,
                                          const double *xi_periods,
                                          const size_t *xi_points,
                                          double tau_period,
                                          size_t tau_points,
                                          const double *h,
                                          size_t h_len,
                                          double kappa,
                                          double mu,
                                          struct PkshWeight **out);

/**
 * Weights of the traveling wave `h = a cos(θ·ξ − cτ)`.
 *
 * # Safety
 * `xi_periods`, `xi_points` and `direction` must hold `dim` values and
 * `out` must be writable.
 */
enum PkshStatus pksh_weight_new_traveling_wave(size_t dim,
                                               const double *xi_periods,
                                               const size_t *xi_points,
                                               double tau_period,
                                               size_t tau_points,
                                               double amplitude,
                                               const double *direction,
                                               double speed,
                                               double kappa,
                                               double mu,
                                               struct PkshWeight **out);

/**
 * Number of τ nodes of the weight's torus, or 0 for a null handle.
 *
 * # Safety
 * `w` must be null or a live handle.
 */
size_t pksh_weight_tau_points(const struct PkshWeight *w);

/**
 * Copy `⟨𝔢⟩^ξ` and `⟨𝔢⁻¹⟩^ξ` at every τ node into two buffers of `len`
 * values; `len` must equal the number of τ nodes.
 *
 * # Safety
 * `w` must be a live handle and both buffers must hold `len` values.
 */
enum PkshStatus pksh_weight_means(const struct PkshWeight *w,
                                  double *mean_e,
                                  double *mean_inv_e,
                                  size_t len);

/**
 * # Safety
 * `w` must be null or a handle not yet freed.
 */
void pksh_weight_free(struct PkshWeight *w);

/**
 * Effective diffusivity `D̄` and drift `c̄` of a weight.
 *
 * # Safety
 * `w` must be a live handle and `out` writable.
 */
enum PkshStatus pksh_coefficients_compute(const struct PkshWeight *w,
                                          double mu,
                                          struct PkshCoefficients **out);

/**
 * Spatial dimension, or 0 for a null handle.
 *
 * # Safety
 * `c` must be null or a live handle.
 */
size_t pksh_coefficients_dim(const struct PkshCoefficients *c);

/**
 * Copy `D̄` row-major into `out` (`len = dim²`).
 *
 * # Safety
 * `c` must be a live handle and `out` must hold `len` values.
 */
enum PkshStatus pksh_coefficients_dbar(const struct PkshCoefficients *c, double *out, size_t len);

/**
 * Copy `c̄` into `out` (`len = dim`).
 *
 * # Safety
 * `c` must be a live handle and `out` must hold `len` values.
 */
enum PkshStatus pksh_coefficients_cbar(const struct PkshCoefficients *c, double *out, size_t len);

/**
 * # Safety
 * `c` must be null or a handle not yet freed.
 */
void pksh_coefficients_free(struct PkshCoefficients *c);

/**
 * Triad `(Δ₀, Δ₂, Δ₄)` and its sign-change count.
 *
 * # Safety
 * `mode` and `out` must be valid; `abar` must hold four values.
 */
enum PkshStatus pksh_triad(const struct PkshMode *mode, const double *abar, struct PkshTriad *out);

/**
 * Number of eigenvalues of the mode matrix with positive real part.
 *
 * # Safety
 * `mode` and `out` must be valid; `abar` must hold four values.
 */
enum PkshStatus pksh_unstable_count(const struct PkshMode *mode, const double *abar, uint32_t *out);

/**
 * Squared drift threshold `ĉ*²`; `LemmaFailed` when the preconditions do
 * not hold.
 *
 * # Safety
 * `mode` and `out` must be valid; `abar` must hold four values.
 */
enum PkshStatus pksh_threshold_chat2(const struct PkshMode *mode, const double *abar, double *out);

/**
 * Run every stage listed in a scenario file, writing artifacts to
 * `out_dir`. Returns `StageFailed` when any stage reported an error.
 *
 * # Safety
 * Both arguments must be valid nul-terminated strings.
 */
enum PkshStatus pksh_run_scenario(const char *config_path, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PKSH_H */
