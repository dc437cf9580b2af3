#ifndef LYAPQFI_H
#define LYAPQFI_H

/* Generated by cbindgen; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code returned by every fallible entry point.
 */
typedef enum LyapqfiStatus {
  Ok = 0,
  /**
   * A required pointer argument was null.
   */
  NullPointer = 1,
  /**
   * Rejected parameters or an undersized output buffer.
   */
  InvalidArgument = 2,
  /**
   * Diagonalization, convergence, or another numerical failure.
   */
  NumericalFailure = 3,
  /**
   * A panic was caught at the ABI boundary.
   */
  Internal = 4,
} LyapqfiStatus;

/**
 * Opaque handle to a dense thermal probe with its encoded state, derivative,
 * and spectral data.
 */
typedef struct LyapqfiProbe LyapqfiProbe;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message into `buf` (NUL-terminated, truncated to
 * `cap` bytes) and returns the full message length excluding the NUL.
 * With a null `buf` or zero `cap` only the length is returned.
 */
uintptr_t lyapqfi_last_error_message(char *buf, uintptr_t cap);

/**
 * Builds a transverse-field Ising thermal probe with the local-Z encoding.
 * `g` is in units of `j`, `beta` in units of 1/`j`. On success `*out` owns
 * the handle; release it with `lyapqfi_probe_free`.
 */
enum LyapqfiStatus lyapqfi_probe_new(uint32_t n,
                                     double j,
                                     double g,
                                     double beta,
                                     double theta,
                                     struct LyapqfiProbe **out);

/**
 * Releases a probe handle. A null pointer is a no-op.
 */
void lyapqfi_probe_free(struct LyapqfiProbe *probe);

/**
 * Hilbert-space dimension of the probe.
 */
enum LyapqfiStatus lyapqfi_probe_dim(const struct LyapqfiProbe *probe, uintptr_t *out);

/**
 * Converged QFI from the spectral closed form.
 */
enum LyapqfiStatus lyapqfi_qfi_exact(const struct LyapqfiProbe *probe, double *out);

/**
 * Truncated QFI F(X) from the spectral closed form.
 */
enum LyapqfiStatus lyapqfi_qfi_truncated(const struct LyapqfiProbe *probe, double x, double *out);

/**
 * Numerically integrated QFI with adaptive stepping (tolerance `tau`) and
 * tail extrapolation over the final window of width `tail_window` (0 turns
 * the fit off). Writes the tail-augmented total.
 */
enum LyapqfiStatus lyapqfi_qfi_integrate_adaptive(const struct LyapqfiProbe *probe,
                                                  double x_max,
                                                  double tau,
                                                  double tail_window,
                                                  double *out);

/**
 * Numerically integrated QFI with a fixed step and no tail fit.
 */
enum LyapqfiStatus lyapqfi_qfi_integrate_fixed(const struct LyapqfiProbe *probe,
                                               double x_max,
                                               double ds,
                                               double *out);

/**
 * Exact SLD in the computational basis, written as interleaved re/im pairs
 * in row-major order. `len` must be at least 2 * dim * dim.
 */
enum LyapqfiStatus lyapqfi_sld_exact(const struct LyapqfiProbe *probe, double *out, uintptr_t len);

/**
 * Runs a full dense QFI pipeline in one call without exposing a handle:
 * thermal TFIM probe, adaptive integration to `x_max`, tail fit.
 */
enum LyapqfiStatus lyapqfi_qfi_tfim(uint32_t n,
                                    double j,
                                    double g,
                                    double beta,
                                    double x_max,
                                    double tau,
                                    double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LYAPQFI_H */
