#ifndef HERMITE_LAB_H
#define HERMITE_LAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

typedef enum HlStatus {
  HL_STATUS_OK = 0,
  HL_STATUS_NULL_POINTER = 1,
  HL_STATUS_INVALID_ARGUMENT = 2,
  HL_STATUS_RANK_UNDEFINED = 3,
  HL_STATUS_CRITICAL_CASE = 4,
  HL_STATUS_REGIME = 5,
  HL_STATUS_HLS_PRECONDITION = 6,
  HL_STATUS_TAIL_MASS = 7,
  HL_STATUS_NUMERICAL = 8,
  HL_STATUS_CONFIG = 9,
  HL_STATUS_IO = 10,
  // Caller buffer has the wrong length.
  HL_STATUS_BUFFER_SIZE = 11,
  HL_STATUS_PANIC = 12,
} HlStatus;

// Causal moving-average kernel.
typedef struct HlKernel HlKernel;

// Polynomial with exact rational coefficients.
typedef struct HlPolynomial HlPolynomial;

// Reusable sampler of a Hermite-driven moving average on a fixed grid.
typedef struct HlSimulator HlSimulator;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. Owned by the library; valid until
// the next call on the same thread.
const char *hl_last_error_message(void);

// Releases a string returned by this library. NULL is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void hl_string_free(char *s);

// Library version, static storage.
const char *hl_version(void);

// Parses coefficients in increasing degree, e.g. `"0 0 1/2"`.
//
// # Safety
// `text` must be a NUL-terminated string; `out` must be writable.
enum HlStatus hl_polynomial_parse(const char *text, struct HlPolynomial **out);

// # Safety
// `p` must come from [`hl_polynomial_parse`] or be NULL.
void hl_polynomial_free(struct HlPolynomial *p);

// Centered Hermite rank of `p` for `N(0, variance)`; `variance` is a rational such as `"1"`.
//
// # Safety
// Pointers must be valid; `variance` NUL-terminated.
enum HlStatus hl_hermite_rank(const struct HlPolynomial *p, const char *variance, size_t *out);

// Hermite expansion as JSON; release with [`hl_string_free`].
//
// # Safety
// Pointers must be valid; `variance` NUL-terminated.
enum HlStatus hl_hermite_expand_json(const struct HlPolynomial *p,
                                     const char *variance,
                                     char **out_json);

// Normalizing constant `c_{H,q}` of the Hermite process.
//
// # Safety
// `out` must be writable.
enum HlStatus hl_c_hq(uint32_t q, double h, double *out);

// `e^{−rate·s}`.
//
// # Safety
// `out` must be writable.
enum HlStatus hl_kernel_exponential(double rate, struct HlKernel **out);

// `(1 + s/scale)^{−exponent}`.
//
// # Safety
// `out` must be writable.
enum HlStatus hl_kernel_power_cutoff(double exponent, double scale, struct HlKernel **out);

// Piecewise constant: `samples[k]` on `[k·dt, (k+1)·dt)`. The samples are copied.
//
// # Safety
// `samples` must point to `len` readable doubles; `out` must be writable.
enum HlStatus hl_kernel_tabulated(const double *samples,
                                  size_t len,
                                  double dt,
                                  struct HlKernel **out);

// # Safety
// `k` must come from a `hl_kernel_*` constructor or be NULL.
void hl_kernel_free(struct HlKernel *k);

// Covariance `ρ(s)` of the fBm-driven moving average with Hurst index `h`.
//
// # Safety
// Pointers must be valid; `abs_error` may be NULL.
enum HlStatus hl_ma_covariance(const struct HlKernel *kernel,
                               double h,
                               double s,
                               double *value,
                               double *abs_error);

// Fills `buf` with `len` exact fGn increments on a grid of step `dt`.
//
// # Safety
// `buf` must point to `len` writable doubles.
enum HlStatus hl_fgn(double h, double dt, uint64_t seed, uint64_t stream, double *buf, size_t len);

// Sampler of `X` on `0, dt, …, t_max`, driven by the order-`q` Hermite process.
//
// # Safety
// `kernel` must be valid; `out` writable.
enum HlStatus hl_simulator_new(uint32_t q,
                               double h,
                               const struct HlKernel *kernel,
                               double dt,
                               double t_max,
                               size_t substeps,
                               struct HlSimulator **out);

// Number of values per path.
//
// # Safety
// `sim` must be valid; `out` writable.
enum HlStatus hl_simulator_len(const struct HlSimulator *sim, size_t *out);

// Exact `Var X(t)` of the simulated discrete model.
//
// # Safety
// `sim` must be valid; `out` writable.
enum HlStatus hl_simulator_model_variance(const struct HlSimulator *sim, double *out);

// Draws the path for `(seed, stream)` into `buf`; `len` must equal [`hl_simulator_len`].
//
// # Safety
// `sim` must be valid; `buf` must point to `len` writable doubles.
enum HlStatus hl_simulator_sample(const struct HlSimulator *sim,
                                  uint64_t seed,
                                  uint64_t stream,
                                  double *buf,
                                  size_t len);

// # Safety
// `sim` must come from [`hl_simulator_new`] or be NULL.
void hl_simulator_free(struct HlSimulator *sim);

// Variance-scaling scan over `horizons` with default grid settings; the report is JSON,
// released with [`hl_string_free`].
//
// # Safety
// Handles must be valid; `horizons` must point to `n_horizons` doubles; `out_json` writable.
enum HlStatus hl_scan_scaling_json(uint32_t q,
                                   double h,
                                   const struct HlPolynomial *p,
                                   const struct HlKernel *kernel,
                                   const double *horizons,
                                   size_t n_horizons,
                                   size_t replications,
                                   uint64_t seed,
                                   char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HERMITE_LAB_H */
