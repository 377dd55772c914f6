#ifndef SDT_FFI_H
#define SDT_FFI_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  SDT_INIT_AUTO = 0,
  SDT_INIT_RANDOM = 1,
  SDT_INIT_SVD = 2,
} SdtInit;

// Result code of every call.
typedef enum {
  SDT_STATUS_OK = 0,
  // A required pointer was null.
  SDT_STATUS_NULL = 1,
  // Invalid argument (bad ranks, shapes, options).
  SDT_STATUS_ARGUMENT = 2,
  // Index out of range.
  SDT_STATUS_BOUNDS = 3,
  // Numerical failure: non-convergence, degenerate fit, domain error.
  SDT_STATUS_NUMERICAL = 4,
  // Malformed input file.
  SDT_STATUS_PARSE = 5,
  SDT_STATUS_IO = 6,
  // Internal panic caught at the boundary.
  SDT_STATUS_PANIC = 7,
} SdtStatus;

typedef enum {
  SDT_MODEL_KIND_PARAFAC = 0,
  SDT_MODEL_KIND_TUCKER = 1,
  SDT_MODEL_KIND_SDT = 2,
} SdtModelKind;

typedef enum {
  SDT_MARKET_MODE_KEEP = 0,
  SDT_MARKET_MODE_REMOVE = 1,
} SdtMarketMode;

// Opaque dense matrix.
typedef struct SdtMatrix SdtMatrix;

// Opaque fitted model.
typedef struct SdtModel SdtModel;

// Opaque three-way tensor.
typedef struct SdtTensor SdtTensor;

// ALS settings; obtain defaults from `sdt_als_config_default`.
typedef struct {
  size_t max_iter;
  double tol;
  size_t restarts;
  uint64_t seed;
  SdtInit init;
} SdtAlsConfig;

typedef struct {
  double ssr;
  double rel_error;
  size_t iterations;
  bool converged;
  size_t restart;
} SdtFitSummary;

typedef struct {
  double kw_statistic;
  double kw_p_value;
  double ks_statistic;
  double ks_p_value;
} SdtSpectrumResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the calling thread's last error message into `buf` (always
// NUL-terminated when `len > 0`) and returns the full message length in
// bytes, excluding the terminator. Pass `buf = NULL` to query the length.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
size_t sdt_last_error_message(char *buf, size_t len);

// Library version as a static NUL-terminated string.
const char *sdt_version(void);

// Default ALS settings.
SdtAlsConfig sdt_als_config_default(void);

// Creates a tensor from `ni*nj*nk` column-major values.
//
// # Safety
// `data` must point to `ni*nj*nk` readable doubles; `out` must be writable.
SdtStatus sdt_tensor_new(size_t ni, size_t nj, size_t nk, const double *data, SdtTensor **out);

// Reads a tensor in the text format (`dims I J K` header).
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
SdtStatus sdt_tensor_read(const char *path, SdtTensor **out);

// Writes the three dimensions into `dims[0..3]`.
//
// # Safety
// `t` must be a live tensor handle; `dims` must hold 3 writable values.
SdtStatus sdt_tensor_dims(const SdtTensor *t, size_t *dims);

// Copies the column-major values into `out`, which must hold exactly
// `I*J*K` doubles (`len`).
//
// # Safety
// `t` must be a live tensor handle; `out` must point to `len` doubles.
SdtStatus sdt_tensor_copy(const SdtTensor *t, double *out, size_t len);

// # Safety
// `t` must be null or a handle not yet freed.
void sdt_tensor_free(SdtTensor *t);

// Fits one model at fixed ranks. PARAFAC uses `p` as its rank and ignores
// `q`, `r`; SDT requires `p == q`. `cfg` and `summary` may be null.
//
// # Safety
// `t` must be a live tensor handle; `out` must be writable; `cfg` and
// `summary` must be null or valid.
SdtStatus sdt_fit(const SdtTensor *t,
                  SdtModelKind kind,
                  size_t p,
                  size_t q,
                  size_t r,
                  const SdtAlsConfig *cfg,
                  SdtModel **out,
                  SdtFitSummary *summary);

// Rebuilds the tensor represented by a model.
//
// # Safety
// `m` must be a live model handle; `out` must be writable.
SdtStatus sdt_model_reconstruct(const SdtModel *m, SdtTensor **out);

// Copies factor matrix `mode` (0 = A, 1 = B, 2 = C) into a new matrix.
//
// # Safety
// `m` must be a live model handle; `out` must be writable.
SdtStatus sdt_model_factor(const SdtModel *m, size_t mode, SdtMatrix **out);

// # Safety
// `m` must be null or a handle not yet freed.
void sdt_model_free(SdtModel *m);

// Runs the hidden-correlation pipeline: scan the static rank over
// `grid[0..grid_len]` (time rank 1), fit, optionally drop the market mode,
// normalize and project. `selected` (nullable) receives the chosen rank.
//
// # Safety
// `t` must be a live tensor handle, `grid` must point to `grid_len` values,
// `out` must be writable; `cfg` and `selected` must be null or valid.
SdtStatus sdt_build_hcm(const SdtTensor *t,
                        SdtModelKind kind,
                        const size_t *grid,
                        size_t grid_len,
                        SdtMarketMode market_mode,
                        const SdtAlsConfig *cfg,
                        SdtMatrix **out,
                        size_t *selected);

// Nearest correlation matrix to the symmetric `n x n` column-major `w`.
//
// # Safety
// `w` must point to `n*n` doubles; `out` must be writable.
SdtStatus sdt_nearest_correlation(const double *w,
                                  size_t n,
                                  double tol,
                                  size_t max_iter,
                                  SdtMatrix **out);

// Kruskal-Wallis and Kolmogorov-Smirnov tests on the eigenvalues of two
// correlation matrices.
//
// # Safety
// `a`, `b` must be live matrix handles; `out` must be writable.
SdtStatus sdt_compare_spectra(const SdtMatrix *a,
                              const SdtMatrix *b,
                              bool drop_zero,
                              SdtSpectrumResult *out);

// Simulates a covariance tensor with planted block structure using the
// default (or, with `reduced`, the small) configuration.
// `omega_true` may be null.
//
// # Safety
// `tensor` must be writable; `omega_true` must be null or writable.
SdtStatus sdt_simulate(uint64_t seed, bool reduced, SdtTensor **tensor, SdtMatrix **omega_true);

// # Safety
// `m` must be a live matrix handle; `rows`, `cols` must be writable.
SdtStatus sdt_matrix_dims(const SdtMatrix *m, size_t *rows, size_t *cols);

// Copies the column-major values into `out`, which must hold exactly
// `rows*cols` doubles (`len`).
//
// # Safety
// `m` must be a live matrix handle; `out` must point to `len` doubles.
SdtStatus sdt_matrix_copy(const SdtMatrix *m, double *out, size_t len);

// # Safety
// `m` must be null or a handle not yet freed.
void sdt_matrix_free(SdtMatrix *m);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SDT_FFI_H */
