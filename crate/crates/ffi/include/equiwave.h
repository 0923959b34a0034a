#ifndef EQUIWAVE_H
#define EQUIWAVE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum EqwStatus {
  EQW_STATUS_OK = 0,
  EQW_STATUS_NULL_POINTER = 1,
  EQW_STATUS_INVALID_ARGUMENT = 2,
  EQW_STATUS_INVALID_PARAMS = 3,
  /**
   * Solver, eigensolver or positivity failure.
   */
  EQW_STATUS_NUMERICAL = 4,
  EQW_STATUS_IO = 5,
  /**
   * Output buffer shorter than required.
   */
  EQW_STATUS_BUFFER_TOO_SMALL = 6,
  /**
   * A Rust panic was caught at the boundary.
   */
  EQW_STATUS_PANIC = 7,
} EqwStatus;

/**
 * Ensemble of fields on the model grid.
 */
typedef struct EqwEnsemble EqwEnsemble;

/**
 * Model (n, k, R, M) with its soliton background, operator and sampler.
 */
typedef struct EqwModel EqwModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Version string; static, never freed.
 */
const char *eqw_version(void);

/**
 * Copies the last error message on this thread into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length, 0 if there is none.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t eqw_last_error(char *buf, size_t len);

/**
 * Builds a model; `*out` receives the handle.
 *
 * # Safety
 * `out` must point to writable storage for one pointer.
 */
enum EqwStatus eqw_model_new(uint32_t n,
                             uint32_t k,
                             double radius,
                             size_t intervals,
                             struct EqwModel **out);

/**
 * # Safety
 * `model` must be null or a handle from [`eqw_model_new`] not yet freed.
 */
void eqw_model_free(struct EqwModel *model);

/**
 * Number of grid nodes M + 1, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t eqw_model_nodes(const struct EqwModel *model);

/**
 * Writes the grid nodes r_i into `out`.
 *
 * # Safety
 * `model` must be a live handle and `out` must point to `len` doubles.
 */
enum EqwStatus eqw_model_grid(const struct EqwModel *model, double *out, size_t len);

/**
 * Writes the soliton profile Q(r_i) into `out`.
 *
 * # Safety
 * `model` must be a live handle and `out` must point to `len` doubles.
 */
enum EqwStatus eqw_model_soliton(const struct EqwModel *model, double *out, size_t len);

/**
 * Writes the numeric Green's matrix, row-major (M+1) x (M+1), into `out`.
 *
 * # Safety
 * `model` must be a live handle and `out` must point to `len` doubles.
 */
enum EqwStatus eqw_model_greens(const struct EqwModel *model, double *out, size_t len);

/**
 * V_L(psi) for a field given at every node.
 *
 * # Safety
 * `model` must be a live handle, `psi` must point to `len` doubles and `out` to one.
 */
enum EqwStatus eqw_potential(const struct EqwModel *model,
                             const double *psi,
                             size_t len,
                             double cutoff,
                             double *out);

/**
 * Draws `count` Gaussian fields; `*out` receives the ensemble handle.
 *
 * # Safety
 * `model` must be a live handle and `out` must point to storage for one pointer.
 */
enum EqwStatus eqw_sample_gaussian(const struct EqwModel *model,
                                   uint64_t seed,
                                   size_t count,
                                   struct EqwEnsemble **out);

/**
 * # Safety
 * `ens` must be null or a live ensemble handle.
 */
void eqw_ensemble_free(struct EqwEnsemble *ens);

/**
 * Number of samples, or 0 for a null handle.
 *
 * # Safety
 * `ens` must be null or a live handle.
 */
size_t eqw_ensemble_len(const struct EqwEnsemble *ens);

/**
 * Copies sample `index` into `out`.
 *
 * # Safety
 * `ens` must be a live handle and `out` must point to `len` doubles.
 */
enum EqwStatus eqw_ensemble_sample(const struct EqwEnsemble *ens,
                                   size_t index,
                                   double *out,
                                   size_t len);

/**
 * Evolves (psi, W) to time `t` with the unit-CFL scheme, in place.
 * `truncation` = 0 runs the full flow, otherwise the Galerkin flow with that many modes.
 *
 * # Safety
 * `model` must be a live handle; `psi` and `w` must each point to `len` doubles.
 */
enum EqwStatus eqw_evolve(const struct EqwModel *model,
                          double *psi,
                          double *w,
                          size_t len,
                          double t,
                          size_t truncation);

/**
 * Runs acceptance criterion `id` (1..=14) with suite seed `seed`; `*passed` is 1 or 0.
 *
 * # Safety
 * `passed` must point to one writable int.
 */
enum EqwStatus eqw_acceptance_criterion(uint8_t id, uint64_t seed, int32_t *passed);

/**
 * Parses a NUL-terminated model description "n,k,R,M" (helper for bindings
 * without struct support).
 *
 * # Safety
 * `desc` must be a valid NUL-terminated string and `out` writable storage for one pointer.
 */
enum EqwStatus eqw_model_from_str(const char *desc, struct EqwModel **out);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* EQUIWAVE_H */
