#ifndef PARDYN_H
#define PARDYN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

/**
 * Opaque reduced-model handle.
 */
typedef struct PardynModel PardynModel;

typedef int32_t PardynStatus;

#define PARDYN_OK 0

/**
 * A required pointer argument was null.
 */
#define PARDYN_NULL_POINTER 1

/**
 * Bad input: parameter outside the box, wrong length, short buffer, bad config.
 */
#define PARDYN_INVALID_ARGUMENT 2

/**
 * The numerical method failed (singular step, divergence, ...).
 */
#define PARDYN_NUMERICAL 3

#define PARDYN_IO 4

/**
 * Malformed or unsupported model file.
 */
#define PARDYN_FORMAT 5

/**
 * A Rust panic was caught at the boundary.
 */
#define PARDYN_INTERNAL 6

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *pardyn_version(void);

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length without the NUL,
 * or 0 when the last call succeeded.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t pardyn_last_error_message(char *buf, size_t len);

/**
 * Loads a model file written by `pardyn offline` or [`pardyn_model_save`].
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
PardynStatus pardyn_model_load(const char *path, struct PardynModel **out);

/**
 * Runs the offline stage on a TOML problem configuration with the default
 * settings (true-error greedy) and the given term limit and tolerance.
 *
 * # Safety
 * `config_path` must be a NUL-terminated string; `out` must be writable.
 */
PardynStatus pardyn_model_build(const char *config_path,
                                size_t n_max,
                                double tolerance,
                                struct PardynModel **out);

/**
 * Writes the model (and its manifest sidecar); `strip != 0` drops the
 * spatial fields.
 *
 * # Safety
 * `model` must be a live handle and `path` a NUL-terminated string.
 */
PardynStatus pardyn_model_save(const struct PardynModel *model, const char *path, int32_t strip);

/**
 * Releases a handle; null is ignored.
 *
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void pardyn_model_free(struct PardynModel *model);

/**
 * Number of separated terms N.
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
PardynStatus pardyn_model_n_terms(const struct PardynModel *model, size_t *out);

/**
 * Number of parameters.
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
PardynStatus pardyn_model_n_params(const struct PardynModel *model, size_t *out);

/**
 * Number of time nodes, steps + 1.
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
PardynStatus pardyn_model_n_time_nodes(const struct PardynModel *model, size_t *out);

/**
 * Number of mesh nodes of a reconstructed field (boundary included).
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
PardynStatus pardyn_model_n_mesh_nodes(const struct PardynModel *model, size_t *out);

/**
 * Time step τ and final time T.
 *
 * # Safety
 * `model` must be a live handle; both outputs writable.
 */
PardynStatus pardyn_model_time_grid(const struct PardynModel *model, double *tau, double *t_final);

/**
 * Parameter box bounds, `len` = number of parameters.
 *
 * # Safety
 * `model` must be a live handle; `lo` and `hi` must hold `len` values.
 */
PardynStatus pardyn_model_parameter_box(const struct PardynModel *model,
                                        double *lo,
                                        double *hi,
                                        size_t len);

/**
 * Online stage: writes `ζ_k(t_n; ξ)` row-major (`out[k * nodes + n]`) for
 * the first `n_terms` terms. `out_len` must be at least
 * `n_terms * nodes`.
 *
 * # Safety
 * `model` must be a live handle, `xi` must hold `xi_len` values and `out`
 * `out_len` values.
 */
PardynStatus pardyn_model_evaluate(const struct PardynModel *model,
                                   const double *xi,
                                   size_t xi_len,
                                   size_t n_terms,
                                   double *out,
                                   size_t out_len);

/**
 * Reduced solution `u_N(x, t_n; ξ)` at every mesh node (lifting included),
 * using the first `n_terms` terms.
 *
 * # Safety
 * As for [`pardyn_model_evaluate`]; `out` must hold `out_len` values.
 */
PardynStatus pardyn_model_reconstruct(const struct PardynModel *model,
                                      const double *xi,
                                      size_t xi_len,
                                      size_t n_terms,
                                      size_t time_index,
                                      double *out,
                                      size_t out_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PARDYN_H */
