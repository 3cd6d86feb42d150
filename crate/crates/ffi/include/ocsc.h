#ifndef OCSC_H
#define OCSC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum OcscStatus {
  OCSC_STATUS_OK = 0,
  OCSC_STATUS_NULL_POINTER = 1,
  OCSC_STATUS_INVALID_ARGUMENT = 2,
  OCSC_STATUS_SHAPE = 3,
  OCSC_STATUS_IO = 4,
  OCSC_STATUS_FORMAT = 5,
  OCSC_STATUS_DIVERGENCE = 6,
  OCSC_STATUS_PANIC = 7,
} OcscStatus;

/**
 * A learned dictionary: `K` real filters with one or two axes.
 */
typedef struct OcscDictionary OcscDictionary;

/**
 * An online learner bound to one signal shape.
 */
typedef struct OcscTrainer OcscTrainer;

/**
 * Training parameters; obtain defaults from [`ocsc_train_config_default`].
 */
typedef struct OcscTrainConfig {
  size_t num_filters;
  /**
   * Filter extents; only the first `filter_ndims` entries are read.
   */
  size_t filter_dims[2];
  size_t filter_ndims;
  double beta;
  double rho_code;
  double rho_dict;
  size_t inner_j;
  size_t code_max_iters;
  double code_rel_tol;
  uint64_t seed;
  /**
   * Nonzero selects the FISTA dictionary step instead of ADMM.
   */
  uint8_t use_fista;
} OcscTrainConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * Valid until the next call into this library on the same thread.
 */
const char *ocsc_last_error_message(void);

/**
 * Static, NUL-terminated version string.
 */
const char *ocsc_version(void);

struct OcscTrainConfig ocsc_train_config_default(void);

/**
 * Builds a dictionary from `num_filters` filters of extent `filter_dims`,
 * stored filter after filter in row-major order.
 *
 * # Safety
 * `filter_dims` must point to `ndims` values and `filters` to `len` values.
 */
enum OcscStatus ocsc_dictionary_new(const size_t *filter_dims,
                                    size_t ndims,
                                    size_t num_filters,
                                    const double *filters,
                                    size_t len,
                                    struct OcscDictionary **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string.
 */
enum OcscStatus ocsc_dictionary_load(const char *path, struct OcscDictionary **out);

/**
 * # Safety
 * `dict` must come from this library; `path` must be NUL-terminated.
 */
enum OcscStatus ocsc_dictionary_save(const struct OcscDictionary *dict, const char *path);

/**
 * # Safety
 * `dict` must be null or a handle from this library not yet freed.
 */
void ocsc_dictionary_free(struct OcscDictionary *dict);

/**
 * # Safety
 * `dict` must be a live handle; the outputs must be writable.
 */
enum OcscStatus ocsc_dictionary_shape(const struct OcscDictionary *dict,
                                      size_t *num_filters,
                                      size_t *filter_len);

/**
 * Copies all `K * M` filter values into `buf`, which holds `len` values.
 *
 * # Safety
 * `dict` must be a live handle and `buf` must hold `len` doubles.
 */
enum OcscStatus ocsc_dictionary_copy_filters(const struct OcscDictionary *dict,
                                             double *buf,
                                             size_t len);

/**
 * Codes a signal against the dictionary and writes its reconstruction to
 * `out` (same length as the signal).
 *
 * # Safety
 * `dims` holds `ndims` extents; `data` and `out` hold their product.
 */
enum OcscStatus ocsc_reconstruct(const struct OcscDictionary *dict,
                                 const size_t *dims,
                                 size_t ndims,
                                 const double *data,
                                 double beta,
                                 double *out);

/**
 * Creates a learner for signals of extent `signal_dims`.
 *
 * # Safety
 * `config` must be valid; `signal_dims` holds `ndims` values.
 */
enum OcscStatus ocsc_trainer_new(const struct OcscTrainConfig *config,
                                 const size_t *signal_dims,
                                 size_t ndims,
                                 struct OcscTrainer **out);

/**
 * Feeds one sample of `len` values. `objective` (may be null) receives the
 * sample's objective at its code.
 *
 * # Safety
 * `trainer` must be a live handle; `data` holds `len` doubles.
 */
enum OcscStatus ocsc_trainer_step(struct OcscTrainer *trainer,
                                  const double *data,
                                  size_t len,
                                  double *objective);

/**
 * # Safety
 * `trainer` must be a live handle; `out` must be writable.
 */
enum OcscStatus ocsc_trainer_samples_seen(const struct OcscTrainer *trainer, uint64_t *out);

/**
 * Bytes held by the learner's history; constant in the sample count.
 *
 * # Safety
 * `trainer` must be a live handle; `out` must be writable.
 */
enum OcscStatus ocsc_trainer_history_bytes(const struct OcscTrainer *trainer, size_t *out);

/**
 * Snapshot of the current dictionary as a new handle.
 *
 * # Safety
 * `trainer` must be a live handle; `out` must be writable.
 */
enum OcscStatus ocsc_trainer_dictionary(const struct OcscTrainer *trainer,
                                        struct OcscDictionary **out);

/**
 * # Safety
 * `trainer` must be null or a handle from this library not yet freed.
 */
void ocsc_trainer_free(struct OcscTrainer *trainer);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OCSC_H */
