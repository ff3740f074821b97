/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef GNP_H
#define GNP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum GnpStatus {
  GNP_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  GNP_STATUS_NULL_ARGUMENT = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  GNP_STATUS_INVALID_UTF8 = 2,
  GNP_STATUS_CONFIG = 3,
  /**
   * Missing, unreadable or inconsistent files.
   */
  GNP_STATUS_DATA = 4,
  GNP_STATUS_NUMERICAL = 5,
  /**
   * Index or id outside the model, or an invalid size argument.
   */
  GNP_STATUS_OUT_OF_RANGE = 6,
  /**
   * Internal failure; the handle should be freed.
   */
  GNP_STATUS_PANIC = 7,
} GnpStatus;

typedef enum GnpVariant {
  GNP_VARIANT_GNP = 0,
  GNP_VARIANT_DROPOUT_NET = 1,
} GnpVariant;

/**
 * Opaque handle to a loaded model.
 */
typedef struct GnpModel GnpModel;

typedef struct GnpRankMetrics {
  double recall;
  double precision;
  double ndcg;
} GnpRankMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until
 * the next failing call on this thread.
 */
const char *gnp_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *gnp_version(void);

/**
 * Loads the model of `variant` trained in `workdir`. On success `*out`
 * owns a handle to release with [`gnp_model_free`].
 *
 * # Safety
 * `workdir` must be a NUL-terminated string and `out` a writable pointer.
 */
enum GnpStatus gnp_model_open(const char *workdir, enum GnpVariant variant, struct GnpModel **out);

/**
 * # Safety
 * `model` must be null or a handle from [`gnp_model_open`] not yet freed.
 */
void gnp_model_free(struct GnpModel *model);

/**
 * # Safety
 * `model` must be a live handle.
 */
size_t gnp_model_n_users(const struct GnpModel *model);

/**
 * # Safety
 * `model` must be a live handle.
 */
size_t gnp_model_n_items(const struct GnpModel *model);

/**
 * Dense index of a user given its id in the input data.
 *
 * # Safety
 * `model` must be a live handle, `original` NUL-terminated, `out` writable.
 */
enum GnpStatus gnp_model_user_index(const struct GnpModel *model,
                                    const char *original,
                                    uint32_t *out);

/**
 * Dense index of an item given its id in the input data.
 *
 * # Safety
 * `model` must be a live handle, `original` NUL-terminated, `out` writable.
 */
enum GnpStatus gnp_model_item_index(const struct GnpModel *model,
                                    const char *original,
                                    uint32_t *out);

/**
 * Score of dense `(user, item)`: the warm scorer when both are warm and
 * the model is GNP, the patching scorer otherwise.
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum GnpStatus gnp_model_score(const struct GnpModel *model,
                               uint32_t user,
                               uint32_t item,
                               double *out);

/**
 * Writes up to `k` best items for `user` into `items` and `scores`
 * (each with room for `k` values) in rank order, and the count to
 * `*n_out`. With `exclude_seen`, training and validation items of the
 * user are skipped. `scores` may be null.
 *
 * # Safety
 * `model` must be a live handle; `items` must hold `k` values, `scores`
 * be null or hold `k` values; `n_out` must be writable.
 */
enum GnpStatus gnp_model_recommend(const struct GnpModel *model,
                                   uint32_t user,
                                   size_t k,
                                   bool exclude_seen,
                                   uint32_t *items,
                                   double *scores,
                                   size_t *n_out);

/**
 * Recall, precision and NDCG at `k` of a ranked list against a relevant
 * set. `relevant` needs no particular order; duplicates are ignored.
 *
 * # Safety
 * `ranked` must hold `n_ranked` values, `relevant` `n_relevant` values;
 * `out` must be writable.
 */
enum GnpStatus gnp_metrics_at_k(const uint32_t *ranked,
                                size_t n_ranked,
                                const uint32_t *relevant,
                                size_t n_relevant,
                                size_t k,
                                struct GnpRankMetrics *out);

/**
 * Area under the ROC curve of `n` scores with nonzero `labels` marking
 * positives. Ties count one half. Needs both classes present.
 *
 * # Safety
 * `scores` and `labels` must each hold `n` values; `out` must be writable.
 */
enum GnpStatus gnp_auc(const double *scores, const uint8_t *labels, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GNP_H */
