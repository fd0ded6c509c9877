#ifndef DIALREL_H
#define DIALREL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DrNspLabel {
  DR_NSP_LABEL_IS_NEXT = 0,
  DR_NSP_LABEL_NOT_NEXT = 1,
} DrNspLabel;

typedef enum DrStatistic {
  DR_STATISTIC_SPEARMAN = 0,
  DR_STATISTIC_PEARSON = 1,
} DrStatistic;

typedef enum DrStatus {
  DR_STATUS_OK = 0,
  DR_STATUS_NULL_POINTER = 1,
  DR_STATUS_INVALID_ARGUMENT = 2,
  DR_STATUS_IO = 3,
  DR_STATUS_MALFORMED = 4,
  DR_STATUS_DIM_MISMATCH = 5,
  DR_STATUS_NON_FINITE = 6,
  DR_STATUS_EMPTY = 7,
  DR_STATUS_DEGENERATE = 8,
  DR_STATUS_INCONSISTENT = 9,
  DR_STATUS_PANIC = 10,
} DrStatus;

/**
 * Opaque trained relevance head.
 */
typedef struct DrModel DrModel;

/**
 * Opaque exported NSP classifier.
 */
typedef struct DrNspHead DrNspHead;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. Owned by the
 * library; valid until the next call on the same thread.
 */
const char *dr_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *dr_version(void);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `model` a valid pointer.
 */
enum DrStatus dr_model_load(const char *path, struct DrModel **model);

/**
 * # Safety
 * `model` must come from `dr_model_load` and not be used afterwards.
 */
void dr_model_free(struct DrModel *model);

/**
 * Feature dimension, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t dr_model_dim(const struct DrModel *model);

/**
 * Relevance score in [0, 1] of one pair feature.
 *
 * # Safety
 * `x` must point to `len` doubles; `score` must be writable.
 */
enum DrStatus dr_model_forward(const struct DrModel *model,
                               const double *x,
                               size_t len,
                               double *score);

/**
 * Copies the weight vector into `weights[0..len]`; `len` must equal the dimension.
 *
 * # Safety
 * `weights` must point to `len` writable doubles; `bias` must be writable.
 */
enum DrStatus dr_model_params(const struct DrModel *model,
                              double *weights,
                              size_t len,
                              double *bias);

/**
 * Writes 1 on the `k` largest-magnitude weight dims and 0 elsewhere.
 *
 * # Safety
 * `mask` must point to `len` writable bytes.
 */
enum DrStatus dr_model_top_k_mask(const struct DrModel *model, size_t k, uint8_t *mask, size_t len);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `head` a valid pointer.
 */
enum DrStatus dr_nsp_head_load(const char *path, struct DrNspHead **head);

/**
 * # Safety
 * `head` must come from `dr_nsp_head_load` and not be used afterwards.
 */
void dr_nsp_head_free(struct DrNspHead *head);

/**
 * NSP decision for one feature. `mask` may be NULL (no masking) or point
 * to `len` bytes where 0 zeroes the dimension.
 *
 * # Safety
 * `x` must point to `len` doubles; `label` must be writable.
 */
enum DrStatus dr_nsp_predict(const struct DrNspHead *head,
                             const double *x,
                             const uint8_t *mask,
                             size_t len,
                             enum DrNspLabel *label);

/**
 * # Safety
 * `x` and `y` must point to `n` doubles; `rho` must be writable.
 */
enum DrStatus dr_spearman(const double *x, const double *y, size_t n, double *rho);

/**
 * # Safety
 * `x` and `y` must point to `n` doubles; `r` must be writable.
 */
enum DrStatus dr_pearson(const double *x, const double *y, size_t n, double *r);

/**
 * Two-sided permutation p-value; `n_perm` must be at least 1000.
 *
 * # Safety
 * `x` and `y` must point to `n` doubles; `p` must be writable.
 */
enum DrStatus dr_perm_pvalue(const double *x,
                             const double *y,
                             size_t n,
                             enum DrStatistic statistic,
                             size_t n_perm,
                             uint64_t seed,
                             double *p);

/**
 * # Safety
 * `u` and `v` must point to `n` doubles; `cos` must be writable.
 */
enum DrStatus dr_cosine(const double *u, const double *v, size_t n, double *cos);

/**
 * NORM-PROB scores of one batch of responses.
 *
 * # Safety
 * `logprob_sums` and `token_counts` must point to `n` values; `scores`
 * must point to `n` writable doubles.
 */
enum DrStatus dr_norm_prob(const double *logprob_sums,
                           const uint32_t *token_counts,
                           size_t n,
                           double *scores);

/**
 * Best-to-worst ratio of `n >= 2` per-dataset Spearman values; may be
 * infinite.
 *
 * # Safety
 * `spearman` must point to `n` doubles; `ratio` must be writable.
 */
enum DrStatus dr_sensitivity_ratio(const double *spearman, size_t n, double *ratio);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DIALREL_H */
