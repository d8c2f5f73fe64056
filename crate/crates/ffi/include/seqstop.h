#ifndef SEQSTOP_H
#define SEQSTOP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SeqRegime {
  SEQ_REGIME_BENEFICIAL = 0,
  SEQ_REGIME_DETRIMENTAL = 1,
  SEQ_REGIME_NEUTRAL = 2,
} SeqRegime;

/**
 * Status codes returned by every fallible call.
 */
typedef enum SeqStatus {
  SEQ_STATUS_OK = 0,
  SEQ_STATUS_NULL_POINTER = 1,
  SEQ_STATUS_INVALID_PROBABILITY = 2,
  SEQ_STATUS_DEGENERATE_CHAIN = 3,
  SEQ_STATUS_NO_LIMIT = 4,
  SEQ_STATUS_INVALID_CONFIDENCE = 5,
  SEQ_STATUS_INVALID_BIAS = 6,
  SEQ_STATUS_INVALID_PRIOR_STRENGTH = 7,
  SEQ_STATUS_SCORE_OUT_OF_RANGE = 8,
  SEQ_STATUS_ESTIMATE_FAILED = 9,
  SEQ_STATUS_PANIC = 99,
} SeqStatus;

/**
 * Opaque Beta posterior over the correctness probability.
 */
typedef struct SeqPosterior SeqPosterior;

/**
 * Opaque two-state transition model.
 */
typedef struct SeqTransitionModel SeqTransitionModel;

/**
 * Result of the stopping analysis. `reachable` is 0 when no iteration
 * count reaches the target, in which case `iterations` is 0.
 */
typedef struct SeqStoppingResult {
  uint8_t reachable;
  uint32_t iterations;
} SeqStoppingResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread. The pointer stays valid
 * until the next failing call on the same thread. Empty if none failed.
 */
const char *seq_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *seq_version(void);

/**
 * # Safety
 * `out_model` must be a valid pointer to writable storage.
 */
enum SeqStatus seq_model_new(double a, double b, struct SeqTransitionModel **out_model);

/**
 * Fits a model from pooled transition counts.
 *
 * # Safety
 * `out_model` must be a valid pointer to writable storage.
 */
enum SeqStatus seq_model_estimate(uint64_t from_correct,
                                  uint64_t correct_to_wrong,
                                  uint64_t from_wrong,
                                  uint64_t wrong_to_correct,
                                  struct SeqTransitionModel **out_model);

/**
 * # Safety
 * `model` must come from a `seq_model_*` constructor and not be freed twice.
 */
void seq_model_free(struct SeqTransitionModel *model);

/**
 * # Safety
 * Pointers must be valid; `model` must be a live handle.
 */
enum SeqStatus seq_model_params(const struct SeqTransitionModel *model,
                                double *out_a,
                                double *out_b);

/**
 * # Safety
 * Pointers must be valid; `model` must be a live handle.
 */
enum SeqStatus seq_model_lambda(const struct SeqTransitionModel *model, double *out_lambda);

/**
 * Fixed point `b / (a + b)`.
 *
 * # Safety
 * Pointers must be valid; `model` must be a live handle.
 */
enum SeqStatus seq_model_fixed_point(const struct SeqTransitionModel *model, double *out_limit);

/**
 * Probability of being correct after `i` rounds from `p0`.
 *
 * # Safety
 * Pointers must be valid; `model` must be a live handle.
 */
enum SeqStatus seq_correct_probability_at(const struct SeqTransitionModel *model,
                                          double p0,
                                          uint32_t i,
                                          double *out_p);

/**
 * Asymptotic benefit `L - p0 + sigma`.
 *
 * # Safety
 * Pointers must be valid; `model` must be a live handle.
 */
enum SeqStatus seq_asymptotic_benefit(const struct SeqTransitionModel *model,
                                      double p0,
                                      double sigma,
                                      double *out_g);

/**
 * # Safety
 * Pointers must be valid; `model` must be a live handle.
 */
enum SeqStatus seq_classify_regime(const struct SeqTransitionModel *model,
                                   double p0,
                                   double sigma,
                                   enum SeqRegime *out_regime);

/**
 * Gate decision: writes 1 when refinement should be skipped.
 *
 * # Safety
 * Pointers must be valid; `model` must be a live handle.
 */
enum SeqStatus seq_gate(const struct SeqTransitionModel *model,
                        double p_hat_0,
                        double sigma,
                        uint8_t *out_skip);

/**
 * Minimal number of rounds whose accuracy reaches `tau`.
 *
 * # Safety
 * Pointers must be valid; `model` must be a live handle.
 */
enum SeqStatus seq_optimal_iterations(const struct SeqTransitionModel *model,
                                      double p0,
                                      double tau,
                                      struct SeqStoppingResult *out_result);

/**
 * Per-round stopping check against a current estimate. Writes 1 to stop.
 *
 * # Safety
 * Pointers must be valid; `model` must be a live handle.
 */
enum SeqStatus seq_stopping_satisfied(const struct SeqTransitionModel *model,
                                      double p_estimate,
                                      double tau,
                                      uint32_t i,
                                      uint8_t *out_stop);

/**
 * # Safety
 * `out_posterior` must be a valid pointer to writable storage.
 */
enum SeqStatus seq_posterior_new(double p_hat_0, double gamma, struct SeqPosterior **out_posterior);

/**
 * Folds one verifier score in `[0, 1]` into the posterior in place. On
 * error the posterior is left unchanged.
 *
 * # Safety
 * `posterior` must be a live handle.
 */
enum SeqStatus seq_posterior_update(struct SeqPosterior *posterior, double score);

/**
 * # Safety
 * Pointers must be valid; `posterior` must be a live handle.
 */
enum SeqStatus seq_posterior_map(const struct SeqPosterior *posterior, double *out_p);

/**
 * # Safety
 * `posterior` must come from [`seq_posterior_new`] and not be freed twice.
 */
void seq_posterior_free(struct SeqPosterior *posterior);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SEQSTOP_H */
