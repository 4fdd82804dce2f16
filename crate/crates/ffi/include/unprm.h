#ifndef UNPRM_H
#define UNPRM_H

/* Generated by cbindgen; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code for every fallible call. `UNPRM_STATUS_OK` is zero.
 */
typedef enum UnprmStatus {
  UNPRM_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  UNPRM_STATUS_NULL_ARGUMENT = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  UNPRM_STATUS_INVALID_UTF8 = 2,
  /**
   * A numeric argument was out of range or not finite.
   */
  UNPRM_STATUS_INVALID_ARGUMENT = 3,
  /**
   * The input held no usable elements.
   */
  UNPRM_STATUS_EMPTY = 4,
} UnprmStatus;

/**
 * Candidate answers paired with solution-level rewards, aggregated by the
 * `unprm_vote_set_*` functions. Opaque; create with `unprm_vote_set_new`,
 * free with `unprm_vote_set_free`.
 */
typedef struct UnprmVoteSet UnprmVoteSet;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on the calling thread. The pointer
 * stays valid until the next failing call on the same thread; never free it.
 */
const char *unprm_last_error(void);

/**
 * Library version as a static string; never free it.
 */
const char *unprm_version(void);

/**
 * Frees a string returned through an out-parameter of this library.
 *
 * # Safety
 * `s` must be null or a pointer previously returned by this library and not
 * yet freed.
 */
void unprm_string_free(char *s);

/**
 * Canonicalizes a final answer (strips wrappers and formatting, reduces
 * fractions) and writes a newly allocated string to `out`.
 *
 * # Safety
 * `raw` must be a valid NUL-terminated string and `out` a valid pointer.
 * The caller frees `*out` with `unprm_string_free`.
 */
enum UnprmStatus unprm_normalize_answer(const char *raw, char **out);

/**
 * Writes whether two final answers are equivalent after canonicalization.
 *
 * # Safety
 * `a` and `b` must be valid NUL-terminated strings and `out` a valid pointer.
 */
enum UnprmStatus unprm_answers_match(const char *a, const char *b, bool *out);

/**
 * Converts token log-probabilities to a probability distribution via
 * softmax, writing `len` values to `out`.
 *
 * # Safety
 * `logprobs` must point to `len` readable doubles and `out` to `len`
 * writable doubles; the ranges must not alias.
 */
enum UnprmStatus unprm_softmax_probs(const double *logprobs, size_t len, double *out);

/**
 * Writes the entropy of the softmax distribution over `logprobs` to `out`.
 *
 * # Safety
 * `logprobs` must point to `len` readable doubles and `out` to one writable
 * double.
 */
enum UnprmStatus unprm_sequence_entropy(const double *logprobs, size_t len, double *out);

/**
 * Writes `exp(-mean(logprobs))`, the sequence perplexity, to `out`.
 *
 * # Safety
 * `logprobs` must point to `len` readable doubles and `out` to one writable
 * double.
 */
enum UnprmStatus unprm_perplexity(const double *logprobs, size_t len, double *out);

/**
 * Allocates an empty vote set; free it with `unprm_vote_set_free`.
 */
struct UnprmVoteSet *unprm_vote_set_new(void);

/**
 * Frees a vote set.
 *
 * # Safety
 * `set` must be null or a pointer from `unprm_vote_set_new`, not yet freed.
 */
void unprm_vote_set_free(struct UnprmVoteSet *set);

/**
 * Number of candidates added so far; zero when `set` is null.
 *
 * # Safety
 * `set` must be null or a live vote-set pointer.
 */
size_t unprm_vote_set_len(const struct UnprmVoteSet *set);

/**
 * Adds one candidate: a final answer and that solution's reward (its
 * minimum step score). The answer is canonicalized on entry so textual
 * variants of the same value land in one group; aggregation results
 * return the canonical form.
 *
 * # Safety
 * `set` must be a live vote-set pointer and `answer` a valid NUL-terminated
 * string.
 */
enum UnprmStatus unprm_vote_set_add(struct UnprmVoteSet *set, const char *answer, double reward);

/**
 * Writes the most frequent canonical answer to `out` (ties keep the
 * earliest-added answer).
 *
 * # Safety
 * `set` must be a live vote-set pointer and `out` a valid pointer. The
 * caller frees `*out` with `unprm_string_free`.
 */
enum UnprmStatus unprm_vote_set_majority(const struct UnprmVoteSet *set, char **out);

/**
 * Hybrid aggregation: the majority answer when it reaches half the set,
 * otherwise the answer of the highest-reward candidate. Writes the choice
 * to `out`.
 *
 * # Safety
 * `set` must be a live vote-set pointer and `out` a valid pointer. The
 * caller frees `*out` with `unprm_string_free`.
 */
enum UnprmStatus unprm_vote_set_hmr(const struct UnprmVoteSet *set, char **out);

/**
 * Weighted-fusion aggregation: per answer group, `alpha` weights the
 * normalized mean reward against normalized frequency. Writes the best
 * group's answer to `out`.
 *
 * # Safety
 * `set` must be a live vote-set pointer and `out` a valid pointer. The
 * caller frees `*out` with `unprm_string_free`.
 */
enum UnprmStatus unprm_vote_set_wrf(const struct UnprmVoteSet *set, double alpha, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* UNPRM_H */
