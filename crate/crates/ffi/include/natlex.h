#ifndef NATLEX_H
#define NATLEX_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum NatlexStatus {
  NATLEX_STATUS_OK = 0,
  NATLEX_STATUS_NULL_ARGUMENT = 1,
  NATLEX_STATUS_INVALID_ARGUMENT = 2,
  NATLEX_STATUS_VALIDATION = 3,
  NATLEX_STATUS_NOT_FOUND = 4,
  NATLEX_STATUS_IO = 5,
  NATLEX_STATUS_PARSE = 6,
  NATLEX_STATUS_BUFFER_TOO_SMALL = 7,
  NATLEX_STATUS_RUNTIME = 8,
  NATLEX_STATUS_PANIC = 9,
} NatlexStatus;

/**
 * Parallel corpus with its vocabularies.
 */
typedef struct NatlexCorpus NatlexCorpus;

/**
 * Lexical translation table bound to the vocabularies it was trained with.
 */
typedef struct NatlexLexicon NatlexLexicon;

/**
 * Trained NAT model parameters.
 */
typedef struct NatlexModel NatlexModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer stays
 * valid until the next natlex call on the same thread.
 */
const char *natlex_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *natlex_version(void);

/**
 * Loads a two-file parallel corpus (one whitespace-tokenized sentence per line).
 *
 * # Safety
 * `src_path` and `tgt_path` must be NUL-terminated strings; `out` must be writable.
 */
enum NatlexStatus natlex_corpus_load(const char *src_path,
                                     const char *tgt_path,
                                     struct NatlexCorpus **out);

/**
 * Number of sentence pairs; 0 for NULL.
 *
 * # Safety
 * `corpus` must be NULL or a live handle from [`natlex_corpus_load`].
 */
size_t natlex_corpus_len(const struct NatlexCorpus *corpus);

/**
 * # Safety
 * `corpus` must be NULL or a handle from [`natlex_corpus_load`] not freed before.
 */
void natlex_corpus_free(struct NatlexCorpus *corpus);

/**
 * Trains an IBM Model 1 lexicon on the corpus.
 *
 * # Safety
 * `corpus` must be a live handle; `out` must be writable.
 */
enum NatlexStatus natlex_align(const struct NatlexCorpus *corpus,
                               uint32_t iterations,
                               double smoothing,
                               struct NatlexLexicon **out);

/**
 * P(tgt | src) for two surface tokens; 0 when the pair is absent.
 *
 * # Safety
 * `lexicon` must be a live handle; `src` and `tgt` NUL-terminated; `out` writable.
 */
enum NatlexStatus natlex_lexicon_prob(const struct NatlexLexicon *lexicon,
                                      const char *src,
                                      const char *tgt,
                                      double *out);

/**
 * Writes the lexicon as `source \t target \t probability` lines.
 *
 * # Safety
 * `lexicon` must be a live handle; `path` NUL-terminated.
 */
enum NatlexStatus natlex_lexicon_write(const struct NatlexLexicon *lexicon, const char *path);

/**
 * # Safety
 * `lexicon` must be NULL or a handle from [`natlex_align`] not freed before.
 */
void natlex_lexicon_free(struct NatlexLexicon *lexicon);

/**
 * Clamped imitation rate at `step` of a `total_steps` run.
 */
double natlex_lambda_at(size_t step, size_t total_steps);

/**
 * KL(q || p) over two length-`len` distributions.
 *
 * # Safety
 * `q` and `p` must point to `len` readable doubles; `out` must be writable.
 */
enum NatlexStatus natlex_kl(const double *q, const double *p, size_t len, double *out);

/**
 * Loads a NAT checkpoint written by `natlex train`.
 *
 * # Safety
 * `path` must be NUL-terminated; `out` must be writable.
 */
enum NatlexStatus natlex_model_load(const char *path, struct NatlexModel **out);

/**
 * Target vocabulary size; 0 for NULL.
 *
 * # Safety
 * `model` must be NULL or a live handle.
 */
size_t natlex_model_target_size(const struct NatlexModel *model);

/**
 * Writes P(· | f) for the one-word source `f` into `out[0..len]`; `len`
 * must equal the target vocabulary size.
 *
 * # Safety
 * `model` must be a live handle; `out` must point to `len` writable doubles.
 */
enum NatlexStatus natlex_model_lexical_query(const struct NatlexModel *model,
                                             uint32_t f,
                                             double *out,
                                             size_t len);

/**
 * Parallel decode of a source id sequence. The predicted length is always
 * stored in `out_len`; the ids are written only when `capacity` suffices,
 * otherwise the call returns `BUFFER_TOO_SMALL`.
 *
 * # Safety
 * `model` must be a live handle; `src` must point to `src_len` ids; `out`
 * must point to `capacity` writable ids; `out_len` must be writable.
 */
enum NatlexStatus natlex_model_decode(const struct NatlexModel *model,
                                      const uint32_t *src,
                                      size_t src_len,
                                      uint32_t *out,
                                      size_t capacity,
                                      size_t *out_len);

/**
 * # Safety
 * `model` must be NULL or a handle from [`natlex_model_load`] not freed before.
 */
void natlex_model_free(struct NatlexModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NATLEX_H */
