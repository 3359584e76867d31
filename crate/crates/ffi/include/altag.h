#ifndef ALTAG_H
#define ALTAG_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call. `ALTAG_STATUS_OK` is zero.
typedef enum AltagStatus {
  ALTAG_STATUS_OK = 0,
  ALTAG_STATUS_NULL_POINTER = 1,
  ALTAG_STATUS_INVALID_UTF8 = 2,
  ALTAG_STATUS_PARSE = 3,
  ALTAG_STATUS_INVALID_ARGUMENT = 4,
  ALTAG_STATUS_IO = 5,
  ALTAG_STATUS_BUFFER_TOO_SMALL = 6,
  ALTAG_STATUS_INTERNAL = 7,
  ALTAG_STATUS_PANIC = 8,
} AltagStatus;

// Uncertainty strategy for [`altag_model_rank_pool`].
typedef enum AltagStrategy {
  ALTAG_STRATEGY_RAND = 0,
  ALTAG_STRATEGY_LC = 1,
  ALTAG_STRATEGY_MNLP = 2,
  ALTAG_STRATEGY_BALD = 3,
} AltagStrategy;

// A tagged corpus (BIOES).
typedef struct AltagCorpus AltagCorpus;

// A tagger together with its training settings.
typedef struct AltagModel AltagModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or null. Valid until the next
// failing call on the same thread.
const char *altag_last_error_message(void);

// Synthesizes the four-type, two-genre corpus with `n_sentences` sentences.
//
// # Safety
// `out` must be a valid pointer; the handle is released with [`altag_corpus_free`].
enum AltagStatus altag_corpus_synthesize(uint64_t seed,
                                         size_t n_sentences,
                                         struct AltagCorpus **out);

// Parses column-format text. `bio` nonzero means the input uses BIO tags,
// which are converted to BIOES.
//
// # Safety
// `text` must be a NUL-terminated string and `out` a valid pointer.
enum AltagStatus altag_corpus_parse(const char *text, int32_t bio, struct AltagCorpus **out);

// Number of sentences, 0 for a null handle.
//
// # Safety
// `corpus` must be null or a live handle.
size_t altag_corpus_len(const struct AltagCorpus *corpus);

// Number of tokens, 0 for a null handle.
//
// # Safety
// `corpus` must be null or a live handle.
size_t altag_corpus_word_count(const struct AltagCorpus *corpus);

// # Safety
// `corpus` must be null or a handle not freed before.
void altag_corpus_free(struct AltagCorpus *corpus);

// A fresh tagger from preset `preset` (e.g. "tiny") with the vocabulary of `corpus`.
//
// # Safety
// `corpus` must be a live handle, `preset` a NUL-terminated string and `out` a valid pointer.
enum AltagStatus altag_model_new(const struct AltagCorpus *corpus,
                                 const char *preset,
                                 uint64_t seed,
                                 struct AltagModel **out);

// Trains for `epochs` passes over every sentence of `corpus`. The mean
// per-word loss of the last epoch is written to `loss` when it is not null.
//
// # Safety
// `model` and `corpus` must be live handles; `loss` null or valid.
enum AltagStatus altag_model_train(struct AltagModel *model,
                                   const struct AltagCorpus *corpus,
                                   size_t epochs,
                                   uint64_t seed,
                                   double *loss);

// Span F1 (0..100) of the model on `corpus`.
//
// # Safety
// `model` and `corpus` must be live handles and `f1` a valid pointer.
enum AltagStatus altag_model_evaluate(const struct AltagModel *model,
                                      const struct AltagCorpus *corpus,
                                      double *f1);

// Predicted tag ids for sentence `index` of `corpus`. Writes the sentence
// length to `len`; fails with `ALTAG_STATUS_BUFFER_TOO_SMALL` when `cap` is short.
//
// # Safety
// `tags` must hold `cap` elements; `len` must be valid.
enum AltagStatus altag_model_predict(const struct AltagModel *model,
                                     const struct AltagCorpus *corpus,
                                     size_t index,
                                     size_t *tags,
                                     size_t cap,
                                     size_t *len);

// Writes the NUL-terminated name of tag `id` into `buf`.
//
// # Safety
// `buf` must hold `cap` bytes.
enum AltagStatus altag_model_tag_name(const struct AltagModel *model,
                                      size_t id,
                                      char *buf,
                                      size_t cap);

// Ranks every sentence of `pool` by `strategy` (most informative first) and
// writes the sentence ids to `ids`. RAND yields id order.
//
// # Safety
// `ids` must hold `cap` elements; `len` must be valid.
enum AltagStatus altag_model_rank_pool(const struct AltagModel *model,
                                       const struct AltagCorpus *pool,
                                       enum AltagStrategy strategy,
                                       size_t bald_m,
                                       uint64_t seed,
                                       size_t *ids,
                                       size_t cap,
                                       size_t *len);

// # Safety
// `model` must be a live handle and `path` a NUL-terminated string.
enum AltagStatus altag_model_save(const struct AltagModel *model, const char *path);

// Loads a saved tagger; training settings revert to defaults.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum AltagStatus altag_model_load(const char *path, struct AltagModel **out);

// # Safety
// `model` must be null or a handle not freed before.
void altag_model_free(struct AltagModel *model);

// Checks the streaming submodular maximizer against the exhaustive optimum
// on `n_instances` random instances; writes the number of bound violations.
//
// # Safety
// `violations` must be a valid pointer.
enum AltagStatus altag_submod_check(uint64_t seed,
                                    size_t n_instances,
                                    size_t max_pool,
                                    double eps,
                                    size_t *violations);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ALTAG_H */
