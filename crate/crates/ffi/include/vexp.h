#ifndef VEXP_H
#define VEXP_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum VexpStatus {
  VEXP_STATUS_OK = 0,
  VEXP_STATUS_NULL_POINTER = 1,
  VEXP_STATUS_INVALID_ARGUMENT = 2,
  VEXP_STATUS_DATA = 3,
  VEXP_STATUS_IO = 4,
  VEXP_STATUS_BUFFER_TOO_SMALL = 5,
  VEXP_STATUS_PANIC = 6,
} VexpStatus;

/**
 * Opaque vocabulary handle. Free with [`vexp_vocab_free`].
 */
typedef struct VexpVocab VexpVocab;

/**
 * One mixture row in hundredths of a percent. The three fields sum to 10000.
 */
typedef struct VexpMixtureRow {
  uint32_t arabic;
  uint32_t english;
  uint32_t math_code;
} VexpMixtureRow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer is
 * valid until the next call into this library on the same thread.
 */
const char *vexp_last_error(void);

/**
 * Loads a vocabulary file written by `vexp`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum VexpStatus vexp_vocab_load(const char *path, struct VexpVocab **out);

/**
 * Parses a vocabulary from its JSON text.
 *
 * # Safety
 * `json` must point to `len` readable bytes and `out` must be valid.
 */
enum VexpStatus vexp_vocab_from_json(const uint8_t *json, size_t len, struct VexpVocab **out);

/**
 * # Safety
 * `v` must come from this library and not be freed twice. Null is ignored.
 */
void vexp_vocab_free(struct VexpVocab *v);

/**
 * Number of tokens in the vocabulary, 0 for a null handle.
 *
 * # Safety
 * `v` must be null or a live handle.
 */
size_t vexp_vocab_size(const struct VexpVocab *v);

/**
 * Normalizes and tokenizes UTF-8 `text`. Writes at most `cap` ids to `out`
 * and the full count to `out_len`.
 *
 * # Safety
 * `text` must point to `len` bytes, `out` to `cap` ids, `out_len` must be valid.
 */
enum VexpStatus vexp_vocab_tokenize(const struct VexpVocab *v,
                                    const uint8_t *text,
                                    size_t len,
                                    uint32_t *out,
                                    size_t cap,
                                    size_t *out_len);

/**
 * Concatenated surface bytes of `ids`.
 *
 * # Safety
 * `ids` must point to `n` ids, `out` to `cap` bytes, `out_len` must be valid.
 */
enum VexpStatus vexp_vocab_decode(const struct VexpVocab *v,
                                  const uint32_t *ids,
                                  size_t n,
                                  uint8_t *out,
                                  size_t cap,
                                  size_t *out_len);

/**
 * Mean tokens per word.
 *
 * # Safety
 * `out` must be valid.
 */
enum VexpStatus vexp_fertility(uint64_t total_tokens, uint64_t total_words, double *out);

/**
 * Rényi entropy of the token distribution divided by `ln(vocab_size)`.
 *
 * # Safety
 * `counts` must point to `n` values and `out` must be valid.
 */
enum VexpStatus vexp_renyi_efficiency(const uint64_t *counts,
                                      size_t n,
                                      uint64_t vocab_size,
                                      double alpha,
                                      double *out);

/**
 * Cumulative new-subword targets of the doubling schedule, one per stage.
 *
 * # Safety
 * `out` must hold `cap` values and `out_len` must be valid.
 */
enum VexpStatus vexp_exponential_schedule(uint64_t budget,
                                          size_t stages,
                                          uint64_t *out,
                                          size_t cap,
                                          size_t *out_len);

/**
 * Cumulative new-subword targets of the evenly spaced schedule.
 *
 * # Safety
 * `out` must hold `cap` values and `out_len` must be valid.
 */
enum VexpStatus vexp_uniform_schedule(uint64_t budget,
                                      size_t stages,
                                      uint64_t *out,
                                      size_t cap,
                                      size_t *out_len);

/**
 * Language mixture of 1-based `stage` out of `stages`.
 *
 * # Safety
 * `out` must be valid.
 */
enum VexpStatus vexp_mixture_row(size_t stages,
                                 size_t stage,
                                 double start_pct,
                                 double end_pct,
                                 double constant_pct,
                                 struct VexpMixtureRow *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VEXP_H */
