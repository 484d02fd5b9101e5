#ifndef PROTOKEN_H
#define PROTOKEN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes shared by every fallible function.
typedef enum {
  PTK_STATUS_OK = 0,
  PTK_STATUS_NULL_ARGUMENT = 1,
  PTK_STATUS_INVALID_UTF8 = 2,
  PTK_STATUS_IO = 3,
  PTK_STATUS_PARSE = 4,
  PTK_STATUS_ENCODING = 5,
  PTK_STATUS_CONFIG = 6,
  PTK_STATUS_MODEL = 7,
  PTK_STATUS_ANALYSIS = 8,
  PTK_STATUS_OUT_OF_RANGE = 9,
  PTK_STATUS_PANIC = 99,
} PtkStatus;

// Token ids and character offsets for one encoded string.
typedef struct PtkEncoding PtkEncoding;

// A trained vocabulary together with its encoder.
typedef struct PtkModel PtkModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *ptk_version(void);

// Message for the last failed call on this thread, or null. The pointer is
// valid until the next call into the library from the same thread.
const char *ptk_last_error(void);

// Load a model file.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
PtkStatus ptk_model_load(const char *path, PtkModel **out);

// Write a model file.
//
// # Safety
// `model` must come from this library and `path` be NUL-terminated.
PtkStatus ptk_model_save(const PtkModel *model, const char *path);

// Train a model on a corpus file.
//
// `method` is `bpe`, `wordpiece` or `unigram`; `mode` is `protein` or
// `text`. A `sample_size` of 0 uses every record.
//
// # Safety
// String arguments must be NUL-terminated and `out` a valid pointer.
PtkStatus ptk_model_train(const char *method,
                          const char *mode,
                          const char *corpus_path,
                          size_t vocab_size,
                          uint64_t seed,
                          size_t sample_size,
                          PtkModel **out);

// Number of non-special tokens, or 0 for a null model.
//
// # Safety
// `model` must be null or come from this library.
size_t ptk_model_vocab_size(const PtkModel *model);

// Number of ids in the model including specials, or 0 for a null model.
//
// # Safety
// `model` must be null or come from this library.
size_t ptk_model_len(const PtkModel *model);

// Surface of token `id` as a newly allocated string. Release it with
// [`ptk_string_free`].
//
// # Safety
// `model` must come from this library and `out` be a valid pointer.
PtkStatus ptk_model_token(const PtkModel *model, uint32_t id, char **out);

// # Safety
// `model` must be null or come from this library, and not be used again.
void ptk_model_free(PtkModel *model);

// Encode one record (a protein sequence or a line of text).
//
// # Safety
// `model` must come from this library, `text` be NUL-terminated and `out`
// a valid pointer.
PtkStatus ptk_encode(const PtkModel *model, const char *text, PtkEncoding **out);

// Number of tokens, or 0 for a null encoding.
//
// # Safety
// `encoding` must be null or come from this library.
size_t ptk_encoding_len(const PtkEncoding *encoding);

// Pointer to `ptk_encoding_len` token ids, owned by the encoding.
//
// # Safety
// `encoding` must be null or come from this library.
const uint32_t *ptk_encoding_ids(const PtkEncoding *encoding);

// Pointer to `2 * ptk_encoding_len` values: the half-open character span
// of each token as consecutive (start, end) pairs.
//
// # Safety
// `encoding` must be null or come from this library.
const uint32_t *ptk_encoding_offsets(const PtkEncoding *encoding);

// # Safety
// `encoding` must be null or come from this library, and not be used again.
void ptk_encoding_free(PtkEncoding *encoding);

// Release a string returned by this library.
//
// # Safety
// `s` must be null or come from this library, and not be used again.
void ptk_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PROTOKEN_H */
