/* C interface to the cross-lingual parser toolkit. Regenerate with cbindgen (see cbindgen.toml). */

#ifndef XLPARSE_H
#define XLPARSE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Call outcome. Numeric values match the CLI exit codes.
 */
typedef enum XlpStatus {
  XLP_STATUS_OK = 0,
  /**
   * Invalid arguments: null pointers, bad flag combinations.
   */
  XLP_STATUS_USAGE = 2,
  /**
   * Unreadable or malformed inputs.
   */
  XLP_STATUS_DATA = 3,
  /**
   * Invariant violations and panics.
   */
  XLP_STATUS_INTERNAL = 4,
} XlpStatus;

/**
 * A loaded model plus the cluster tables it was trained against.
 */
typedef struct XlpModel XlpModel;

/**
 * A treebank held in memory.
 */
typedef struct XlpTreebank XlpTreebank;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *xlp_version(void);

/**
 * Message of the calling thread's last failure, as `class: detail`. Empty
 * before the first failure. The pointer stays valid until the next failing
 * call on this thread.
 */
const char *xlp_last_error(void);

/**
 * Loads a model file written by `xlp_model_save` or the CLI.
 *
 * # Safety
 * `path` must point to a NUL-terminated string and `out` to writable
 * storage for one pointer. On success `*out` owns the model.
 */
enum XlpStatus xlp_model_load(const char *path, struct XlpModel **out);

/**
 * Writes the model to a file.
 *
 * # Safety
 * `model` must be a live handle from this library; `path` must point to a
 * NUL-terminated string.
 */
enum XlpStatus xlp_model_save(const struct XlpModel *model, const char *path);

/**
 * Releases a model handle. Null is ignored.
 *
 * # Safety
 * `model` must be null or a live handle from this library; it must not be
 * used afterwards.
 */
void xlp_model_free(struct XlpModel *model);

/**
 * Beam width the model was trained with, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle from this library.
 */
uint32_t xlp_model_beam_width(const struct XlpModel *model);

/**
 * Loads the cross-lingual cluster table the model references.
 *
 * # Safety
 * `model` must be a live handle from this library; `path` must point to a
 * NUL-terminated string.
 */
enum XlpStatus xlp_model_set_cross_clusters(struct XlpModel *model, const char *path);

/**
 * Loads the monolingual cluster table the model references.
 *
 * # Safety
 * `model` must be a live handle from this library; `path` must point to a
 * NUL-terminated string.
 */
enum XlpStatus xlp_model_set_mono_clusters(struct XlpModel *model, const char *path);

/**
 * Reads a CoNLL treebank file; `language` tags every sentence.
 *
 * # Safety
 * `path` and `language` must point to NUL-terminated strings and `out` to
 * writable storage for one pointer. On success `*out` owns the treebank.
 */
enum XlpStatus xlp_treebank_load(const char *path, const char *language, struct XlpTreebank **out);

/**
 * Writes the treebank as CoNLL-U.
 *
 * # Safety
 * `treebank` must be a live handle from this library; `path` must point to
 * a NUL-terminated string.
 */
enum XlpStatus xlp_treebank_save(const struct XlpTreebank *treebank, const char *path);

/**
 * Sentence count, or 0 for a null handle.
 *
 * # Safety
 * `treebank` must be null or a live handle from this library.
 */
size_t xlp_treebank_len(const struct XlpTreebank *treebank);

/**
 * Releases a treebank handle. Null is ignored.
 *
 * # Safety
 * `treebank` must be null or a live handle from this library; it must not
 * be used afterwards.
 */
void xlp_treebank_free(struct XlpTreebank *treebank);

/**
 * Parses every sentence of `input` with the model, writing a new treebank
 * to `out`. Cluster tables referenced by the model must have been loaded
 * first. Tokens without a lexical value get their own form when the model
 * uses lexical features. `threads` 0 or 1 parses serially.
 *
 * # Safety
 * `model` and `input` must be live handles from this library and `out`
 * must point to writable storage for one pointer. On success `*out` owns
 * the parsed treebank.
 */
enum XlpStatus xlp_parse(const struct XlpModel *model,
                         const struct XlpTreebank *input,
                         uint32_t threads,
                         struct XlpTreebank **out);

/**
 * Trains a model on a fully annotated treebank. `families` is a bitmask:
 * 1 = POS, 2 = cluster, 4 = lexical. Cluster features need at least one
 * cluster file; paths may be null otherwise.
 *
 * # Safety
 * `treebank` must be a live handle from this library; `cross_path` and
 * `mono_path` must each be null or point to a NUL-terminated string; `out`
 * must point to writable storage for one pointer. On success `*out` owns
 * the model.
 */
enum XlpStatus xlp_train(const struct XlpTreebank *treebank,
                         uint8_t families,
                         const char *cross_path,
                         const char *mono_path,
                         uint32_t epochs,
                         uint32_t beam,
                         uint64_t seed,
                         struct XlpModel **out);

/**
 * Scores `pred` against `gold`. Attachment scores are percentages in
 * [0, 100], written to `uas` and `las` when those pointers are non-null.
 *
 * # Safety
 * `gold` and `pred` must be live handles from this library; `uas` and
 * `las` must each be null or point to writable doubles.
 */
enum XlpStatus xlp_evaluate(const struct XlpTreebank *gold,
                            const struct XlpTreebank *pred,
                            bool exclude_punct,
                            double *uas,
                            double *las);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* XLPARSE_H */
