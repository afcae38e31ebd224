#ifndef XDOMAIN_H
#define XDOMAIN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes of every fallible call.
 */
typedef enum XdStatus {
  XD_STATUS_OK = 0,
  /**
   * Null pointer, invalid UTF-8, malformed JSON or a rejected request.
   */
  XD_STATUS_INVALID_ARGUMENT = 1,
  /**
   * A file or directory could not be read.
   */
  XD_STATUS_IO = 2,
  /**
   * The embedding provider failed or does not match the snapshot.
   */
  XD_STATUS_PROVIDER = 3,
  /**
   * Output buffer too small.
   */
  XD_STATUS_BUFFER_TOO_SMALL = 4,
  XD_STATUS_INTERNAL = 5,
  XD_STATUS_PANIC = 6,
} XdStatus;

/**
 * Opaque snapshot handle with its query-time sentence provider.
 */
typedef struct XdSnapshot XdSnapshot;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version, a static string.
 */
const char *xd_version(void);

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call into the library on this thread.
 */
const char *xd_last_error(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void xd_string_free(char *s);

/**
 * Opens the snapshot in `dir`. `provider` is `fallback` or `http:<url>`
 * and must produce vectors of the indexed dimension.
 *
 * # Safety
 * `dir` and `provider` must be NUL-terminated strings; `out` must be
 * writable.
 */
enum XdStatus xd_snapshot_open(const char *dir, const char *provider, struct XdSnapshot **out);

/**
 * Releases a snapshot handle. Null is ignored.
 *
 * # Safety
 * `handle` must come from [`xd_snapshot_open`] and not have been freed.
 */
void xd_snapshot_free(struct XdSnapshot *handle);

/**
 * Build manifest plus cluster sizes and descriptors, as JSON:
 * `{manifest, clusters: [{id, size, descriptors}]}`.
 *
 * # Safety
 * `handle` must be a live snapshot handle; `out` must be writable.
 */
enum XdStatus xd_snapshot_info(const struct XdSnapshot *handle, char **out);

/**
 * Sentence split of `text` as a JSON array of strings.
 *
 * # Safety
 * `text` must be NUL-terminated; `out` must be writable.
 */
enum XdStatus xd_split_sentences(const char *text, char **out);

/**
 * Faceted search. Request JSON: `{abstract, sentence_index, t?, paper_id?,
 * keyword?}`; response: array of result groups.
 *
 * # Safety
 * `handle` must be a live snapshot handle; `request` NUL-terminated; `out`
 * writable.
 */
enum XdStatus xd_search(const struct XdSnapshot *handle, const char *request, char **out);

/**
 * Zoom-in. Request JSON: `{abstract, sentence_index, selected_clusters,
 * t?, l?, m?, paper_id?, keyword?}`; response: zoom result object.
 *
 * # Safety
 * As for [`xd_search`].
 */
enum XdStatus xd_zoom(const struct XdSnapshot *handle, const char *request, char **out);

/**
 * Cluster purity of `n` aligned assignments and labels, in [0, 1].
 *
 * # Safety
 * `assignments` and `labels` must point to `n` readable values; `out` must
 * be writable.
 */
enum XdStatus xd_purity(const uint32_t *assignments, const uint32_t *labels, size_t n, double *out);

/**
 * Deterministic offline embedding of `text` into `out[0..dim]`
 * (unit-normalized). `out_len` must be at least `dim`.
 *
 * # Safety
 * `text` must be NUL-terminated; `out` must point to `out_len` writable
 * floats.
 */
enum XdStatus xd_fallback_encode(const char *text, size_t dim, float *out, size_t out_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* XDOMAIN_H */
