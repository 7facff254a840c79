#ifndef TRIGGERSCOPE_H
#define TRIGGERSCOPE_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum TsStatus {
  TS_STATUS_OK = 0,
  TS_STATUS_NULL_ARGUMENT = 1,
  TS_STATUS_INVALID_UTF8 = 2,
  TS_STATUS_INVALID_JSON = 3,
  TS_STATUS_INVALID_REQUEST = 4,
  TS_STATUS_UNKNOWN_PLUGIN = 5,
  TS_STATUS_ANALYSIS_FAILED = 6,
  TS_STATUS_PANIC = 7,
} TsStatus;

/**
 * Opaque analyzer handle.
 */
typedef struct TsAnalyzer TsAnalyzer;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Creates an analyzer with the shipped taxonomy and plugins.
 *
 * `backend_json` is a backend configuration object, or null for the
 * pattern tier (no network at all).
 *
 * # Safety
 * `backend_json` must be null or a valid NUL-terminated string; `out` must
 * be valid for a pointer write.
 */
enum TsStatus ts_analyzer_new(const char *backend_json, struct TsAnalyzer **out);

/**
 * Releases an analyzer. Null is ignored.
 *
 * # Safety
 * `handle` must be null or a pointer from [`ts_analyzer_new`] not yet freed.
 */
void ts_analyzer_free(struct TsAnalyzer *handle);

/**
 * Runs an analysis request given as JSON and writes the result as JSON.
 *
 * # Safety
 * `handle` must come from [`ts_analyzer_new`]; `request_json` must be a
 * valid NUL-terminated string; `out_json` must be valid for a pointer write.
 */
enum TsStatus ts_analyze_json(const struct TsAnalyzer *handle,
                              const char *request_json,
                              char **out_json);

/**
 * Runs the pattern matcher over `text` and writes the findings array as JSON.
 *
 * # Safety
 * `handle` must come from [`ts_analyzer_new`]; `text` must be a valid
 * NUL-terminated string; `out_json` must be valid for a pointer write.
 */
enum TsStatus ts_detect(const struct TsAnalyzer *handle, const char *text, char **out_json);

/**
 * PABAK between two 0/1 label arrays of length `len`.
 *
 * # Safety
 * `a` and `b` must each point to `len` readable bytes; `out` must be valid
 * for a write.
 */
enum TsStatus ts_pabak(const uint8_t *a, const uint8_t *b, size_t len, double *out);

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call into this library on the same thread; do not free it.
 */
const char *ts_last_error(void);

/**
 * Releases a string returned through an out-parameter. Null is ignored.
 *
 * # Safety
 * `s` must be null or a string produced by this library not yet freed.
 */
void ts_string_free(char *s);

/**
 * Library version as a static string; do not free it.
 */
const char *ts_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TRIGGERSCOPE_H */
