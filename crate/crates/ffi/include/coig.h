#ifndef COIG_H
#define COIG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CoigStatus {
  COIG_STATUS_OK = 0,
  COIG_STATUS_NOT_FOUND = 1,
  COIG_STATUS_INVALID_INPUT = 2,
  COIG_STATUS_CONFLICT = 3,
  COIG_STATUS_BACKEND_FAILURE = 4,
  COIG_STATUS_INTERNAL = 5,
  COIG_STATUS_NULL_ARGUMENT = 6,
  COIG_STATUS_INVALID_UTF8 = 7,
} CoigStatus;

/**
 * Opaque engine handle.
 */
typedef struct CoigEngine CoigEngine;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Opens an engine. `config_path` may be null for the built-in mock-only
 * configuration; a non-null `store_root` overrides the configured store.
 *
 * # Safety
 * String arguments must be null or NUL-terminated; `out` must be writable.
 */
enum CoigStatus coig_engine_open(const char *config_path,
                                 const char *store_root,
                                 struct CoigEngine **out);

/**
 * # Safety
 * `engine` must come from [`coig_engine_open`] and not be used afterwards.
 */
void coig_engine_free(struct CoigEngine *engine);

/**
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void coig_string_free(char *s);

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call into this library from the same thread.
 */
const char *coig_last_error(void);

/**
 * Decomposes `prompt` into a plan (JSON).
 *
 * # Safety
 * Pointers must be valid as described in the header; `profile` may be null.
 */
enum CoigStatus coig_plan(const struct CoigEngine *engine,
                          const char *prompt,
                          const char *profile,
                          char **out_plan_json);

/**
 * Starts a run from a plan document and executes it (one step when
 * `step_mode` is set). Writes the run summary (JSON).
 *
 * # Safety
 * Pointers must be valid as described in the header; `profile` may be null.
 */
enum CoigStatus coig_run_plan(const struct CoigEngine *engine,
                              const char *plan_json,
                              const char *profile,
                              bool step_mode,
                              char **out_summary_json);

/**
 * Plans `prompt` and runs the plan. Writes the run summary (JSON).
 *
 * # Safety
 * Pointers must be valid as described in the header; `profile` may be null.
 */
enum CoigStatus coig_run_prompt(const struct CoigEngine *engine,
                                const char *prompt,
                                const char *profile,
                                bool step_mode,
                                char **out_summary_json);

/**
 * Writes the full run manifest (JSON).
 *
 * # Safety
 * Pointers must be valid as described in the header.
 */
enum CoigStatus coig_run_get(const struct CoigEngine *engine,
                             const char *run_id,
                             char **out_run_json);

/**
 * # Safety
 * Pointers must be valid as described in the header.
 */
enum CoigStatus coig_run_pause(const struct CoigEngine *engine,
                               const char *run_id,
                               char **out_summary_json);

/**
 * # Safety
 * Pointers must be valid as described in the header.
 */
enum CoigStatus coig_run_resume(const struct CoigEngine *engine,
                                const char *run_id,
                                bool retry_failed,
                                char **out_summary_json);

/**
 * Applies an intervention document to a paused run.
 *
 * # Safety
 * Pointers must be valid as described in the header.
 */
enum CoigStatus coig_run_intervene(const struct CoigEngine *engine,
                                   const char *run_id,
                                   const char *intervention_json,
                                   char **out_summary_json);

/**
 * # Safety
 * Pointers must be valid as described in the header.
 */
enum CoigStatus coig_eval_readability(const struct CoigEngine *engine,
                                      const char *run_id,
                                      char **out_report_json);

/**
 * Perturbs the color set at plan step `step` to `to_color`.
 *
 * # Safety
 * Pointers must be valid as described in the header.
 */
enum CoigStatus coig_eval_causal(const struct CoigEngine *engine,
                                 const char *run_id,
                                 uint32_t step,
                                 const char *to_color,
                                 char **out_report_json);

/**
 * Writes `count` entity-collapse prompts as JSON lines.
 *
 * # Safety
 * Pointers must be valid as described in the header.
 */
enum CoigStatus coig_ec_generate(const struct CoigEngine *engine,
                                 size_t count,
                                 uint64_t seed,
                                 char **out_jsonl);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COIG_H */
