#ifndef MMH_H
#define MMH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MmhStatus {
  MMH_STATUS_OK = 0,
  MMH_STATUS_NULL_ARGUMENT = 1,
  MMH_STATUS_INVALID_UTF8 = 2,
  MMH_STATUS_MAP_ERROR = 3,
  MMH_STATUS_PARSE_ERROR = 4,
  MMH_STATUS_COMPILE_ERROR = 5,
  MMH_STATUS_EXEC_ERROR = 6,
  MMH_STATUS_METRIC_ERROR = 7,
  MMH_STATUS_PANIC = 8,
} MmhStatus;

typedef enum MmhExecStatus {
  MMH_EXEC_STATUS_SUCCESS = 0,
  MMH_EXEC_STATUS_STOPPED_EARLY = 1,
  MMH_EXEC_STATUS_STUCK = 2,
  MMH_EXEC_STATUS_BUDGET_EXCEEDED = 3,
} MmhExecStatus;

typedef struct MmhMap MmhMap;

typedef struct MmhProgram MmhProgram;

typedef struct MmhRunResult MmhRunResult;

typedef struct MmhPose {
  double x;
  double y;
  double heading;
} MmhPose;

/**
 * `spd` is `INFINITY` when the goal is unreachable.
 */
typedef struct MmhMetrics {
  double sr;
  double osr;
  double spd;
  double cls;
} MmhMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on this thread.
 */
const char *mmh_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *mmh_version(void);

/**
 * Loads a map from its JSON text.
 *
 * # Safety
 * `json` must be a valid NUL-terminated string; `out_map` a writable pointer.
 */
enum MmhStatus mmh_map_load_json(const char *json, struct MmhMap **out_map);

/**
 * # Safety
 * `map` must come from `mmh_map_load_json` and not be freed twice. Null is ignored.
 */
void mmh_map_free(struct MmhMap *map);

/**
 * Parses NavScript source.
 *
 * # Safety
 * `source` must be a valid NUL-terminated string; `out_program` a writable pointer.
 */
enum MmhStatus mmh_program_parse(const char *source, struct MmhProgram **out_program);

/**
 * Compiles a controlled-English instruction with the rule backend.
 *
 * # Safety
 * `instruction` must be a valid NUL-terminated string; `out_program` a writable pointer.
 */
enum MmhStatus mmh_program_compile_rules(const char *instruction, struct MmhProgram **out_program);

/**
 * Canonical source text of a program; release with `mmh_string_free`.
 * Returns null on a null handle.
 *
 * # Safety
 * `program` must be a live handle or null.
 */
char *mmh_program_to_string(const struct MmhProgram *program);

/**
 * # Safety
 * `program` must come from this library and not be freed twice. Null is ignored.
 */
void mmh_program_free(struct MmhProgram *program);

/**
 * Runs `program` from the map's start pose with default simulation settings.
 *
 * # Safety
 * `map` and `program` must be live handles; `out_result` a writable pointer.
 */
enum MmhStatus mmh_execute(const struct MmhMap *map,
                           const struct MmhProgram *program,
                           double budget_s,
                           uint64_t seed,
                           struct MmhRunResult **out_result);

/**
 * # Safety
 * `result` must be a live handle; `out_status` a writable pointer.
 */
enum MmhStatus mmh_run_result_status(const struct MmhRunResult *result,
                                     enum MmhExecStatus *out_status);

/**
 * # Safety
 * `result` must be a live handle; `out_pose` a writable pointer.
 */
enum MmhStatus mmh_run_result_final_pose(const struct MmhRunResult *result,
                                         struct MmhPose *out_pose);

/**
 * Number of trajectory samples; 0 for a null handle.
 *
 * # Safety
 * `result` must be a live handle or null.
 */
size_t mmh_run_result_sample_count(const struct MmhRunResult *result);

/**
 * Trajectory as JSON lines; release with `mmh_string_free`. Null on a null handle.
 *
 * # Safety
 * `result` must be a live handle or null.
 */
char *mmh_run_result_trajectory_jsonl(const struct MmhRunResult *result);

/**
 * Scores a run against the map's reference route (or start to goal when the
 * map has none) with default metric settings.
 *
 * # Safety
 * `map` and `result` must be live handles; `out_metrics` a writable pointer.
 */
enum MmhStatus mmh_run_result_metrics(const struct MmhMap *map,
                                      const struct MmhRunResult *result,
                                      struct MmhMetrics *out_metrics);

/**
 * # Safety
 * `result` must come from `mmh_execute` and not be freed twice. Null is ignored.
 */
void mmh_run_result_free(struct MmhRunResult *result);

/**
 * # Safety
 * `s` must be a string returned by this library, freed once. Null is ignored.
 */
void mmh_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MMH_H */
