#ifndef TOPOTRACK_H
#define TOPOTRACK_H

/* Generated by cbindgen from topotrack-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code returned by every fallible call.
 */
typedef enum TtStatus {
  TT_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  TT_STATUS_NULL_POINTER = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  TT_STATUS_INVALID_UTF8 = 2,
  /**
   * The configuration or spec document failed to parse or validate.
   */
  TT_STATUS_INVALID_CONFIG = 3,
  /**
   * The pipeline reported an error; see `tt_last_error`.
   */
  TT_STATUS_RUN_FAILED = 4,
  /**
   * An index argument was out of range.
   */
  TT_STATUS_OUT_OF_RANGE = 5,
  /**
   * A panic was caught at the boundary; see `tt_last_error`.
   */
  TT_STATUS_PANIC = 6,
} TtStatus;

/**
 * Event kinds, mirroring the tracker's enum.
 */
typedef enum TtEventKind {
  TT_EVENT_KIND_BIRTH = 0,
  TT_EVENT_KIND_SPLIT = 1,
  TT_EVENT_KIND_MERGE = 2,
  TT_EVENT_KIND_TERMINATION = 3,
} TtEventKind;

/**
 * Opaque pipeline result handle.
 */
typedef struct TtRun TtRun;

/**
 * One trajectory entry: where a system sat at one frame.
 */
typedef struct TtTrajectoryPoint {
  uint64_t time_index;
  uint32_t system_id;
  uint64_t area_px;
  double x_km;
  double y_km;
  double mean_value;
} TtTrajectoryPoint;

/**
 * Fixed-size view of one event; member system ids are fetched separately
 * with `tt_run_event_from_id` / `tt_run_event_to_id`.
 */
typedef struct TtEvent {
  uint64_t time_index;
  enum TtEventKind kind;
  size_t from_count;
  size_t to_count;
} TtEvent;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Returns the crate version as a static NUL-terminated string.
 */
const char *tt_version(void);

/**
 * Returns the calling thread's last error message as a NUL-terminated
 * string. The pointer stays valid until the next failing call on the same
 * thread. Never null; empty when no error was recorded.
 */
const char *tt_last_error(void);

/**
 * Parses a flat JSON run configuration, executes the pipeline (including
 * artifact writes to the configured output directory) and hands back the
 * result. `jobs = 0` keeps the default worker count.
 *
 * # Safety
 * `config_json` must be a valid NUL-terminated C string and `out` a valid
 * pointer. On `TtStatus::Ok`, `*out` owns the run and must be released
 * with [`tt_run_free`]; on any other status `*out` is untouched.
 */
enum TtStatus tt_run_from_json(const char *config_json, uint32_t jobs, struct TtRun **out);

/**
 * Releases a run handle. Null is a no-op.
 *
 * # Safety
 * `run` must be null or a pointer obtained from [`tt_run_from_json`] that
 * has not been freed yet.
 */
void tt_run_free(struct TtRun *run);

/**
 * Writes the number of trajectories to `out`.
 *
 * # Safety
 * `run` must be a live handle and `out` a valid pointer.
 */
enum TtStatus tt_run_trajectory_count(const struct TtRun *run, size_t *out);

/**
 * Writes trajectory `index`'s identifier to `out`.
 *
 * # Safety
 * `run` must be a live handle and `out` a valid pointer.
 */
enum TtStatus tt_run_trajectory_id(const struct TtRun *run, size_t index, uint32_t *out);

/**
 * Writes the entry count of trajectory `index` to `out`.
 *
 * # Safety
 * `run` must be a live handle and `out` a valid pointer.
 */
enum TtStatus tt_run_trajectory_length(const struct TtRun *run, size_t index, size_t *out);

/**
 * Copies entry `entry` of trajectory `traj` into `out`.
 *
 * # Safety
 * `run` must be a live handle and `out` a valid pointer.
 */
enum TtStatus tt_run_trajectory_point(const struct TtRun *run,
                                      size_t traj,
                                      size_t entry,
                                      struct TtTrajectoryPoint *out);

/**
 * Writes the number of events to `out`.
 *
 * # Safety
 * `run` must be a live handle and `out` a valid pointer.
 */
enum TtStatus tt_run_event_count(const struct TtRun *run, size_t *out);

/**
 * Copies the fixed-size header of event `index` into `out`.
 *
 * # Safety
 * `run` must be a live handle and `out` a valid pointer.
 */
enum TtStatus tt_run_event(const struct TtRun *run, size_t index, struct TtEvent *out);

/**
 * Writes the `member`-th source system id of event `index` to `out`.
 *
 * # Safety
 * `run` must be a live handle and `out` a valid pointer.
 */
enum TtStatus tt_run_event_from_id(const struct TtRun *run,
                                   size_t index,
                                   size_t member,
                                   uint32_t *out);

/**
 * Writes the `member`-th target system id of event `index` to `out`.
 *
 * # Safety
 * `run` must be a live handle and `out` a valid pointer.
 */
enum TtStatus tt_run_event_to_id(const struct TtRun *run,
                                 size_t index,
                                 size_t member,
                                 uint32_t *out);

/**
 * Serializes the run's evaluation report to JSON and hands ownership of
 * the string to the caller.
 *
 * # Safety
 * `run` must be a live handle and `out` a valid pointer. On
 * `TtStatus::Ok`, `*out` must be released with [`tt_string_free`].
 */
enum TtStatus tt_run_report_json(const struct TtRun *run, char **out);

/**
 * Releases a string returned by [`tt_run_report_json`]. Null is a no-op.
 *
 * # Safety
 * `s` must be null or a pointer obtained from this library that has not
 * been freed yet.
 */
void tt_string_free(char *s);

/**
 * Renders a synthetic scene spec (JSON) into a directory of grid frames,
 * ready to be consumed as a pipeline input directory.
 *
 * # Safety
 * `spec_json` and `dir` must be valid NUL-terminated C strings.
 */
enum TtStatus tt_synthesize_json(const char *spec_json, const char *dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TOPOTRACK_H */
