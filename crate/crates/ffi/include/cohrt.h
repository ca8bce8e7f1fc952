#ifndef COHRT_H
#define COHRT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum CohrtStatus {
  COHRT_STATUS_OK = 0,
  COHRT_STATUS_NULL_POINTER = 1,
  COHRT_STATUS_INVALID_UTF8 = 2,
  COHRT_STATUS_INVALID_CONFIG = 3,
  COHRT_STATUS_DECODE_ERROR = 4,
  COHRT_STATUS_LOG_ERROR = 5,
  COHRT_STATUS_METRICS_ERROR = 6,
  COHRT_STATUS_UNKNOWN_AGENT = 7,
  COHRT_STATUS_PANIC = 8,
} CohrtStatus;

/**
 * Fluency metrics computed from a session log.
 */
typedef struct CohrtReport CohrtReport;

/**
 * A running coordination session driven by the caller's transport.
 */
typedef struct CohrtSession CohrtSession;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Wire protocol version spoken by this library.
 */
uint32_t cohrt_protocol_version(void);

/**
 * Message describing the last failure on this thread, or NULL. The pointer
 * stays valid until the next call into this library on the same thread.
 */
const char *cohrt_last_error_message(void);

/**
 * Releases a string returned by this library. NULL is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed already.
 */
void cohrt_string_free(char *s);

/**
 * Creates a session from a TOML task config.
 *
 * # Safety
 * `config_toml` must be a NUL-terminated string; `out` must be writable.
 */
enum CohrtStatus cohrt_session_new(const char *config_toml, struct CohrtSession **out);

/**
 * Destroys a session. NULL is ignored.
 *
 * # Safety
 * `session` must come from `cohrt_session_new` and not have been freed.
 */
void cohrt_session_free(struct CohrtSession *session);

/**
 * Registers a new connection id.
 *
 * # Safety
 * `session` must be a live handle.
 */
enum CohrtStatus cohrt_session_connect(struct CohrtSession *session, uint64_t conn);

/**
 * Feeds one received frame from `conn`. Writes the frames to send as a JSON
 * array of `{"to", "frame"}` objects to `out_json`. A frame that does not
 * decode is answered with an `Error` frame and reported as `DecodeError`.
 *
 * # Safety
 * `session` must be a live handle, `frame` must point to `len` readable
 * bytes and `out_json` must be writable.
 */
enum CohrtStatus cohrt_session_handle_frame(struct CohrtSession *session,
                                            uint64_t conn,
                                            const uint8_t *frame,
                                            size_t len,
                                            uint64_t now_ms,
                                            char **out_json);

/**
 * Advances the session clock: releases abandoned claims, runs the
 * perception watchdog. Output as for `cohrt_session_handle_frame`.
 *
 * # Safety
 * `session` must be a live handle and `out_json` writable.
 */
enum CohrtStatus cohrt_session_tick(struct CohrtSession *session, uint64_t now_ms, char **out_json);

/**
 * Reports that `conn` went away. Output as for `cohrt_session_handle_frame`.
 *
 * # Safety
 * `session` must be a live handle and `out_json` writable.
 */
enum CohrtStatus cohrt_session_disconnect(struct CohrtSession *session,
                                          uint64_t conn,
                                          uint64_t now_ms,
                                          char **out_json);

/**
 * 1 if the session has ended, 0 if it is running, -1 if `session` is NULL.
 *
 * # Safety
 * `session` must be NULL or a live handle.
 */
int32_t cohrt_session_is_finished(const struct CohrtSession *session);

/**
 * Current state snapshot as JSON.
 *
 * # Safety
 * `session` must be a live handle and `out_json` writable.
 */
enum CohrtStatus cohrt_session_state_json(const struct CohrtSession *session, char **out_json);

/**
 * The session log so far, one frame per line.
 *
 * # Safety
 * `session` must be a live handle and `out` writable.
 */
enum CohrtStatus cohrt_session_log(const struct CohrtSession *session, char **out);

/**
 * Checks one frame against the protocol. On success writes its kind.
 *
 * # Safety
 * `frame` must point to `len` readable bytes; `out_kind` may be NULL.
 */
enum CohrtStatus cohrt_frame_validate(const uint8_t *frame, size_t len, char **out_kind);

/**
 * Computes fluency metrics from a complete session log.
 *
 * # Safety
 * `log` must point to `len` readable bytes and `out` must be writable.
 */
enum CohrtStatus cohrt_report_from_log(const uint8_t *log,
                                       size_t len,
                                       uint64_t min_activity_ms,
                                       struct CohrtReport **out);

/**
 * Destroys a report. NULL is ignored.
 *
 * # Safety
 * `report` must come from `cohrt_report_from_log` and not have been freed.
 */
void cohrt_report_free(struct CohrtReport *report);

/**
 * Session duration in ms, or 0 if `report` is NULL.
 *
 * # Safety
 * `report` must be NULL or a live handle.
 */
uint64_t cohrt_report_task_completion_ms(const struct CohrtReport *report);

/**
 * Fraction of the session with every agent active, or -1 if `report` is NULL.
 *
 * # Safety
 * `report` must be NULL or a live handle.
 */
double cohrt_report_concurrent_activity(const struct CohrtReport *report);

/**
 * Idle time of `agent` (`robot` or `human:<id>`).
 *
 * # Safety
 * `report` must be a live handle, `agent` NUL-terminated, `out_ms` writable.
 */
enum CohrtStatus cohrt_report_idle_ms(const struct CohrtReport *report,
                                      const char *agent,
                                      uint64_t *out_ms);

/**
 * The full report as JSON.
 *
 * # Safety
 * `report` must be a live handle and `out_json` writable.
 */
enum CohrtStatus cohrt_report_json(const struct CohrtReport *report, char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COHRT_H */
