#ifndef SAFEXP_H
#define SAFEXP_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SafexpMode {
  SAFEXP_MODE_FRAMEWORK = 0,
  SAFEXP_MODE_OPTIMISTIC = 1,
} SafexpMode;

typedef enum SafexpOutcome {
  SAFEXP_OUTCOME_SUCCESS = 0,
  SAFEXP_OUTCOME_TIMEOUT = 1,
  SAFEXP_OUTCOME_COLLISION = 2,
} SafexpOutcome;

typedef enum SafexpStatus {
  SAFEXP_STATUS_OK = 0,
  SAFEXP_STATUS_NULL_POINTER = 1,
  SAFEXP_STATUS_INVALID_STRING = 2,
  SAFEXP_STATUS_INVALID_INPUT = 3,
  SAFEXP_STATUS_CONFIG = 4,
  SAFEXP_STATUS_IO = 5,
  SAFEXP_STATUS_SOLVER = 6,
  SAFEXP_STATUS_INVARIANT = 7,
  SAFEXP_STATUS_PANIC = 8,
} SafexpStatus;

/**
 * Finished run handle.
 */
typedef struct SafexpRun SafexpRun;

/**
 * Scenario configuration handle.
 */
typedef struct SafexpScenario SafexpScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or an empty string.
 * Valid until the next failing call on the same thread.
 */
const char *safexp_last_error(void);

/**
 * Loads a scenario file. On success `*out` receives a new handle.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SafexpStatus safexp_scenario_load(const char *path, struct SafexpScenario **out);

/**
 * # Safety
 * `scenario` must be a handle from [`safexp_scenario_load`].
 */
enum SafexpStatus safexp_scenario_set_seed(struct SafexpScenario *scenario, uint64_t seed);

/**
 * # Safety
 * `scenario` must be a handle from [`safexp_scenario_load`].
 */
enum SafexpStatus safexp_scenario_set_max_ticks(struct SafexpScenario *scenario,
                                                uint64_t max_ticks);

/**
 * Releases a scenario handle. Null is ignored.
 *
 * # Safety
 * `scenario` must be null or a handle not yet freed.
 */
void safexp_scenario_free(struct SafexpScenario *scenario);

/**
 * Builds (or loads from cache) the tracking model and runs the scenario to
 * termination. On success `*out` receives a new run handle.
 *
 * # Safety
 * `scenario` must be a live handle and `out` a valid pointer.
 */
enum SafexpStatus safexp_run(const struct SafexpScenario *scenario,
                             enum SafexpMode mode,
                             struct SafexpRun **out);

/**
 * # Safety
 * `run` must be a live handle and `outcome` a valid pointer.
 */
enum SafexpStatus safexp_run_outcome(const struct SafexpRun *run, enum SafexpOutcome *outcome);

/**
 * Ticks simulated and violations recorded.
 *
 * # Safety
 * `run` must be a live handle; `ticks` and `violations` valid pointers.
 */
enum SafexpStatus safexp_run_counts(const struct SafexpRun *run,
                                    uint64_t *ticks,
                                    uint64_t *violations);

/**
 * Largest planar and vertical tracking errors over the run.
 *
 * # Safety
 * `run` must be a live handle; `planar` and `vertical` valid pointers.
 */
enum SafexpStatus safexp_run_tracking_error(const struct SafexpRun *run,
                                            double *planar,
                                            double *vertical);

/**
 * Writes the run log as JSON lines.
 *
 * # Safety
 * `run` must be a live handle and `path` a NUL-terminated string.
 */
enum SafexpStatus safexp_run_write_log(const struct SafexpRun *run, const char *path);

/**
 * Releases a run handle. Null is ignored.
 *
 * # Safety
 * `run` must be null or a handle not yet freed.
 */
void safexp_run_free(struct SafexpRun *run);

/**
 * Length of the shortest bounded-curvature path between two `(x, y, heading)` poses.
 *
 * # Safety
 * `from` and `to` must point to three doubles each, `length` to one.
 */
enum SafexpStatus safexp_dubins_length(const double *from,
                                       const double *to,
                                       double radius,
                                       double *length);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SAFEXP_H */
