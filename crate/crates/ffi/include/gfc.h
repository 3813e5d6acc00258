#ifndef GFC_H
#define GFC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define GFC_OK 0

#define GFC_ERR_NULL -1

#define GFC_ERR_UTF8 -2

#define GFC_ERR_CONFIG -3

#define GFC_ERR_NUMERICAL -4

#define GFC_ERR_DOMAIN -5

#define GFC_ERR_PANIC -6

#define GFC_ERR_RANGE -7

// A validated scenario.
typedef struct GfcScenario GfcScenario;

// A solved trajectory.
typedef struct GfcTrajectory GfcTrajectory;

// Observables at one output time.
typedef struct GfcObservables {
  double t;
  double m0;
  double m1;
  double m2;
  double mm;
  double norm0m;
  double min_density;
  double escaped_mass;
} GfcObservables;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *gfc_version(void);

// Copy the last error message of this thread into `buf` (NUL-terminated,
// truncated to `len`). Returns the full message length in bytes.
//
// # Safety
// `buf` must be null or valid for `len` bytes of writes.
size_t gfc_last_error(char *buf, size_t len);

// Parse and validate a scenario from TOML text.
//
// # Safety
// `toml` must be a NUL-terminated string; `out` must be valid for a write.
int32_t gfc_scenario_from_toml(const char *toml, struct GfcScenario **out);

// Load a built-in scenario by name.
//
// # Safety
// `name` must be a NUL-terminated string; `out` must be valid for a write.
int32_t gfc_scenario_from_preset(const char *name, struct GfcScenario **out);

// Override cell count, time step and seed. Zero leaves a value unchanged.
//
// # Safety
// `sc` must be a live handle from this library.
int32_t gfc_scenario_override(struct GfcScenario *sc, size_t cells, double dt, uint64_t seed);

// Number of grid cells.
//
// # Safety
// `sc` must be a live handle; `out` must be valid for a write.
int32_t gfc_scenario_cells(const struct GfcScenario *sc, size_t *out);

// # Safety
// `sc` must be null or a handle from this library not yet freed.
void gfc_scenario_free(struct GfcScenario *sc);

// Solve the scenario with its configured scheme.
//
// # Safety
// `sc` must be a live handle; `out` must be valid for a write.
int32_t gfc_solve(const struct GfcScenario *sc, struct GfcTrajectory **out);

// Run every check the scenario enables. `failed` receives the number of
// failing checks and `total` the number run.
//
// # Safety
// `sc` must be a live handle; `failed` and `total` must be valid for writes.
int32_t gfc_verify(const struct GfcScenario *sc, size_t *failed, size_t *total);

// Number of output times.
//
// # Safety
// `tr` must be a live handle; `out` must be valid for a write.
int32_t gfc_trajectory_len(const struct GfcTrajectory *tr, size_t *out);

// Observables at output `index`.
//
// # Safety
// `tr` must be a live handle; `out` must be valid for a write.
int32_t gfc_trajectory_observables(const struct GfcTrajectory *tr,
                                   size_t index,
                                   struct GfcObservables *out);

// Copy the cell values of output `index` into `buf`, which must hold
// exactly as many values as the grid has cells.
//
// # Safety
// `tr` must be a live handle; `buf` must be valid for `len` writes.
int32_t gfc_trajectory_snapshot(const struct GfcTrajectory *tr,
                                size_t index,
                                double *buf,
                                size_t len);

// # Safety
// `tr` must be null or a handle from this library not yet freed.
void gfc_trajectory_free(struct GfcTrajectory *tr);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GFC_H */
