/* droopgrid C API. Generated by cbindgen from droopgrid-ffi; do not edit. */

#ifndef DROOPGRID_H
#define DROOPGRID_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of a droopgrid call.
//
// Matches the CLI exit codes: 0 success, 1 negative verdict with output
// still produced, 2 unusable input, 3 numerical failure.
typedef enum DgStatus {
  // Operation succeeded.
  DG_OK = 0,
  // Operation ran but the answer is negative: a stability certificate
  // was withheld, or a trajectory diverged and was truncated.
  DG_WITHHELD = 1,
  // Malformed or inconsistent input; nothing was computed.
  DG_INVALID_INPUT = 2,
  // Numerical failure (non-convergence, singular system, overflow).
  DG_NUMERICAL = 3,
} DgStatus;

// Opaque network case handle.
typedef struct dg_case dg_case;

// Opaque operating-point handle.
typedef struct dg_equilibrium dg_equilibrium;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static string; do not free.
const char *dg_version(void);

// Message for the last failure on this thread; empty until a call fails.
// The pointer stays valid until the next failing call on the same thread.
// Do not free.
const char *dg_last_error(void);

// Frees a string returned by this library. NULL is a no-op.
//
// # Safety
// `s` must have been returned by a droopgrid call and not freed before.
void dg_string_free(char *s);

// Parses and validates a case from JSON.
//
// # Safety
// `json` must be NUL-terminated; `out` must be a valid pointer.
enum DgStatus dg_case_parse(const char *json, struct dg_case **out);

// Loads a bundled case by name (e.g. "ieee9").
//
// # Safety
// `name` must be NUL-terminated; `out` must be a valid pointer.
enum DgStatus dg_case_builtin(const char *name, struct dg_case **out);

// Serializes a case to pretty JSON.
//
// # Safety
// `case` must be a live case handle; `out_json` must be a valid pointer.
enum DgStatus dg_case_to_json(const struct dg_case *case_, char **out_json);

// Writes the case fingerprint (16 hex characters) used in CSV metadata.
//
// # Safety
// `case` must be a live case handle; `out_hash` must be a valid pointer.
enum DgStatus dg_case_hash(const struct dg_case *case_, char **out_hash);

// Generates a lossy variant of `base` by redrawing line R/X ratios from
// N(rx_mean, rx_std^2); equal seeds give identical variants.
//
// # Safety
// `base` must be a live case handle; `out` must be a valid pointer.
enum DgStatus dg_case_gen_lossy(const struct dg_case *base,
                                double rx_mean,
                                double rx_std,
                                uint64_t seed,
                                struct dg_case **out);

// Fills null droop references of `case` so that `target` is its steady
// operating point, returning the calibrated copy.
//
// # Safety
// `case` and `target` must be live handles; `out` must be a valid pointer.
enum DgStatus dg_case_calibrate(const struct dg_case *case_,
                                const struct dg_equilibrium *target,
                                struct dg_case **out);

// Solves the operating point, then rewrites the droop references so the
// solved state is an exact equilibrium with zero frequency drift. Returns
// both the pinned case and its equilibrium.
//
// `alpha_policy` is "auto", "traditional", an angle in radians, or NULL
// for the case-driven default.
//
// # Safety
// `case` must be a live handle; `out_case` and `out_eq` must be valid
// pointers; `alpha_policy` must be NUL-terminated when non-null.
enum DgStatus dg_case_pin(const struct dg_case *case_,
                          const char *alpha_policy,
                          struct dg_case **out_case,
                          struct dg_equilibrium **out_eq);

// Frees a case handle. NULL is a no-op.
//
// # Safety
// `case` must have come from this library and not be freed twice.
void dg_case_free(struct dg_case *case_);

// The operating point bundled with the builtin case (zero drift; suitable
// as a calibration target).
//
// # Safety
// `out` must be a valid pointer.
enum DgStatus dg_equilibrium_builtin_reference(struct dg_equilibrium **out);

// Solves the steady operating point of a calibrated case by Newton
// iteration from a flat start.
//
// # Safety
// `case` must be a live handle; `out` must be a valid pointer;
// `alpha_policy` must be NUL-terminated when non-null.
enum DgStatus dg_equilibrium_solve(const struct dg_case *case_,
                                   const char *alpha_policy,
                                   struct dg_equilibrium **out);

// Parses an equilibrium from JSON (as written by the CLI or
// `dg_equilibrium_to_json`).
//
// # Safety
// `json` must be NUL-terminated; `out` must be a valid pointer.
enum DgStatus dg_equilibrium_parse(const char *json, struct dg_equilibrium **out);

// Serializes an equilibrium to JSON.
//
// # Safety
// `eq` must be a live handle; `out_json` must be a valid pointer.
enum DgStatus dg_equilibrium_to_json(const struct dg_equilibrium *eq, char **out_json);

// Frees an equilibrium handle. NULL is a no-op.
//
// # Safety
// `eq` must have come from this library and not be freed twice.
void dg_equilibrium_free(struct dg_equilibrium *eq);

// Runs both stability certificates at an operating point and writes the
// full report as JSON.
//
// Returns `DG_OK` when both certificates hold, `DG_WITHHELD` when either
// is withheld (the report is still written), or an error status.
//
// # Safety
// `case` must be a live handle; `eq` is an optional live handle (solved
// internally when NULL); `alpha_policy` must be NUL-terminated when
// non-null; `out_json` must be a valid pointer.
enum DgStatus dg_stability_report(const struct dg_case *case_,
                                  const struct dg_equilibrium *eq,
                                  const char *alpha_policy,
                                  char **out_json);

// Integrates a disturbed trajectory and writes it as CSV.
//
// `disturbance_json` uses the CLI schema (`{"theta": {...}, "v": {...},
// "random": {...}}`); NULL applies the default +0.01 p.u. inverter
// voltage kick. `method` is "rk4" or "rk45" (NULL means "rk4"); `stride`
// keeps every Nth sample (0 is treated as 1). Returns `DG_WITHHELD` with
// the truncated CSV when the trajectory diverges.
//
// # Safety
// `case` must be a live handle; `eq` is an optional live handle;
// `disturbance_json` and `method` must be NUL-terminated when non-null;
// `out_csv` must be a valid pointer.
enum DgStatus dg_simulate_csv(const struct dg_case *case_,
                              const struct dg_equilibrium *eq,
                              const char *disturbance_json,
                              double t_end,
                              double dt,
                              const char *method,
                              size_t stride,
                              char **out_csv);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DROOPGRID_H */
