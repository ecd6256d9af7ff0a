#ifndef FRACCAP_H
#define FRACCAP_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FcProblem {
  FC_PROBLEM_SCALAR = 0,
  FC_PROBLEM_DAMPED = 1,
  FC_PROBLEM_SYSTEM = 2,
} FcProblem;

typedef enum FcRunStatus {
  FC_RUN_STATUS_REACHED_HORIZON = 0,
  FC_RUN_STATUS_BLEW_UP = 1,
  FC_RUN_STATUS_DIVERGED = 2,
} FcRunStatus;

typedef enum FcStatus {
  FC_STATUS_OK = 0,
  FC_STATUS_IO = 1,
  FC_STATUS_VALIDATION = 2,
  FC_STATUS_CHECK_FAILED = 3,
  FC_STATUS_NULL_POINTER = 10,
  FC_STATUS_INVALID_UTF8 = 11,
  FC_STATUS_OUT_OF_RANGE = 12,
  FC_STATUS_PANIC = 13,
} FcStatus;

typedef enum FcVerdict {
  FC_VERDICT_NONEXISTENCE = 0,
  FC_VERDICT_UNDETERMINED = 1,
} FcVerdict;

/**
 * Exponent parameters. Starts from the library defaults.
 */
typedef struct FcInputs FcInputs;

/**
 * Result of a regime classification.
 */
typedef struct FcReport FcReport;

/**
 * A simulation configuration and, once run, its result.
 */
typedef struct FcSimulation FcSimulation;

typedef struct FcSystemExponents {
  double d[4];
  double e[4];
  double dbar;
  double ebar;
} FcSystemExponents;

typedef struct FcNormRow {
  uint64_t step;
  double t;
  double l1;
  double l2;
  double linf;
  double v_linf;
} FcNormRow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread. Empty if none. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *fc_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *fc_version(void);

struct FcInputs *fc_inputs_new(void);

/**
 * # Safety
 * `inputs` must come from [`fc_inputs_new`] or be null.
 */
void fc_inputs_free(struct FcInputs *inputs);

/**
 * Sets a field by name: `alpha`, `beta`, `delta`, `gamma`, `theta`, `mu`,
 * `sigma`, `p`, `q` or `d`. Range checks happen when the inputs are used.
 *
 * # Safety
 * `inputs` must be a live handle and `name` a NUL-terminated string.
 */
enum FcStatus fc_inputs_set(struct FcInputs *inputs, const char *name, double value);

/**
 * # Safety
 * `inputs` must be a live handle, `name` a NUL-terminated string and `out`
 * writable.
 */
enum FcStatus fc_inputs_get(const struct FcInputs *inputs, const char *name, double *out);

/**
 * Critical exponent of the scalar problem for the inputs' `alpha`, `delta`, `d`.
 *
 * # Safety
 * `inputs` must be a live handle and `out` writable.
 */
enum FcStatus fc_p_star(const struct FcInputs *inputs, double *out);

/**
 * Classifies the inputs for the given problem. On success `*out` holds a
 * new report to be released with [`fc_report_free`].
 *
 * # Safety
 * `inputs` must be a live handle and `out` writable.
 */
enum FcStatus fc_classify(const struct FcInputs *inputs,
                          enum FcProblem problem,
                          struct FcReport **out);

/**
 * # Safety
 * `report` must come from [`fc_classify`] or be null.
 */
void fc_report_free(struct FcReport *report);

/**
 * # Safety
 * `report` must be a live handle.
 */
enum FcVerdict fc_report_verdict(const struct FcReport *report);

/**
 * Conditions that fired, joined by `"; "`. Owned by the report.
 *
 * # Safety
 * `report` must be a live handle.
 */
const char *fc_report_fired(const struct FcReport *report);

/**
 * Looks up a named number of the report, e.g. `p_star`, `Dbar` or `E3`.
 *
 * # Safety
 * `report` must be a live handle, `name` a NUL-terminated string and `out`
 * writable.
 */
enum FcStatus fc_report_number(const struct FcReport *report, const char *name, double *out);

/**
 * Both exponent families of the system and their combined values.
 *
 * # Safety
 * `inputs` must be a live handle and `out` writable.
 */
enum FcStatus fc_system_exponents(const struct FcInputs *inputs, struct FcSystemExponents *out);

/**
 * Parses a TOML document with a `[simulate]` section.
 *
 * # Safety
 * `toml` must be a NUL-terminated string and `out` writable.
 */
enum FcStatus fc_simulation_from_toml(const char *toml, struct FcSimulation **out);

/**
 * # Safety
 * `sim` must come from [`fc_simulation_from_toml`] or be null.
 */
void fc_simulation_free(struct FcSimulation *sim);

/**
 * Runs the simulation, replacing any earlier result. `t_detect` receives the
 * detection time for a blow-up and NaN otherwise. Either output may be null.
 *
 * # Safety
 * `sim` must be a live handle; non-null outputs must be writable.
 */
enum FcStatus fc_simulation_run(struct FcSimulation *sim,
                                enum FcRunStatus *status,
                                double *t_detect);

/**
 * Number of recorded norm rows; zero before a run.
 *
 * # Safety
 * `sim` must be a live handle.
 */
size_t fc_simulation_trace_len(const struct FcSimulation *sim);

/**
 * # Safety
 * `sim` must be a live handle and `out` writable.
 */
enum FcStatus fc_simulation_trace_row(const struct FcSimulation *sim,
                                      size_t index,
                                      struct FcNormRow *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FRACCAP_H */
