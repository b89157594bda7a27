#ifndef QTDG_H
#define QTDG_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stddef.h>

typedef enum QtdgStatus {
  QTDG_STATUS_OK = 0,
  QTDG_STATUS_NULL_POINTER = 1,
  QTDG_STATUS_INVALID_UTF8 = 2,
  QTDG_STATUS_INVALID_ARGUMENT = 3,
  QTDG_STATUS_CONFIG = 4,
  QTDG_STATUS_UNSUPPORTED = 5,
  QTDG_STATUS_NUMERICAL = 6,
  QTDG_STATUS_SOLVER = 7,
  QTDG_STATUS_IO = 8,
  QTDG_STATUS_OUT_OF_DOMAIN = 9,
  QTDG_STATUS_PANIC = 10,
} QtdgStatus;

/*
 Parsed run configuration.
 */
typedef struct QtdgConfig QtdgConfig;

/*
 Result of a single run.
 */
typedef struct QtdgSolution QtdgSolution;

/*
 Summary of a run; errors that do not apply are NaN.
 */
typedef struct QtdgReport {
  double h;
  size_t dofs;
  double dg_error;
  double l2_final_error;
  double energy_loss;
  double wall_ms;
} QtdgReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version as a static string.
 */
const char *qtdg_version(void);

/*
 Message of the last failed call on this thread, or NULL. Valid until
 the next call into the library on this thread.
 */
const char *qtdg_last_error(void);

/*
 Parses a TOML configuration.

 # Safety
 `toml` must be a nul-terminated string; `out` must be writable.
 */
enum QtdgStatus qtdg_config_parse(const char *toml, struct QtdgConfig **out);

/*
 Canonical TOML form of a configuration.

 # Safety
 `config` must come from [`qtdg_config_parse`]; `out` must be writable.
 */
enum QtdgStatus qtdg_config_canonical(const struct QtdgConfig *config, char **out);

/*
 # Safety
 `config` must come from [`qtdg_config_parse`] or be NULL.
 */
void qtdg_config_free(struct QtdgConfig *config);

/*
 Runs the single (space, degree, mesh) combination of `config`.

 # Safety
 `config` must come from [`qtdg_config_parse`]; `out` must be writable.
 */
enum QtdgStatus qtdg_solve(const struct QtdgConfig *config, struct QtdgSolution **out);

/*
 # Safety
 `solution` must come from [`qtdg_solve`]; `out` must be writable.
 */
enum QtdgStatus qtdg_solution_report(const struct QtdgSolution *solution, struct QtdgReport *out);

/*
 Value of the discrete solution at `point` (`len` = space dimension + 1,
 time last).

 # Safety
 `point` must hold `len` doubles; `re` and `im` must be writable.
 */
enum QtdgStatus qtdg_solution_evaluate(const struct QtdgSolution *solution,
                                       const double *point,
                                       size_t len,
                                       double *re,
                                       double *im);

/*
 # Safety
 `solution` must come from [`qtdg_solve`] or be NULL.
 */
void qtdg_solution_free(struct QtdgSolution *solution);

/*
 Error table of the whole sweep, as CSV.

 # Safety
 `config` must come from [`qtdg_config_parse`]; `out` must be writable.
 */
enum QtdgStatus qtdg_convergence_csv(const struct QtdgConfig *config, char **out);

/*
 Condition numbers of the first slab matrix over the sweep, as CSV.

 # Safety
 `config` must come from [`qtdg_config_parse`]; `out` must be writable.
 */
enum QtdgStatus qtdg_condition_csv(const struct QtdgConfig *config, char **out);

/*
 # Safety
 `s` must come from this library or be NULL.
 */
void qtdg_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QTDG_H */
