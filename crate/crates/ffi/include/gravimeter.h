#ifndef GRAVIMETER_H
#define GRAVIMETER_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GravStatus {
  GRAV_STATUS_OK = 0,
  GRAV_STATUS_NULL_POINTER = 1,
  GRAV_STATUS_INVALID_ARGUMENT = 2,
  GRAV_STATUS_CONFIG = 3,
  GRAV_STATUS_PHYSICS = 4,
  GRAV_STATUS_FIT = 5,
  GRAV_STATUS_IO = 6,
  GRAV_STATUS_PANIC = 7,
} GravStatus;

/**
 * A resolved experiment configuration.
 */
typedef struct GravExperiment GravExperiment;

/**
 * A fringe scan.
 */
typedef struct GravScan GravScan;

/**
 * One scan point.
 */
typedef struct GravSample {
  /**
   * Hz/s
   */
  double alpha;
  double population;
  /**
   * Detected atoms, 0 for a noiseless point
   */
  uint64_t atoms;
  uint64_t seed;
} GravSample;

/**
 * Fringe fit with 1-σ uncertainties. Chirps are in Hz/s.
 */
typedef struct GravFit {
  double offset;
  double visibility;
  double alpha0;
  double period;
  double sigma_offset;
  double sigma_visibility;
  double sigma_alpha0;
  double sigma_period;
  double reduced_chi2;
  uint32_t points;
  bool converged;
} GravFit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message left by the most recent fallible call on this thread, empty if
 * it succeeded. The pointer stays valid until the next call into the
 * library on this thread.
 */
const char *grav_last_error(void);

/**
 * Library version as a static string.
 */
const char *grav_version(void);

/**
 * # Safety
 * `s` must come from this library and not have been freed. Null is ignored.
 */
void grav_string_free(char *s);

/**
 * # Safety
 * `name` must be a NUL-terminated string and `out` writable.
 */
enum GravStatus grav_experiment_from_preset(const char *name, struct GravExperiment **out);

/**
 * Parses a TOML experiment config.
 *
 * # Safety
 * `toml` must be a NUL-terminated string and `out` writable.
 */
enum GravStatus grav_experiment_from_toml(const char *toml, struct GravExperiment **out);

/**
 * # Safety
 * `exp` must come from this library and not have been freed. Null is ignored.
 */
void grav_experiment_free(struct GravExperiment *exp);

/**
 * # Safety
 * `exp` must be a live handle.
 */
enum GravStatus grav_experiment_set_seed(struct GravExperiment *exp, uint64_t seed);

/**
 * Fully resolved config as TOML, released with [`grav_string_free`].
 *
 * # Safety
 * `exp` must be a live handle and `out` writable.
 */
enum GravStatus grav_experiment_to_toml(const struct GravExperiment *exp, char **out);

/**
 * Effective order of the experiment's pulse sequence.
 *
 * # Safety
 * `exp` must be a live handle and `out` writable.
 */
enum GravStatus grav_experiment_effective_order(const struct GravExperiment *exp, double *out);

/**
 * Runs the experiment's chirp scan.
 *
 * # Safety
 * `exp` must be a live handle and `out` writable.
 */
enum GravStatus grav_simulate_fringes(const struct GravExperiment *exp, struct GravScan **out);

/**
 * Builds a scan from `n` samples.
 *
 * # Safety
 * `samples` must point to `n` readable samples and `out` be writable.
 */
enum GravStatus grav_scan_from_samples(const struct GravSample *samples,
                                       size_t n,
                                       struct GravScan **out);

/**
 * Parses scan CSV text.
 *
 * # Safety
 * `csv` must be a NUL-terminated string and `out` writable.
 */
enum GravStatus grav_scan_from_csv(const char *csv, struct GravScan **out);

/**
 * Scan as CSV text, released with [`grav_string_free`].
 *
 * # Safety
 * `scan` must be a live handle and `out` writable.
 */
enum GravStatus grav_scan_to_csv(const struct GravScan *scan, char **out);

/**
 * Number of points; 0 for a null handle.
 *
 * # Safety
 * `scan` must be a live handle or null.
 */
size_t grav_scan_len(const struct GravScan *scan);

/**
 * # Safety
 * `scan` must be a live handle and `out` writable.
 */
enum GravStatus grav_scan_get(const struct GravScan *scan, size_t index, struct GravSample *out);

/**
 * # Safety
 * `scan` must come from this library and not have been freed. Null is ignored.
 */
void grav_scan_free(struct GravScan *scan);

/**
 * Fits `P(α) = ½(A + V cos(2π(α − α₀)/period))`.
 *
 * `reference_alpha` picks the reported branch of `α₀`; pass NaN for the
 * centre of the scan.
 *
 * # Safety
 * `scan` must be a live handle and `out` writable.
 */
enum GravStatus grav_fit_fringes(const struct GravScan *scan,
                                 double period_guess,
                                 bool fixed_period,
                                 double reference_alpha,
                                 struct GravFit *out);

/**
 * Gravity from a fit for ⁸⁷Rb at 780 nm, m/s².
 *
 * # Safety
 * `fit` must be readable and `g`, `sigma_g` writable.
 */
enum GravStatus grav_extract_g(const struct GravFit *fit,
                               double tilt_rad,
                               double *g,
                               double *sigma_g);

/**
 * Chirp rate cancelling the Doppler shift for ⁸⁷Rb at 780 nm, Hz/s.
 *
 * # Safety
 * `out` must be writable.
 */
enum GravStatus grav_doppler_chirp_rate(double g, double tilt_rad, double *out);

/**
 * Vertical momentum width in ħk of a condensate of `atoms` released from
 * the reference trap, after `expansion_s` of free expansion.
 *
 * # Safety
 * `out` must be writable.
 */
enum GravStatus grav_momentum_width(double atoms, double expansion_s, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GRAVIMETER_H */
