#ifndef CCF_H
#define CCF_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

// Result code of every fallible call.
typedef enum CcfStatus {
  CCF_STATUS_OK = 0,
  CCF_STATUS_NULL_POINTER = 1,
  CCF_STATUS_INVALID_INPUT = 2,
  CCF_STATUS_DEGENERATE = 3,
  CCF_STATUS_PRECONDITION = 4,
  CCF_STATUS_RATIONAL = 5,
  CCF_STATUS_RESOLUTION = 6,
  CCF_STATUS_OBSTRUCTION = 7,
  CCF_STATUS_BUDGET = 8,
  CCF_STATUS_INTERNAL = 9,
  CCF_STATUS_IO = 10,
  CCF_STATUS_JSON = 11,
  CCF_STATUS_PANIC = 12,
} CcfStatus;

// Outcome of the uniform hyperbolicity test.
typedef enum CcfVerdict {
  CCF_VERDICT_UH = 0,
  CCF_VERDICT_NOT_UH = 1,
  CCF_VERDICT_INCONCLUSIVE = 2,
} CcfVerdict;

// Base dynamical system.
typedef struct CcfBase CcfBase;

// SL(2,R) cocycle over a base.
typedef struct CcfCocycle CcfCocycle;

// Result of an energy scan.
typedef struct CcfScan CcfScan;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until the
// next failing call on the same thread.
const char *ccf_last_error(void);

// Library version as a static string.
const char *ccf_version(void);

// Frees a string returned by this library.
//
// # Safety
// `s` must come from this library and not be freed twice.
void ccf_string_free(char *s);

// Circle rotation x ↦ x + alpha.
//
// # Safety
// `out_base` must be a valid pointer.
enum CcfStatus ccf_base_circle(double alpha, struct CcfBase **out_base);

// Torus translation by (alpha1, alpha2).
//
// # Safety
// `out_base` must be a valid pointer.
enum CcfStatus ccf_base_torus(double alpha1, double alpha2, struct CcfBase **out_base);

// Skew-shift (x, y) ↦ (x + alpha, y + x).
//
// # Safety
// `out_base` must be a valid pointer.
enum CcfStatus ccf_base_skew_shift(double alpha, struct CcfBase **out_base);

// Adding machine on `depth` digits in base `radix`.
//
// # Safety
// `out_base` must be a valid pointer.
enum CcfStatus ccf_base_odometer(uint32_t radix, uint32_t depth, struct CcfBase **out_base);

// # Safety
// `base` must come from a `ccf_base_*` constructor and not be freed twice.
void ccf_base_free(struct CcfBase *base);

// Cocycle from a generator JSON document such as
// `{"kind": "rotation", "angle": {"kind": "constant", "value": 0.5}}`.
//
// # Safety
// `base` must be a live handle, `generator_json` a NUL-terminated string and
// `out_cocycle` a valid pointer.
enum CcfStatus ccf_cocycle_from_json(const struct CcfBase *base,
                                     const char *generator_json,
                                     struct CcfCocycle **out_cocycle);

// Schrödinger cocycle (E − V, −1; 1, 0) for a potential given as a
// function JSON document such as `{"kind": "trig", "terms": [{"amp": 0.3, "kx": 1}]}`.
//
// # Safety
// As for `ccf_cocycle_from_json`.
enum CcfStatus ccf_cocycle_schrodinger(const struct CcfBase *base,
                                       const char *potential_json,
                                       double energy,
                                       struct CcfCocycle **out_cocycle);

// # Safety
// `cocycle` must come from a `ccf_cocycle_*` constructor and not be freed twice.
void ccf_cocycle_free(struct CcfCocycle *cocycle);

// The matrix at base point (x, y), written row-major to `out_matrix[4]`.
// Odometer points are taken as the integer part of x.
//
// # Safety
// `cocycle` must be live and `out_matrix` point to four doubles.
enum CcfStatus ccf_cocycle_eval(const struct CcfCocycle *cocycle,
                                double x,
                                double y,
                                double *out_matrix);

// Cone-field test of uniform hyperbolicity with default parameters;
// `out_n` receives the iterate count of the deciding level.
//
// # Safety
// `cocycle` must be live and the out pointers valid.
enum CcfStatus ccf_uh_test(const struct CcfCocycle *cocycle,
                           enum CcfVerdict *out_verdict,
                           uintptr_t *out_n);

// Fibered rotation number in [0, 1) along `iterations` steps from (x, y).
//
// # Safety
// `cocycle` must be live and `out_rho` valid.
enum CcfStatus ccf_rotation_number(const struct CcfCocycle *cocycle,
                                   double x,
                                   double y,
                                   uint64_t iterations,
                                   double *out_rho);

// Top Lyapunov exponent estimate along one orbit.
//
// # Safety
// `cocycle` must be live and `out_exponent` valid.
enum CcfStatus ccf_lyapunov(const struct CcfCocycle *cocycle,
                            double x,
                            double y,
                            uint64_t iterations,
                            double *out_exponent);

// Winding number of the cocycle along the base loop `index`.
//
// # Safety
// `cocycle` must be live and `out_winding` valid.
enum CcfStatus ccf_winding_number(const struct CcfCocycle *cocycle,
                                  uintptr_t index,
                                  int64_t *out_winding);

// Scans energies min, min + step, …, max for gaps of the Schrödinger
// operator with the given potential.
//
// # Safety
// `base` must be live, `potential_json` NUL-terminated and `out_scan` valid.
enum CcfStatus ccf_spectrum_scan(const struct CcfBase *base,
                                 const char *potential_json,
                                 double min,
                                 double max,
                                 double step,
                                 struct CcfScan **out_scan);

// Number of energies in the scan.
//
// # Safety
// `scan` must be live.
uintptr_t ccf_scan_point_count(const struct CcfScan *scan);

// Energy `i` of the scan and its verdict.
//
// # Safety
// `scan` must be live and the out pointers valid.
enum CcfStatus ccf_scan_point(const struct CcfScan *scan,
                              uintptr_t i,
                              double *out_energy,
                              bool *out_in_gap);

// Number of gaps found.
//
// # Safety
// `scan` must be live.
uintptr_t ccf_scan_gap_count(const struct CcfScan *scan);

// Refined edges of gap `i`; an edge is NaN where the gap runs off the grid.
//
// # Safety
// `scan` must be live and the out pointers valid.
enum CcfStatus ccf_scan_gap(const struct CcfScan *scan,
                            uintptr_t i,
                            double *out_lower,
                            double *out_upper);

// # Safety
// `scan` must come from `ccf_spectrum_scan` and not be freed twice.
void ccf_scan_free(struct CcfScan *scan);

// Perturbs the potential by less than `epsilon` in sup norm so that
// `energy` lies in a gap. The full result, including the new potential and
// its certificates, is returned as JSON in `out_json` (free with
// `ccf_string_free`).
//
// # Safety
// `base` must be live, `potential_json` NUL-terminated and `out_json` valid.
enum CcfStatus ccf_open_gap(const struct CcfBase *base,
                            const char *potential_json,
                            double energy,
                            double epsilon,
                            char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CCF_H */
