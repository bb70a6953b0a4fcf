#ifndef DCSURV_H
#define DCSURV_H

/* Generated by cbindgen from dcsurv-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of a dcsurv call.
typedef enum DcsurvStatus {
  DCSURV_STATUS_OK = 0,
  // Internal failure (including caught panics).
  DCSURV_STATUS_INTERNAL = 1,
  DCSURV_STATUS_CONFIG_ERROR = 2,
  DCSURV_STATUS_DATA_ERROR = 3,
  // Integrity or privacy violation.
  DCSURV_STATUS_INTEGRITY_ERROR = 4,
  // A required pointer argument was null.
  DCSURV_STATUS_NULL_POINTER = 5,
  // A supplied buffer was too small.
  DCSURV_STATUS_BUFFER_TOO_SMALL = 6,
} DcsurvStatus;

// A completed central analysis: scores, matched set, balance, curves.
typedef struct DcsurvAnalysis DcsurvAnalysis;

// A loaded or generated dataset.
typedef struct DcsurvDataset DcsurvDataset;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *dcsurv_version(void);

// Message of the most recent error on this thread. The pointer stays valid
// until the next failing dcsurv call on the same thread.
const char *dcsurv_last_error(void);

// Generate the synthetic benchmark dataset from a JSON config
// (`{"n":1000,"lambda":2.0,"shape":2.0,"gamma":-1.0,"seed":0}`; all fields
// but `n` optional).
//
// # Safety
// `config_json` must be a NUL-terminated string and `out` a valid pointer.
enum DcsurvStatus dcsurv_dataset_synthetic(const char *config_json, struct DcsurvDataset **out);

// Load a dataset from a CSV file with a JSON schema (see the library docs
// for the schema fields).
//
// # Safety
// Both strings must be NUL-terminated; `out` must be a valid pointer.
enum DcsurvStatus dcsurv_dataset_from_csv(const char *path,
                                          const char *schema_json,
                                          struct DcsurvDataset **out);

// Number of samples, or 0 for a null handle.
//
// # Safety
// `dataset` must be null or a live handle.
size_t dcsurv_dataset_samples(const struct DcsurvDataset *dataset);

// Number of covariates, or 0 for a null handle.
//
// # Safety
// `dataset` must be null or a live handle.
size_t dcsurv_dataset_covariates(const struct DcsurvDataset *dataset);

// Release a dataset handle. Null is ignored.
//
// # Safety
// `dataset` must be a pointer previously returned by a dcsurv constructor
// and not yet freed.
void dcsurv_dataset_free(struct DcsurvDataset *dataset);

// Run the central analysis (logistic scores on the raw covariates, caliper
// matching, survival curves per arm).
//
// # Safety
// `dataset` must be a live handle; `out` must be a valid pointer.
enum DcsurvStatus dcsurv_central_analysis(const struct DcsurvDataset *dataset,
                                          double caliper_multiplier,
                                          struct DcsurvAnalysis **out);

// Matched sample size (treated + controls), or 0 for a null handle.
//
// # Safety
// `analysis` must be null or a live handle.
size_t dcsurv_analysis_matched_size(const struct DcsurvAnalysis *analysis);

// Maximum absolute standardized mean difference on the matched sample, or
// NaN for a null handle.
//
// # Safety
// `analysis` must be null or a live handle.
double dcsurv_analysis_masmd(const struct DcsurvAnalysis *analysis);

// Number of step points in the treated (`treated != 0`) or control curve.
//
// # Safety
// `analysis` must be null or a live handle.
size_t dcsurv_analysis_curve_len(const struct DcsurvAnalysis *analysis, int treated);

// Copy one arm's curve into caller-provided buffers of `capacity` entries.
//
// # Safety
// `times` and `survival` must point to writable arrays holding at least
// `capacity` doubles each.
enum DcsurvStatus dcsurv_analysis_curve(const struct DcsurvAnalysis *analysis,
                                        int treated,
                                        double *times,
                                        double *survival,
                                        size_t capacity);

// Release an analysis handle. Null is ignored.
//
// # Safety
// `analysis` must be a pointer previously returned by
// [`dcsurv_central_analysis`] and not yet freed.
void dcsurv_analysis_free(struct DcsurvAnalysis *analysis);

// Kaplan-Meier estimate of `len` (time, event) observations. Writes up to
// `capacity` step points and stores the true point count in `out_len`;
// call with `capacity == 0` to query the required size.
//
// # Safety
// `times` and `events` must hold `len` readable entries; `out_times` and
// `out_survival` must hold `capacity` writable doubles when `capacity > 0`;
// `out_len` must be a valid pointer.
enum DcsurvStatus dcsurv_kaplan_meier(const double *times,
                                      const uint8_t *events,
                                      size_t len,
                                      double *out_times,
                                      double *out_survival,
                                      size_t capacity,
                                      size_t *out_len);

// Run a repeated benchmark experiment from a JSON config file and write the
// report files into `out_dir`. `workers == 0` uses all cores.
//
// # Safety
// Both strings must be NUL-terminated.
enum DcsurvStatus dcsurv_run_experiment(const char *config_path,
                                        const char *out_dir,
                                        size_t workers);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DCSURV_H */
