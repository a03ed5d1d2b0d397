#ifndef PNR_H
#define PNR_H

/* Generated by cbindgen from crates/ffi/src. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PnrStatus {
  PNR_STATUS_OK = 0,
  PNR_STATUS_NULL_POINTER = 1,
  PNR_STATUS_INVALID_ARGUMENT = 2,
  PNR_STATUS_DATA = 3,
  PNR_STATUS_NUMERICAL = 4,
  PNR_STATUS_BUFFER_TOO_SMALL = 5,
  PNR_STATUS_PANIC = 6,
} PnrStatus;

/*
 Binomial click-model parameters.
 */
typedef struct PnrClickModel PnrClickModel;

/*
 Outcome of a click-model fit.
 */
typedef struct PnrFitResult PnrFitResult;

/*
 Click histogram of one window schedule.
 */
typedef struct PnrHistogram PnrHistogram;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Copies the calling thread's last error message, NUL-terminated, into `buf`.

 Returns the message length excluding the terminator; the copy is
 truncated when `cap` is too small. A null `buf` only reports the length.

 # Safety
 `buf` must be null or valid for `cap` writes.
 */
size_t pnr_last_error(char *buf, size_t cap);

/*
 SNR in decibels; a single detector yields negative infinity.

 # Safety
 `out` must be valid for one write.
 */
enum PnrStatus pnr_snr_db(size_t n_detectors,
                          double rate,
                          double window,
                          double coherence,
                          double integration,
                          double *out);

/*
 Probability that either polarization mode crosses `threshold`.

 # Safety
 `out` must be valid for one write.
 */
enum PnrStatus pnr_detection_probability(double mean_amp, double threshold, double *out);

/*
 Threshold whose vacuum crossing rate equals `dark_rate` for the given slot.

 # Safety
 `out` must be valid for one write.
 */
enum PnrStatus pnr_calibrate_threshold(double dark_rate, double slot_duration, double *out);

/*
 Poisson photon-number distribution with `bins` entries, the last holding `n >= bins - 1`.

 # Safety
 `out` must be valid for `cap` writes.
 */
enum PnrStatus pnr_poisson_reconstruction(double mu, size_t bins, double *out, size_t cap);

/*
 Builds a click model over `n` detectors from parallel arrays.

 # Safety
 `etas`, `nus` and `weights` must each be valid for `n` reads; `out` for one write.
 */
enum PnrStatus pnr_click_model_new(double mu,
                                   const double *etas,
                                   const double *nus,
                                   const double *weights,
                                   size_t n,
                                   struct PnrClickModel **out);

/*
 Writes `P_0..P_N` (N + 1 values) into `out`.

 # Safety
 `model` must come from [`pnr_click_model_new`]; `out` must be valid for `cap` writes.
 */
enum PnrStatus pnr_click_model_distribution(const struct PnrClickModel *model,
                                            double *out,
                                            size_t cap);

/*
 # Safety
 `model` must be null or come from [`pnr_click_model_new`], and not be used afterwards.
 */
void pnr_click_model_free(struct PnrClickModel *model);

/*
 Aggregates `len` time-tagged records, sorted by timestamp, over `[0, span_ticks)`.

 `gate_ticks` of 0 disables gating.

 # Safety
 `timestamps` and `masks` must each be valid for `len` reads; `out` for one write.
 */
enum PnrStatus pnr_histogram_from_records(const uint64_t *timestamps,
                                          const uint64_t *masks,
                                          size_t len,
                                          size_t detector_count,
                                          uint64_t span_ticks,
                                          uint64_t window_ticks,
                                          uint64_t gate_ticks,
                                          struct PnrHistogram **out);

/*
 Builds a histogram directly from multiplicity counts `k = 0..=N` (`n_plus_one` entries).

 # Safety
 `counts` must be valid for `n_plus_one` reads; `out` for one write.
 */
enum PnrStatus pnr_histogram_from_multiplicities(const uint64_t *counts,
                                                 size_t n_plus_one,
                                                 struct PnrHistogram **out);

/*
 # Safety
 `hist` must come from a `pnr_histogram_*` constructor; `out` must be valid for one write.
 */
enum PnrStatus pnr_histogram_window_count(const struct PnrHistogram *hist, uint64_t *out);

/*
 Writes the N + 1 multiplicity counts as doubles.

 # Safety
 `hist` must come from a `pnr_histogram_*` constructor; `out` must be valid for `cap` writes.
 */
enum PnrStatus pnr_histogram_multiplicity(const struct PnrHistogram *hist, double *out, size_t cap);

/*
 # Safety
 `hist` must be null or come from a `pnr_histogram_*` constructor, and not be used afterwards.
 */
void pnr_histogram_free(struct PnrHistogram *hist);

/*
 Fits `μ`, dark exponents and branch weights with efficiencies fixed at `eta`.

 Dark exponents start at `nu` and may range over `[0, 10 nu]`.

 # Safety
 `hist` must come from a `pnr_histogram_*` constructor; `out` must be valid for one write.
 */
enum PnrStatus pnr_fit(const struct PnrHistogram *hist,
                       double mu_max,
                       double eta,
                       double nu,
                       struct PnrFitResult **out);

/*
 # Safety
 `result` must come from [`pnr_fit`]; `out` must be valid for one write.
 */
enum PnrStatus pnr_fit_result_mu(const struct PnrFitResult *result, double *out);

/*
 # Safety
 `result` must come from [`pnr_fit`]; `out` must be valid for one write.
 */
enum PnrStatus pnr_fit_result_chi_squared(const struct PnrFitResult *result, double *out);

/*
 Writes 1 when the simplex met its tolerance, 0 otherwise.

 # Safety
 `result` must come from [`pnr_fit`]; `out` must be valid for one write.
 */
enum PnrStatus pnr_fit_result_converged(const struct PnrFitResult *result, int32_t *out);

/*
 Writes the fitted `P_0..P_N`.

 # Safety
 `result` must come from [`pnr_fit`]; `out` must be valid for `cap` writes.
 */
enum PnrStatus pnr_fit_result_multiplicity(const struct PnrFitResult *result,
                                           double *out,
                                           size_t cap);

/*
 # Safety
 `result` must be null or come from [`pnr_fit`], and not be used afterwards.
 */
void pnr_fit_result_free(struct PnrFitResult *result);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PNR_H */
