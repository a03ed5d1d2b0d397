//! C ABI over `pnr-core`.
//!
//! Every entry point returns a [`PnrStatus`]; results come back through out
//! pointers. On failure the message is kept per thread and can be copied out
//! with [`pnr_last_error`]. Handles are opaque and must be released with
//! their matching `_free` function. Panics never cross the boundary.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};

use pnr_core::click_model::{click_distribution, poisson_reconstruction, ClickModelParams};
use pnr_core::coincidence::{aggregate, ClickHistogram, WindowSchedule};
use pnr_core::error::{Error, ErrorClass};
use pnr_core::field_model::{calibrate_threshold, detection_probability, TagRecord, TimeTagStream};
use pnr_core::fitter::{fit, FitConfig, FitResult};
use pnr_core::snr::{snr_db, SnrParams};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PnrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Data = 3,
    Numerical = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn fail(status: PnrStatus, msg: impl Into<String>) -> PnrStatus {
    set_error(msg);
    status
}

fn from_core(e: Error) -> PnrStatus {
    let status = match e.class() {
        ErrorClass::Config => PnrStatus::InvalidArgument,
        ErrorClass::Io => PnrStatus::Data,
        ErrorClass::Numerical => PnrStatus::Numerical,
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> PnrStatus) -> PnrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => fail(PnrStatus::Panic, "internal panic"),
    }
}

/// # Safety
/// `ptr` must be null or valid for `len` reads.
unsafe fn slice<'a, T>(ptr: *const T, len: usize) -> Option<&'a [T]> {
    if len == 0 {
        Some(&[])
    } else if ptr.is_null() {
        None
    } else {
        Some(std::slice::from_raw_parts(ptr, len))
    }
}

/// # Safety
/// `out` must be null or valid for `cap` writes.
unsafe fn copy_out(values: &[f64], out: *mut f64, cap: usize) -> PnrStatus {
    if out.is_null() {
        return fail(PnrStatus::NullPointer, "output buffer is null");
    }
    if cap < values.len() {
        return fail(
            PnrStatus::BufferTooSmall,
            format!("buffer holds {cap} values, {} needed", values.len()),
        );
    }
    std::ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
    PnrStatus::Ok
}

/// # Safety
/// `out` must be null or valid for one write.
unsafe fn write<T>(out: *mut T, value: T) -> PnrStatus {
    if out.is_null() {
        return fail(PnrStatus::NullPointer, "output pointer is null");
    }
    out.write(value);
    PnrStatus::Ok
}

/// Copies the calling thread's last error message, NUL-terminated, into `buf`.
///
/// Returns the message length excluding the terminator; the copy is
/// truncated when `cap` is too small. A null `buf` only reports the length.
///
/// # Safety
/// `buf` must be null or valid for `cap` writes.
#[no_mangle]
pub unsafe extern "C" fn pnr_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && cap > 0 {
            let n = msg.len().min(cap - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// SNR in decibels; a single detector yields negative infinity.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn pnr_snr_db(
    n_detectors: usize,
    rate: f64,
    window: f64,
    coherence: f64,
    integration: f64,
    out: *mut f64,
) -> PnrStatus {
    guard(|| {
        let p = SnrParams {
            n_detectors,
            rate,
            window,
            coherence,
            integration,
        };
        match snr_db(&p) {
            Ok(v) => write(out, v),
            Err(e) => from_core(e),
        }
    })
}

/// Probability that either polarization mode crosses `threshold`.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn pnr_detection_probability(mean_amp: f64, threshold: f64, out: *mut f64) -> PnrStatus {
    guard(|| match detection_probability(mean_amp, threshold) {
        Ok(v) => write(out, v),
        Err(e) => from_core(e),
    })
}

/// Threshold whose vacuum crossing rate equals `dark_rate` for the given slot.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn pnr_calibrate_threshold(dark_rate: f64, slot_duration: f64, out: *mut f64) -> PnrStatus {
    guard(|| match calibrate_threshold(dark_rate, slot_duration) {
        Ok(v) => write(out, v),
        Err(e) => from_core(e),
    })
}

/// Poisson photon-number distribution with `bins` entries, the last holding `n >= bins - 1`.
///
/// # Safety
/// `out` must be valid for `cap` writes.
#[no_mangle]
pub unsafe extern "C" fn pnr_poisson_reconstruction(mu: f64, bins: usize, out: *mut f64, cap: usize) -> PnrStatus {
    guard(|| match poisson_reconstruction(mu, bins.saturating_sub(1)) {
        Ok(d) if bins > 0 => copy_out(&d.probs, out, cap),
        Ok(_) => fail(PnrStatus::InvalidArgument, "bins must be >= 1"),
        Err(e) => from_core(e),
    })
}

/// Binomial click-model parameters.
pub struct PnrClickModel {
    params: ClickModelParams,
}

/// Builds a click model over `n` detectors from parallel arrays.
///
/// # Safety
/// `etas`, `nus` and `weights` must each be valid for `n` reads; `out` for one write.
#[no_mangle]
pub unsafe extern "C" fn pnr_click_model_new(
    mu: f64,
    etas: *const f64,
    nus: *const f64,
    weights: *const f64,
    n: usize,
    out: *mut *mut PnrClickModel,
) -> PnrStatus {
    guard(|| {
        let (Some(etas), Some(nus), Some(weights)) = (slice(etas, n), slice(nus, n), slice(weights, n)) else {
            return fail(PnrStatus::NullPointer, "parameter array is null");
        };
        let params = ClickModelParams {
            mu,
            etas: etas.to_vec(),
            nus: nus.to_vec(),
            weights: weights.to_vec(),
        };
        if let Err(e) = params.validate() {
            return from_core(e);
        }
        write(out, Box::into_raw(Box::new(PnrClickModel { params })))
    })
}

/// Writes `P_0..P_N` (N + 1 values) into `out`.
///
/// # Safety
/// `model` must come from [`pnr_click_model_new`]; `out` must be valid for `cap` writes.
#[no_mangle]
pub unsafe extern "C" fn pnr_click_model_distribution(model: *const PnrClickModel, out: *mut f64, cap: usize) -> PnrStatus {
    guard(|| match model.as_ref() {
        Some(m) => copy_out(&click_distribution(&m.params), out, cap),
        None => fail(PnrStatus::NullPointer, "model is null"),
    })
}

/// # Safety
/// `model` must be null or come from [`pnr_click_model_new`], and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pnr_click_model_free(model: *mut PnrClickModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Click histogram of one window schedule.
pub struct PnrHistogram {
    hist: ClickHistogram,
}

/// Aggregates `len` time-tagged records, sorted by timestamp, over `[0, span_ticks)`.
///
/// `gate_ticks` of 0 disables gating.
///
/// # Safety
/// `timestamps` and `masks` must each be valid for `len` reads; `out` for one write.
#[no_mangle]
pub unsafe extern "C" fn pnr_histogram_from_records(
    timestamps: *const u64,
    masks: *const u64,
    len: usize,
    detector_count: usize,
    span_ticks: u64,
    window_ticks: u64,
    gate_ticks: u64,
    out: *mut *mut PnrHistogram,
) -> PnrStatus {
    guard(|| {
        let (Some(ts), Some(ms)) = (slice(timestamps, len), slice(masks, len)) else {
            return fail(PnrStatus::NullPointer, "record array is null");
        };
        let mut stream = TimeTagStream::empty(detector_count, 1e-9, span_ticks);
        stream.gate_ticks = gate_ticks;
        stream.records = ts
            .iter()
            .zip(ms)
            .map(|(&timestamp, &mask)| TagRecord { timestamp, mask })
            .collect();
        match aggregate(&stream, &WindowSchedule::gated(window_ticks, gate_ticks)) {
            Ok(hist) => write(out, Box::into_raw(Box::new(PnrHistogram { hist }))),
            Err(e) => from_core(e),
        }
    })
}

/// Builds a histogram directly from multiplicity counts `k = 0..=N` (`n_plus_one` entries).
///
/// # Safety
/// `counts` must be valid for `n_plus_one` reads; `out` for one write.
#[no_mangle]
pub unsafe extern "C" fn pnr_histogram_from_multiplicities(
    counts: *const u64,
    n_plus_one: usize,
    out: *mut *mut PnrHistogram,
) -> PnrStatus {
    guard(|| {
        let Some(counts) = slice(counts, n_plus_one) else {
            return fail(PnrStatus::NullPointer, "counts array is null");
        };
        if n_plus_one < 2 || n_plus_one > 64 {
            return fail(PnrStatus::InvalidArgument, "need between 1 and 63 detectors");
        }
        // the canonical pattern for multiplicity k sets the lowest k bits
        let patterns: BTreeMap<u64, u64> = counts
            .iter()
            .enumerate()
            .map(|(k, &c)| (if k == 0 { 0 } else { u64::MAX >> (64 - k) }, c))
            .collect();
        match ClickHistogram::from_pattern_counts(n_plus_one - 1, patterns) {
            Ok(hist) => write(out, Box::into_raw(Box::new(PnrHistogram { hist }))),
            Err(e) => from_core(e),
        }
    })
}

/// # Safety
/// `hist` must come from a `pnr_histogram_*` constructor; `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn pnr_histogram_window_count(hist: *const PnrHistogram, out: *mut u64) -> PnrStatus {
    guard(|| match hist.as_ref() {
        Some(h) => write(out, h.hist.window_count),
        None => fail(PnrStatus::NullPointer, "histogram is null"),
    })
}

/// Writes the N + 1 multiplicity counts as doubles.
///
/// # Safety
/// `hist` must come from a `pnr_histogram_*` constructor; `out` must be valid for `cap` writes.
#[no_mangle]
pub unsafe extern "C" fn pnr_histogram_multiplicity(hist: *const PnrHistogram, out: *mut f64, cap: usize) -> PnrStatus {
    guard(|| match hist.as_ref() {
        Some(h) => {
            let v: Vec<f64> = h.hist.multiplicity_counts.iter().map(|&c| c as f64).collect();
            copy_out(&v, out, cap)
        }
        None => fail(PnrStatus::NullPointer, "histogram is null"),
    })
}

/// # Safety
/// `hist` must be null or come from a `pnr_histogram_*` constructor, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pnr_histogram_free(hist: *mut PnrHistogram) {
    if !hist.is_null() {
        drop(Box::from_raw(hist));
    }
}

/// Outcome of a click-model fit.
pub struct PnrFitResult {
    result: FitResult,
}

/// Fits `μ`, dark exponents and branch weights with efficiencies fixed at `eta`.
///
/// Dark exponents start at `nu` and may range over `[0, 10 nu]`.
///
/// # Safety
/// `hist` must come from a `pnr_histogram_*` constructor; `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn pnr_fit(
    hist: *const PnrHistogram,
    mu_max: f64,
    eta: f64,
    nu: f64,
    out: *mut *mut PnrFitResult,
) -> PnrStatus {
    guard(|| {
        let Some(h) = hist.as_ref() else {
            return fail(PnrStatus::NullPointer, "histogram is null");
        };
        let n = h.hist.detector_count;
        let cfg = FitConfig::new(ClickModelParams::uniform(n, (mu_max / 4.0).min(1.0), eta, nu), mu_max);
        match fit(&h.hist, &cfg) {
            Ok(result) => write(out, Box::into_raw(Box::new(PnrFitResult { result }))),
            Err(e) => from_core(e),
        }
    })
}

/// # Safety
/// `result` must come from [`pnr_fit`]; `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn pnr_fit_result_mu(result: *const PnrFitResult, out: *mut f64) -> PnrStatus {
    guard(|| match result.as_ref() {
        Some(r) => write(out, r.result.params.mu),
        None => fail(PnrStatus::NullPointer, "fit result is null"),
    })
}

/// # Safety
/// `result` must come from [`pnr_fit`]; `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn pnr_fit_result_chi_squared(result: *const PnrFitResult, out: *mut f64) -> PnrStatus {
    guard(|| match result.as_ref() {
        Some(r) => write(out, r.result.chi_squared),
        None => fail(PnrStatus::NullPointer, "fit result is null"),
    })
}

/// Writes 1 when the simplex met its tolerance, 0 otherwise.
///
/// # Safety
/// `result` must come from [`pnr_fit`]; `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn pnr_fit_result_converged(result: *const PnrFitResult, out: *mut i32) -> PnrStatus {
    guard(|| match result.as_ref() {
        Some(r) => write(out, i32::from(r.result.converged)),
        None => fail(PnrStatus::NullPointer, "fit result is null"),
    })
}

/// Writes the fitted `P_0..P_N`.
///
/// # Safety
/// `result` must come from [`pnr_fit`]; `out` must be valid for `cap` writes.
#[no_mangle]
pub unsafe extern "C" fn pnr_fit_result_multiplicity(result: *const PnrFitResult, out: *mut f64, cap: usize) -> PnrStatus {
    guard(|| match result.as_ref() {
        Some(r) => copy_out(&r.result.fitted_multiplicity, out, cap),
        None => fail(PnrStatus::NullPointer, "fit result is null"),
    })
}

/// # Safety
/// `result` must be null or come from [`pnr_fit`], and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pnr_fit_result_free(result: *mut PnrFitResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}
