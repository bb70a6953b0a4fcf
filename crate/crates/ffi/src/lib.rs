//! C ABI for the dcsurv library.
//!
//! The surface follows the usual opaque-handle pattern: constructors return
//! a status code and write a handle through an out-pointer, accessors read
//! through `const` handles, and every handle has a matching `_free`. Error
//! details are retrievable per thread via [`dcsurv_last_error`]. Status
//! codes mirror the CLI exit codes (2 config, 3 data, 4 integrity/privacy).
//!
//! The generated header lands in `include/dcsurv.h` at build time.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use dcsurv::data::Dataset;
use dcsurv::error::Error;
use dcsurv::matching::MatchConfig;
use dcsurv::metrics::MethodResult;
use dcsurv::pipeline::{self, ExperimentConfig};
use dcsurv::survival::SurvivalCurve;

/// Result of a dcsurv call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DcsurvStatus {
    Ok = 0,
    /// Internal failure (including caught panics).
    Internal = 1,
    ConfigError = 2,
    DataError = 3,
    /// Integrity or privacy violation.
    IntegrityError = 4,
    /// A required pointer argument was null.
    NullPointer = 5,
    /// A supplied buffer was too small.
    BufferTooSmall = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &Error) -> DcsurvStatus {
    match err.exit_code() {
        2 => DcsurvStatus::ConfigError,
        3 => DcsurvStatus::DataError,
        4 => DcsurvStatus::IntegrityError,
        _ => DcsurvStatus::Internal,
    }
}

fn guard<F: FnOnce() -> Result<DcsurvStatus, Error>>(f: F) -> DcsurvStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(status)) => status,
        Ok(Err(e)) => {
            set_error(&e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic");
            DcsurvStatus::Internal
        }
    }
}

unsafe fn cstr<'a>(ptr: *const c_char) -> Result<&'a str, Error> {
    if ptr.is_null() {
        return Err(Error::Config("null string argument".into()));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| Error::Config("argument is not valid UTF-8".into()))
}

/// A loaded or generated dataset.
pub struct DcsurvDataset {
    inner: Dataset,
}

/// A completed central analysis: scores, matched set, balance, curves.
pub struct DcsurvAnalysis {
    inner: MethodResult,
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dcsurv_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message of the most recent error on this thread. The pointer stays valid
/// until the next failing dcsurv call on the same thread.
#[no_mangle]
pub extern "C" fn dcsurv_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Generate the synthetic benchmark dataset from a JSON config
/// (`{"n":1000,"lambda":2.0,"shape":2.0,"gamma":-1.0,"seed":0}`; all fields
/// but `n` optional).
///
/// # Safety
/// `config_json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dcsurv_dataset_synthetic(
    config_json: *const c_char,
    out: *mut *mut DcsurvDataset,
) -> DcsurvStatus {
    if out.is_null() {
        return DcsurvStatus::NullPointer;
    }
    guard(|| {
        let text = cstr(config_json)?;
        let config: dcsurv::synth::SynthConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let dataset = dcsurv::synth::generate(&config)?;
        *out = Box::into_raw(Box::new(DcsurvDataset { inner: dataset }));
        Ok(DcsurvStatus::Ok)
    })
}

/// Load a dataset from a CSV file with a JSON schema (see the library docs
/// for the schema fields).
///
/// # Safety
/// Both strings must be NUL-terminated; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dcsurv_dataset_from_csv(
    path: *const c_char,
    schema_json: *const c_char,
    out: *mut *mut DcsurvDataset,
) -> DcsurvStatus {
    if out.is_null() {
        return DcsurvStatus::NullPointer;
    }
    guard(|| {
        let path = PathBuf::from(cstr(path)?);
        let schema: dcsurv::data::CsvSchema =
            serde_json::from_str(cstr(schema_json)?).map_err(|e| Error::Config(e.to_string()))?;
        let (dataset, _) = dcsurv::data::load_csv(&path, &schema)?;
        *out = Box::into_raw(Box::new(DcsurvDataset { inner: dataset }));
        Ok(DcsurvStatus::Ok)
    })
}

/// Number of samples, or 0 for a null handle.
///
/// # Safety
/// `dataset` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dcsurv_dataset_samples(dataset: *const DcsurvDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.inner.n())
}

/// Number of covariates, or 0 for a null handle.
///
/// # Safety
/// `dataset` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dcsurv_dataset_covariates(dataset: *const DcsurvDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.inner.m())
}

/// Release a dataset handle. Null is ignored.
///
/// # Safety
/// `dataset` must be a pointer previously returned by a dcsurv constructor
/// and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dcsurv_dataset_free(dataset: *mut DcsurvDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Run the central analysis (logistic scores on the raw covariates, caliper
/// matching, survival curves per arm).
///
/// # Safety
/// `dataset` must be a live handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dcsurv_central_analysis(
    dataset: *const DcsurvDataset,
    caliper_multiplier: f64,
    out: *mut *mut DcsurvAnalysis,
) -> DcsurvStatus {
    if out.is_null() || dataset.is_null() {
        return DcsurvStatus::NullPointer;
    }
    guard(|| {
        let dataset = &(*dataset).inner;
        let match_config = MatchConfig { caliper_multiplier, ..Default::default() };
        let result = pipeline::run_ca(dataset, &match_config)?;
        *out = Box::into_raw(Box::new(DcsurvAnalysis { inner: result }));
        Ok(DcsurvStatus::Ok)
    })
}

/// Matched sample size (treated + controls), or 0 for a null handle.
///
/// # Safety
/// `analysis` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dcsurv_analysis_matched_size(analysis: *const DcsurvAnalysis) -> usize {
    analysis.as_ref().map_or(0, |a| a.inner.sample_size)
}

/// Maximum absolute standardized mean difference on the matched sample, or
/// NaN for a null handle.
///
/// # Safety
/// `analysis` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dcsurv_analysis_masmd(analysis: *const DcsurvAnalysis) -> f64 {
    analysis.as_ref().map_or(f64::NAN, |a| a.inner.balance.masmd)
}

fn curve_of(analysis: &DcsurvAnalysis, treated: c_int) -> &SurvivalCurve {
    if treated != 0 {
        &analysis.inner.curves.0
    } else {
        &analysis.inner.curves.1
    }
}

/// Number of step points in the treated (`treated != 0`) or control curve.
///
/// # Safety
/// `analysis` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dcsurv_analysis_curve_len(
    analysis: *const DcsurvAnalysis,
    treated: c_int,
) -> usize {
    analysis.as_ref().map_or(0, |a| curve_of(a, treated).times.len())
}

/// Copy one arm's curve into caller-provided buffers of `capacity` entries.
///
/// # Safety
/// `times` and `survival` must point to writable arrays holding at least
/// `capacity` doubles each.
#[no_mangle]
pub unsafe extern "C" fn dcsurv_analysis_curve(
    analysis: *const DcsurvAnalysis,
    treated: c_int,
    times: *mut f64,
    survival: *mut f64,
    capacity: usize,
) -> DcsurvStatus {
    if analysis.is_null() || times.is_null() || survival.is_null() {
        return DcsurvStatus::NullPointer;
    }
    let curve = curve_of(&*analysis, treated);
    if curve.times.len() > capacity {
        set_error("curve buffer too small");
        return DcsurvStatus::BufferTooSmall;
    }
    for i in 0..curve.times.len() {
        *times.add(i) = curve.times[i];
        *survival.add(i) = curve.survival[i];
    }
    DcsurvStatus::Ok
}

/// Release an analysis handle. Null is ignored.
///
/// # Safety
/// `analysis` must be a pointer previously returned by
/// [`dcsurv_central_analysis`] and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dcsurv_analysis_free(analysis: *mut DcsurvAnalysis) {
    if !analysis.is_null() {
        drop(Box::from_raw(analysis));
    }
}

/// Kaplan-Meier estimate of `len` (time, event) observations. Writes up to
/// `capacity` step points and stores the true point count in `out_len`;
/// call with `capacity == 0` to query the required size.
///
/// # Safety
/// `times` and `events` must hold `len` readable entries; `out_times` and
/// `out_survival` must hold `capacity` writable doubles when `capacity > 0`;
/// `out_len` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dcsurv_kaplan_meier(
    times: *const f64,
    events: *const u8,
    len: usize,
    out_times: *mut f64,
    out_survival: *mut f64,
    capacity: usize,
    out_len: *mut usize,
) -> DcsurvStatus {
    if times.is_null() || events.is_null() || out_len.is_null() {
        return DcsurvStatus::NullPointer;
    }
    guard(|| {
        let times = std::slice::from_raw_parts(times, len);
        let events = std::slice::from_raw_parts(events, len);
        let subset: Vec<usize> = (0..len).collect();
        let curve =
            dcsurv::survival::kaplan_meier(times, events, &subset, dcsurv::survival::Arm::Treated)?;
        *out_len = curve.times.len();
        if capacity == 0 {
            return Ok(DcsurvStatus::Ok);
        }
        if out_times.is_null() || out_survival.is_null() {
            return Ok(DcsurvStatus::NullPointer);
        }
        if curve.times.len() > capacity {
            set_error("curve buffer too small");
            return Ok(DcsurvStatus::BufferTooSmall);
        }
        for i in 0..curve.times.len() {
            *out_times.add(i) = curve.times[i];
            *out_survival.add(i) = curve.survival[i];
        }
        Ok(DcsurvStatus::Ok)
    })
}

/// Run a repeated benchmark experiment from a JSON config file and write the
/// report files into `out_dir`. `workers == 0` uses all cores.
///
/// # Safety
/// Both strings must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn dcsurv_run_experiment(
    config_path: *const c_char,
    out_dir: *const c_char,
    workers: usize,
) -> DcsurvStatus {
    guard(|| {
        let config = ExperimentConfig::load(Path::new(cstr(config_path)?))?;
        let out_dir = PathBuf::from(cstr(out_dir)?);
        let report = pipeline::run_experiment(
            &config,
            if workers == 0 { None } else { Some(workers) },
        )?;
        pipeline::write_report_files(&report, &out_dir, false)?;
        if report.metadata.failed_repetitions > 0 {
            return Err(Error::Data(format!(
                "{} repetitions failed",
                report.metadata.failed_repetitions
            )));
        }
        Ok(DcsurvStatus::Ok)
    })
}
