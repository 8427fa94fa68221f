// Copyright 2026 The bangoff Contributors
// SPDX-License-Identifier: Apache-2.0

//! C ABI over the `bangoff` library.
//!
//! Systems and QSL reports are opaque heap handles released with their
//! `*_free` function. Every fallible call returns a [`BangoffStatus`]; on
//! failure a message is kept per thread and read with
//! [`bangoff_last_error_message`].

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use bangoff::controls::BangOffType;
use bangoff::linalg::{StateVector, C64};
use bangoff::model::{analytic_case1, load_system, three_level, two_level, ControlSystem};
use bangoff::objective::{bures_from_infidelity, BangOffEvaluator};
use bangoff::qsl::{estimate_qsl, QslConfig, QslReport, SearchConfig};
use bangoff::Error;

/// Status codes; values 1–3 match the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BangoffStatus {
    Ok = 0,
    InvalidInput = 1,
    ResourceLimit = 2,
    NoConvergence = 3,
    NumericalFailure = 4,
    OutOfRegime = 5,
    ParseError = 6,
    NullPointer = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

/// Opaque system handle.
pub struct BangoffSystem {
    inner: ControlSystem,
    ev: BangOffEvaluator,
}

/// Opaque QSL report handle.
pub struct BangoffQslReport {
    inner: QslReport,
    witness_type: CString,
}

/// Closed-form one-switch optimum of the two-level `|0> -> |1>` transfer.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct BangoffCase1 {
    pub t1: f64,
    pub t2: f64,
    pub t_qsl: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(err: &Error) -> BangoffStatus {
    match err {
        Error::InvalidInput(_) | Error::Io(_) => BangoffStatus::InvalidInput,
        Error::ResourceLimit(_) => BangoffStatus::ResourceLimit,
        Error::Bracketing(_) => BangoffStatus::NoConvergence,
        Error::NumericalFailure(_) => BangoffStatus::NumericalFailure,
        Error::OutOfRegime(_) => BangoffStatus::OutOfRegime,
        Error::Parse(_) => BangoffStatus::ParseError,
    }
}

/// Runs `f`, translating errors and panics into status codes.
fn guard<F>(f: F) -> BangoffStatus
where
    F: FnOnce() -> Result<(), (BangoffStatus, String)>,
{
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BangoffStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            BangoffStatus::Panic
        }
    }
}

fn lib<T>(r: bangoff::Result<T>) -> Result<T, (BangoffStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (BangoffStatus, String) {
    (BangoffStatus::NullPointer, format!("{what} is null"))
}

unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, (BangoffStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn as_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (BangoffStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (BangoffStatus::InvalidInput, format!("{what} is not UTF-8")))
}

unsafe fn as_slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], (BangoffStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

fn wrap(sys: ControlSystem) -> Result<*mut BangoffSystem, (BangoffStatus, String)> {
    let ev = lib(BangOffEvaluator::new(&sys))?;
    Ok(Box::into_raw(Box::new(BangoffSystem { inner: sys, ev })))
}

/// Message of the last failed call on this thread, or NULL. Valid until
/// the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn bangoff_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn bangoff_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Two-level system `H = -E sz + u sx`, `|u| <= M`, from `|0>` to the
/// target with amplitudes `re[k] + i im[k]`, `k = 0, 1`.
#[no_mangle]
pub unsafe extern "C" fn bangoff_system_two_level(
    energy: f64,
    bound: f64,
    target_re: *const f64,
    target_im: *const f64,
    out: *mut *mut BangoffSystem,
) -> BangoffStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let re = as_slice(target_re, 2, "target_re")?;
        let im = as_slice(target_im, 2, "target_im")?;
        let target = lib(StateVector::new(vec![C64::new(re[0], im[0]), C64::new(re[1], im[1])]))?;
        *out = wrap(lib(two_level(energy, bound, target))?)?;
        Ok(())
    })
}

/// Three-level ladder from `|1>` to `|3>`.
#[no_mangle]
pub unsafe extern "C" fn bangoff_system_three_level(
    energy: f64,
    mu1: f64,
    mu2: f64,
    bound: f64,
    out: *mut *mut BangoffSystem,
) -> BangoffStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = wrap(lib(three_level(energy, mu1, mu2, bound))?)?;
        Ok(())
    })
}

/// System from the text of a TOML system file.
#[no_mangle]
pub unsafe extern "C" fn bangoff_system_from_toml(text: *const c_char, out: *mut *mut BangoffSystem) -> BangoffStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let text = as_str(text, "text")?;
        *out = wrap(lib(load_system(text))?)?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn bangoff_system_free(sys: *mut BangoffSystem) {
    if !sys.is_null() {
        drop(Box::from_raw(sys));
    }
}

/// Hilbert-space dimension, or 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn bangoff_system_dim(sys: *const BangoffSystem) -> usize {
    sys.as_ref().map_or(0, |s| s.inner.dim())
}

/// Control bound `M`, or NaN for NULL.
#[no_mangle]
pub unsafe extern "C" fn bangoff_system_bound(sys: *const BangoffSystem) -> f64 {
    sys.as_ref().map_or(f64::NAN, |s| s.inner.bound())
}

unsafe fn bangoff_eval(
    sys: *const BangoffSystem,
    kind: *const c_char,
    durations: *const f64,
    n: usize,
) -> Result<f64, (BangoffStatus, String)> {
    let s = as_ref(sys, "sys")?;
    let kind: BangOffType = lib(as_str(kind, "type")?.parse())?;
    let d = as_slice(durations, n, "durations")?;
    if d.len() != kind.len() {
        return Err((
            BangoffStatus::InvalidInput,
            format!("type {kind} needs {} durations, got {}", kind.len(), d.len()),
        ));
    }
    if d.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err((BangoffStatus::InvalidInput, "durations must be finite and non-negative".into()));
    }
    Ok(s.ev.infidelity(&kind, d))
}

/// Fidelity of the bang-off control `type` (e.g. "P0N") with `n` durations.
#[no_mangle]
pub unsafe extern "C" fn bangoff_fidelity(
    sys: *const BangoffSystem,
    kind: *const c_char,
    durations: *const f64,
    n: usize,
    out: *mut f64,
) -> BangoffStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = 1.0 - bangoff_eval(sys, kind, durations, n)?;
        Ok(())
    })
}

/// `1 - F`, computed without cancellation.
#[no_mangle]
pub unsafe extern "C" fn bangoff_infidelity(
    sys: *const BangoffSystem,
    kind: *const c_char,
    durations: *const f64,
    n: usize,
    out: *mut f64,
) -> BangoffStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = bangoff_eval(sys, kind, durations, n)?;
        Ok(())
    })
}

/// Bures distance from an infidelity in `[0, 1]`.
#[no_mangle]
pub unsafe extern "C" fn bangoff_bures(infidelity: f64, out: *mut f64) -> BangoffStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if !(0.0..=1.0).contains(&infidelity) {
            return Err((BangoffStatus::InvalidInput, format!("infidelity {infidelity} outside [0, 1]")));
        }
        *out = bures_from_infidelity(infidelity);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn bangoff_analytic_case1(energy: f64, bound: f64, out: *mut BangoffCase1) -> BangoffStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let a = lib(analytic_case1(energy, bound))?;
        *out = BangoffCase1 {
            t1: a.t1,
            t2: a.t2,
            t_qsl: a.t_qsl,
        };
        Ok(())
    })
}

/// Runs the QSL search with default budgets. A report is produced even when
/// the stopping rule did not fire; check [`bangoff_qsl_converged`].
#[no_mangle]
pub unsafe extern "C" fn bangoff_qsl_estimate(
    sys: *const BangoffSystem,
    delta: f64,
    ns_max: usize,
    seed: u64,
    out: *mut *mut BangoffQslReport,
) -> BangoffStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let s = as_ref(sys, "sys")?;
        let config = QslConfig {
            delta,
            ns_max,
            search: SearchConfig {
                seed,
                ..SearchConfig::default()
            },
            ..QslConfig::default()
        };
        let report = lib(estimate_qsl(&s.inner, &config))?;
        let witness_type = report
            .optimal_types
            .first()
            .map(|k| CString::new(k.to_string()).unwrap_or_default())
            .unwrap_or_default();
        *out = Box::into_raw(Box::new(BangoffQslReport {
            inner: report,
            witness_type,
        }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn bangoff_qsl_report_free(report: *mut BangoffQslReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// 1 when the stopping rule fired, 0 otherwise (or for NULL).
#[no_mangle]
pub unsafe extern "C" fn bangoff_qsl_converged(report: *const BangoffQslReport) -> i32 {
    report.as_ref().map_or(0, |r| r.inner.converged as i32)
}

/// QSL estimate; `BANGOFF_STATUS_NO_CONVERGENCE` when there is none.
#[no_mangle]
pub unsafe extern "C" fn bangoff_qsl_value(report: *const BangoffQslReport, out: *mut f64) -> BangoffStatus {
    guard(|| {
        let r = as_ref(report, "report")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = r
            .inner
            .qsl_estimate
            .ok_or((BangoffStatus::NoConvergence, "no QSL estimate".to_string()))?;
        Ok(())
    })
}

/// Switch count at which the estimate stabilised.
#[no_mangle]
pub unsafe extern "C" fn bangoff_qsl_ns_star(report: *const BangoffQslReport, out: *mut usize) -> BangoffStatus {
    guard(|| {
        let r = as_ref(report, "report")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = r
            .inner
            .ns_star
            .ok_or((BangoffStatus::NoConvergence, "no QSL estimate".to_string()))?;
        Ok(())
    })
}

/// First optimal type word; owned by the report. NULL when there is none.
#[no_mangle]
pub unsafe extern "C" fn bangoff_qsl_witness_type(report: *const BangoffQslReport) -> *const c_char {
    match report.as_ref() {
        Some(r) if !r.witness_type.as_bytes().is_empty() => r.witness_type.as_ptr(),
        _ => ptr::null(),
    }
}

/// Copies the durations of the first optimal control into `buf`. `len`
/// receives the number of durations even when `cap` is too small.
#[no_mangle]
pub unsafe extern "C" fn bangoff_qsl_witness_durations(
    report: *const BangoffQslReport,
    buf: *mut f64,
    cap: usize,
    len: *mut usize,
) -> BangoffStatus {
    guard(|| {
        let r = as_ref(report, "report")?;
        if len.is_null() {
            return Err(null("len"));
        }
        let d = r
            .inner
            .optimal_durations
            .first()
            .ok_or((BangoffStatus::NoConvergence, "no witness".to_string()))?;
        *len = d.len();
        if cap < d.len() {
            return Err((BangoffStatus::BufferTooSmall, format!("need {} slots, got {cap}", d.len())));
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        ptr::copy_nonoverlapping(d.as_ptr(), buf, d.len());
        Ok(())
    })
}
