//! C ABI over the `rdd` crate.
//!
//! Models and surrogates cross the boundary as opaque handles owned by the
//! caller and released with the matching `*_free`. Every fallible call
//! returns an [`RddStatus`]; on failure `rdd_last_error` describes it until
//! the next call on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use rdd::hull::{self, Environment, HullParams, Quadrature};
use rdd::model::DiffusionModel;
use rdd::pretrain::ancestral_sample;
use rdd::surrogate::TreeEnsemble;
use rdd::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RddStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Numerical = 5,
    Domain = 6,
    Panic = 7,
}

/// Opaque handle to a trained diffusion model.
pub struct RddModel(DiffusionModel);

/// Opaque handle to a boosted-tree surrogate.
pub struct RddSurrogate(TreeEnsemble);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> RddStatus {
    match e {
        Error::Config(_) | Error::Argument(_) | Error::Index { .. } => RddStatus::InvalidArgument,
        Error::Io { .. } => RddStatus::Io,
        Error::Parse { .. } | Error::Format(_) => RddStatus::Format,
        Error::Domain(_) | Error::InfeasibleHull(_) => RddStatus::Domain,
        _ => RddStatus::Numerical,
    }
}

fn guard(f: impl FnOnce() -> Result<(), RddStatus>) -> RddStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RddStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic".into());
            RddStatus::Panic
        }
    }
}

fn fail(e: Error) -> RddStatus {
    let s = status_of(&e);
    set_error(e.to_string());
    s
}

fn null(what: &str) -> RddStatus {
    set_error(format!("{what} is null"));
    RddStatus::NullPointer
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, RddStatus> {
    if p.is_null() {
        return Err(null("path"));
    }
    match CStr::from_ptr(p).to_str() {
        Ok(s) => Ok(PathBuf::from(s)),
        Err(_) => {
            set_error("path is not valid UTF-8".into());
            Err(RddStatus::InvalidArgument)
        }
    }
}

/// Message for the last failed call on this thread, or null. The pointer is
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn rdd_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `path` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rdd_model_load(path: *const c_char, out: *mut *mut RddModel) -> RddStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = path_arg(path)?;
        let model = DiffusionModel::load(&path).map_err(fail)?;
        *out = Box::into_raw(Box::new(RddModel(model)));
        Ok(())
    })
}

/// Design dimension of `model`, or 0 for null.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rdd_model_dim(model: *const RddModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.dim())
}

/// Draws `n` unguided designs into `out` (row-major, `n * dim` values).
///
/// # Safety
/// `model` must be a live handle and `out` must hold `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn rdd_model_sample(
    model: *const RddModel,
    n: usize,
    seed: u64,
    out: *mut f64,
    out_len: usize,
) -> RddStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let need = n * m.0.dim();
        if out_len < need {
            set_error(format!("output buffer holds {out_len} values, {need} needed"));
            return Err(RddStatus::InvalidArgument);
        }
        let x = ancestral_sample(&m.0, n, seed).map_err(fail)?;
        std::slice::from_raw_parts_mut(out, need).copy_from_slice(&x);
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rdd_model_free(model: *mut RddModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `path` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rdd_surrogate_load(path: *const c_char, out: *mut *mut RddSurrogate) -> RddStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = path_arg(path)?;
        let model = TreeEnsemble::load(&path).map_err(fail)?;
        *out = Box::into_raw(Box::new(RddSurrogate(model)));
        Ok(())
    })
}

/// Predicts `n_rows` rows of width `dim` from `x` into `out`.
///
/// # Safety
/// `x` must hold `n_rows * dim` doubles and `out` `n_rows` doubles.
#[no_mangle]
pub unsafe extern "C" fn rdd_surrogate_predict(
    surrogate: *const RddSurrogate,
    x: *const f64,
    n_rows: usize,
    dim: usize,
    out: *mut f64,
) -> RddStatus {
    guard(|| {
        let s = surrogate.as_ref().ok_or_else(|| null("surrogate"))?;
        if x.is_null() || out.is_null() {
            return Err(null("buffer"));
        }
        if dim != s.0.dim {
            set_error(format!("surrogate expects width {}, got {dim}", s.0.dim));
            return Err(RddStatus::InvalidArgument);
        }
        let rows = std::slice::from_raw_parts(x, n_rows * dim);
        let pred = s.0.predict_rows(rows).map_err(fail)?;
        std::slice::from_raw_parts_mut(out, n_rows).copy_from_slice(&pred);
        Ok(())
    })
}

/// # Safety
/// `surrogate` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rdd_surrogate_free(surrogate: *mut RddSurrogate) {
    if !surrogate.is_null() {
        drop(Box::from_raw(surrogate));
    }
}

/// Friction coefficient of the ITTC-style line at Reynolds number `re`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rdd_friction_coefficient(re: f64, out: *mut f64) -> RddStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = hull::friction_coefficient(re).map_err(fail)?;
        Ok(())
    })
}

/// Aggregate resistance (N) of the hull with six shape parameters `params`
/// scaled to length `loa`, with default fluid constants and quadrature.
///
/// # Safety
/// `params` must hold 6 doubles and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rdd_hull_resistance(params: *const f64, loa: f64, out: *mut f64) -> RddStatus {
    guard(|| {
        if params.is_null() || out.is_null() {
            return Err(null("buffer"));
        }
        let p = HullParams::from_slice(std::slice::from_raw_parts(params, 6)).map_err(fail)?;
        let r = hull::evaluate_params(&p, loa, &Environment::default(), &Quadrature::default()).map_err(fail)?;
        *out = r.aggregate;
        Ok(())
    })
}
