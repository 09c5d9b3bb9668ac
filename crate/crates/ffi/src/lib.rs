//! C interface to `tvspline`.
//!
//! Objects are opaque handles created by `tvs_*_new` or `tvs_reconstruct`
//! and released with the matching `*_free`. Every call returns a
//! [`TvsStatus`]; on failure [`tvs_last_error`] describes what went wrong
//! on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use tvspline::experiments::{self, SolverKind};
use tvspline::fourier::{MeasurementVector, PeriodicSpline};
use tvspline::Error;

use num_complex::Complex64;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TvsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// A result was produced but the solver hit its iteration limit.
    NotConverged = 3,
    Panic = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TvsSolver {
    Admm = 0,
    FrankWolfe = 1,
}

/// Mean and positive-frequency Fourier coefficients of a real signal.
pub struct TvsMeasurements(MeasurementVector);

/// A reconstructed periodic spline.
pub struct TvsSpline(PeriodicSpline);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let mut msg = msg.into().into_bytes();
    msg.retain(|&b| b != 0);
    let c = CString::new(msg).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn fail(status: TvsStatus, msg: impl Into<String>) -> TvsStatus {
    set_error(msg);
    status
}

fn from_core(e: Error) -> TvsStatus {
    fail(TvsStatus::InvalidArgument, e.to_string())
}

fn guard(f: impl FnOnce() -> TvsStatus) -> TvsStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(TvsStatus::Panic, format!("panic: {msg}"))
        }
    }
}

unsafe fn slice<'a>(p: *const f64, n: usize) -> &'a [f64] {
    if n == 0 {
        &[]
    } else {
        std::slice::from_raw_parts(p, n)
    }
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn tvs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Builds measurements from `cutoff` coefficients for `k = 1..=cutoff`.
///
/// # Safety
/// `re` and `im` must point to `cutoff` readable doubles; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn tvs_measurements_new(
    mean: f64,
    re: *const f64,
    im: *const f64,
    cutoff: usize,
    out: *mut *mut TvsMeasurements,
) -> TvsStatus {
    guard(|| {
        if out.is_null() || (cutoff > 0 && (re.is_null() || im.is_null())) {
            return fail(TvsStatus::NullPointer, "null pointer argument");
        }
        *out = ptr::null_mut();
        if cutoff == 0 {
            return fail(TvsStatus::InvalidArgument, "cutoff must be at least 1");
        }
        let (re, im) = (slice(re, cutoff), slice(im, cutoff));
        if !mean.is_finite() || re.iter().chain(im).any(|v| !v.is_finite()) {
            return fail(TvsStatus::InvalidArgument, "measurements must be finite");
        }
        let coeffs = re.iter().zip(im).map(|(&a, &b)| Complex64::new(a, b)).collect();
        *out = Box::into_raw(Box::new(TvsMeasurements(MeasurementVector::new(mean, coeffs))));
        TvsStatus::Ok
    })
}

/// # Safety
/// `m` must be null or a handle from [`tvs_measurements_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tvs_measurements_free(m: *mut TvsMeasurements) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Solves the regularized problem. `grid_points` is the ADMM grid size and,
/// for Frank-Wolfe, only sets the knot merge distance. On `NotConverged`
/// the last iterate is still returned in `out`.
///
/// # Safety
/// `y` must be a live measurement handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tvs_reconstruct(
    y: *const TvsMeasurements,
    order: u32,
    grid_points: usize,
    lambda: f64,
    solver: TvsSolver,
    out: *mut *mut TvsSpline,
) -> TvsStatus {
    guard(|| {
        if y.is_null() || out.is_null() {
            return fail(TvsStatus::NullPointer, "null pointer argument");
        }
        *out = ptr::null_mut();
        let kind = match solver {
            TvsSolver::Admm => SolverKind::Admm,
            TvsSolver::FrankWolfe => SolverKind::FrankWolfe,
        };
        let rec = match experiments::reconstruct(&(*y).0, order, grid_points, lambda, kind) {
            Ok(r) => r,
            Err(e) => return from_core(e),
        };
        *out = Box::into_raw(Box::new(TvsSpline(rec.spline)));
        if rec.converged {
            TvsStatus::Ok
        } else {
            fail(TvsStatus::NotConverged, format!("no convergence after {} iterations", rec.iterations))
        }
    })
}

/// # Safety
/// `s` must be null or a spline handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tvs_spline_free(s: *mut TvsSpline) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Evaluates the spline at `n` points.
///
/// # Safety
/// `s` must be live; `xs` and `values` must hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn tvs_spline_eval(s: *const TvsSpline, xs: *const f64, n: usize, values: *mut f64) -> TvsStatus {
    guard(|| {
        if s.is_null() || (n > 0 && (xs.is_null() || values.is_null())) {
            return fail(TvsStatus::NullPointer, "null pointer argument");
        }
        let xs = slice(xs, n);
        if xs.iter().any(|x| !x.is_finite()) {
            return fail(TvsStatus::InvalidArgument, "evaluation points must be finite");
        }
        for (i, v) in (*s).0.eval_many(xs).into_iter().enumerate() {
            *values.add(i) = v;
        }
        TvsStatus::Ok
    })
}

/// Writes mean, order and knot count of the spline. Any output may be null.
///
/// # Safety
/// `s` must be live.
#[no_mangle]
pub unsafe extern "C" fn tvs_spline_info(
    s: *const TvsSpline,
    mean: *mut f64,
    order: *mut u32,
    n_knots: *mut usize,
) -> TvsStatus {
    guard(|| {
        if s.is_null() {
            return fail(TvsStatus::NullPointer, "null pointer argument");
        }
        let s = &(*s).0;
        if !mean.is_null() {
            *mean = s.mean();
        }
        if !order.is_null() {
            *order = s.order();
        }
        if !n_knots.is_null() {
            *n_knots = s.n_knots();
        }
        TvsStatus::Ok
    })
}

/// Copies knot locations and jump amplitudes into buffers of `capacity`
/// entries. Fails with `InvalidArgument` if the buffers are too small;
/// query the count with [`tvs_spline_info`] first.
///
/// # Safety
/// `s` must be live; `knots` and `amplitudes` must hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn tvs_spline_knots(
    s: *const TvsSpline,
    knots: *mut f64,
    amplitudes: *mut f64,
    capacity: usize,
) -> TvsStatus {
    guard(|| {
        if s.is_null() || knots.is_null() || amplitudes.is_null() {
            return fail(TvsStatus::NullPointer, "null pointer argument");
        }
        let s = &(*s).0;
        if capacity < s.n_knots() {
            return fail(TvsStatus::InvalidArgument, format!("need room for {} knots", s.n_knots()));
        }
        for (i, (&x, &a)) in s.knots().iter().zip(s.amplitudes()).enumerate() {
            *knots.add(i) = x;
            *amplitudes.add(i) = a;
        }
        TvsStatus::Ok
    })
}
