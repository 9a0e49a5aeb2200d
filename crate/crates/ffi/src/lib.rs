//! C interface to `hypoell`.
//!
//! Every function returns a [`HypoellStatus`]; on failure a message is kept
//! per thread and can be read with [`hypoell_last_error`]. Matrices are dense
//! row-major `n x n` arrays. Handles are opaque and owned by the caller, who
//! releases them with the matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, c_void, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use hypoell::basis::{adapted_basis, BlockStructure};
use hypoell::exponents::qh_eval;
use hypoell::kalman::{gramian, hypoellipticity_report, HypoellipticityReport};
use hypoell::operator::ConstantOperatorSpec;
use hypoell::ou::{ou_apply, Datum, QuadConfig};
use hypoell::Error;
use nalgebra::DMatrix;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HypoellStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NotHypoelliptic = 3,
    Numerical = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

/// Constant-coefficient operator `Tr(Q D^2) + <Bx, D>`.
pub struct HypoellOperator {
    spec: ConstantOperatorSpec,
    structure: Option<BlockStructure>,
}

/// Result of the hypoellipticity analysis.
pub struct HypoellReport {
    report: HypoellipticityReport,
}

/// `f(y, n, user)`; must be safe to call from several threads.
pub type HypoellDatumFn = Option<unsafe extern "C" fn(y: *const f64, n: usize, user: *mut c_void) -> f64>;

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> HypoellStatus {
    match e {
        Error::NotHypoelliptic(_) => HypoellStatus::NotHypoelliptic,
        Error::InvalidArgument(_) | Error::DimensionMismatch(_) | Error::Config(_) | Error::EmptySamples => {
            HypoellStatus::InvalidArgument
        }
        _ => HypoellStatus::Numerical,
    }
}

fn guard<F: FnOnce() -> Result<(), (HypoellStatus, String)>>(f: F) -> HypoellStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            HypoellStatus::Ok
        }
        Ok(Err((s, msg))) => {
            set_error(&msg);
            s
        }
        Err(_) => {
            set_error("internal panic");
            HypoellStatus::Panic
        }
    }
}

fn lib<T>(r: hypoell::Result<T>) -> Result<T, (HypoellStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(name: &str) -> (HypoellStatus, String) {
    (HypoellStatus::NullPointer, format!("{name} is null"))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], (HypoellStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn square(p: *const f64, n: usize, name: &str) -> Result<DMatrix<f64>, (HypoellStatus, String)> {
    let s = slice(p, n * n, name)?;
    Ok(DMatrix::from_row_slice(n, n, s))
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn hypoell_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hypoell_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates an operator from row-major `Q` (symmetric PSD) and `B`.
///
/// # Safety
/// `q` and `b` must point to `n * n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hypoell_operator_new(
    n: usize,
    q: *const f64,
    b: *const f64,
    out: *mut *mut HypoellOperator,
) -> HypoellStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        if n == 0 {
            return Err((HypoellStatus::InvalidArgument, "n must be positive".into()));
        }
        let spec = lib(ConstantOperatorSpec::new(square(q, n, "q")?, square(b, n, "b")?))?;
        let structure = adapted_basis(&spec.q_const, &spec.drift_b).ok();
        *out = Box::into_raw(Box::new(HypoellOperator { spec, structure }));
        Ok(())
    })
}

/// # Safety
/// `op` must come from [`hypoell_operator_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hypoell_operator_free(op: *mut HypoellOperator) {
    if !op.is_null() {
        drop(Box::from_raw(op));
    }
}

/// Dimension `N` of the operator.
///
/// # Safety
/// `op` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hypoell_operator_dim(op: *const HypoellOperator, out: *mut usize) -> HypoellStatus {
    guard(|| {
        let op = op.as_ref().ok_or_else(|| null("op"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = op.spec.dim_n;
        Ok(())
    })
}

/// Block sizes `(p_0, ..., p_r)` of the adapted basis. Writes at most `cap`
/// entries and always sets `len`; returns `BufferTooSmall` when `cap < len`.
///
/// # Safety
/// `sizes` must have room for `cap` entries; `len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hypoell_operator_block_sizes(
    op: *const HypoellOperator,
    sizes: *mut usize,
    cap: usize,
    len: *mut usize,
) -> HypoellStatus {
    guard(|| {
        let op = op.as_ref().ok_or_else(|| null("op"))?;
        let len = len.as_mut().ok_or_else(|| null("len"))?;
        let s = op.structure.as_ref().ok_or_else(|| {
            (
                HypoellStatus::NotHypoelliptic,
                "operator has no adapted basis: the Kalman condition fails".to_string(),
            )
        })?;
        *len = s.sizes.len();
        if cap < s.sizes.len() {
            return Err((HypoellStatus::BufferTooSmall, format!("need {} entries", s.sizes.len())));
        }
        if sizes.is_null() {
            return Err(null("sizes"));
        }
        std::slice::from_raw_parts_mut(sizes, s.sizes.len()).copy_from_slice(&s.sizes);
        Ok(())
    })
}

/// Controllability Gramian `Q_t`, written row-major into `out` (`n * n`).
///
/// # Safety
/// `op` must be a live handle; `out` must have room for `n * n` doubles.
#[no_mangle]
pub unsafe extern "C" fn hypoell_gramian(op: *const HypoellOperator, t: f64, out: *mut f64) -> HypoellStatus {
    guard(|| {
        let op = op.as_ref().ok_or_else(|| null("op"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let g = lib(gramian(&op.spec.q_const, &op.spec.drift_b, t))?;
        let n = op.spec.dim_n;
        let dst = std::slice::from_raw_parts_mut(out, n * n);
        for i in 0..n {
            for j in 0..n {
                dst[i * n + j] = g[(i, j)];
            }
        }
        Ok(())
    })
}

/// Runs the five hypoellipticity characterizations.
///
/// # Safety
/// `op` must be a live handle, `probe_times` must hold `n_times` doubles and
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hypoell_analyze(
    op: *const HypoellOperator,
    probe_times: *const f64,
    n_times: usize,
    out: *mut *mut HypoellReport,
) -> HypoellStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let op = op.as_ref().ok_or_else(|| null("op"))?;
        let times = slice(probe_times, n_times, "probe_times")?;
        let report = lib(hypoellipticity_report(&op.spec, times))?;
        *out = Box::into_raw(Box::new(HypoellReport { report }));
        Ok(())
    })
}

/// # Safety
/// `r` must come from [`hypoell_analyze`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hypoell_report_free(r: *mut HypoellReport) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// `hypoelliptic` is set to 1 when the characterizations agree and hold.
///
/// # Safety
/// `r` must be a live report; the out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn hypoell_report_summary(
    r: *const HypoellReport,
    hypoelliptic: *mut i32,
    consistent: *mut i32,
    kalman_rank: *mut usize,
) -> HypoellStatus {
    guard(|| {
        let r = &r.as_ref().ok_or_else(|| null("report"))?.report;
        *hypoelliptic.as_mut().ok_or_else(|| null("hypoelliptic"))? = r.hypoelliptic() as i32;
        *consistent.as_mut().ok_or_else(|| null("consistent"))? = r.consistent as i32;
        *kalman_rank.as_mut().ok_or_else(|| null("kalman_rank"))? = r.rank;
        Ok(())
    })
}

/// `2 q_h(beta)`, an integer since `q_h` takes half-integer values.
///
/// # Safety
/// `beta` must hold `len` entries; `twice_out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hypoell_qh_twice(
    beta: *const u32,
    len: usize,
    h: u32,
    twice_out: *mut i64,
) -> HypoellStatus {
    guard(|| {
        if len == 0 {
            return Err((HypoellStatus::InvalidArgument, "beta must be nonempty".into()));
        }
        let b = slice(beta, len, "beta")?;
        let out = twice_out.as_mut().ok_or_else(|| null("twice_out"))?;
        *out = qh_eval(b, h).twice;
        Ok(())
    })
}

struct CDatum {
    f: unsafe extern "C" fn(*const f64, usize, *mut c_void) -> f64,
    user: *mut c_void,
}

// The caller guarantees the callback is thread-safe.
unsafe impl Send for CDatum {}
unsafe impl Sync for CDatum {}

/// `T(t) f (x)` with the exact Gaussian kernel; `f` is evaluated through the
/// callback.
///
/// # Safety
/// `op` must be a live handle, `x` must hold `N` doubles, `out` must be
/// writable, and `f` must be callable with `user` from any thread.
#[no_mangle]
pub unsafe extern "C" fn hypoell_ou_apply(
    op: *const HypoellOperator,
    t: f64,
    x: *const f64,
    f: HypoellDatumFn,
    user: *mut c_void,
    out: *mut f64,
) -> HypoellStatus {
    guard(|| {
        let op = op.as_ref().ok_or_else(|| null("op"))?;
        let f = f.ok_or_else(|| null("f"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let x = slice(x, op.spec.dim_n, "x")?;
        let cd = CDatum { f, user };
        let datum = Datum::general(move |y: &[f64]| {
            let c = &cd;
            (c.f)(y.as_ptr(), y.len(), c.user)
        });
        *out = lib(ou_apply(&op.spec, t, &datum, x, &QuadConfig::default()))?;
        Ok(())
    })
}
