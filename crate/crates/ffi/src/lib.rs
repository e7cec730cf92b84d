//! C ABI over the `mmwave-gamp` solver.
//!
//! Every fallible function returns an [`MgStatus`]; on failure a message is
//! available from [`mg_last_error_message`] on the same thread. Handles are
//! opaque and must be released with their matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use mmwave_gamp::em::{run_em_gamp_laplace, EmConfig};
use mmwave_gamp::laplace::{posterior_stats, LaplacePrior};
use mmwave_gamp::operator::build_real_lifted_operator;
use mmwave_gamp::{special, Error, GampConfig, LinearOperator};
use nalgebra::DMatrix;
use num_complex::Complex64;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MgStatus {
    Ok = 0,
    NullPointer = 1,
    Shape = 2,
    Domain = 3,
    Diverged = 4,
    Singular = 5,
    Numerical = 6,
    DegenerateChannel = 7,
    Config = 8,
    Io = 9,
    Panic = 10,
}

/// Summary of an EM-GAMP run.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct MgRunInfo {
    pub iterations: usize,
    /// 1 when the stopping rule fired before the iteration cap.
    pub converged: i32,
    pub b_hat: f64,
    pub noise_var: f64,
}

/// Opaque linear operator.
pub struct MgOperator {
    inner: LinearOperator,
}

/// Opaque solver settings.
pub struct MgSolver {
    gamp: GampConfig,
    em: EmConfig,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> MgStatus {
    match err {
        Error::Shape { .. } => MgStatus::Shape,
        Error::Domain(_) => MgStatus::Domain,
        Error::Diverged { .. } => MgStatus::Diverged,
        Error::Singular(_) => MgStatus::Singular,
        Error::Numerical(_) => MgStatus::Numerical,
        Error::DegenerateChannel(_) => MgStatus::DegenerateChannel,
        Error::Config { .. } => MgStatus::Config,
        Error::Io { .. } => MgStatus::Io,
        _ => MgStatus::Numerical,
    }
}

enum Fail {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard<F: FnOnce() -> Result<(), Fail>>(f: F) -> MgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MgStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_last_error(format!("null pointer: {what}"));
            MgStatus::NullPointer
        }
        Ok(Err(Fail::Lib(e))) => {
            set_last_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_last_error("internal panic".into());
            MgStatus::Panic
        }
    }
}

unsafe fn input<'a>(p: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn output<'a>(p: *mut f64, len: usize, what: &'static str) -> Result<&'a mut [f64], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<(), Fail> {
    if expected != actual {
        return Err(Fail::Lib(Error::Shape {
            context,
            expected,
            actual,
        }));
    }
    Ok(())
}

/// Message for the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn mg_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// NUL-terminated library version.
#[no_mangle]
pub extern "C" fn mg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// `exp(x²)·erfc(x)`.
#[no_mangle]
pub extern "C" fn mg_erfcx(x: f64) -> f64 {
    special::erfcx(x)
}

/// Posterior mean, variance and mean absolute value of `x ~ Laplace(b)`
/// observed as `r = x + N(0, mu_r)`. Any output pointer may be null.
///
/// # Safety
/// Non-null output pointers must be valid for a write of one `double`.
#[no_mangle]
pub unsafe extern "C" fn mg_laplace_posterior(
    r: f64,
    mu_r: f64,
    b: f64,
    mean: *mut f64,
    variance: *mut f64,
    abs_mean: *mut f64,
) -> MgStatus {
    guard(|| {
        let s = posterior_stats(r, mu_r, LaplacePrior::new(b)?)?;
        for (p, v) in [
            (mean, s.mean),
            (variance, s.variance),
            (abs_mean, s.abs_mean),
        ] {
            if !p.is_null() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Real-lifted operator for complex pilots `B` (`mt × k`, column-major, split
/// into real and imaginary planes) and `mr` receive antennas. Rows:
/// `2·mr·k`, columns: `2·mr·mt`.
///
/// # Safety
/// `pilot_re` and `pilot_im` must point to `mt·k` doubles; `out` must be a
/// valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn mg_operator_new_lifted(
    mt: usize,
    k: usize,
    mr: usize,
    pilot_re: *const f64,
    pilot_im: *const f64,
    out: *mut *mut MgOperator,
) -> MgStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let re = input(pilot_re, mt * k, "pilot_re")?;
        let im = input(pilot_im, mt * k, "pilot_im")?;
        let pilots = nalgebra_from(mt, k, re, im);
        let op = build_real_lifted_operator(&pilots, mr)?;
        *out = Box::into_raw(Box::new(MgOperator { inner: op }));
        Ok(())
    })
}

fn nalgebra_from(rows: usize, cols: usize, re: &[f64], im: &[f64]) -> DMatrix<Complex64> {
    DMatrix::from_iterator(
        rows,
        cols,
        re.iter().zip(im).map(|(&a, &b)| Complex64::new(a, b)),
    )
}

/// Dense real operator from a column-major `rows × cols` array.
///
/// # Safety
/// `data` must point to `rows·cols` doubles; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mg_operator_new_dense(
    rows: usize,
    cols: usize,
    data: *const f64,
    out: *mut *mut MgOperator,
) -> MgStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let d = input(data, rows * cols, "data")?;
        let op = LinearOperator::dense(DMatrix::from_column_slice(rows, cols, d));
        *out = Box::into_raw(Box::new(MgOperator { inner: op }));
        Ok(())
    })
}

/// # Safety
/// `op` must be null or a handle from an `mg_operator_new_*` call.
#[no_mangle]
pub unsafe extern "C" fn mg_operator_free(op: *mut MgOperator) {
    if !op.is_null() {
        drop(Box::from_raw(op));
    }
}

/// # Safety
/// `op` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn mg_operator_rows(op: *const MgOperator) -> usize {
    op.as_ref().map_or(0, |o| o.inner.rows())
}

/// # Safety
/// `op` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn mg_operator_cols(op: *const MgOperator) -> usize {
    op.as_ref().map_or(0, |o| o.inner.cols())
}

/// `y = A x`.
///
/// # Safety
/// `x` must hold `x_len` doubles and `y` must have room for `y_len`.
#[no_mangle]
pub unsafe extern "C" fn mg_operator_apply(
    op: *const MgOperator,
    x: *const f64,
    x_len: usize,
    y: *mut f64,
    y_len: usize,
) -> MgStatus {
    guard(|| {
        let op = op.as_ref().ok_or(Fail::Null("op"))?;
        let x = input(x, x_len, "x")?;
        let y = output(y, y_len, "y")?;
        op.inner.apply_into(x, y)?;
        Ok(())
    })
}

/// `x = Aᵀ y`.
///
/// # Safety
/// `y` must hold `y_len` doubles and `x` must have room for `x_len`.
#[no_mangle]
pub unsafe extern "C" fn mg_operator_apply_adjoint(
    op: *const MgOperator,
    y: *const f64,
    y_len: usize,
    x: *mut f64,
    x_len: usize,
) -> MgStatus {
    guard(|| {
        let op = op.as_ref().ok_or(Fail::Null("op"))?;
        let y = input(y, y_len, "y")?;
        let x = output(x, x_len, "x")?;
        op.inner.apply_adjoint_into(y, x)?;
        Ok(())
    })
}

/// Solver with default settings (tolerance 1e-6, 50 iterations, no damping,
/// one EM step per iteration).
///
/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn mg_solver_new(out: *mut *mut MgSolver) -> MgStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        *out = Box::into_raw(Box::new(MgSolver {
            gamp: GampConfig::default(),
            em: EmConfig::default(),
        }));
        Ok(())
    })
}

/// # Safety
/// `solver` must be null or a handle from [`mg_solver_new`].
#[no_mangle]
pub unsafe extern "C" fn mg_solver_free(solver: *mut MgSolver) {
    if !solver.is_null() {
        drop(Box::from_raw(solver));
    }
}

/// Sets the GAMP stopping tolerance, iteration cap and damping factor.
///
/// # Safety
/// `solver` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn mg_solver_set_gamp(
    solver: *mut MgSolver,
    tolerance: f64,
    max_iters: usize,
    damping: f64,
) -> MgStatus {
    guard(|| {
        let s = solver.as_mut().ok_or(Fail::Null("solver"))?;
        let cfg = GampConfig {
            tolerance,
            max_iters,
            damping,
            ..s.gamp
        };
        cfg.validate()?;
        s.gamp = cfg;
        Ok(())
    })
}

/// Sets the EM tolerance, inner iteration count, initial SNR guess (linear)
/// and initial Laplace scale.
///
/// # Safety
/// `solver` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn mg_solver_set_em(
    solver: *mut MgSolver,
    tolerance: f64,
    max_inner_iters: usize,
    snr0: f64,
    b0: f64,
) -> MgStatus {
    guard(|| {
        let s = solver.as_mut().ok_or(Fail::Null("solver"))?;
        let cfg = EmConfig {
            tolerance,
            max_inner_iters,
            snr0,
            b0,
        };
        cfg.validate()?;
        s.em = cfg;
        Ok(())
    })
}

/// EM-GAMP with a Laplacian prior. Writes the posterior mean into `x_hat`
/// and, when `info` is non-null, a run summary.
///
/// # Safety
/// `y` must hold `y_len` doubles, `x_hat` must have room for `x_len`, and
/// `info` must be null or valid for one write.
#[no_mangle]
pub unsafe extern "C" fn mg_solver_run_laplace(
    solver: *const MgSolver,
    op: *const MgOperator,
    y: *const f64,
    y_len: usize,
    x_hat: *mut f64,
    x_len: usize,
    info: *mut MgRunInfo,
) -> MgStatus {
    guard(|| {
        let s = solver.as_ref().ok_or(Fail::Null("solver"))?;
        let op = op.as_ref().ok_or(Fail::Null("op"))?;
        let y = input(y, y_len, "y")?;
        let x = output(x_hat, x_len, "x_hat")?;
        check_len("x_hat", op.inner.cols(), x.len())?;
        let (res, em) = run_em_gamp_laplace(&op.inner, y, &s.gamp, &s.em)?;
        x.copy_from_slice(&res.x_hat);
        if let Some(info) = info.as_mut() {
            *info = MgRunInfo {
                iterations: res.iterations,
                converged: i32::from(res.converged),
                b_hat: em.b,
                noise_var: em.noise_var,
            };
        }
        Ok(())
    })
}
