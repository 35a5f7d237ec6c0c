//! C interface to the skorokhod solvers.
//!
//! Objects cross the boundary as opaque handles created by `sk_*_new` style
//! functions and released by the matching `sk_*_free`. Every fallible call
//! returns an [`SkStatus`]; the message of the last failure on the calling
//! thread is available from [`sk_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;

use skorokhod::cli::config::OperatorSpec;
use skorokhod::det_solver::{solve_prox, DetProblem, GenSolution};
use skorokhod::hspace::{HPath, HSpace, Point, TimeGrid, XNorm};
use skorokhod::monotone_ops::MonotoneOperator;
use skorokhod::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SkStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    NonConvergence = 4,
    OutOfDomain = 5,
    StepCondition = 6,
    Blowup = 7,
    NonCauchy = 8,
    NoContraction = 9,
    Config = 10,
    Io = 11,
    Panic = 12,
}

impl From<&Error> for SkStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::DimensionMismatch { .. } => SkStatus::DimensionMismatch,
            Error::InvalidParameter { .. } => SkStatus::InvalidArgument,
            Error::NonConvergence { .. } => SkStatus::NonConvergence,
            Error::OutOfDomain { .. } => SkStatus::OutOfDomain,
            Error::StepCondition(_) => SkStatus::StepCondition,
            Error::Blowup { .. } => SkStatus::Blowup,
            Error::NonCauchy { .. } => SkStatus::NonCauchy,
            Error::NoContraction { .. } => SkStatus::NoContraction,
            Error::Config { .. } => SkStatus::Config,
            Error::Io(_) => SkStatus::Io,
        }
    }
}

/// Weighted Euclidean space.
pub struct SkSpace {
    inner: HSpace,
}

/// Maximal monotone operator.
pub struct SkOperator {
    inner: MonotoneOperator,
}

/// Solution pair `(u, eta)` on a time grid.
pub struct SkSolution {
    inner: GenSolution,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: SkStatus, message: impl Into<String>) -> SkStatus {
    set_error(message.into());
    status
}

/// Runs `body`, turning errors and panics into status codes.
fn guard(body: impl FnOnce() -> Result<(), SkStatus>) -> SkStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => SkStatus::Ok,
        Ok(Err(status)) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(SkStatus::Panic, format!("internal panic: {msg}"))
        }
    }
}

fn lift(e: Error) -> SkStatus {
    let status = SkStatus::from(&e);
    fail(status, e.to_string())
}

unsafe fn slice<'a>(ptr: *const f64, len: usize, what: &str) -> Result<&'a [f64], SkStatus> {
    if ptr.is_null() {
        return Err(fail(SkStatus::NullPointer, format!("`{what}` is null")));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn slice_mut<'a>(ptr: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], SkStatus> {
    if ptr.is_null() {
        return Err(fail(SkStatus::NullPointer, format!("`{what}` is null")));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

unsafe fn handle<'a, T>(ptr: *const T, what: &str) -> Result<&'a T, SkStatus> {
    ptr.as_ref()
        .ok_or_else(|| fail(SkStatus::NullPointer, format!("`{what}` is null")))
}

unsafe fn text<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, SkStatus> {
    if ptr.is_null() {
        return Err(fail(SkStatus::NullPointer, format!("`{what}` is null")));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| fail(SkStatus::InvalidArgument, format!("`{what}` is not UTF-8")))
}

fn check_len(expected: usize, got: usize) -> Result<(), SkStatus> {
    if expected == got {
        Ok(())
    } else {
        Err(lift(Error::DimensionMismatch { expected, got }))
    }
}

/// Message of the last failed call on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sk_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sk_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a space of dimension `dim`; `weights` may be NULL for unit weights.
///
/// # Safety
/// `weights` is NULL or points to `dim` doubles; `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sk_space_new(dim: usize, weights: *const f64, out: *mut *mut SkSpace) -> SkStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(SkStatus::NullPointer, "`out` is null"));
        }
        let w = if weights.is_null() {
            vec![1.0; dim]
        } else {
            slice(weights, dim, "weights")?.to_vec()
        };
        let inner = HSpace::new(dim, w, XNorm::SameAsH, 1.0).map_err(lift)?;
        *out = Box::into_raw(Box::new(SkSpace { inner }));
        Ok(())
    })
}

/// # Safety
/// `space` is NULL or a handle from [`sk_space_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sk_space_free(space: *mut SkSpace) {
    if !space.is_null() {
        drop(Box::from_raw(space));
    }
}

/// Builds an operator from its JSON description, e.g.
/// `{"kind": "scalar-graph", "graph": "interval", "lo": 0, "hi": "inf"}`.
///
/// # Safety
/// `space` is a live handle, `json` a NUL-terminated string, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn sk_operator_from_json(
    space: *const SkSpace,
    json: *const c_char,
    out: *mut *mut SkOperator,
) -> SkStatus {
    guard(|| {
        let space = handle(space, "space")?;
        let json = text(json, "json")?;
        if out.is_null() {
            return Err(fail(SkStatus::NullPointer, "`out` is null"));
        }
        let spec: OperatorSpec = serde_json::from_str(json)
            .map_err(|e| fail(SkStatus::Config, format!("operator description: {e}")))?;
        let mut op = MonotoneOperator::new(spec.kind, &space.inner).map_err(lift)?;
        if let Some(alpha) = spec.alpha {
            op = op.with_alpha(alpha).map_err(lift)?;
        }
        if let Some(modulus) = spec.modulus {
            op = op.with_modulus(modulus).map_err(lift)?;
        }
        *out = Box::into_raw(Box::new(SkOperator { inner: op }));
        Ok(())
    })
}

/// # Safety
/// `op` is NULL or a handle from [`sk_operator_from_json`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sk_operator_free(op: *mut SkOperator) {
    if !op.is_null() {
        drop(Box::from_raw(op));
    }
}

/// Writes `(I + eps (A + alpha I))^{-1} x` to `out`; both arrays hold `len` doubles.
///
/// # Safety
/// Handles are live; `x` and `out` point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sk_operator_resolvent(
    op: *const SkOperator,
    space: *const SkSpace,
    eps: f64,
    x: *const f64,
    out: *mut f64,
    len: usize,
) -> SkStatus {
    guard(|| {
        let op = handle(op, "op")?;
        let space = handle(space, "space")?;
        let x = slice(x, len, "x")?;
        let out = slice_mut(out, len, "out")?;
        op.inner.resolvent_into(&space.inner, eps, x, out).map_err(lift)
    })
}

/// Writes the Yosida approximation `(x - J_eps x) / eps` to `out`.
///
/// # Safety
/// Handles are live; `x` and `out` point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sk_operator_yosida(
    op: *const SkOperator,
    space: *const SkSpace,
    eps: f64,
    x: *const f64,
    out: *mut f64,
    len: usize,
) -> SkStatus {
    guard(|| {
        let op = handle(op, "op")?;
        let space = handle(space, "space")?;
        let x = slice(x, len, "x")?;
        let out = slice_mut(out, len, "out")?;
        op.inner.yosida_into(&space.inner, eps, x, out).map_err(lift)
    })
}

/// Solves `du + A u dt ∋ f dt + dM` on `[0, horizon]` with `steps` proximal
/// steps. `forcing` is a constant vector of length `dim`; `noise` is NULL or
/// the values of `M` at the `steps + 1` nodes, node-major, starting at zero.
///
/// # Safety
/// Handles are live; arrays have the stated lengths; `out` is valid.
#[no_mangle]
pub unsafe extern "C" fn sk_solve_prox(
    space: *const SkSpace,
    op: *const SkOperator,
    u0: *const f64,
    forcing: *const f64,
    noise: *const f64,
    dim: usize,
    horizon: f64,
    steps: usize,
    out: *mut *mut SkSolution,
) -> SkStatus {
    guard(|| {
        let space = handle(space, "space")?;
        let op = handle(op, "op")?;
        check_len(space.inner.dim(), dim)?;
        if out.is_null() {
            return Err(fail(SkStatus::NullPointer, "`out` is null"));
        }
        let u0 = Point::from_column_slice(slice(u0, dim, "u0")?);
        let f = slice(forcing, dim, "forcing")?;
        let grid = Arc::new(TimeGrid::uniform(horizon, steps).map_err(lift)?);
        let m = if noise.is_null() {
            HPath::zeros(grid.clone(), dim)
        } else {
            let values = slice(noise, (steps + 1) * dim, "noise")?.to_vec();
            HPath::new(grid.clone(), dim, values).map_err(lift)?
        };
        let problem = DetProblem::new(
            space.inner.clone(),
            op.inner.clone(),
            u0,
            HPath::constant(grid, f),
            m,
        )
        .map_err(lift)?;
        let sol = solve_prox(&problem).map_err(lift)?;
        *out = Box::into_raw(Box::new(SkSolution { inner: sol }));
        Ok(())
    })
}

/// # Safety
/// `sol` is NULL or a handle from [`sk_solve_prox`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sk_solution_free(sol: *mut SkSolution) {
    if !sol.is_null() {
        drop(Box::from_raw(sol));
    }
}

/// Number of time nodes, or 0 for a NULL handle.
///
/// # Safety
/// `sol` is NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sk_solution_nodes(sol: *const SkSolution) -> usize {
    sol.as_ref().map_or(0, |s| s.inner.u.len())
}

/// # Safety
/// `sol` is NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sk_solution_dim(sol: *const SkSolution) -> usize {
    sol.as_ref().map_or(0, |s| s.inner.u.dim())
}

/// Copies the time nodes into `out`, which holds `len = nodes` doubles.
///
/// # Safety
/// `sol` is live and `out` points to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sk_solution_times(sol: *const SkSolution, out: *mut f64, len: usize) -> SkStatus {
    guard(|| {
        let sol = handle(sol, "sol")?;
        let times = sol.inner.u.times();
        check_len(times.len(), len)?;
        slice_mut(out, len, "out")?.copy_from_slice(times);
        Ok(())
    })
}

/// Copies `u`, node-major, into `out` (`len = nodes * dim`).
///
/// # Safety
/// `sol` is live and `out` points to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sk_solution_u(sol: *const SkSolution, out: *mut f64, len: usize) -> SkStatus {
    guard(|| {
        let sol = handle(sol, "sol")?;
        let data = sol.inner.u.data();
        check_len(data.len(), len)?;
        slice_mut(out, len, "out")?.copy_from_slice(data);
        Ok(())
    })
}

/// Copies `eta`, node-major, into `out` (`len = nodes * dim`).
///
/// # Safety
/// `sol` is live and `out` points to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sk_solution_eta(sol: *const SkSolution, out: *mut f64, len: usize) -> SkStatus {
    guard(|| {
        let sol = handle(sol, "sol")?;
        let data = sol.inner.eta.data();
        check_len(data.len(), len)?;
        slice_mut(out, len, "out")?.copy_from_slice(data);
        Ok(())
    })
}

/// Runs a scenario file and writes its artifacts to `out_dir` (NULL for the
/// scenario's own setting). `exit_code` receives the command-line exit status.
///
/// # Safety
/// `path` is a NUL-terminated string, `out_dir` NULL or one, `exit_code` valid.
#[no_mangle]
pub unsafe extern "C" fn sk_run_scenario(path: *const c_char, out_dir: *const c_char, exit_code: *mut c_int) -> SkStatus {
    guard(|| {
        let path = text(path, "path")?;
        let out = if out_dir.is_null() {
            None
        } else {
            Some(Path::new(text(out_dir, "out_dir")?))
        };
        if exit_code.is_null() {
            return Err(fail(SkStatus::NullPointer, "`exit_code` is null"));
        }
        let overrides = skorokhod::cli::Overrides::default();
        match skorokhod::cli::run_file(Path::new(path), &overrides, out) {
            Ok(report) => {
                *exit_code = report.exit_code();
                Ok(())
            }
            Err(e) => {
                *exit_code = skorokhod::cli::exit_code(&e);
                Err(lift(e))
            }
        }
    })
}
