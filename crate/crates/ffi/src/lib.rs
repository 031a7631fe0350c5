//! C interface to `vora-core`.
//!
//! Every function returns a [`VoraStatus`]; on failure the message is kept per
//! thread and can be read with [`vora_last_error_message`]. Objects are opaque
//! handles created by `*_new`/`vora_optimize_*` and released by `*_free`.
//!
//! Sensor matrices are passed row-major, `n` rows (wavelengths) by 3 columns.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nalgebra::{DMatrix, DVector};
use vora_core::dataio::bundled;
use vora_core::luther::{luther_filter, LutherOptions};
use vora_core::optimizer::{
    default_initial_coefficients, default_initial_filter, gradient_ascent_unconstrained,
    projected_gradient_ascent, AscentConfig, AscentStatus, BoxBounds,
};
use vora_core::spectral::{cosine_basis, SensorSet, SpectralGrid};
use vora_core::vora::{filtered_vora_value, vora_gradient_f, vora_value};
use vora_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VoraStatus {
    Ok = 0,
    InvalidArgument = 1,
    NullPointer = 2,
    GridMismatch = 3,
    Singular = 4,
    InvalidFilter = 5,
    ProjectionFailure = 6,
    DataError = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VoraAscentStatus {
    Converged = 0,
    IterationCap = 1,
    Stalled = 2,
}

impl From<AscentStatus> for VoraAscentStatus {
    fn from(s: AscentStatus) -> Self {
        match s {
            AscentStatus::Converged => VoraAscentStatus::Converged,
            AscentStatus::IterationCap => VoraAscentStatus::IterationCap,
            AscentStatus::Stalled => VoraAscentStatus::Stalled,
        }
    }
}

/// Gradient ascent settings; obtain defaults from [`vora_ascent_config_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoraAscentConfig {
    pub eta: f64,
    pub max_iters: usize,
    pub armijo_c: f64,
    pub backtrack_beta: f64,
    pub t0: f64,
    pub f_floor: f64,
}

impl From<VoraAscentConfig> for AscentConfig {
    fn from(c: VoraAscentConfig) -> Self {
        AscentConfig {
            eta: c.eta,
            max_iters: c.max_iters,
            armijo_c: c.armijo_c,
            backtrack_beta: c.backtrack_beta,
            t0: c.t0,
            f_floor: c.f_floor,
        }
    }
}

impl From<AscentConfig> for VoraAscentConfig {
    fn from(c: AscentConfig) -> Self {
        VoraAscentConfig {
            eta: c.eta,
            max_iters: c.max_iters,
            armijo_c: c.armijo_c,
            backtrack_beta: c.backtrack_beta,
            t0: c.t0,
            f_floor: c.f_floor,
        }
    }
}

/// Three spectral sensitivity curves on a uniform grid.
pub struct VoraSensorSet {
    inner: SensorSet,
}

/// A solved filter and its run statistics.
pub struct VoraResult {
    filter: Vec<f64>,
    initial_value: f64,
    final_value: f64,
    iterations: usize,
    status: VoraAscentStatus,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(err: &Error) -> VoraStatus {
    match err {
        Error::InvalidArgument(_) => VoraStatus::InvalidArgument,
        Error::GridMismatch(_) | Error::OutOfRange { .. } => VoraStatus::GridMismatch,
        Error::Singular { .. } => VoraStatus::Singular,
        Error::InvalidFilter { .. } | Error::NearSingularFilter { .. } => VoraStatus::InvalidFilter,
        Error::ProjectionFailure { .. } => VoraStatus::ProjectionFailure,
        Error::Parse { .. } | Error::Io { .. } => VoraStatus::DataError,
    }
}

enum Failure {
    Null(&'static str),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> VoraStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => VoraStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer passed for `{what}`"));
            VoraStatus::NullPointer
        }
        Ok(Err(Failure::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".to_string());
            VoraStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &'static str) -> Result<&'a mut [f64], Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn config_or_default(config: *const VoraAscentConfig) -> AscentConfig {
    config.as_ref().map(|c| (*c).into()).unwrap_or_default()
}

fn check_len(expected: usize, got: usize, what: &str) -> Result<(), Failure> {
    if expected != got {
        return Err(Error::GridMismatch(format!("{what} has {got} samples, grid has {expected}")).into());
    }
    Ok(())
}

/// Message of the last failed call on this thread, or NULL. Valid until the next call.
#[no_mangle]
pub extern "C" fn vora_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub extern "C" fn vora_ascent_config_default() -> VoraAscentConfig {
    AscentConfig::default().into()
}

/// Creates a sensor set on the grid `start, start + step, ...` with `n` samples.
///
/// # Safety
/// `values` must point to `3 * n` doubles; `label` must be NULL or a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn vora_sensor_set_new(
    start: f64,
    step: f64,
    n: usize,
    values: *const f64,
    label: *const c_char,
    out: *mut *mut VoraSensorSet,
) -> VoraStatus {
    guard(|| {
        if n < 2 {
            return Err(Error::InvalidArgument("a grid needs at least 2 samples".into()).into());
        }
        let data = slice(values, 3 * n, "values")?;
        let label = if label.is_null() {
            "sensor".to_string()
        } else {
            CStr::from_ptr(label).to_string_lossy().into_owned()
        };
        let grid = SpectralGrid::new(start, start + step * (n - 1) as f64, step)?;
        let matrix = DMatrix::from_row_slice(n, 3, data);
        store(out, VoraSensorSet {
            inner: SensorSet::new(grid, matrix, label)?,
        })
    })
}

/// CIE 1931 2° color matching functions on 400–700 nm at 10 nm.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vora_sensor_set_cie1931(out: *mut *mut VoraSensorSet) -> VoraStatus {
    guard(|| {
        store(out, VoraSensorSet {
            inner: bundled::cie1931(),
        })
    })
}

/// One of the bundled camera sensitivity sets, by label.
///
/// # Safety
/// `label` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vora_sensor_set_bundled_camera(
    label: *const c_char,
    out: *mut *mut VoraSensorSet,
) -> VoraStatus {
    guard(|| {
        let label = deref(label, "label")?;
        let label = CStr::from_ptr(label).to_string_lossy();
        let camera = bundled::camera(&label)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown bundled camera `{label}`")))?;
        store(out, VoraSensorSet { inner: camera })
    })
}

/// # Safety
/// `set` must be NULL or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn vora_sensor_set_free(set: *mut VoraSensorSet) {
    if !set.is_null() {
        drop(Box::from_raw(set));
    }
}

/// Number of wavelength samples, or 0 for NULL.
///
/// # Safety
/// `set` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vora_sensor_set_len(set: *const VoraSensorSet) -> usize {
    set.as_ref().map_or(0, |s| s.inner.grid().len())
}

/// Vora-Value of the unfiltered camera `q` against observer `x`.
///
/// # Safety
/// Handles must be live and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn vora_value_of(q: *const VoraSensorSet, x: *const VoraSensorSet, out: *mut f64) -> VoraStatus {
    guard(|| {
        let (q, x) = (deref(q, "q")?, deref(x, "x")?);
        let out = out.as_mut().ok_or(Failure::Null("out"))?;
        *out = vora_value(&q.inner, &x.inner)?.value();
        Ok(())
    })
}

/// Vora-Value of camera `q` behind `filter` (`n` samples).
///
/// # Safety
/// `filter` must point to `n` doubles; handles must be live and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn vora_filtered_value(
    filter: *const f64,
    n: usize,
    q: *const VoraSensorSet,
    x: *const VoraSensorSet,
    out: *mut f64,
) -> VoraStatus {
    guard(|| {
        let (q, x) = (deref(q, "q")?, deref(x, "x")?);
        let f = slice(filter, n, "filter")?;
        let out = out.as_mut().ok_or(Failure::Null("out"))?;
        *out = filtered_vora_value(f, &q.inner, &x.inner)?.value();
        Ok(())
    })
}

/// Gradient of the filtered Vora-Value with respect to the filter, written to `grad`.
///
/// # Safety
/// `filter` and `grad` must each point to `n` doubles; handles must be live.
#[no_mangle]
pub unsafe extern "C" fn vora_gradient(
    filter: *const f64,
    n: usize,
    q: *const VoraSensorSet,
    x: *const VoraSensorSet,
    grad: *mut f64,
) -> VoraStatus {
    guard(|| {
        let (q, x) = (deref(q, "q")?, deref(x, "x")?);
        let f = slice(filter, n, "filter")?;
        let out = slice_mut(grad, n, "grad")?;
        check_len(q.inner.grid().len(), n, "filter")?;
        let g = vora_gradient_f(f, &q.inner, &x.inner)?;
        out.copy_from_slice(g.as_slice());
        Ok(())
    })
}

/// Unconstrained gradient ascent. `f0` may be NULL for the default start, `config` NULL for defaults.
///
/// # Safety
/// `f0` must be NULL or point to `n` doubles; handles must be live and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn vora_optimize_unconstrained(
    q: *const VoraSensorSet,
    x: *const VoraSensorSet,
    f0: *const f64,
    n: usize,
    config: *const VoraAscentConfig,
    out: *mut *mut VoraResult,
) -> VoraStatus {
    guard(|| {
        let (q, x) = (deref(q, "q")?, deref(x, "x")?);
        let grid = *q.inner.grid();
        let start = if f0.is_null() {
            default_initial_filter(grid).values().clone()
        } else {
            check_len(grid.len(), n, "f0")?;
            DVector::from_column_slice(slice(f0, n, "f0")?)
        };
        let r = gradient_ascent_unconstrained(&q.inner, &x.inner, &start, &config_or_default(config))?;
        store(out, VoraResult {
            filter: r.filter.as_slice().to_vec(),
            initial_value: r.trace.initial_value(),
            final_value: r.final_value(),
            iterations: r.trace.iterations(),
            status: r.trace.status.into(),
        })
    })
}

/// Projected ascent over `k` cosine basis terms with `f_min <= f <= f_max`.
///
/// # Safety
/// Handles must be live, `config` NULL or valid, and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn vora_optimize_constrained(
    q: *const VoraSensorSet,
    x: *const VoraSensorSet,
    k: usize,
    f_min: f64,
    f_max: f64,
    config: *const VoraAscentConfig,
    out: *mut *mut VoraResult,
) -> VoraStatus {
    guard(|| {
        let (q, x) = (deref(q, "q")?, deref(x, "x")?);
        let basis = cosine_basis(q.inner.grid().len(), k)?;
        let bounds = BoxBounds::new(f_min, f_max)?;
        let c0 = default_initial_coefficients(&basis, &bounds)?;
        let r = projected_gradient_ascent(&q.inner, &x.inner, &basis, &c0, &bounds, &config_or_default(config))?;
        store(out, VoraResult {
            filter: r.filter.as_slice().to_vec(),
            initial_value: r.trace.initial_value(),
            final_value: r.final_value(),
            iterations: r.trace.iterations(),
            status: r.trace.status.into(),
        })
    })
}

/// Luther-condition filter. `k == 0` leaves every wavelength free; otherwise the
/// filter is restricted to `k` cosine terms within `[f_min, f_max]`.
///
/// # Safety
/// Handles must be live and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn vora_luther(
    q: *const VoraSensorSet,
    x: *const VoraSensorSet,
    k: usize,
    f_min: f64,
    f_max: f64,
    out: *mut *mut VoraResult,
) -> VoraStatus {
    guard(|| {
        let (q, x) = (deref(q, "q")?, deref(x, "x")?);
        let constraints = if k == 0 {
            None
        } else {
            Some((cosine_basis(q.inner.grid().len(), k)?, BoxBounds::new(f_min, f_max)?))
        };
        let options = LutherOptions {
            constraints,
            ..LutherOptions::default()
        };
        let sol = luther_filter(&q.inner, &x.inner, &options)?;
        let iterations = sol.residuals.len() - 1;
        store(out, VoraResult {
            initial_value: vora_value(&q.inner, &x.inner)?.value(),
            final_value: filtered_vora_value(sol.filter.as_slice(), &q.inner, &x.inner)?.value(),
            filter: sol.filter.as_slice().to_vec(),
            iterations,
            status: if iterations < options.max_iters {
                VoraAscentStatus::Converged
            } else {
                VoraAscentStatus::IterationCap
            },
        })
    })
}

/// # Safety
/// `result` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vora_result_free(result: *mut VoraResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// # Safety
/// `result` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vora_result_len(result: *const VoraResult) -> usize {
    result.as_ref().map_or(0, |r| r.filter.len())
}

/// Copies the filter (max transmittance 1) into `out`, which holds `n` doubles.
///
/// # Safety
/// `result` must be live and `out` point to `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn vora_result_filter(result: *const VoraResult, out: *mut f64, n: usize) -> VoraStatus {
    guard(|| {
        let r = deref(result, "result")?;
        check_len(r.filter.len(), n, "output buffer")?;
        slice_mut(out, n, "out")?.copy_from_slice(&r.filter);
        Ok(())
    })
}

/// NaN for NULL.
///
/// # Safety
/// `result` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vora_result_initial_value(result: *const VoraResult) -> f64 {
    result.as_ref().map_or(f64::NAN, |r| r.initial_value)
}

/// NaN for NULL.
///
/// # Safety
/// `result` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vora_result_final_value(result: *const VoraResult) -> f64 {
    result.as_ref().map_or(f64::NAN, |r| r.final_value)
}

/// # Safety
/// `result` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vora_result_iterations(result: *const VoraResult) -> usize {
    result.as_ref().map_or(0, |r| r.iterations)
}

/// # Safety
/// `result` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn vora_result_status(result: *const VoraResult, out: *mut VoraAscentStatus) -> VoraStatus {
    guard(|| {
        let r = deref(result, "result")?;
        *out.as_mut().ok_or(Failure::Null("out"))? = r.status;
        Ok(())
    })
}
