//! C ABI for the coarsened BVAR library.
//!
//! Handles are opaque pointers owned by this library: create them with
//! the constructors below and release them with the paired free
//! functions. Every fallible call returns a [`CbvarStatus`] and, on
//! failure, leaves a message readable through
//! [`cbvar_last_error_message`]. Numeric output is copied row-major into
//! caller-owned buffers whose capacity is given in doubles. The C header
//! is generated into `include/cbvar.h` at build time.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::os::raw::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use cbvar::dataio::{load_csv, LoadOptions};
use cbvar::error::Error;
use cbvar::montecarlo::{forecast, irf, sample_posterior};
use cbvar::prior::{default_lambda_grid, optimize_lambda, PriorBuilder};
use cbvar::selection::{
    default_alpha_grid, evaluate_alpha_grid, select_alpha_knee, DEFAULT_TAU,
};
use cbvar::{
    build_design, coarsened_posterior, learning_rate, CoarsenedPosterior, Dataset,
    ModelSizeSpec, MonthDate,
};
use nalgebra::DMatrix;

/// Status code returned by every fallible call. `CONFIG`, `DATA` and
/// `NUMERIC` carry the same numeric values as the CLI's process exit
/// codes for the matching failure classes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CbvarStatus {
    /// Success.
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// Invalid option or argument value.
    Config = 2,
    /// Missing, malformed, or insufficient input data.
    Data = 3,
    /// A numerical routine failed to produce a finite answer.
    Numeric = 4,
    /// A panic was caught at the library boundary.
    Panic = 5,
}

/// Opaque handle for a loaded monthly panel.
pub struct CbvarDataset {
    inner: Dataset,
}

/// Opaque handle for a fitted model: the exact coarsened posterior plus
/// the sample it was fit on (kept as forecast history).
pub struct CbvarModel {
    posterior: CoarsenedPosterior,
    names: Vec<String>,
    lags: usize,
    values: DMatrix<f64>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn remember(status: CbvarStatus, msg: &str) -> CbvarStatus {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = msg);
    status
}

fn remember_error(err: &Error) -> CbvarStatus {
    let status = match err.exit_code() {
        2 => CbvarStatus::Config,
        3 => CbvarStatus::Data,
        _ => CbvarStatus::Numeric,
    };
    remember(status, &err.to_string())
}

fn or_status<T>(r: cbvar::Result<T>) -> Result<T, CbvarStatus> {
    r.map_err(|e| remember_error(&e))
}

/// Unwinding must never cross the C boundary.
fn guard(body: impl FnOnce() -> CbvarStatus) -> CbvarStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(cause) => {
            let msg = cause
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| cause.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            remember(CbvarStatus::Panic, &msg)
        }
    }
}

macro_rules! ffi_try {
    ($expr:expr) => {
        match $expr {
            Ok(v) => v,
            Err(status) => return status,
        }
    };
}

unsafe fn read_str<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, CbvarStatus> {
    if ptr.is_null() {
        return Err(remember(CbvarStatus::NullArgument, &format!("{what} is null")));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| remember(CbvarStatus::Config, &format!("{what} is not valid UTF-8")))
}

unsafe fn dataset_ref<'a>(ptr: *const CbvarDataset) -> Result<&'a CbvarDataset, CbvarStatus> {
    ptr.as_ref().ok_or_else(|| remember(CbvarStatus::NullArgument, "dataset is null"))
}

unsafe fn model_ref<'a>(ptr: *const CbvarModel) -> Result<&'a CbvarModel, CbvarStatus> {
    ptr.as_ref().ok_or_else(|| remember(CbvarStatus::NullArgument, "model is null"))
}

/// Copy `mat` row-major into `out`; `len` is the capacity in doubles.
unsafe fn copy_matrix(
    mat: &DMatrix<f64>,
    out: *mut f64,
    len: usize,
    what: &str,
) -> CbvarStatus {
    if out.is_null() {
        return remember(CbvarStatus::NullArgument, "out is null");
    }
    let need = mat.nrows() * mat.ncols();
    if len < need {
        return remember(
            CbvarStatus::Config,
            &format!("{what} buffer holds {len} doubles, needs {need}"),
        );
    }
    let dst = std::slice::from_raw_parts_mut(out, need);
    for i in 0..mat.nrows() {
        for j in 0..mat.ncols() {
            dst[i * mat.ncols() + j] = mat[(i, j)];
        }
    }
    CbvarStatus::Ok
}

unsafe fn put_f64(out: *mut f64, v: f64) {
    if !out.is_null() {
        *out = v;
    }
}

unsafe fn put_usize(out: *mut usize, v: usize) {
    if !out.is_null() {
        *out = v;
    }
}

/// Library version as a static NUL-terminated string. Never null; do
/// not free.
#[no_mangle]
pub extern "C" fn cbvar_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message for the most recent failure on the calling thread, empty if
/// none. The pointer stays valid until the next failing call on the
/// same thread; do not free.
#[no_mangle]
pub extern "C" fn cbvar_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Free a string returned by this library. Null is a no-op.
///
/// # Safety
/// `s` must be a pointer previously returned by a string-returning
/// function of this library, and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cbvar_string_free(s: *mut c_char) {
    if s.is_null() {
        return;
    }
    let _ = CString::from_raw(s);
}

/// Load a monthly CSV panel: a header row of variable names and a first
/// column of YYYY-MM dates. `size` picks the variable set ("small",
/// "medium", "large", or "custom:FILE" with FILE resolved against the
/// CSV's directory); null means "small". Per-variable stationarity
/// transforms are applied and rows lost to differencing are trimmed. On
/// success writes a new handle to `out`; release it with
/// [`cbvar_dataset_free`].
///
/// # Safety
/// `path` (and `size` when non-null) must be NUL-terminated strings
/// valid for the duration of the call, and `out` must be a valid
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn cbvar_dataset_load_csv(
    path: *const c_char,
    size: *const c_char,
    out: *mut *mut CbvarDataset,
) -> CbvarStatus {
    guard(|| {
        if out.is_null() {
            return remember(CbvarStatus::NullArgument, "out is null");
        }
        let path = ffi_try!(read_str(path, "path"));
        let size = if size.is_null() { "small" } else { ffi_try!(read_str(size, "size")) };
        let csv = Path::new(path);
        let spec = ffi_try!(or_status(ModelSizeSpec::parse(size, csv.parent())));
        let data = ffi_try!(or_status(load_csv(csv, &spec, &LoadOptions::default())));
        *out = Box::into_raw(Box::new(CbvarDataset { inner: data }));
        CbvarStatus::Ok
    })
}

/// Build a panel from a row-major `n_rows` x `n_vars` buffer taken as
/// levels, named y1..yM, with monthly dates starting at
/// `start_year`-`start_month`. On success writes a new handle to `out`;
/// release it with [`cbvar_dataset_free`].
///
/// # Safety
/// `values` must point to at least `n_rows * n_vars` readable doubles
/// and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cbvar_dataset_from_values(
    values: *const f64,
    n_rows: usize,
    n_vars: usize,
    start_year: i32,
    start_month: u32,
    out: *mut *mut CbvarDataset,
) -> CbvarStatus {
    guard(|| {
        if out.is_null() {
            return remember(CbvarStatus::NullArgument, "out is null");
        }
        if values.is_null() {
            return remember(CbvarStatus::NullArgument, "values is null");
        }
        if n_rows == 0 || n_vars == 0 {
            return remember(CbvarStatus::Config, "need at least one row and one variable");
        }
        let total = match n_rows.checked_mul(n_vars) {
            Some(t) => t,
            None => return remember(CbvarStatus::Config, "n_rows * n_vars overflows"),
        };
        let start = ffi_try!(or_status(MonthDate::new(start_year, start_month)));
        let slice = std::slice::from_raw_parts(values, total);
        let mat = DMatrix::from_row_slice(n_rows, n_vars, slice);
        let names = (1..=n_vars).map(|j| format!("y{j}")).collect();
        let data = ffi_try!(or_status(Dataset::from_values(names, mat, start)));
        *out = Box::into_raw(Box::new(CbvarDataset { inner: data }));
        CbvarStatus::Ok
    })
}

/// Panel shape. Either out pointer may be null to skip that field.
///
/// # Safety
/// `dataset` must be a live handle from a dataset constructor; non-null
/// out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cbvar_dataset_shape(
    dataset: *const CbvarDataset,
    n_rows: *mut usize,
    n_vars: *mut usize,
) -> CbvarStatus {
    guard(|| {
        let ds = ffi_try!(dataset_ref(dataset));
        put_usize(n_rows, ds.inner.n_rows());
        put_usize(n_vars, ds.inner.n_vars());
        CbvarStatus::Ok
    })
}

/// Release a dataset handle. Null is a no-op.
///
/// # Safety
/// `dataset` must come from a dataset constructor of this library and
/// must not be used (or freed) again afterwards.
#[no_mangle]
pub unsafe extern "C" fn cbvar_dataset_free(dataset: *mut CbvarDataset) {
    if dataset.is_null() {
        return;
    }
    drop(Box::from_raw(dataset));
}

fn fit_impl(data: &Dataset, lags: usize, alpha: f64, lambda: f64) -> cbvar::Result<CbvarModel> {
    let design = build_design(data, lags)?;
    let builder = PriorBuilder::from_data(data, lags)?;
    let lambda_grid =
        if lambda.is_nan() || lambda <= 0.0 { default_lambda_grid() } else { vec![lambda] };
    let (alpha, lambda) = if alpha.is_nan() || alpha <= 0.0 {
        let grid = evaluate_alpha_grid(
            &design,
            &builder,
            &lambda_grid,
            &default_alpha_grid(),
            DEFAULT_TAU,
        )?;
        let pick = select_alpha_knee(&grid)?;
        let lam = grid
            .points
            .iter()
            .find(|p| p.fit.alpha == pick)
            .map(|p| p.lambda)
            .expect("knee choice is one of the evaluated points");
        (pick, lam)
    } else {
        let rate = learning_rate(alpha, design.t_effective())?;
        let (lam, _) = optimize_lambda(&design, &rate, &lambda_grid, &builder)?;
        (alpha, lam)
    };
    let rate = learning_rate(alpha, design.t_effective())?;
    let prior = builder.build(lambda)?;
    let posterior = coarsened_posterior(&design, &prior, &rate)?;
    Ok(CbvarModel {
        posterior,
        names: data.names.clone(),
        lags,
        values: data.values.clone(),
    })
}

/// Fit a VAR with `lags` lags under the conjugate Minnesota-style prior.
/// `alpha` is the coarsening level: any value in (0, inf] fixes it (an
/// IEEE infinity gives the ordinary posterior), while a non-positive or
/// NaN value selects it automatically at the knee of the
/// fit-versus-complexity curve over the default grid. `lambda` is the
/// prior tightness: positive fixes it, non-positive or NaN picks the
/// marginal-likelihood winner over the default grid. On success writes a
/// new handle to `out`; release it with [`cbvar_model_free`].
///
/// # Safety
/// `dataset` must be a live handle from a dataset constructor and `out`
/// must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cbvar_fit(
    dataset: *const CbvarDataset,
    lags: usize,
    alpha: f64,
    lambda: f64,
    out: *mut *mut CbvarModel,
) -> CbvarStatus {
    guard(|| {
        if out.is_null() {
            return remember(CbvarStatus::NullArgument, "out is null");
        }
        let ds = ffi_try!(dataset_ref(dataset));
        let model = ffi_try!(or_status(fit_impl(&ds.inner, lags, alpha, lambda)));
        *out = Box::into_raw(Box::new(model));
        CbvarStatus::Ok
    })
}

/// Scalar summary of a fitted model: coarsening level `alpha`, implied
/// learning rate `zeta`, prior tightness `lambda`, and posterior
/// inverse-Wishart degrees of freedom `df`. Any out pointer may be null
/// to skip that field.
///
/// # Safety
/// `model` must be a live handle from [`cbvar_fit`]; non-null out
/// pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cbvar_model_info(
    model: *const CbvarModel,
    alpha: *mut f64,
    zeta: *mut f64,
    lambda: *mut f64,
    df: *mut f64,
) -> CbvarStatus {
    guard(|| {
        let m = ffi_try!(model_ref(model));
        put_f64(alpha, m.posterior.alpha);
        put_f64(zeta, m.posterior.zeta);
        put_f64(lambda, m.posterior.lambda);
        put_f64(df, m.posterior.df);
        CbvarStatus::Ok
    })
}

/// Coefficient matrix shape: K regressors (M * lags + 1, intercept
/// last) by M variables. Either out pointer may be null.
///
/// # Safety
/// `model` must be a live handle from [`cbvar_fit`]; non-null out
/// pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cbvar_model_dims(
    model: *const CbvarModel,
    n_regressors: *mut usize,
    n_vars: *mut usize,
) -> CbvarStatus {
    guard(|| {
        let m = ffi_try!(model_ref(model));
        put_usize(n_regressors, m.posterior.n_regressors());
        put_usize(n_vars, m.posterior.n_vars());
        CbvarStatus::Ok
    })
}

/// Copy the K x M posterior coefficient mean into `out`, row-major.
/// `len` is the capacity of `out` in doubles and must be at least
/// K * M (see [`cbvar_model_dims`]).
///
/// # Safety
/// `model` must be a live handle from [`cbvar_fit`] and `out` must
/// point to at least `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn cbvar_model_coefficients(
    model: *const CbvarModel,
    out: *mut f64,
    len: usize,
) -> CbvarStatus {
    guard(|| {
        let m = ffi_try!(model_ref(model));
        copy_matrix(&m.posterior.a_bar, out, len, "coefficient")
    })
}

/// Simulate the posterior predictive from the end of the fitted sample
/// and write the cross-draw median forecast into `out`, row-major with
/// `h_max` rows (horizons 1..=h_max) and M columns. `len` must be at
/// least `h_max * M`. The same seed reproduces the same buffer.
///
/// # Safety
/// `model` must be a live handle from [`cbvar_fit`] and `out` must
/// point to at least `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn cbvar_model_forecast(
    model: *const CbvarModel,
    h_max: usize,
    n_draws: usize,
    seed: u64,
    out: *mut f64,
    len: usize,
) -> CbvarStatus {
    guard(|| {
        let m = ffi_try!(model_ref(model));
        let horizons: Vec<usize> = (1..=h_max).collect();
        let draws = ffi_try!(or_status(sample_posterior(&m.posterior, n_draws, seed)));
        let fc = ffi_try!(or_status(forecast(&draws, &m.values, &horizons, seed)));
        copy_matrix(&fc.point, out, len, "forecast")
    })
}

/// Simulate impulse responses to a one standard deviation shock in
/// variable `shock` (zero-based; recursive identification in data
/// order) and write one cross-draw quantile band into `out`, row-major
/// with `h_max + 1` rows (horizons 0..=h_max) and M columns. `level`
/// must be one of 0.05, 0.16, 0.50, 0.84, 0.95; `len` must be at least
/// `(h_max + 1) * M`. The same seed reproduces the same buffer.
///
/// # Safety
/// `model` must be a live handle from [`cbvar_fit`] and `out` must
/// point to at least `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn cbvar_model_irf(
    model: *const CbvarModel,
    shock: usize,
    h_max: usize,
    n_draws: usize,
    seed: u64,
    level: f64,
    out: *mut f64,
    len: usize,
) -> CbvarStatus {
    guard(|| {
        let m = ffi_try!(model_ref(model));
        let draws = ffi_try!(or_status(sample_posterior(&m.posterior, n_draws, seed)));
        let set = ffi_try!(or_status(irf(&draws, shock, h_max, m.lags)));
        let idx = match set.levels.iter().position(|&l| (l - level).abs() < 1e-9) {
            Some(i) => i,
            None => {
                return remember(
                    CbvarStatus::Config,
                    &format!(
                        "level {level} is not reported (expected one of {:?})",
                        set.levels
                    ),
                )
            }
        };
        copy_matrix(&set.quantiles[idx], out, len, "impulse response")
    })
}

/// Name of variable `index` (zero-based, data order) as a newly
/// allocated string; free it with [`cbvar_string_free`]. Returns null
/// when `model` is null or the index is out of range.
///
/// # Safety
/// `model` must be a live handle from [`cbvar_fit`].
#[no_mangle]
pub unsafe extern "C" fn cbvar_model_variable_name(
    model: *const CbvarModel,
    index: usize,
) -> *mut c_char {
    let body = || {
        let m = model.as_ref()?;
        let name = m.names.get(index)?;
        CString::new(name.as_str()).ok().map(CString::into_raw)
    };
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Some(ptr)) => ptr,
        _ => std::ptr::null_mut(),
    }
}

/// Release a model handle. Null is a no-op.
///
/// # Safety
/// `model` must come from [`cbvar_fit`] and must not be used (or freed)
/// again afterwards.
#[no_mangle]
pub unsafe extern "C" fn cbvar_model_free(model: *mut CbvarModel) {
    if model.is_null() {
        return;
    }
    drop(Box::from_raw(model));
}
