//! C ABI over `slds-core`.
//!
//! Models live behind an opaque [`SldsModel`] handle. Every fallible call
//! returns an [`SldsStatus`]; on failure the message is available from
//! [`slds_last_error_message`] on the same thread. Matrices are passed as
//! row-major `double` arrays. A data set is one buffer holding every series
//! back to back (time-major, `obs_dim` values per step) plus an array of
//! series lengths.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use slds_core::data_io::{data_fingerprint, load_model, save_model, ModelMeta};
use slds_core::evaluation::{sample_tasks, TaskEvaluator};
use slds_core::forecasting::forecast;
use slds_core::inference::total_log_likelihood;
use slds_core::{em_fit, FitConfig, ModelParams, ObservationSequence, SldsError};

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SldsStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// Arguments are inconsistent (sizes, ranges, configuration).
    InvalidArgument = 2,
    /// Input data or a model file could not be used.
    DataError = 3,
    /// A numerical failure during inference or learning.
    NumericalError = 4,
    /// Reading or writing a file failed.
    IoError = 5,
    /// The library panicked; this is a bug.
    Panic = 6,
}

/// Which parameter [`slds_model_copy`] reads.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SldsParam {
    /// `l x l` transition matrix.
    A = 0,
    /// `d x l` emission matrix.
    C = 1,
    /// `l x l` state noise covariance.
    Q = 2,
    /// `d x d` observation noise covariance.
    R = 3,
    /// Initial state mean, length `l`.
    Pi1 = 4,
    /// `l x l` initial state covariance.
    V1 = 5,
}

/// Learning options, mirroring the core fitting configuration.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct SldsFitConfig {
    pub states: usize,
    pub beta: f64,
    pub em_max_iter: usize,
    pub em_tol: f64,
    pub prox_max_iter: usize,
    pub prox_tol: f64,
    pub jitter: f64,
    pub seed: u64,
}

impl From<&FitConfig> for SldsFitConfig {
    fn from(c: &FitConfig) -> Self {
        Self {
            states: c.states,
            beta: c.beta,
            em_max_iter: c.em_max_iter,
            em_tol: c.em_tol,
            prox_max_iter: c.prox_max_iter,
            prox_tol: c.prox_tol,
            jitter: c.jitter,
            seed: c.seed,
        }
    }
}

impl From<&SldsFitConfig> for FitConfig {
    fn from(c: &SldsFitConfig) -> Self {
        FitConfig {
            states: c.states,
            beta: c.beta,
            em_max_iter: c.em_max_iter,
            em_tol: c.em_tol,
            prox_max_iter: c.prox_max_iter,
            prox_tol: c.prox_tol,
            jitter: c.jitter,
            seed: c.seed,
        }
    }
}

/// Opaque model handle.
pub struct SldsModel {
    params: ModelParams,
    meta: ModelMeta,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(SldsStatus, String);

impl From<SldsError> for Failure {
    fn from(e: SldsError) -> Self {
        let status = match &e {
            SldsError::InvalidInput(_) => SldsStatus::InvalidArgument,
            SldsError::Data(_) => SldsStatus::DataError,
            SldsError::Numerical(_) => SldsStatus::NumericalError,
            SldsError::Io(_) => SldsStatus::IoError,
        };
        Failure(status, e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(SldsStatus::InvalidArgument, msg.into())
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Run `f`, record any failure or panic, and turn it into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SldsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            SldsStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal error: {msg}"));
            SldsStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure(SldsStatus::NullPointer, format!("{name} is null")))
    } else {
        Ok(())
    }
}

unsafe fn model_ref<'a>(model: *const SldsModel) -> Result<&'a SldsModel, Failure> {
    non_null(model, "model")?;
    Ok(&*model)
}

unsafe fn path_arg(path: *const c_char) -> Result<PathBuf, Failure> {
    non_null(path, "path")?;
    let s = CStr::from_ptr(path).to_str().map_err(|_| invalid("path is not valid UTF-8"))?;
    Ok(PathBuf::from(s))
}

unsafe fn slice<'a>(p: *const f64, len: usize, name: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    non_null(p, name)?;
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn matrix(p: *const f64, rows: usize, cols: usize, name: &str) -> Result<DMatrix<f64>, Failure> {
    let data = slice(p, rows * cols, name)?;
    Ok(DMatrix::from_row_slice(rows, cols, data))
}

/// Split the back-to-back buffer into sequences.
unsafe fn sequences(
    data: *const f64,
    lengths: *const usize,
    n_series: usize,
    obs_dim: usize,
) -> Result<Vec<ObservationSequence>, Failure> {
    if n_series == 0 || obs_dim == 0 {
        return Err(invalid("n_series and obs_dim must be positive"));
    }
    non_null(lengths, "lengths")?;
    let lens = std::slice::from_raw_parts(lengths, n_series);
    let total = lens.iter().try_fold(0usize, |acc, n| acc.checked_add(n.checked_mul(obs_dim)?));
    let total = total.ok_or_else(|| invalid("series lengths overflow"))?;
    let values = slice(data, total, "data")?;
    let mut out = Vec::with_capacity(n_series);
    let mut offset = 0;
    for (i, &n) in lens.iter().enumerate() {
        let m = DMatrix::from_row_slice(n, obs_dim, &values[offset..offset + n * obs_dim]);
        out.push(ObservationSequence::with_id(m, format!("s{i}")));
        offset += n * obs_dim;
    }
    Ok(out)
}

unsafe fn write_out<T>(out: *mut T, value: T, name: &str) -> Result<(), Failure> {
    non_null(out, name)?;
    *out = value;
    Ok(())
}

/// Message of the last failed call on this thread, or null after a success.
/// The pointer stays valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn slds_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Default learning options for `states` hidden dimensions and prior scale `beta`.
#[no_mangle]
pub extern "C" fn slds_fit_config_default(states: usize, beta: f64) -> SldsFitConfig {
    SldsFitConfig::from(&FitConfig::new(states, beta))
}

/// Build a model from row-major parameter arrays. The arrays are copied.
///
/// # Safety
/// Each pointer must reference the documented number of doubles; `out` must be writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn slds_model_new(
    l: usize,
    d: usize,
    a: *const f64,
    c: *const f64,
    q: *const f64,
    r: *const f64,
    pi1: *const f64,
    v1: *const f64,
    out: *mut *mut SldsModel,
) -> SldsStatus {
    guard(|| {
        non_null(out, "out")?;
        if l == 0 || d == 0 {
            return Err(invalid("l and d must be positive"));
        }
        let params = ModelParams {
            a: matrix(a, l, l, "a")?,
            c: matrix(c, d, l, "c")?,
            q: matrix(q, l, l, "q")?,
            r: matrix(r, d, d, "r")?,
            pi1: DVector::from_column_slice(slice(pi1, l, "pi1")?),
            v1: matrix(v1, l, l, "v1")?,
        };
        params.ensure_valid()?;
        let model = Box::new(SldsModel { params, meta: ModelMeta::default() });
        write_out(out, Box::into_raw(model), "out")
    })
}

/// Load a model file written by `slds train` or [`slds_model_save`].
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn slds_model_load(path: *const c_char, out: *mut *mut SldsModel) -> SldsStatus {
    guard(|| {
        non_null(out, "out")?;
        let path = path_arg(path)?;
        let (params, meta) = load_model(&path)?;
        write_out(out, Box::into_raw(Box::new(SldsModel { params, meta })), "out")
    })
}

/// Save a model as JSON.
///
/// # Safety
/// `model` must come from this library; `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn slds_model_save(model: *const SldsModel, path: *const c_char) -> SldsStatus {
    guard(|| {
        let m = model_ref(model)?;
        let path = path_arg(path)?;
        save_model(&m.params, &m.meta, &path)?;
        Ok(())
    })
}

/// Release a model. Null is ignored.
///
/// # Safety
/// `model` must come from this library and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn slds_model_free(model: *mut SldsModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Hidden state dimension `l` and observation dimension `d`.
///
/// # Safety
/// `model` must come from this library; `l` and `d` must be writable.
#[no_mangle]
pub unsafe extern "C" fn slds_model_dims(model: *const SldsModel, l: *mut usize, d: *mut usize) -> SldsStatus {
    guard(|| {
        let m = model_ref(model)?;
        write_out(l, m.params.state_dim(), "l")?;
        write_out(d, m.params.obs_dim(), "d")
    })
}

/// Copy one parameter into `out` (row-major). `len` must equal its element count.
///
/// # Safety
/// `model` must come from this library; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn slds_model_copy(
    model: *const SldsModel,
    which: SldsParam,
    out: *mut f64,
    len: usize,
) -> SldsStatus {
    guard(|| {
        let p = &model_ref(model)?.params;
        let m: DMatrix<f64> = match which {
            SldsParam::A => p.a.clone(),
            SldsParam::C => p.c.clone(),
            SldsParam::Q => p.q.clone(),
            SldsParam::R => p.r.clone(),
            SldsParam::Pi1 => DMatrix::from_column_slice(p.pi1.len(), 1, p.pi1.as_slice()),
            SldsParam::V1 => p.v1.clone(),
        };
        if len != m.len() {
            return Err(invalid(format!("{which:?} has {} elements, buffer holds {len}", m.len())));
        }
        non_null(out, "out")?;
        let dst = std::slice::from_raw_parts_mut(out, len);
        for (k, v) in m.transpose().iter().enumerate() {
            dst[k] = *v;
        }
        Ok(())
    })
}

/// Fit a model by MAP-EM. `iterations`, if not null, receives the EM iteration count.
///
/// # Safety
/// `data` must hold `sum(lengths) * obs_dim` doubles, `lengths` `n_series`
/// entries; `config` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn slds_fit(
    data: *const f64,
    lengths: *const usize,
    n_series: usize,
    obs_dim: usize,
    config: *const SldsFitConfig,
    out: *mut *mut SldsModel,
    iterations: *mut usize,
) -> SldsStatus {
    guard(|| {
        non_null(config, "config")?;
        non_null(out, "out")?;
        let seqs = sequences(data, lengths, n_series, obs_dim)?;
        let cfg = FitConfig::from(&*config);
        let (params, diag) = em_fit(&seqs, &cfg)?;
        if !iterations.is_null() {
            *iterations = diag.iterations_run;
        }
        let meta = ModelMeta {
            beta: cfg.beta,
            iterations: diag.iterations_run,
            final_objective: Some(diag.final_objective),
            data_fingerprint: data_fingerprint(&seqs),
        };
        write_out(out, Box::into_raw(Box::new(SldsModel { params, meta })), "out")
    })
}

/// Forecast the `horizon` observations after a prefix of `prefix_len` steps.
/// `out` receives `horizon * d` predicted means, row-major.
///
/// # Safety
/// `prefix` must hold `prefix_len * d` doubles and `out` `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn slds_forecast(
    model: *const SldsModel,
    prefix: *const f64,
    prefix_len: usize,
    horizon: usize,
    out: *mut f64,
    out_len: usize,
) -> SldsStatus {
    guard(|| {
        let p = &model_ref(model)?.params;
        let d = p.obs_dim();
        if out_len != horizon * d {
            return Err(invalid(format!("output needs {} doubles, got {out_len}", horizon * d)));
        }
        let y = ObservationSequence::new(matrix(prefix, prefix_len, d, "prefix")?);
        let f = forecast(p, &y, horizon)?;
        non_null(out, "out")?;
        let dst = std::slice::from_raw_parts_mut(out, out_len);
        for (h, mean) in f.means.iter().enumerate() {
            dst[h * d..(h + 1) * d].copy_from_slice(mean.as_slice());
        }
        Ok(())
    })
}

/// Total log-likelihood of a data set under the model.
///
/// # Safety
/// See [`slds_fit`] for the data layout; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn slds_log_likelihood(
    model: *const SldsModel,
    data: *const f64,
    lengths: *const usize,
    n_series: usize,
    out: *mut f64,
) -> SldsStatus {
    guard(|| {
        let p = &model_ref(model)?.params;
        let seqs = sequences(data, lengths, n_series, p.obs_dim())?;
        let ll = total_log_likelihood(p, &seqs)?;
        write_out(out, ll, "out")
    })
}

/// AMAE of the model on `tasks_per_series` random prediction tasks per series.
///
/// # Safety
/// See [`slds_fit`] for the data layout; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn slds_amae(
    model: *const SldsModel,
    data: *const f64,
    lengths: *const usize,
    n_series: usize,
    tasks_per_series: usize,
    seed: u64,
    out: *mut f64,
) -> SldsStatus {
    guard(|| {
        let p = &model_ref(model)?.params;
        let seqs = sequences(data, lengths, n_series, p.obs_dim())?;
        let tasks = sample_tasks(&seqs, tasks_per_series, seed)?;
        let score = TaskEvaluator::new(p, &seqs)?.amae(&tasks)?;
        write_out(out, score, "out")
    })
}
