//! C interface to `tcnn-core`.
//!
//! Objects are opaque handles created by `tcnn_*` constructors and released
//! with the matching `_free`. Every fallible function returns a
//! [`TcnnStatus`]; on failure [`tcnn_last_error`] describes the problem.
//! Matrices are row-major `double` arrays.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use ndarray::{Array1, ArrayView1, ArrayView2};
use tcnn::dgp::{simulate, DgpConfig};
use tcnn::{credible_band, fit, io, pehe, posterior_cate, CausalModel, Dataset, Error, ModelKind, TrainConfig};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TcnnStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    Input = 4,
    State = 5,
    Estimation = 6,
    Divergence = 7,
    Unsupported = 8,
    Io = 9,
    Format = 10,
    Panic = 11,
}

/// Opaque dataset handle.
pub struct TcnnDataset {
    inner: Dataset,
}

/// Opaque fitted-model handle.
pub struct TcnnModel {
    model: CausalModel,
    feature_names: Vec<String>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> TcnnStatus {
    match e {
        Error::Config(_) | Error::Domain(_) => TcnnStatus::InvalidArgument,
        Error::Shape(_) => TcnnStatus::Shape,
        Error::Input(_) | Error::Parse { .. } => TcnnStatus::Input,
        Error::State(_) => TcnnStatus::State,
        Error::Estimation(_) | Error::Benchmark { .. } => TcnnStatus::Estimation,
        Error::Divergence { .. } => TcnnStatus::Divergence,
        Error::Unsupported(_) => TcnnStatus::Unsupported,
        Error::Io { .. } => TcnnStatus::Io,
        Error::Format { .. } => TcnnStatus::Format,
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

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> TcnnStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_error(String::new());
            TcnnStatus::Ok
        }
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer passed for `{what}`"));
            TcnnStatus::NullPointer
        }
        Ok(Err(Failure::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            TcnnStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &'static str) -> Result<&'a mut [f64], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn string(p: *const c_char, what: &'static str) -> Result<String, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_string)
        .map_err(|_| Failure::Core(Error::Input(format!("`{what}` is not valid UTF-8"))))
}

unsafe fn matrix<'a>(x: *const f64, n: usize, p: usize) -> Result<ArrayView2<'a, f64>, Failure> {
    let len = n
        .checked_mul(p)
        .ok_or(Failure::Core(Error::Shape("n·p overflows".into())))?;
    let data = slice(x, len, "x")?;
    Ok(ArrayView2::from_shape((n, p), data).expect("length checked"))
}

fn out_ptr<T>(out: *mut *mut T) -> Result<(), Failure> {
    if out.is_null() {
        Err(Failure::Null("out"))
    } else {
        Ok(())
    }
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next `tcnn_*` call on the same thread.
#[no_mangle]
pub extern "C" fn tcnn_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Simulates `n` rows of the benchmark process with `p` covariates (half
/// continuous), ground truth included.
#[no_mangle]
pub unsafe extern "C" fn tcnn_dataset_simulate(
    n: usize,
    p: usize,
    seed: u64,
    out: *mut *mut TcnnDataset,
) -> TcnnStatus {
    guard(|| {
        out_ptr(out)?;
        let data = simulate(&DgpConfig {
            n,
            p,
            n_continuous: p / 2,
            seed,
            ..DgpConfig::default()
        })?;
        *out = Box::into_raw(Box::new(TcnnDataset { inner: data }));
        Ok(())
    })
}

/// Builds a dataset from a row-major `n × p` covariate matrix, a 0/1
/// treatment vector and an outcome vector. Columns holding only 0 and 1 are
/// treated as binary.
#[no_mangle]
pub unsafe extern "C" fn tcnn_dataset_from_arrays(
    x: *const f64,
    n: usize,
    p: usize,
    treatment: *const f64,
    outcome: *const f64,
    out: *mut *mut TcnnDataset,
) -> TcnnStatus {
    guard(|| {
        out_ptr(out)?;
        let x = matrix(x, n, p)?.to_owned();
        let a = Array1::from(slice(treatment, n, "treatment")?.to_vec());
        let y = Array1::from(slice(outcome, n, "outcome")?.to_vec());
        let data = Dataset::new(x, a, y)?;
        *out = Box::into_raw(Box::new(TcnnDataset { inner: data }));
        Ok(())
    })
}

/// Loads a CSV with columns `a` (treatment), `y` (outcome) and covariates.
#[no_mangle]
pub unsafe extern "C" fn tcnn_dataset_load_csv(path: *const c_char, out: *mut *mut TcnnDataset) -> TcnnStatus {
    guard(|| {
        out_ptr(out)?;
        let path = PathBuf::from(string(path, "path")?);
        let data = io::load_dataset_csv(&path)?;
        *out = Box::into_raw(Box::new(TcnnDataset { inner: data }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn tcnn_dataset_dims(data: *const TcnnDataset, n: *mut usize, p: *mut usize) -> TcnnStatus {
    guard(|| {
        let d = &deref(data, "data")?.inner;
        if n.is_null() || p.is_null() {
            return Err(Failure::Null("n/p"));
        }
        *n = d.n();
        *p = d.p();
        Ok(())
    })
}

/// Copies the row-major covariates into `x` (`n·p` doubles).
#[no_mangle]
pub unsafe extern "C" fn tcnn_dataset_covariates(data: *const TcnnDataset, x: *mut f64) -> TcnnStatus {
    guard(|| {
        let d = &deref(data, "data")?.inner;
        let dst = slice_mut(x, d.n() * d.p(), "x")?;
        for (slot, v) in dst.iter_mut().zip(d.x().iter()) {
            *slot = *v;
        }
        Ok(())
    })
}

/// Copies the true CATE (`n` doubles); fails with `Input` for data without
/// ground truth.
#[no_mangle]
pub unsafe extern "C" fn tcnn_dataset_true_cate(data: *const TcnnDataset, tau: *mut f64) -> TcnnStatus {
    guard(|| {
        let d = &deref(data, "data")?.inner;
        let truth = d
            .truth()
            .ok_or_else(|| Error::Input("dataset has no ground truth".into()))?;
        slice_mut(tau, d.n(), "tau")?.copy_from_slice(truth.tau.as_slice().expect("contiguous"));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn tcnn_dataset_free(data: *mut TcnnDataset) {
    if !data.is_null() {
        drop(Box::from_raw(data));
    }
}

/// Fits a model. `kind` is one of `snn`, `tnn`, `rnn`, `rnam`, `tcnn`,
/// `icnn`; `epochs = 0` keeps the default budget.
#[no_mangle]
pub unsafe extern "C" fn tcnn_model_fit(
    data: *const TcnnDataset,
    kind: *const c_char,
    epochs: usize,
    seed: u64,
    out: *mut *mut TcnnModel,
) -> TcnnStatus {
    guard(|| {
        out_ptr(out)?;
        let d = &deref(data, "data")?.inner;
        let kind: ModelKind = string(kind, "kind")?.parse()?;
        let mut config = TrainConfig::for_kind(kind);
        config.seed = seed;
        if epochs > 0 {
            config.epochs = epochs;
        }
        let model = fit(kind, d, &config)?;
        *out = Box::into_raw(Box::new(TcnnModel {
            model,
            feature_names: d.feature_names().to_vec(),
        }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn tcnn_model_load(path: *const c_char, out: *mut *mut TcnnModel) -> TcnnStatus {
    guard(|| {
        out_ptr(out)?;
        let path = PathBuf::from(string(path, "path")?);
        let (model, feature_names) = io::load_model(&path)?;
        *out = Box::into_raw(Box::new(TcnnModel { model, feature_names }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn tcnn_model_save(model: *const TcnnModel, path: *const c_char) -> TcnnStatus {
    guard(|| {
        let m = deref(model, "model")?;
        let path = PathBuf::from(string(path, "path")?);
        io::save_model(&m.model, &m.feature_names, &path, None)?;
        Ok(())
    })
}

/// Number of covariates the model expects.
#[no_mangle]
pub unsafe extern "C" fn tcnn_model_features(model: *const TcnnModel, p: *mut usize) -> TcnnStatus {
    guard(|| {
        let m = deref(model, "model")?;
        if p.is_null() {
            return Err(Failure::Null("p"));
        }
        *p = m.model.p();
        Ok(())
    })
}

/// Point CATE estimates for `n` rows of `x` into `tau` (`n` doubles).
#[no_mangle]
pub unsafe extern "C" fn tcnn_model_predict_cate(
    model: *const TcnnModel,
    x: *const f64,
    n: usize,
    p: usize,
    tau: *mut f64,
) -> TcnnStatus {
    guard(|| {
        let m = deref(model, "model")?;
        let x = matrix(x, n, p)?;
        let pred = m.model.predict_cate(x)?;
        slice_mut(tau, n, "tau")?.copy_from_slice(pred.as_slice().expect("contiguous"));
        Ok(())
    })
}

/// MC-dropout credible band of the CATE: `draws` samples, central `level`
/// interval. Each output array holds `n` doubles.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn tcnn_model_cate_band(
    model: *const TcnnModel,
    x: *const f64,
    n: usize,
    p: usize,
    draws: usize,
    level: f64,
    seed: u64,
    mean: *mut f64,
    lower: *mut f64,
    upper: *mut f64,
) -> TcnnStatus {
    guard(|| {
        let m = deref(model, "model")?;
        let x = matrix(x, n, p)?;
        let band = credible_band(&posterior_cate(&m.model, x, draws, seed)?, level)?;
        slice_mut(mean, n, "mean")?.copy_from_slice(&band.mean);
        slice_mut(lower, n, "lower")?.copy_from_slice(&band.lower);
        slice_mut(upper, n, "upper")?.copy_from_slice(&band.upper);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn tcnn_model_free(model: *mut TcnnModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Root-PEHE of `n` estimates against the truth.
#[no_mangle]
pub unsafe extern "C" fn tcnn_pehe(tau_hat: *const f64, tau_true: *const f64, n: usize, out: *mut f64) -> TcnnStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let a = ArrayView1::from(slice(tau_hat, n, "tau_hat")?);
        let b = ArrayView1::from(slice(tau_true, n, "tau_true")?);
        *out = pehe(a, b)?;
        Ok(())
    })
}
