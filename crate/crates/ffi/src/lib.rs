//! C interface: the EM admission filter, the MNIST autoencoder, the CAD frame
//! scorer and the ROC metrics behind opaque handles.
//!
//! Every function returns a [`CadsStatus`]. On failure a message is kept per
//! thread and can be read with [`cads_last_error`]. Handles are created by
//! `*_new` and must be released with the matching `*_free`; they are not
//! thread-safe.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use cadstream::cad::{CadConfig, CadModel, FramePair};
use cadstream::em_filter::{EmFilterState, FilterConfig};
use cadstream::metrics::{auc, eer, LabeledScores};
use cadstream::runner::mnist::IMAGE_PIXELS;
use cadstream::runner::{AutoencoderConfig, MnistAutoencoder, Scorer};
use cadstream::tensor::Tensor;
use cadstream::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CadsStatus {
    CadsOk = 0,
    CadsNullPointer = 1,
    CadsDimension = 2,
    CadsContract = 3,
    CadsConfig = 4,
    CadsNumeric = 5,
    CadsFormat = 6,
    CadsInput = 7,
    CadsMetric = 8,
    CadsIo = 9,
    CadsPanic = 10,
}

impl From<&Error> for CadsStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Dimension(_) => CadsStatus::CadsDimension,
            Error::Contract(_) | Error::EndOfStream => CadsStatus::CadsContract,
            Error::Config(_) => CadsStatus::CadsConfig,
            Error::Numeric(_) => CadsStatus::CadsNumeric,
            Error::Format { .. } => CadsStatus::CadsFormat,
            Error::Input(_) => CadsStatus::CadsInput,
            Error::Metric(_) => CadsStatus::CadsMetric,
            Error::Io(_) => CadsStatus::CadsIo,
        }
    }
}

/// Opaque admission filter.
pub struct CadsFilter {
    state: EmFilterState,
}

/// Opaque 784-input MNIST autoencoder.
pub struct CadsAutoencoder {
    inner: MnistAutoencoder,
}

/// Opaque flow-prediction frame scorer.
pub struct CadsModel {
    inner: CadModel,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
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

/// Runs `f`, turning errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> CadsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CadsStatus::CadsOk,
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            CadsStatus::CadsNullPointer
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            CadsStatus::from(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            CadsStatus::CadsPanic
        }
    }
}

unsafe fn mut_ref<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write<T>(out: *mut T, v: T, what: &'static str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Null(what));
    }
    out.write(v);
    Ok(())
}

unsafe fn string(p: *const c_char, what: &'static str) -> Result<String, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| Fail::Lib(Error::Input(format!("{what} is not valid UTF-8"))))
}

/// Message of the last failed call on this thread (empty if none). The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cads_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cads_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

// ---------------------------------------------------------------- filter

/// Fresh filter. `mu` is seeded by the first observed loss.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cads_filter_new(
    alpha: f64,
    tau_floor: f64,
    warmup: usize,
    out: *mut *mut CadsFilter,
) -> CadsStatus {
    guard(|| {
        let cfg = FilterConfig {
            alpha,
            tau_floor,
            warmup,
            enabled: true,
        };
        let state = EmFilterState::new(&cfg)?;
        write(out, Box::into_raw(Box::new(CadsFilter { state })), "out")
    })
}

/// Filter with explicit statistics and no warm-up.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cads_filter_with_stats(
    mu: f64,
    tau: f64,
    alpha: f64,
    tau_floor: f64,
    out: *mut *mut CadsFilter,
) -> CadsStatus {
    guard(|| {
        let state = EmFilterState::with_stats(mu, tau, alpha, tau_floor)?;
        write(out, Box::into_raw(Box::new(CadsFilter { state })), "out")
    })
}

/// Admission test without any state change.
///
/// # Safety
/// `filter` must come from `cads_filter_new`; `admitted` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cads_filter_admit(
    filter: *const CadsFilter,
    loss: f64,
    admitted: *mut bool,
) -> CadsStatus {
    guard(|| {
        let f = filter.as_ref().ok_or(Fail::Null("filter"))?;
        let d = f.state.admit(loss);
        if d.numeric_error {
            return Err(Error::Numeric(format!("loss {loss} is not finite")).into());
        }
        write(admitted, d.admitted, "admitted")
    })
}

/// Admission test followed, if admitted, by the mean/threshold update. The
/// caller is responsible for training its scorer on admitted samples.
///
/// # Safety
/// `filter` must come from `cads_filter_new`; `admitted` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cads_filter_observe(
    filter: *mut CadsFilter,
    loss: f64,
    admitted: *mut bool,
) -> CadsStatus {
    guard(|| {
        let f = mut_ref(filter, "filter")?;
        let d = f.state.admit(loss);
        if d.numeric_error {
            return Err(Error::Numeric(format!("loss {loss} is not finite")).into());
        }
        if d.admitted {
            f.state = f.state.update(&d)?;
        }
        write(admitted, d.admitted, "admitted")
    })
}

/// # Safety
/// `filter` must come from `cads_filter_new`; `mu` and `tau` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cads_filter_stats(filter: *const CadsFilter, mu: *mut f64, tau: *mut f64) -> CadsStatus {
    guard(|| {
        let f = filter.as_ref().ok_or(Fail::Null("filter"))?;
        write(mu, f.state.mu, "mu")?;
        write(tau, f.state.tau, "tau")
    })
}

/// # Safety
/// `filter` must come from `cads_filter_new` or be null.
#[no_mangle]
pub unsafe extern "C" fn cads_filter_free(filter: *mut CadsFilter) {
    if !filter.is_null() {
        drop(Box::from_raw(filter));
    }
}

// ----------------------------------------------------------- autoencoder

/// 784→256→64→256→784 autoencoder trained with Adam at `lr`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cads_autoencoder_new(seed: u64, lr: f64, out: *mut *mut CadsAutoencoder) -> CadsStatus {
    guard(|| {
        let inner = MnistAutoencoder::new(&AutoencoderConfig {
            seed,
            lr,
            ..AutoencoderConfig::default()
        })?;
        write(out, Box::into_raw(Box::new(CadsAutoencoder { inner })), "out")
    })
}

unsafe fn image(pixels: *const f32, len: usize) -> Result<Tensor, Fail> {
    if len != IMAGE_PIXELS {
        return Err(Error::Dimension(format!("expected {IMAGE_PIXELS} pixels, got {len}")).into());
    }
    Ok(Tensor::new([1, IMAGE_PIXELS], slice(pixels, len, "pixels")?.to_vec())?)
}

/// Reconstruction loss of one image with pixels scaled to [-1, 1].
///
/// # Safety
/// `ae` must come from `cads_autoencoder_new`; `pixels` must hold `len`
/// floats; `loss` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cads_autoencoder_score(
    ae: *const CadsAutoencoder,
    pixels: *const f32,
    len: usize,
    loss: *mut f64,
) -> CadsStatus {
    guard(|| {
        let a = ae.as_ref().ok_or(Fail::Null("autoencoder"))?;
        let v = a.inner.score(&image(pixels, len)?)?;
        write(loss, v, "loss")
    })
}

/// One training step; `loss` receives the pre-update loss.
///
/// # Safety
/// As for `cads_autoencoder_score`.
#[no_mangle]
pub unsafe extern "C" fn cads_autoencoder_train(
    ae: *mut CadsAutoencoder,
    pixels: *const f32,
    len: usize,
    loss: *mut f64,
) -> CadsStatus {
    guard(|| {
        let a = mut_ref(ae, "autoencoder")?;
        let v = a.inner.train_step(&image(pixels, len)?)?;
        write(loss, v, "loss")
    })
}

/// # Safety
/// `ae` must come from `cads_autoencoder_new` or be null.
#[no_mangle]
pub unsafe extern "C" fn cads_autoencoder_free(ae: *mut CadsAutoencoder) {
    if !ae.is_null() {
        drop(Box::from_raw(ae));
    }
}

// ---------------------------------------------------------------- model

/// Frame scorer. `config_toml` may be null for the defaults; otherwise it
/// holds model settings (`height`, `width`, `lambda`, `[generator]`, ...).
///
/// # Safety
/// `config_toml` must be null or NUL-terminated; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cads_model_new(config_toml: *const c_char, out: *mut *mut CadsModel) -> CadsStatus {
    guard(|| {
        let cfg = if config_toml.is_null() {
            CadConfig::default()
        } else {
            toml::from_str(&string(config_toml, "config_toml")?)
                .map_err(|e| Error::Config(format!("invalid model config: {e}")))?
        };
        let inner = CadModel::new(&cfg)?;
        write(out, Box::into_raw(Box::new(CadsModel { inner })), "out")
    })
}

unsafe fn pair(m: &CadModel, prev: *const f32, curr: *const f32, len: usize) -> Result<FramePair, Fail> {
    let c = m.config();
    let shape = [1, c.channels, c.height, c.width];
    let n: usize = shape.iter().product();
    if len != n {
        return Err(Error::Dimension(format!("expected {n} values per frame, got {len}")).into());
    }
    let p = Tensor::new(shape, slice(prev, len, "prev")?.to_vec())?;
    let q = Tensor::new(shape, slice(curr, len, "curr")?.to_vec())?;
    Ok(FramePair::new(p, q)?)
}

/// Anomaly score (reconstruction loss) of the pair. Frames are
/// channel-major `C×H×W` arrays with values in [-1, 1].
///
/// # Safety
/// `model` must come from `cads_model_new`; `prev` and `curr` must hold
/// `len` floats; `loss` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cads_model_score(
    model: *const CadsModel,
    prev: *const f32,
    curr: *const f32,
    len: usize,
    loss: *mut f64,
) -> CadsStatus {
    guard(|| {
        let m = model.as_ref().ok_or(Fail::Null("model"))?;
        let v = m.inner.reconstruction_loss(&pair(&m.inner, prev, curr, len)?)?;
        write(loss, v, "loss")
    })
}

/// One coupled training step; `loss` receives the pre-update reconstruction
/// loss. Parameters are unchanged if the step fails.
///
/// # Safety
/// As for `cads_model_score`.
#[no_mangle]
pub unsafe extern "C" fn cads_model_train(
    model: *mut CadsModel,
    prev: *const f32,
    curr: *const f32,
    len: usize,
    loss: *mut f64,
) -> CadsStatus {
    guard(|| {
        let m = mut_ref(model, "model")?;
        let p = pair(&m.inner, prev, curr, len)?;
        let v = m.inner.train_step(&p)?.reconstruction;
        write(loss, v, "loss")
    })
}

/// Writes a CADM checkpoint.
///
/// # Safety
/// `model` must come from `cads_model_new`; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn cads_model_save(model: *const CadsModel, path: *const c_char) -> CadsStatus {
    guard(|| {
        let m = model.as_ref().ok_or(Fail::Null("model"))?;
        Ok(m.inner.save(&PathBuf::from(string(path, "path")?))?)
    })
}

/// Loads a CADM checkpoint into a model of the same configuration.
///
/// # Safety
/// As for `cads_model_save`.
#[no_mangle]
pub unsafe extern "C" fn cads_model_load(model: *mut CadsModel, path: *const c_char) -> CadsStatus {
    guard(|| {
        let m = mut_ref(model, "model")?;
        Ok(m.inner.load(&PathBuf::from(string(path, "path")?))?)
    })
}

/// # Safety
/// `model` must come from `cads_model_new` or be null.
#[no_mangle]
pub unsafe extern "C" fn cads_model_free(model: *mut CadsModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

// -------------------------------------------------------------- metrics

unsafe fn labeled(scores: *const f64, labels: *const u8, n: usize) -> Result<LabeledScores, Fail> {
    let s = slice(scores, n, "scores")?.to_vec();
    let l = slice(labels, n, "labels")?.to_vec();
    Ok(LabeledScores::new(s, l)?)
}

/// Area under the ROC curve; higher scores mean more anomalous, labels are
/// 0 (normal) or 1 (anomalous).
///
/// # Safety
/// `scores` and `labels` must hold `n` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cads_auc(scores: *const f64, labels: *const u8, n: usize, out: *mut f64) -> CadsStatus {
    guard(|| {
        let v = auc(&labeled(scores, labels, n)?)?;
        write(out, v, "out")
    })
}

/// Equal error rate, with the same conventions as `cads_auc`.
///
/// # Safety
/// As for `cads_auc`.
#[no_mangle]
pub unsafe extern "C" fn cads_eer(scores: *const f64, labels: *const u8, n: usize, out: *mut f64) -> CadsStatus {
    guard(|| {
        let v = eer(&labeled(scores, labels, n)?)?;
        write(out, v, "out")
    })
}
