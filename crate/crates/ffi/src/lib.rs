//! C ABI over `cvr-core`: load a detector checkpoint, score raw volumes,
//! fuse per-modality logits and vote a video verdict.
//!
//! Every function returns a [`CvrStatus`]. On failure the message is kept
//! per thread and read with [`cvr_last_error_message`]. Handles are opaque
//! and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use cvr_core::cvr::{read_cvrt, ModalityVolume};
use cvr_core::ensemble::{
    decide_clip, decide_video, fuse_logits, DetectorConfig, EnsembleWeights, Label, ModalityLogits,
};
use cvr_core::model::{load_checkpoint, ConvNet3D};
use cvr_core::{Error, TensorND};

/// Result of every call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CvrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Shape = 5,
    NonFinite = 6,
    Panic = 7,
}

/// A loaded single-modality classifier.
pub struct CvrModel {
    inner: ConvNet3D,
}

/// A float32 tensor read from a CVRT file.
pub struct CvrTensor {
    inner: TensorND,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> CvrStatus {
    match e {
        Error::Io { .. } | Error::MissingFile(_) => CvrStatus::Io,
        Error::BadMagic { .. }
        | Error::UnsupportedVersion(_)
        | Error::UnsupportedDtype(_)
        | Error::TruncatedPayload { .. }
        | Error::TruncatedHeader
        | Error::TrailingBytes(_)
        | Error::ParameterLength { .. }
        | Error::UnknownLayerKind(_)
        | Error::UnknownLayer(_)
        | Error::Json(_) => CvrStatus::Format,
        Error::Shape(_) | Error::InsufficientFrames { .. } => CvrStatus::Shape,
        Error::NonFinite(_) => CvrStatus::NonFinite,
        _ => CvrStatus::InvalidArgument,
    }
}

struct Fail(CvrStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(CvrStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> CvrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CvrStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            CvrStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| Fail(CvrStatus::InvalidArgument, "path is not UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cvr_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Loads a `.cvrm` checkpoint into `*out`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cvr_model_load(path: *const c_char, out: *mut *mut CvrModel) -> CvrStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = unsafe { path_arg(path)? };
        let inner = load_checkpoint(&path)?;
        unsafe { *out = Box::into_raw(Box::new(CvrModel { inner })) };
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`cvr_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cvr_model_free(model: *mut CvrModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Expected raw volume shape `C, T, H, W`, and the modality: 0 appearance,
/// 1 flow, 2 depth.
///
/// # Safety
/// `model` must be live; `dims` must hold 4 values; `modality` may be null.
#[no_mangle]
pub unsafe extern "C" fn cvr_model_input_dims(
    model: *const CvrModel,
    dims: *mut usize,
    modality: *mut u32,
) -> CvrStatus {
    guard(|| {
        let m = unsafe { model.as_ref() }.ok_or_else(|| null("model"))?;
        if dims.is_null() {
            return Err(null("dims"));
        }
        let [t, h, w] = m.inner.input_extent;
        let d = [m.inner.in_channels, t, h, w];
        unsafe { ptr::copy_nonoverlapping(d.as_ptr(), dims, 4) };
        if !modality.is_null() {
            unsafe { *modality = m.inner.modality.index() as u32 };
        }
        Ok(())
    })
}

/// Logit of one raw (unnormalized) `C*T*H*W` volume, row major.
///
/// # Safety
/// `model` must be live, `data` must hold `len` floats, `logit` writable.
#[no_mangle]
pub unsafe extern "C" fn cvr_model_predict(
    model: *const CvrModel,
    data: *const f32,
    len: usize,
    logit: *mut f64,
) -> CvrStatus {
    guard(|| {
        let m = unsafe { model.as_ref() }.ok_or_else(|| null("model"))?;
        if data.is_null() {
            return Err(null("data"));
        }
        if logit.is_null() {
            return Err(null("logit"));
        }
        let [t, h, w] = m.inner.input_extent;
        let dims = vec![m.inner.in_channels, t, h, w];
        let need: usize = dims.iter().product();
        if len != need {
            return Err(Fail(
                CvrStatus::Shape,
                format!("volume holds {len} floats, model needs {need}"),
            ));
        }
        let values = unsafe { std::slice::from_raw_parts(data, len) }.to_vec();
        let v = ModalityVolume::new(m.inner.modality, TensorND::new(dims, values)?)?;
        let l = m.inner.logit(&m.inner.prepare(&v)?)?;
        unsafe { *logit = l };
        Ok(())
    })
}

fn weights_of(w: &[f64; 3]) -> Result<EnsembleWeights, Fail> {
    Ok(EnsembleWeights::from_array(*w)?)
}

/// Weighted sum of appearance, flow and depth logits. `present[i] == 0`
/// marks a missing modality, which must carry zero weight.
///
/// # Safety
/// `logits`, `present` and `weights` must each hold 3 values.
#[no_mangle]
pub unsafe extern "C" fn cvr_fuse_logits(
    logits: *const f64,
    present: *const u8,
    weights: *const f64,
    out: *mut f64,
) -> CvrStatus {
    guard(|| {
        if logits.is_null() || present.is_null() || weights.is_null() || out.is_null() {
            return Err(null("argument"));
        }
        let (l, p, w) = unsafe {
            (
                std::slice::from_raw_parts(logits, 3),
                std::slice::from_raw_parts(present, 3),
                &*(weights as *const [f64; 3]),
            )
        };
        let fused = ModalityLogits([0, 1, 2].map(|i| (p[i] != 0).then_some(l[i])));
        let v = fuse_logits(&fused, &weights_of(w)?)?;
        unsafe { *out = v };
        Ok(())
    })
}

/// Clip decisions on `n` fused logits, then the epsilon vote. Writes 1 for
/// fake and 0 for real into `is_fake`, and the fake-clip fraction.
///
/// # Safety
/// `fused` must hold `n` values; `is_fake` writable; `fraction` may be null.
#[no_mangle]
pub unsafe extern "C" fn cvr_decide_video(
    fused: *const f64,
    n: usize,
    epsilon: f64,
    is_fake: *mut u8,
    fraction: *mut f64,
) -> CvrStatus {
    guard(|| {
        if fused.is_null() || is_fake.is_null() {
            return Err(null("argument"));
        }
        let config = DetectorConfig {
            epsilon,
            ..DetectorConfig::default()
        };
        config.validate()?;
        let logits = unsafe { std::slice::from_raw_parts(fused, n) };
        if let Some(bad) = logits.iter().find(|l| !l.is_finite()) {
            return Err(Fail(CvrStatus::NonFinite, format!("fused logit {bad}")));
        }
        let labels: Vec<Label> = logits.iter().map(|&l| decide_clip(l, &config)).collect();
        let v = decide_video(&labels, &config)?;
        unsafe {
            *is_fake = u8::from(v.label.is_fake());
            if !fraction.is_null() {
                *fraction = v.fake_fraction;
            }
        }
        Ok(())
    })
}

/// Reads a CVRT file into `*out`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cvr_cvrt_read(path: *const c_char, out: *mut *mut CvrTensor) -> CvrStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = unsafe { path_arg(path)? };
        let inner = read_cvrt(&path)?;
        unsafe { *out = Box::into_raw(Box::new(CvrTensor { inner })) };
        Ok(())
    })
}

/// Number of dimensions; 0 for a null handle.
///
/// # Safety
/// `t` must be live or null.
#[no_mangle]
pub unsafe extern "C" fn cvr_tensor_ndim(t: *const CvrTensor) -> usize {
    unsafe { t.as_ref() }.map_or(0, |t| t.inner.ndim())
}

/// Size of dimension `axis`; 0 when out of range.
///
/// # Safety
/// `t` must be live or null.
#[no_mangle]
pub unsafe extern "C" fn cvr_tensor_dim(t: *const CvrTensor, axis: usize) -> usize {
    unsafe { t.as_ref() }
        .and_then(|t| t.inner.dims().get(axis).copied())
        .unwrap_or(0)
}

/// Element count.
///
/// # Safety
/// `t` must be live or null.
#[no_mangle]
pub unsafe extern "C" fn cvr_tensor_len(t: *const CvrTensor) -> usize {
    unsafe { t.as_ref() }.map_or(0, |t| t.inner.len())
}

/// Row-major values, owned by the handle.
///
/// # Safety
/// `t` must be live or null.
#[no_mangle]
pub unsafe extern "C" fn cvr_tensor_data(t: *const CvrTensor) -> *const f32 {
    unsafe { t.as_ref() }.map_or(ptr::null(), |t| t.inner.data().as_ptr())
}

/// # Safety
/// `t` must come from [`cvr_cvrt_read`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cvr_tensor_free(t: *mut CvrTensor) {
    if !t.is_null() {
        drop(unsafe { Box::from_raw(t) });
    }
}
