//! C ABI over the `nafx` inference path.
//!
//! Every function returns a [`NafxStatus`]; on failure a message for the
//! calling thread is available from [`nafx_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use nafx::model::Model;
use nafx::training::process_clip;
use nafx::Error;

/// Result codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NafxStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    BadCheckpoint = 4,
    NonFinite = 5,
    Panic = 6,
}

/// A loaded model. Opaque to C.
pub struct NafxModel {
    inner: Model,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<Vec<u8>>) {
    let mut bytes = msg.into();
    bytes.retain(|&b| b != 0);
    let c = CString::new(bytes).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> NafxStatus {
    match e {
        Error::Io { .. } => NafxStatus::Io,
        Error::Checkpoint(_) | Error::Config(_) => NafxStatus::BadCheckpoint,
        Error::NonFinite { .. } => NafxStatus::NonFinite,
        _ => NafxStatus::InvalidArgument,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (NafxStatus, String)>) -> NafxStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => NafxStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            NafxStatus::Panic
        }
    }
}

fn fail(e: Error) -> (NafxStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (NafxStatus, String) {
    (NafxStatus::NullPointer, format!("{what} is null"))
}

/// Loads a checkpoint file. On success `*out` owns a model that must be
/// released with [`nafx_model_free`].
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn nafx_model_load(
    path: *const c_char,
    out: *mut *mut NafxModel,
) -> NafxStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = std::ptr::null_mut();
        if path.is_null() {
            return Err(null("path"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| (NafxStatus::InvalidArgument, "path is not UTF-8".to_string()))?;
        let inner = Model::load(Path::new(path)).map_err(fail)?;
        *out = Box::into_raw(Box::new(NafxModel { inner }));
        Ok(())
    })
}

/// Loads a checkpoint from memory.
///
/// # Safety
/// `data` must point to `len` readable bytes and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn nafx_model_load_bytes(
    data: *const u8,
    len: usize,
    out: *mut *mut NafxModel,
) -> NafxStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = std::ptr::null_mut();
        if data.is_null() {
            return Err(null("data"));
        }
        let (config, params) =
            nafx::model::checkpoint_from_bytes(std::slice::from_raw_parts(data, len))
                .map_err(fail)?;
        *out = Box::into_raw(Box::new(NafxModel {
            inner: Model { config, params },
        }));
        Ok(())
    })
}

/// Releases a model; null is ignored.
///
/// # Safety
/// `model` must come from a load function and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn nafx_model_free(model: *mut NafxModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Samples per model frame, or 0 for a null model.
///
/// # Safety
/// `model` must be null or a live model.
#[no_mangle]
pub unsafe extern "C" fn nafx_model_frame_size(model: *const NafxModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.config.frame_size)
}

/// Sample rate the model was trained at, or 0 for a null model.
///
/// # Safety
/// `model` must be null or a live model.
#[no_mangle]
pub unsafe extern "C" fn nafx_model_sample_rate(model: *const NafxModel) -> u32 {
    model.as_ref().map_or(0, |m| m.inner.config.sample_rate)
}

/// Processes `len` samples with frame hop `hop`, writing `len` samples to
/// `output`. The buffers may not overlap.
///
/// # Safety
/// `input` and `output` must each point to `len` valid floats.
#[no_mangle]
pub unsafe extern "C" fn nafx_model_process(
    model: *const NafxModel,
    input: *const f32,
    len: usize,
    hop: usize,
    output: *mut f32,
) -> NafxStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if input.is_null() {
            return Err(null("input"));
        }
        if output.is_null() {
            return Err(null("output"));
        }
        if len == 0 {
            return Err((NafxStatus::InvalidArgument, "len is 0".into()));
        }
        let x = std::slice::from_raw_parts(input, len);
        let y = process_clip(x, &m.inner.params, &m.inner.config, hop, 32).map_err(fail)?;
        std::slice::from_raw_parts_mut(output, len).copy_from_slice(&y);
        Ok(())
    })
}

/// Message for the last failure on this thread; empty when none. Valid
/// until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn nafx_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Short name of a status code. Static storage.
#[no_mangle]
pub extern "C" fn nafx_status_str(status: NafxStatus) -> *const c_char {
    let s: &'static CStr = match status {
        NafxStatus::Ok => c"ok",
        NafxStatus::NullPointer => c"null pointer",
        NafxStatus::InvalidArgument => c"invalid argument",
        NafxStatus::Io => c"i/o error",
        NafxStatus::BadCheckpoint => c"bad checkpoint",
        NafxStatus::NonFinite => c"non-finite value",
        NafxStatus::Panic => c"internal panic",
    };
    s.as_ptr()
}
