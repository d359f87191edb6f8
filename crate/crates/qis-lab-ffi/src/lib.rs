//! C ABI surface for the qis-lab workbench.
//!
//! All functions are panic-safe: panics are caught at the boundary and
//! reported as `QL_STATUS_INTERNAL`. Handle types are opaque; callers own
//! them and must release them with the matching `_free` function. Error
//! details for the most recent failure on the current thread are available
//! via `ql_last_error`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use qis_lab::codebook::SplitVqModel;
use qis_lab::hrn::{forward, init_params, load_params, save_params, HrnConfig, HrnParams};
use qis_lab::nn::Mode;
use qis_lab::stego::{derive_seed, gen_cover, gen_stego, LatentSourceConfig, QisMatrix};
use qis_lab::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[allow(non_camel_case_types)]
pub enum QlStatus {
    QL_STATUS_OK = 0,
    QL_STATUS_NULL_ARGUMENT = 1,
    QL_STATUS_INVALID_ARGUMENT = 2,
    QL_STATUS_IO = 3,
    QL_STATUS_BAD_FILE = 4,
    QL_STATUS_INTERNAL = 5,
}

use QlStatus::*;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg).unwrap_or_else(|_| CString::new("invalid error text").unwrap());
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> QlStatus {
    match err {
        Error::InvalidArgument(_) | Error::ShapeMismatch(_) => QL_STATUS_INVALID_ARGUMENT,
        Error::Io { .. } => QL_STATUS_IO,
        Error::Format { .. }
        | Error::Stream { .. }
        | Error::BadMagic
        | Error::VersionMismatch(_)
        | Error::Truncated(_) => QL_STATUS_BAD_FILE,
    }
}

fn fail(err: Error) -> QlStatus {
    let status = status_of(&err);
    set_error(err.to_string());
    status
}

fn guard(f: impl FnOnce() -> QlStatus) -> QlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => {
            set_error("internal panic".into());
            QL_STATUS_INTERNAL
        }
    }
}

/// Message for the most recent failure on this thread, or null if none.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ql_last_error() -> *const c_char {
    LAST_ERROR.with(|e| match &*e.borrow() {
        Some(c) => c.as_ptr(),
        None => std::ptr::null(),
    })
}

/// A split vector-quantization codec model with its sub-codebook partitions.
pub struct QlCodec {
    model: SplitVqModel,
}

/// A detector: network parameters plus their architecture configuration.
pub struct QlDetector {
    params: HrnParams,
    cfg: HrnConfig,
}

/// Build the default codec model (codebook sizes 128/32/32) from a seed.
#[no_mangle]
pub extern "C" fn ql_codec_new_default(seed: u64) -> *mut QlCodec {
    match catch_unwind(|| QlCodec { model: SplitVqModel::default_from_seed(seed) }) {
        Ok(c) => Box::into_raw(Box::new(c)),
        Err(_) => {
            set_error("internal panic".into());
            std::ptr::null_mut()
        }
    }
}

/// Release a codec handle. Null is ignored.
#[no_mangle]
pub extern "C" fn ql_codec_free(codec: *mut QlCodec) {
    if !codec.is_null() {
        drop(unsafe { Box::from_raw(codec) });
    }
}

/// Number of codebook entries per track, written to `sizes_out[3]`.
///
/// # Safety
/// `sizes_out` must point to at least 3 writable u32 values.
#[no_mangle]
pub unsafe extern "C" fn ql_codec_sizes(codec: *const QlCodec, sizes_out: *mut u32) -> QlStatus {
    guard(|| {
        if codec.is_null() || sizes_out.is_null() {
            set_error("null argument".into());
            return QL_STATUS_NULL_ARGUMENT;
        }
        let sizes = unsafe { &*codec }.model.sizes();
        for (i, &s) in sizes.iter().enumerate() {
            unsafe { *sizes_out.add(i) = s as u32 };
        }
        QL_STATUS_OK
    })
}

/// Generate a QIS sample of `t` frames at the given embedding rate (0 for a
/// cover sample). Indices are written row-major to `indices_out[t * 3]`.
///
/// # Safety
/// `indices_out` must point to at least `t * 3` writable u32 values.
#[no_mangle]
pub unsafe extern "C" fn ql_codec_gen_qis(
    codec: *const QlCodec,
    t: usize,
    rate: f64,
    seed: u64,
    indices_out: *mut u32,
) -> QlStatus {
    guard(|| {
        if codec.is_null() || indices_out.is_null() {
            set_error("null argument".into());
            return QL_STATUS_NULL_ARGUMENT;
        }
        let model = &unsafe { &*codec }.model;
        let latent = LatentSourceConfig::default_for(model, seed);
        let qis = if rate == 0.0 {
            gen_cover(model, &latent, t)
        } else {
            gen_stego(model, &latent, t, rate, derive_seed(seed, 1), &[0, 1, 2])
                .map(|s| s.qis)
        };
        match qis {
            Ok(qis) => {
                for (i, frame) in qis.frames.iter().enumerate() {
                    for (j, &idx) in frame.iter().enumerate() {
                        unsafe { *indices_out.add(i * 3 + j) = idx as u32 };
                    }
                }
                QL_STATUS_OK
            }
            Err(e) => fail(e),
        }
    })
}

/// Build a freshly initialized detector with the default architecture for
/// the default codec vocabulary.
#[no_mangle]
pub extern "C" fn ql_detector_new_default(seed: u64) -> *mut QlDetector {
    match catch_unwind(|| {
        let cfg = HrnConfig::desk_default([128, 32, 32]);
        init_params(&cfg, seed).map(|params| QlDetector { params, cfg })
    }) {
        Ok(Ok(d)) => Box::into_raw(Box::new(d)),
        Ok(Err(e)) => {
            fail(e);
            std::ptr::null_mut()
        }
        Err(_) => {
            set_error("internal panic".into());
            std::ptr::null_mut()
        }
    }
}

/// Load a detector from a parameter file. Returns null on failure; see
/// `ql_last_error`.
///
/// # Safety
/// `path` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ql_detector_load(path: *const c_char) -> *mut QlDetector {
    if path.is_null() {
        set_error("null argument".into());
        return std::ptr::null_mut();
    }
    let path = match unsafe { CStr::from_ptr(path) }.to_str() {
        Ok(s) => s.to_owned(),
        Err(_) => {
            set_error("path is not valid UTF-8".into());
            return std::ptr::null_mut();
        }
    };
    match catch_unwind(|| load_params(Path::new(&path))) {
        Ok(Ok((params, cfg))) => Box::into_raw(Box::new(QlDetector { params, cfg })),
        Ok(Err(e)) => {
            fail(e);
            std::ptr::null_mut()
        }
        Err(_) => {
            set_error("internal panic".into());
            std::ptr::null_mut()
        }
    }
}

/// Save a detector to a parameter file.
///
/// # Safety
/// `path` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ql_detector_save(
    detector: *const QlDetector,
    path: *const c_char,
) -> QlStatus {
    guard(|| {
        if detector.is_null() || path.is_null() {
            set_error("null argument".into());
            return QL_STATUS_NULL_ARGUMENT;
        }
        let path = match unsafe { CStr::from_ptr(path) }.to_str() {
            Ok(s) => s,
            Err(_) => {
                set_error("path is not valid UTF-8".into());
                return QL_STATUS_INVALID_ARGUMENT;
            }
        };
        let det = unsafe { &*detector };
        match save_params(&det.params, &det.cfg, Path::new(path)) {
            Ok(()) => QL_STATUS_OK,
            Err(e) => fail(e),
        }
    })
}

/// Release a detector handle. Null is ignored.
#[no_mangle]
pub extern "C" fn ql_detector_free(detector: *mut QlDetector) {
    if !detector.is_null() {
        drop(unsafe { Box::from_raw(detector) });
    }
}

/// Minimum number of frames the detector accepts per sample.
#[no_mangle]
pub extern "C" fn ql_detector_min_frames(detector: *const QlDetector) -> usize {
    if detector.is_null() {
        return 0;
    }
    unsafe { &*detector }.cfg.min_frames()
}

/// Classify one sample of `t` frames given row-major `indices[t * 3]`.
/// Writes the stego probability and the label (0 cover, 1 stego).
///
/// # Safety
/// `indices` must point to at least `t * 3` readable u32 values;
/// `prob_stego_out` and `label_out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ql_detector_predict(
    detector: *const QlDetector,
    indices: *const u32,
    t: usize,
    prob_stego_out: *mut f64,
    label_out: *mut i32,
) -> QlStatus {
    guard(|| {
        if detector.is_null() || indices.is_null() || prob_stego_out.is_null()
            || label_out.is_null()
        {
            set_error("null argument".into());
            return QL_STATUS_NULL_ARGUMENT;
        }
        let det = unsafe { &*detector };
        let mut frames = Vec::with_capacity(t);
        for i in 0..t {
            let mut frame = [0usize; 3];
            for (j, slot) in frame.iter_mut().enumerate() {
                let idx = unsafe { *indices.add(i * 3 + j) } as usize;
                if idx >= det.cfg.vocab_sizes[j] {
                    set_error(format!(
                        "frame {i} track {j} index {idx} out of range 0..{}",
                        det.cfg.vocab_sizes[j]
                    ));
                    return QL_STATUS_INVALID_ARGUMENT;
                }
                *slot = idx;
            }
            frames.push(frame);
        }
        let qis = QisMatrix { frames, vocab: det.cfg.vocab_sizes, frame_rate: 100 };
        match forward(&det.params, &det.cfg, &qis, Mode::Infer, 0) {
            Ok(out) => {
                unsafe {
                    *prob_stego_out = out.probs[1];
                    *label_out = i32::from(out.probs[1] > out.probs[0]);
                }
                QL_STATUS_OK
            }
            Err(e) => fail(e),
        }
    })
}
