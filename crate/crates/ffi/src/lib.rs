//! C ABI over the engine.
//!
//! Handles are opaque and owned by the caller until passed to the matching
//! `*_free`. Every fallible call returns a [`PtsegStatus`]; on failure the
//! message is kept per thread and read with [`ptseg_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ptseg::datasets::run_semisupervised;
use ptseg::metrics::{contour_f, default_tolerance, region_j, score_sequence};
use ptseg::synthetic::{render, OracleSegmenter, OracleTracker, SceneSpec};
use ptseg::{BinaryMask, Error, ObjectId, PipelineConfig, VideoSequence};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PtsegStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    NotFound = 3,
    Precondition = 4,
    Unsupported = 5,
    Protocol = 6,
    Transport = 7,
    Io = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

impl From<&Error> for PtsegStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidInput(_) | Error::EmptyMask | Error::InvalidDataset(_) | Error::Json(_) => {
                PtsegStatus::InvalidInput
            }
            Error::NotFound(_) => PtsegStatus::NotFound,
            Error::Precondition(_) => PtsegStatus::Precondition,
            Error::UnsupportedCapability(_) => PtsegStatus::Unsupported,
            Error::Protocol(_) => PtsegStatus::Protocol,
            Error::Transport(_) => PtsegStatus::Transport,
            Error::Io(_) => PtsegStatus::Io,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: PtsegStatus, msg: impl Into<String>) -> PtsegStatus {
    set_error(msg.into());
    status
}

/// Runs `f`, turning errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), PtsegStatus>) -> PtsegStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PtsegStatus::Ok,
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(PtsegStatus::Panic, msg)
        }
    }
}

fn engine_err(e: Error) -> PtsegStatus {
    let s = PtsegStatus::from(&e);
    fail(s, e.to_string())
}

unsafe fn c_str<'a>(p: *const c_char) -> Result<&'a str, PtsegStatus> {
    if p.is_null() {
        return Err(fail(PtsegStatus::NullPointer, "null string"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(PtsegStatus::InvalidInput, "string is not UTF-8"))
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn ptseg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Static version string.
#[no_mangle]
pub extern "C" fn ptseg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// A synthetic scene with oracle backends, a configuration and the latest run.
pub struct PtsegEngine {
    spec: SceneSpec,
    sequence: VideoSequence,
    config: PipelineConfig,
    masks: Option<std::collections::BTreeMap<ObjectId, Vec<Option<BinaryMask>>>>,
}

/// Renders a scene from its JSON spec. `out` receives a handle to free with
/// `ptseg_engine_free`.
///
/// # Safety
/// `scene_json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ptseg_engine_from_scene_json(
    scene_json: *const c_char,
    out: *mut *mut PtsegEngine,
) -> PtsegStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(PtsegStatus::NullPointer, "out is null"));
        }
        *out = ptr::null_mut();
        let spec: SceneSpec = serde_json::from_str(c_str(scene_json)?).map_err(|e| engine_err(e.into()))?;
        let sequence = render(&spec).map_err(engine_err)?;
        let engine = PtsegEngine {
            spec,
            sequence,
            config: PipelineConfig::default(),
            masks: None,
        };
        *out = Box::into_raw(Box::new(engine));
        Ok(())
    })
}

/// # Safety
/// `engine` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ptseg_engine_free(engine: *mut PtsegEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

unsafe fn engine_mut<'a>(engine: *mut PtsegEngine) -> Result<&'a mut PtsegEngine, PtsegStatus> {
    engine
        .as_mut()
        .ok_or_else(|| fail(PtsegStatus::NullPointer, "engine is null"))
}

/// Replaces the pipeline configuration; missing fields take defaults.
///
/// # Safety
/// `engine` must be a live handle; `config_json` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ptseg_engine_set_config_json(engine: *mut PtsegEngine, config_json: *const c_char) -> PtsegStatus {
    guard(|| {
        let e = engine_mut(engine)?;
        let cfg: PipelineConfig = serde_json::from_str(c_str(config_json)?).map_err(|e| engine_err(e.into()))?;
        cfg.validate().map_err(engine_err)?;
        e.config = cfg;
        Ok(())
    })
}

/// Frame count and size of the scene.
///
/// # Safety
/// `engine` must be a live handle; the out pointers writable.
#[no_mangle]
pub unsafe extern "C" fn ptseg_engine_dims(
    engine: *const PtsegEngine,
    frames: *mut usize,
    width: *mut u32,
    height: *mut u32,
) -> PtsegStatus {
    guard(|| {
        let e = engine
            .as_ref()
            .ok_or_else(|| fail(PtsegStatus::NullPointer, "engine is null"))?;
        if frames.is_null() || width.is_null() || height.is_null() {
            return Err(fail(PtsegStatus::NullPointer, "output pointer is null"));
        }
        *frames = e.sequence.len();
        *width = e.sequence.width();
        *height = e.sequence.height();
        Ok(())
    })
}

/// Runs the semi-supervised pipeline, seeding every object from its
/// first-appearance ground truth.
///
/// # Safety
/// `engine` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ptseg_engine_run(engine: *mut PtsegEngine) -> PtsegStatus {
    guard(|| {
        let e = engine_mut(engine)?;
        let mut tracker = OracleTracker::new(&e.spec).map_err(engine_err)?;
        let mut segmenter = OracleSegmenter::new(&e.spec).map_err(engine_err)?;
        let run = run_semisupervised(&e.sequence, &e.config, &mut tracker, &mut segmenter).map_err(engine_err)?;
        e.masks = Some(run.masks());
        Ok(())
    })
}

/// Copies the predicted mask of `object` on `frame` as `width * height`
/// bytes of 0 or 1, row-major.
///
/// # Safety
/// `engine` must be a live handle; `out` must hold `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn ptseg_engine_mask(
    engine: *const PtsegEngine,
    object: u32,
    frame: usize,
    out: *mut u8,
    len: usize,
) -> PtsegStatus {
    guard(|| {
        let e = engine
            .as_ref()
            .ok_or_else(|| fail(PtsegStatus::NullPointer, "engine is null"))?;
        let masks = e
            .masks
            .as_ref()
            .ok_or_else(|| fail(PtsegStatus::Precondition, "no run yet"))?;
        let m = masks
            .get(&ObjectId(object))
            .and_then(|v| v.get(frame))
            .and_then(|m| m.as_ref())
            .ok_or_else(|| fail(PtsegStatus::NotFound, format!("no mask for object {object} on frame {frame}")))?;
        let bytes = m.to_bytes();
        if out.is_null() {
            return Err(fail(PtsegStatus::NullPointer, "out is null"));
        }
        if len < bytes.len() {
            return Err(fail(
                PtsegStatus::BufferTooSmall,
                format!("need {} bytes, got {len}", bytes.len()),
            ));
        }
        ptr::copy_nonoverlapping(bytes.as_ptr(), out, bytes.len());
        Ok(())
    })
}

/// J&F of the latest run against the scene's ground truth.
///
/// # Safety
/// `engine` must be a live handle; `jf` writable.
#[no_mangle]
pub unsafe extern "C" fn ptseg_engine_score(engine: *const PtsegEngine, jf: *mut f64) -> PtsegStatus {
    guard(|| {
        let e = engine
            .as_ref()
            .ok_or_else(|| fail(PtsegStatus::NullPointer, "engine is null"))?;
        if jf.is_null() {
            return Err(fail(PtsegStatus::NullPointer, "jf is null"));
        }
        let masks = e
            .masks
            .as_ref()
            .ok_or_else(|| fail(PtsegStatus::Precondition, "no run yet"))?;
        let s = score_sequence(&e.sequence.name, &e.sequence.metrics_gt(), masks, None).map_err(engine_err)?;
        *jf = s.jf;
        Ok(())
    })
}

unsafe fn mask_arg(p: *const u8, width: u32, height: u32) -> Result<BinaryMask, PtsegStatus> {
    if p.is_null() {
        return Err(fail(PtsegStatus::NullPointer, "mask is null"));
    }
    let n = width as usize * height as usize;
    BinaryMask::from_bytes(width, height, std::slice::from_raw_parts(p, n)).map_err(engine_err)
}

/// Region similarity of two `width * height` byte masks (non-zero = set).
///
/// # Safety
/// Both buffers must hold `width * height` bytes; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ptseg_region_j(
    pred: *const u8,
    gt: *const u8,
    width: u32,
    height: u32,
    out: *mut f64,
) -> PtsegStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(PtsegStatus::NullPointer, "out is null"));
        }
        let (p, g) = (mask_arg(pred, width, height)?, mask_arg(gt, width, height)?);
        *out = region_j(&p, &g).map_err(engine_err)?;
        Ok(())
    })
}

/// Boundary F-measure; `tolerance` 0 selects the size-dependent default.
///
/// # Safety
/// Both buffers must hold `width * height` bytes; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ptseg_contour_f(
    pred: *const u8,
    gt: *const u8,
    width: u32,
    height: u32,
    tolerance: u32,
    out: *mut f64,
) -> PtsegStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(PtsegStatus::NullPointer, "out is null"));
        }
        let (p, g) = (mask_arg(pred, width, height)?, mask_arg(gt, width, height)?);
        let tol = if tolerance == 0 {
            default_tolerance(width, height)
        } else {
            tolerance
        };
        *out = contour_f(&p, &g, tol).map_err(engine_err)?;
        Ok(())
    })
}
