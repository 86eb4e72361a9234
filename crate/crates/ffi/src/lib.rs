//! C ABI over the stateless visaid operations: markup parsing, trace
//! metrics, point accuracy, equal-arc-length resampling and trace lifting.
//!
//! Every fallible function returns a [`VisaidStatus`]. On failure a message
//! is kept per thread and can be read with [`visaid_last_error`]. Strings and
//! documents handed out by the library must be released with the matching
//! `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use visaid::camera::CameraModel;
use visaid::coordsys::{ImageShape, NormBox, NormPoint, PixelPoint};
use visaid::eval::{self, Region};
use visaid::labelgen;
use visaid::lift::{self, LiftConfig, LiftError};
use visaid::markup::{self, MarkupDoc};
use visaid::mask::BinaryMask;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VisaidStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    ParseError = 3,
    InvalidArgument = 4,
    MissingDepth = 5,
    Panic = 6,
}

/// Parsed markup document. Opaque to C callers.
pub struct VisaidDoc {
    doc: MarkupDoc,
}

/// Point in the normalized 0..=999 frame.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VisaidNormPoint {
    pub x: u16,
    pub y: u16,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisaidPoint3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

/// Pinhole intrinsics; `depth_scale` is raw depth units per meter.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisaidCamera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub depth_scale: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisaidTraceMetrics {
    pub mae: f64,
    pub rmse: f64,
}

/// Optimizer settings for [`visaid_lift`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisaidLiftConfig {
    pub step_size: f64,
    pub max_iters: usize,
    pub tol: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let msg = CString::new(message.into().replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Failure(VisaidStatus, String);

fn fail<T>(status: VisaidStatus, message: impl Into<String>) -> Result<T, Failure> {
    Err(Failure(status, message.into()))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> VisaidStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => VisaidStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            VisaidStatus::Panic
        }
    }
}

/// Borrows `len` elements; a null pointer is accepted only when `len == 0`.
unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return fail(VisaidStatus::NullPointer, format!("{what} is null"));
    }
    // SAFETY: caller guarantees `p` points to `len` initialized elements.
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_slice<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if p.is_null() {
        return fail(VisaidStatus::NullPointer, format!("{what} is null"));
    }
    // SAFETY: caller guarantees `p` is writable for `len` elements.
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn norm_points(pts: &[VisaidNormPoint]) -> Result<Vec<NormPoint>, Failure> {
    pts.iter()
        .enumerate()
        .map(|(i, p)| {
            NormPoint::new(p.x, p.y).or_else(|e| fail(VisaidStatus::InvalidArgument, format!("point {i}: {e}")))
        })
        .collect()
}

fn xy_pairs(flat: &[f64], what: &str) -> Result<Vec<[f64; 2]>, Failure> {
    if flat.iter().any(|v| !v.is_finite()) {
        return fail(VisaidStatus::InvalidArgument, format!("{what} has a non-finite coordinate"));
    }
    Ok(flat.chunks_exact(2).map(|c| [c[0], c[1]]).collect())
}

fn shape(width: u32, height: u32) -> Result<ImageShape, Failure> {
    ImageShape::new(width, height).or_else(|e| fail(VisaidStatus::InvalidArgument, e.to_string()))
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn visaid_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Parses NUL-terminated UTF-8 markup. On a parse error `err_offset`
/// (optional) receives the byte offset of the failure.
///
/// # Safety
/// `text` must be a valid NUL-terminated string; `out` must be writable;
/// `err_offset` may be null.
#[no_mangle]
pub unsafe extern "C" fn visaid_parse(
    text: *const c_char,
    out: *mut *mut VisaidDoc,
    err_offset: *mut usize,
) -> VisaidStatus {
    guard(|| {
        if text.is_null() || out.is_null() {
            return fail(VisaidStatus::NullPointer, "text or out is null");
        }
        *out = ptr::null_mut();
        let s = CStr::from_ptr(text).to_str().or_else(|e| fail(VisaidStatus::InvalidUtf8, e.to_string()))?;
        match markup::parse_document(s) {
            Ok(doc) => {
                *out = Box::into_raw(Box::new(VisaidDoc { doc }));
                Ok(())
            }
            Err(e) => {
                if !err_offset.is_null() {
                    *err_offset = e.offset;
                }
                fail(VisaidStatus::ParseError, e.to_string())
            }
        }
    })
}

/// Serializes a document to JSON. Release the string with
/// [`visaid_string_free`].
///
/// # Safety
/// `doc` must come from [`visaid_parse`]; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn visaid_doc_to_json(doc: *const VisaidDoc, out_json: *mut *mut c_char) -> VisaidStatus {
    guard(|| {
        if doc.is_null() || out_json.is_null() {
            return fail(VisaidStatus::NullPointer, "doc or out_json is null");
        }
        let json = serde_json::to_string(&(*doc).doc).expect("document serializes");
        *out_json = CString::new(json).expect("JSON has no NUL").into_raw();
        Ok(())
    })
}

/// Canonical markup text of a document. Release with [`visaid_string_free`].
///
/// # Safety
/// `doc` must come from [`visaid_parse`]; `out_text` must be writable.
#[no_mangle]
pub unsafe extern "C" fn visaid_doc_to_markup(doc: *const VisaidDoc, out_text: *mut *mut c_char) -> VisaidStatus {
    guard(|| {
        if doc.is_null() || out_text.is_null() {
            return fail(VisaidStatus::NullPointer, "doc or out_text is null");
        }
        let text = markup::serialize(&(*doc).doc);
        *out_text = CString::new(text).or_else(|e| fail(VisaidStatus::InvalidArgument, e.to_string()))?.into_raw();
        Ok(())
    })
}

/// # Safety
/// `doc` must come from [`visaid_parse`] and not be freed twice. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn visaid_doc_free(doc: *mut VisaidDoc) {
    if !doc.is_null() {
        drop(Box::from_raw(doc));
    }
}

/// # Safety
/// `s` must come from this library and not be freed twice. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn visaid_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// MAE and RMSE between two traces given as interleaved `x, y` arrays in the
/// normalized frame. The prediction is resampled to the ground-truth length
/// when the lengths differ.
///
/// # Safety
/// `pred` and `gt` must hold `2 * pred_len` and `2 * gt_len` doubles; `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn visaid_trace_metrics(
    pred: *const f64,
    pred_len: usize,
    gt: *const f64,
    gt_len: usize,
    out: *mut VisaidTraceMetrics,
) -> VisaidStatus {
    guard(|| {
        let p = xy_pairs(slice(pred, 2 * pred_len, "pred")?, "pred")?;
        let g = xy_pairs(slice(gt, 2 * gt_len, "gt")?, "gt")?;
        let out = &mut out_slice(out, 1, "out")?[0];
        let m = eval::trace_metrics(&p, &g).or_else(|e| fail(VisaidStatus::InvalidArgument, e.to_string()))?;
        *out = VisaidTraceMetrics { mae: m.mae, rmse: m.rmse };
        Ok(())
    })
}

/// Fraction of points inside an inclusive normalized box `[x1, y1, x2, y2]`.
///
/// # Safety
/// `points` must hold `len` elements; `bbox` four; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn visaid_point_accuracy_box(
    points: *const VisaidNormPoint,
    len: usize,
    bbox: *const u16,
    out: *mut f64,
) -> VisaidStatus {
    guard(|| {
        let pts = norm_points(slice(points, len, "points")?)?;
        let b = slice(bbox, 4, "bbox")?;
        let b = NormBox::new(b[0], b[1], b[2], b[3]).or_else(|e| fail(VisaidStatus::InvalidArgument, e.to_string()))?;
        let out = &mut out_slice(out, 1, "out")?[0];
        *out = eval::point_accuracy(&pts, &Region::Box(b))
            .or_else(|e| fail(VisaidStatus::InvalidArgument, e.to_string()))?;
        Ok(())
    })
}

/// Fraction of points that land on a nonzero pixel of a row-major
/// `width × height` mask.
///
/// # Safety
/// `points` must hold `len` elements; `mask` `width * height` bytes; `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn visaid_point_accuracy_mask(
    points: *const VisaidNormPoint,
    len: usize,
    mask: *const u8,
    width: u32,
    height: u32,
    out: *mut f64,
) -> VisaidStatus {
    guard(|| {
        let pts = norm_points(slice(points, len, "points")?)?;
        let s = shape(width, height)?;
        let bytes = slice(mask, s.pixel_count() as usize, "mask")?;
        let m = BinaryMask::new(s, bytes.iter().map(|&b| b != 0).collect())
            .or_else(|e| fail(VisaidStatus::InvalidArgument, e.to_string()))?;
        let out = &mut out_slice(out, 1, "out")?[0];
        *out = eval::point_accuracy(&pts, &Region::Mask(m))
            .or_else(|e| fail(VisaidStatus::InvalidArgument, e.to_string()))?;
        Ok(())
    })
}

/// Resamples a pixel track (interleaved `u, v`) to `n` points at equal arc
/// length along its chord-length cubic spline, normalized to the image.
///
/// # Safety
/// `track` must hold `2 * len` doubles; `out` must be writable for `n` points.
#[no_mangle]
pub unsafe extern "C" fn visaid_resample_equidistant(
    track: *const f64,
    len: usize,
    width: u32,
    height: u32,
    n: usize,
    out: *mut VisaidNormPoint,
) -> VisaidStatus {
    guard(|| {
        let pairs = xy_pairs(slice(track, 2 * len, "track")?, "track")?;
        let px: Vec<PixelPoint> = pairs.iter().map(|&[u, v]| PixelPoint::new(u, v)).collect();
        let s = shape(width, height)?;
        let out = out_slice(out, n, "out")?;
        let pts = labelgen::resample_equidistant(&px, s, n)
            .or_else(|e| fail(VisaidStatus::InvalidArgument, e.to_string()))?;
        for (o, p) in out.iter_mut().zip(pts) {
            *o = VisaidNormPoint { x: p.x, y: p.y };
        }
        Ok(())
    })
}

/// Default optimizer settings.
#[no_mangle]
pub extern "C" fn visaid_lift_config_default() -> VisaidLiftConfig {
    let c = LiftConfig::default();
    VisaidLiftConfig { step_size: c.step_size, max_iters: c.max_iters, tol: c.tol }
}

/// Back-projects a normalized trace with per-point raw depths, optionally
/// optimizing the interior depths first. `config` may be null for defaults.
///
/// # Safety
/// `trace` and `depths` must hold `len` elements; `camera` must be valid;
/// `out` must be writable for `len` points.
#[no_mangle]
pub unsafe extern "C" fn visaid_lift(
    trace: *const VisaidNormPoint,
    depths: *const f64,
    len: usize,
    width: u32,
    height: u32,
    camera: *const VisaidCamera,
    optimize: bool,
    config: *const VisaidLiftConfig,
    out: *mut VisaidPoint3,
) -> VisaidStatus {
    guard(|| {
        let pts = norm_points(slice(trace, len, "trace")?)?;
        let d = slice(depths, len, "depths")?;
        let c = &slice(camera, 1, "camera")?[0];
        let cam = CameraModel::new(c.fx, c.fy, c.cx, c.cy, c.depth_scale)
            .or_else(|e| fail(VisaidStatus::InvalidArgument, e.to_string()))?;
        let mut lc = LiftConfig::default();
        if !config.is_null() {
            let cfg = &*config;
            lc.step_size = cfg.step_size;
            lc.max_iters = cfg.max_iters;
            lc.tol = cfg.tol;
        }
        let s = shape(width, height)?;
        let out = out_slice(out, len, "out")?;
        let res = lift::lift_with_depths(&pts, s, d, &cam, &lc, optimize).or_else(|e| match e {
            LiftError::MissingDepth { index } => {
                fail(VisaidStatus::MissingDepth, format!("missing depth at trace point {index}"))
            }
            other => fail(VisaidStatus::InvalidArgument, other.to_string()),
        })?;
        for (o, p) in out.iter_mut().zip(res.points) {
            *o = VisaidPoint3 { x: p.x, y: p.y, z: p.z };
        }
        Ok(())
    })
}
