//! C ABI over `smsat-core`.
//!
//! Every fallible call returns an [`SmsatStatus`]; on failure the message is
//! kept per thread and read back with [`smsat_last_error`]. Handles are opaque
//! and must be released with their matching `*_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use smsat_core::cam::Cam;
use smsat_core::encoder::{embed_clips, Encoder};
use smsat_core::features::{extract_features, FeatureParams, MelExtractor, FEATURE_DIM};
use smsat_core::io::{load_wav, AudioClip, ClassLabel};
use smsat_core::stats::{calmest_per_feature, welch_t};
use smsat_core::validation::rmse;
use smsat_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmsatStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Numeric = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

pub struct SmsatClip(AudioClip);
pub struct SmsatCam(Cam);
pub struct SmsatEncoder(Encoder);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> SmsatStatus {
    match e {
        Error::Io { .. } => SmsatStatus::Io,
        Error::Wav { .. } | Error::UnsupportedEncoding(..) | Error::Malformed { .. } | Error::ConfigMismatch(_) => {
            SmsatStatus::Format
        }
        Error::NonFinite(_) | Error::Degenerate(_) | Error::NoConvergence(_) => SmsatStatus::Numeric,
        Error::Clip { source, .. } => status_of(source),
        _ => SmsatStatus::InvalidArgument,
    }
}

struct Fail(SmsatStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(SmsatStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SmsatStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            SmsatStatus::Ok
        }
        Ok(Err(Fail(s, m))) => {
            set_error(m);
            s
        }
        Err(_) => {
            set_error("internal panic".into());
            SmsatStatus::Panic
        }
    }
}

unsafe fn slice<'a>(p: *const f64, n: usize, what: &str) -> Result<&'a [f64], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn c_path(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(SmsatStatus::InvalidArgument, "path is not UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn smsat_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next call on the same thread.
#[no_mangle]
pub extern "C" fn smsat_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn smsat_clip_load_wav(path: *const c_char, out: *mut *mut SmsatClip) -> SmsatStatus {
    guard(|| {
        let o = out_ref(out, "out")?;
        let clip = load_wav(&c_path(path)?)?;
        *o = Box::into_raw(Box::new(SmsatClip(clip)));
        Ok(())
    })
}

/// Copies `n` samples into a new clip.
///
/// # Safety
/// `samples` must point at `n` doubles; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn smsat_clip_from_samples(
    samples: *const f64,
    n: usize,
    rate: u32,
    out: *mut *mut SmsatClip,
) -> SmsatStatus {
    guard(|| {
        let o = out_ref(out, "out")?;
        let x = slice(samples, n, "samples")?;
        if rate == 0 {
            return Err(Fail(SmsatStatus::InvalidArgument, "rate must be positive".into()));
        }
        *o = Box::into_raw(Box::new(SmsatClip(AudioClip::new(x.to_vec(), rate))));
        Ok(())
    })
}

/// # Safety
/// `clip` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn smsat_clip_len(clip: *const SmsatClip) -> usize {
    clip.as_ref().map_or(0, |c| c.0.len())
}

/// # Safety
/// `clip` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn smsat_clip_rate(clip: *const SmsatClip) -> u32 {
    clip.as_ref().map_or(0, |c| c.0.rate)
}

/// # Safety
/// `clip` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn smsat_clip_free(clip: *mut SmsatClip) {
    if !clip.is_null() {
        drop(Box::from_raw(clip));
    }
}

/// Writes the 25-value descriptor (default extractor settings) to `out`.
///
/// # Safety
/// `out` must have room for 25 doubles.
#[no_mangle]
pub unsafe extern "C" fn smsat_extract_features(clip: *const SmsatClip, out: *mut f64) -> SmsatStatus {
    guard(|| {
        let c = clip.as_ref().ok_or_else(|| null("clip"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let ex = MelExtractor::new(FeatureParams::default())?;
        let v = extract_features(&c.0, &ex)?;
        std::slice::from_raw_parts_mut(out, FEATURE_DIM).copy_from_slice(&v.0);
        Ok(())
    })
}

/// Magnitude of the analytic signal of `x` into `out` (both length `n`).
///
/// # Safety
/// `x` and `out` must point at `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn smsat_analytic_envelope(x: *const f64, n: usize, out: *mut f64) -> SmsatStatus {
    guard(|| {
        let x = slice(x, n, "x")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let env = smsat_core::dsp::analytic_envelope(x)?;
        std::slice::from_raw_parts_mut(out, n).copy_from_slice(&env);
        Ok(())
    })
}

/// # Safety
/// `x` and `y` must point at `n` doubles; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn smsat_rmse(x: *const f64, y: *const f64, n: usize, out: *mut f64) -> SmsatStatus {
    guard(|| {
        let o = out_ref(out, "out")?;
        *o = rmse(slice(x, n, "x")?, slice(y, n, "y")?)?;
        Ok(())
    })
}

/// Welch's unequal-variance t-test. Any of the outputs may be NULL.
///
/// # Safety
/// `a` and `b` must point at `na` and `nb` doubles.
#[no_mangle]
pub unsafe extern "C" fn smsat_welch_t(
    a: *const f64,
    na: usize,
    b: *const f64,
    nb: usize,
    t: *mut f64,
    df: *mut f64,
    p: *mut f64,
) -> SmsatStatus {
    guard(|| {
        let w = welch_t(slice(a, na, "a")?, slice(b, nb, "b")?)?;
        for (dst, v) in [(t, w.t), (df, w.df), (p, w.p)] {
            if let Some(d) = dst.as_mut() {
                *d = v;
            }
        }
        Ok(())
    })
}

/// Class with the lowest of three means given in SM, M, NS order. Writes the
/// class index (0 SM, 1 M, 2 NS) and whether a tie was broken.
///
/// # Safety
/// `means` must point at 3 doubles; `label` a valid pointer; `tie` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn smsat_calmest(means: *const f64, label: *mut i32, tie: *mut bool) -> SmsatStatus {
    guard(|| {
        let m = slice(means, 3, "means")?;
        let o = out_ref(label, "label")?;
        let pairs: Vec<(ClassLabel, f64)> = ClassLabel::ALL.into_iter().zip(m.iter().copied()).collect();
        let pick = calmest_per_feature(&pairs)?;
        *o = pick.label.index() as i32;
        if let Some(t) = tie.as_mut() {
            *t = pick.tie;
        }
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn smsat_cam_load(path: *const c_char, out: *mut *mut SmsatCam) -> SmsatStatus {
    guard(|| {
        let o = out_ref(out, "out")?;
        *o = Box::into_raw(Box::new(SmsatCam(Cam::load(&c_path(path)?)?)));
        Ok(())
    })
}

/// Classifies `n_rows` row-major 25-value rows. `labels` receives class
/// indices; `proba` (may be NULL) receives `n_rows * 3` probabilities.
///
/// # Safety
/// Buffers must match the sizes above.
#[no_mangle]
pub unsafe extern "C" fn smsat_cam_predict(
    cam: *const SmsatCam,
    rows: *const f64,
    n_rows: usize,
    labels: *mut i32,
    proba: *mut f64,
) -> SmsatStatus {
    guard(|| {
        let c = cam.as_ref().ok_or_else(|| null("cam"))?;
        let flat = slice(rows, n_rows * FEATURE_DIM, "rows")?;
        if n_rows == 0 {
            return Ok(());
        }
        if labels.is_null() {
            return Err(null("labels"));
        }
        let rows: Vec<Vec<f64>> = flat.chunks(FEATURE_DIM).map(<[f64]>::to_vec).collect();
        let p = c.0.predict_proba(&rows)?;
        let lab = std::slice::from_raw_parts_mut(labels, n_rows);
        for (i, pi) in p.iter().enumerate() {
            let best = pi
                .iter()
                .enumerate()
                .fold(0, |b, (k, v)| if *v > pi[b] { k } else { b });
            lab[i] = best as i32;
        }
        if !proba.is_null() {
            let dst = std::slice::from_raw_parts_mut(proba, n_rows * 3);
            for (chunk, pi) in dst.chunks_mut(3).zip(&p) {
                chunk.copy_from_slice(pi);
            }
        }
        Ok(())
    })
}

/// # Safety
/// `cam` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn smsat_cam_free(cam: *mut SmsatCam) {
    if !cam.is_null() {
        drop(Box::from_raw(cam));
    }
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn smsat_encoder_load(path: *const c_char, out: *mut *mut SmsatEncoder) -> SmsatStatus {
    guard(|| {
        let o = out_ref(out, "out")?;
        *o = Box::into_raw(Box::new(SmsatEncoder(Encoder::load(&c_path(path)?)?)));
        Ok(())
    })
}

/// Embeds one clip. `len` receives the embedding length; if `cap` is smaller
/// nothing is written and `BufferTooSmall` is returned.
///
/// # Safety
/// `out` must have room for `cap` doubles; `len` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn smsat_encoder_embed(
    enc: *const SmsatEncoder,
    clip: *const SmsatClip,
    out: *mut f64,
    cap: usize,
    len: *mut usize,
) -> SmsatStatus {
    guard(|| {
        let e = enc.as_ref().ok_or_else(|| null("encoder"))?;
        let c = clip.as_ref().ok_or_else(|| null("clip"))?;
        let l = out_ref(len, "len")?;
        let v = embed_clips(&e.0, std::slice::from_ref(&c.0), 1)?.remove(0).vector;
        *l = v.len();
        if cap < v.len() {
            return Err(Fail(SmsatStatus::BufferTooSmall, format!("need {} doubles, got {cap}", v.len())));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        std::slice::from_raw_parts_mut(out, v.len()).copy_from_slice(&v);
        Ok(())
    })
}

/// # Safety
/// `enc` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn smsat_encoder_free(enc: *mut SmsatEncoder) {
    if !enc.is_null() {
        drop(Box::from_raw(enc));
    }
}
