//! C ABI over the streaming detectors.
//!
//! Detectors are opaque heap handles created by `volcd_*_new` and released
//! with `volcd_*_free`. Every fallible call returns a [`VolcdStatus`]; the
//! message of the most recent failure on the calling thread is available from
//! [`volcd_last_error`]. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use volcd::afcd::{Afcd, AfcdConfig, MuNormalization};
use volcd::cafcd::{Cafcd, CafcdConfig};
use volcd::filters::WeightScheme;
use volcd::glr::{Glr, GlrConfig};
use volcd::{DetectionEvent, Error};

/// Result codes. `VOLCD_STATUS_OK` is zero.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VolcdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParameter = 2,
    NonFiniteSample = 3,
    ChannelMismatch = 4,
    Degenerate = 5,
    Internal = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VolcdWeightScheme {
    Triangular = 0,
    Uniform = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VolcdMuNormalization {
    Continuous = 0,
    AtDetection = 1,
}

/// Parameters of the adaptive detectors. Start from
/// [`volcd_afcd_params_default`] and override fields as needed.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct VolcdAfcdParams {
    pub mu: f64,
    pub slow_window: usize,
    pub fast_window: usize,
    pub desired_window: usize,
    pub gamma: f64,
    pub rho: f64,
    pub refractory: usize,
    pub weight_scheme: VolcdWeightScheme,
    pub mu_normalization: VolcdMuNormalization,
    pub seed: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct VolcdGlrParams {
    pub window: usize,
    pub threshold: f64,
    pub refractory: usize,
    pub min_location_segment: usize,
}

/// What one pushed sample produced.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct VolcdStep {
    /// False while the detector is still filling its windows.
    pub ready: bool,
    /// lambda, psi or the GLR statistic; NaN when not ready or undefined.
    pub statistic: f64,
    pub event: bool,
    pub detect_time: u64,
    pub has_location: bool,
    pub location: u64,
}

/// Opaque single-channel adaptive detector.
pub struct VolcdAfcd(Afcd);
/// Opaque cooperative multichannel detector.
pub struct VolcdCafcd(Cafcd);
/// Opaque single-channel GLR detector.
pub struct VolcdGlr(Glr);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> VolcdStatus {
    match e {
        Error::InvalidParameter { .. } => VolcdStatus::InvalidParameter,
        Error::NonFiniteSample { .. } => VolcdStatus::NonFiniteSample,
        Error::ChannelMismatch { .. } => VolcdStatus::ChannelMismatch,
        Error::Degenerate(_) => VolcdStatus::Degenerate,
        _ => VolcdStatus::Internal,
    }
}

/// Runs `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), VolcdStatus>) -> VolcdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => VolcdStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic");
            VolcdStatus::Internal
        }
    }
}

fn fail(e: Error) -> VolcdStatus {
    set_error(&e.to_string());
    status_of(&e)
}

fn null(what: &str) -> VolcdStatus {
    set_error(&format!("null pointer: {what}"));
    VolcdStatus::NullPointer
}

impl From<&VolcdAfcdParams> for AfcdConfig {
    fn from(p: &VolcdAfcdParams) -> Self {
        AfcdConfig {
            mu: p.mu,
            slow_window: p.slow_window,
            fast_window: p.fast_window,
            desired_window: p.desired_window,
            gamma: p.gamma,
            rho: p.rho,
            refractory: p.refractory,
            weight_scheme: match p.weight_scheme {
                VolcdWeightScheme::Triangular => WeightScheme::Triangular,
                VolcdWeightScheme::Uniform => WeightScheme::Uniform,
            },
            mu_normalization: match p.mu_normalization {
                VolcdMuNormalization::Continuous => MuNormalization::Continuous,
                VolcdMuNormalization::AtDetection => MuNormalization::AtDetection,
            },
            rng_seed: p.seed,
        }
    }
}

fn fill_event(step: &mut VolcdStep, event: Option<DetectionEvent>) {
    if let Some(e) = event {
        step.event = true;
        step.detect_time = e.detect_time as u64;
        if let Some(loc) = e.location_estimate {
            step.has_location = true;
            step.location = loc as u64;
        }
    }
}

fn not_ready() -> VolcdStep {
    VolcdStep {
        statistic: f64::NAN,
        ..Default::default()
    }
}

/// Message of the last failed call on this thread, or an empty string. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn volcd_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn volcd_status_str(status: VolcdStatus) -> *const c_char {
    let s: &'static [u8] = match status {
        VolcdStatus::Ok => b"ok\0",
        VolcdStatus::NullPointer => b"null pointer\0",
        VolcdStatus::InvalidParameter => b"invalid parameter\0",
        VolcdStatus::NonFiniteSample => b"non-finite sample\0",
        VolcdStatus::ChannelMismatch => b"channel count mismatch\0",
        VolcdStatus::Degenerate => b"degenerate statistic\0",
        VolcdStatus::Internal => b"internal error\0",
    };
    s.as_ptr().cast()
}

#[no_mangle]
pub extern "C" fn volcd_afcd_params_default() -> VolcdAfcdParams {
    let d = AfcdConfig::default();
    VolcdAfcdParams {
        mu: d.mu,
        slow_window: d.slow_window,
        fast_window: d.fast_window,
        desired_window: d.desired_window,
        gamma: d.gamma,
        rho: d.rho,
        refractory: d.refractory,
        weight_scheme: VolcdWeightScheme::Triangular,
        mu_normalization: VolcdMuNormalization::Continuous,
        seed: d.rng_seed,
    }
}

#[no_mangle]
pub extern "C" fn volcd_glr_params_default() -> VolcdGlrParams {
    let d = GlrConfig::default();
    VolcdGlrParams {
        window: d.window,
        threshold: d.threshold,
        refractory: d.refractory,
        min_location_segment: d.min_location_segment,
    }
}

/// Creates a single-channel adaptive detector in `*out`.
///
/// # Safety
/// `params` must be null or point to a valid struct; `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn volcd_afcd_new(params: *const VolcdAfcdParams, out: *mut *mut VolcdAfcd) -> VolcdStatus {
    guard(|| {
        let (Some(p), false) = (params.as_ref(), out.is_null()) else {
            return Err(null("params/out"));
        };
        let det = Afcd::new(AfcdConfig::from(p)).map_err(fail)?;
        *out = Box::into_raw(Box::new(VolcdAfcd(det)));
        Ok(())
    })
}

/// Feeds one sample. `step` may be null when the caller only needs the status.
///
/// # Safety
/// `handle` must come from [`volcd_afcd_new`] and not be freed; `step` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn volcd_afcd_push(handle: *mut VolcdAfcd, x: f64, step: *mut VolcdStep) -> VolcdStatus {
    guard(|| {
        let Some(h) = handle.as_mut() else {
            return Err(null("handle"));
        };
        let mut s = not_ready();
        if let Some(o) = h.0.step(x).map_err(fail)? {
            s.ready = true;
            s.statistic = o.lambda;
            fill_event(&mut s, o.event);
        }
        if let Some(dst) = step.as_mut() {
            *dst = s;
        }
        Ok(())
    })
}

/// # Safety
/// `handle` must be null or come from [`volcd_afcd_new`]; it must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn volcd_afcd_free(handle: *mut VolcdAfcd) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Creates a cooperative detector over `n_channels` channels with uniform
/// combiner weights. Channel `c` uses a dither seed derived from `params.seed`.
///
/// # Safety
/// As for [`volcd_afcd_new`].
#[no_mangle]
pub unsafe extern "C" fn volcd_cafcd_new(
    params: *const VolcdAfcdParams,
    n_channels: usize,
    out: *mut *mut VolcdCafcd,
) -> VolcdStatus {
    guard(|| {
        let (Some(p), false) = (params.as_ref(), out.is_null()) else {
            return Err(null("params/out"));
        };
        let cfg = CafcdConfig::uniform(&AfcdConfig::from(p), n_channels).map_err(fail)?;
        let det = Cafcd::new(cfg).map_err(fail)?;
        *out = Box::into_raw(Box::new(VolcdCafcd(det)));
        Ok(())
    })
}

/// Feeds one time-aligned sample of `n` channel values.
///
/// # Safety
/// `handle` must be live; `x` must point to `n` readable doubles; `step` null or writable.
#[no_mangle]
pub unsafe extern "C" fn volcd_cafcd_push(
    handle: *mut VolcdCafcd,
    x: *const f64,
    n: usize,
    step: *mut VolcdStep,
) -> VolcdStatus {
    guard(|| {
        let Some(h) = handle.as_mut() else {
            return Err(null("handle"));
        };
        if x.is_null() {
            return Err(null("x"));
        }
        let row = std::slice::from_raw_parts(x, n);
        let mut s = not_ready();
        if let Some(o) = h.0.step(row).map_err(fail)? {
            s.ready = true;
            s.statistic = o.psi;
            fill_event(&mut s, o.event);
        }
        if let Some(dst) = step.as_mut() {
            *dst = s;
        }
        Ok(())
    })
}

/// # Safety
/// `handle` must be null or come from [`volcd_cafcd_new`]; it must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn volcd_cafcd_free(handle: *mut VolcdCafcd) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// # Safety
/// As for [`volcd_afcd_new`].
#[no_mangle]
pub unsafe extern "C" fn volcd_glr_new(params: *const VolcdGlrParams, out: *mut *mut VolcdGlr) -> VolcdStatus {
    guard(|| {
        let (Some(p), false) = (params.as_ref(), out.is_null()) else {
            return Err(null("params/out"));
        };
        let cfg = GlrConfig {
            window: p.window,
            threshold: p.threshold,
            refractory: p.refractory,
            min_location_segment: p.min_location_segment,
        };
        let det = Glr::new(cfg).map_err(fail)?;
        *out = Box::into_raw(Box::new(VolcdGlr(det)));
        Ok(())
    })
}

/// Feeds one sample. Events carry the located change time.
///
/// # Safety
/// As for [`volcd_afcd_push`].
#[no_mangle]
pub unsafe extern "C" fn volcd_glr_push(handle: *mut VolcdGlr, x: f64, step: *mut VolcdStep) -> VolcdStatus {
    guard(|| {
        let Some(h) = handle.as_mut() else {
            return Err(null("handle"));
        };
        let mut s = not_ready();
        if let Some(o) = h.0.step(x).map_err(fail)? {
            s.ready = true;
            s.statistic = o.statistic.unwrap_or(f64::NAN);
            fill_event(&mut s, o.event);
        }
        if let Some(dst) = step.as_mut() {
            *dst = s;
        }
        Ok(())
    })
}

/// # Safety
/// `handle` must be null or come from [`volcd_glr_new`]; it must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn volcd_glr_free(handle: *mut VolcdGlr) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}
