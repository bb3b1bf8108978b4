//! C ABI for `noisecov`.
//!
//! Objects cross the boundary as opaque handles created by `nc_*_new`,
//! `nc_*_build`, `nc_panel_from_csv` or `nc_estimate`, and released with the
//! matching `nc_*_free`. Fallible calls return an [`NcStatus`]; on failure a
//! description is available from [`nc_last_error_message`] on the same thread.
//!
//! All functions catch panics and report them as `NC_STATUS_INTERNAL`.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use noisecov::{
    estimate, AsyncPanel, Error, Estimate, EstimatorConfig, Series, ThresholdRule, WindowRule,
};

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    InvalidPanel = 5,
    Estimation = 6,
    BufferTooSmall = 7,
    Internal = 8,
}

impl From<&Error> for NcStatus {
    fn from(e: &Error) -> Self {
        match e.kind() {
            "io" => NcStatus::Io,
            "parse" => NcStatus::Parse,
            "duplicate_observation" | "invalid_panel" | "empty_grid" => NcStatus::InvalidPanel,
            "estimation" | "factorization" | "non_convergence" => NcStatus::Estimation,
            _ => NcStatus::InvalidArgument,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn fail(status: NcStatus, msg: impl Into<String>) -> NcStatus {
    set_error(msg);
    status
}

fn fail_with(e: &Error) -> NcStatus {
    fail(NcStatus::from(e), e.to_string())
}

/// Runs `f`, mapping a panic to `Internal`.
fn guard(f: impl FnOnce() -> NcStatus) -> NcStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => fail(NcStatus::Internal, "internal panic"),
    }
}

/// Message of the last failed call on this thread, or NULL.
///
/// The pointer stays valid until the next `nc_*` call on the same thread.
#[no_mangle]
pub extern "C" fn nc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

const VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
    Ok(s) => s,
    Err(_) => panic!("version contains a nul byte"),
};

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn nc_version() -> *const c_char {
    VERSION.as_ptr()
}

/// Quadratic spectral kernel weight at `x`.
#[no_mangle]
pub extern "C" fn nc_qs_kernel(x: f64) -> f64 {
    noisecov::estimator::qs_kernel(x)
}

/// Accumulates observations before building a panel.
pub struct NcPanelBuilder {
    tick_duration: f64,
    obs: BTreeMap<String, Vec<(u64, f64)>>,
}

/// An immutable observation panel.
pub struct NcPanel {
    inner: AsyncPanel,
}

/// Result of an estimation run.
pub struct NcEstimate {
    inner: Estimate,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NcWindowKind {
    /// `k` common observations on each side.
    Index = 0,
    /// All common observations within `xi` years.
    Time = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NcThresholdKind {
    None = 0,
    Universal = 1,
    Adaptive = 2,
}

/// Estimator settings. Start from [`nc_estimator_config_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NcEstimatorConfig {
    pub window: NcWindowKind,
    pub k: usize,
    pub xi: f64,
    pub threshold: NcThresholdKind,
    /// Universal β, or the fallback β of the adaptive rule.
    pub beta: f64,
    pub diagonal_exempt: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct NcPanelSummary {
    /// Distinct observation ticks across all assets.
    pub n: usize,
    /// Smallest pairwise overlap (0 when some pair is disjoint).
    pub n_star: usize,
    pub n_pair_max: usize,
    /// Number of pairs with no common tick.
    pub empty_pairs: usize,
}

#[no_mangle]
pub extern "C" fn nc_estimator_config_default() -> NcEstimatorConfig {
    NcEstimatorConfig {
        window: NcWindowKind::Index,
        k: 6,
        xi: 0.0,
        threshold: NcThresholdKind::Adaptive,
        beta: 2.0,
        diagonal_exempt: false,
    }
}

impl NcEstimatorConfig {
    fn to_core(self) -> EstimatorConfig {
        let window = match self.window {
            NcWindowKind::Index => WindowRule::Index { k: self.k },
            NcWindowKind::Time => WindowRule::Time { xi: self.xi },
        };
        let threshold = match self.threshold {
            NcThresholdKind::None => ThresholdRule::None,
            NcThresholdKind::Universal => ThresholdRule::Universal { beta: self.beta },
            NcThresholdKind::Adaptive => ThresholdRule::Adaptive { fallback_beta: self.beta },
        };
        EstimatorConfig {
            window,
            threshold,
            diagonal_exempt: self.diagonal_exempt,
            ..EstimatorConfig::default()
        }
    }
}

unsafe fn str_arg<'a>(s: *const c_char, what: &str) -> Result<&'a str, NcStatus> {
    if s.is_null() {
        return Err(fail(NcStatus::NullPointer, format!("{what} is NULL")));
    }
    // SAFETY: caller passes a NUL-terminated string.
    unsafe { CStr::from_ptr(s) }
        .to_str()
        .map_err(|_| fail(NcStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

/// New empty builder, or NULL if `tick_duration` is not positive.
#[no_mangle]
pub extern "C" fn nc_panel_builder_new(tick_duration: f64) -> *mut NcPanelBuilder {
    clear_error();
    if !(tick_duration > 0.0 && tick_duration.is_finite()) {
        set_error(format!("tick_duration must be positive, got {tick_duration}"));
        return ptr::null_mut();
    }
    Box::into_raw(Box::new(NcPanelBuilder {
        tick_duration,
        obs: BTreeMap::new(),
    }))
}

/// Adds one observation. Order of calls does not matter.
///
/// # Safety
/// `builder` must come from [`nc_panel_builder_new`]; `asset` must be a
/// NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn nc_panel_builder_push(
    builder: *mut NcPanelBuilder,
    asset: *const c_char,
    tick: u64,
    value: f64,
) -> NcStatus {
    guard(|| {
        // SAFETY: caller guarantees a live builder.
        let Some(b) = (unsafe { builder.as_mut() }) else {
            return fail(NcStatus::NullPointer, "builder is NULL");
        };
        let name = match unsafe { str_arg(asset, "asset") } {
            Ok(s) => s,
            Err(status) => return status,
        };
        b.obs.entry(name.to_owned()).or_default().push((tick, value));
        NcStatus::Ok
    })
}

/// Consumes `builder` (even on failure) and writes the panel to `*out`.
///
/// Assets are ordered by name. Duplicate `(asset, tick)` pairs are rejected.
///
/// # Safety
/// `builder` must come from [`nc_panel_builder_new`] and not be used again;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nc_panel_builder_build(
    builder: *mut NcPanelBuilder,
    out: *mut *mut NcPanel,
) -> NcStatus {
    guard(|| {
        if builder.is_null() || out.is_null() {
            return fail(NcStatus::NullPointer, "builder or out is NULL");
        }
        // SAFETY: ownership is transferred back from the caller.
        let b = unsafe { Box::from_raw(builder) };
        unsafe { *out = ptr::null_mut() };
        let mut assets = Vec::with_capacity(b.obs.len());
        let mut series = Vec::with_capacity(b.obs.len());
        for (name, mut obs) in b.obs {
            obs.sort_by_key(|o| o.0);
            if let Some(w) = obs.windows(2).find(|w| w[0].0 == w[1].0) {
                return fail_with(&Error::DuplicateObservation {
                    asset: name,
                    tick: w[0].0,
                });
            }
            let (ticks, values) = obs.into_iter().unzip();
            match Series::new(ticks, values) {
                Ok(s) => series.push(s),
                Err(e) => return fail_with(&e),
            }
            assets.push(name);
        }
        match AsyncPanel::new(assets, series, b.tick_duration) {
            Ok(inner) => {
                unsafe { *out = Box::into_raw(Box::new(NcPanel { inner })) };
                NcStatus::Ok
            }
            Err(e) => fail_with(&e),
        }
    })
}

/// # Safety
/// `builder` must come from [`nc_panel_builder_new`] or be NULL.
#[no_mangle]
pub unsafe extern "C" fn nc_panel_builder_free(builder: *mut NcPanelBuilder) {
    if !builder.is_null() {
        drop(unsafe { Box::from_raw(builder) });
    }
}

/// Loads a `tick,asset,value` CSV file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nc_panel_from_csv(
    path: *const c_char,
    tick_duration: f64,
    out: *mut *mut NcPanel,
) -> NcStatus {
    guard(|| {
        if out.is_null() {
            return fail(NcStatus::NullPointer, "out is NULL");
        }
        unsafe { *out = ptr::null_mut() };
        let path = match unsafe { str_arg(path, "path") } {
            Ok(s) => s,
            Err(status) => return status,
        };
        match AsyncPanel::load_csv(path, tick_duration) {
            Ok(inner) => {
                unsafe { *out = Box::into_raw(Box::new(NcPanel { inner })) };
                NcStatus::Ok
            }
            Err(e) => fail_with(&e),
        }
    })
}

/// Number of assets, or 0 for NULL.
///
/// # Safety
/// `panel` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn nc_panel_dim(panel: *const NcPanel) -> usize {
    unsafe { panel.as_ref() }.map_or(0, |p| p.inner.p())
}

/// # Safety
/// `panel` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nc_panel_summary(panel: *const NcPanel, out: *mut NcPanelSummary) -> NcStatus {
    guard(|| {
        let (Some(p), false) = (unsafe { panel.as_ref() }, out.is_null()) else {
            return fail(NcStatus::NullPointer, "panel or out is NULL");
        };
        let s = p.inner.summarize();
        unsafe {
            *out = NcPanelSummary {
                n: s.n,
                n_star: s.n_star,
                n_pair_max: s.n_pair_max,
                empty_pairs: s.empty_pairs.len(),
            }
        };
        NcStatus::Ok
    })
}

/// # Safety
/// `panel` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn nc_panel_free(panel: *mut NcPanel) {
    if !panel.is_null() {
        drop(unsafe { Box::from_raw(panel) });
    }
}

/// Estimates the noise covariance of `panel`.
///
/// # Safety
/// `panel` must be a live handle, `config` readable (or NULL for defaults),
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nc_estimate(
    panel: *const NcPanel,
    config: *const NcEstimatorConfig,
    out: *mut *mut NcEstimate,
) -> NcStatus {
    guard(|| {
        let (Some(p), false) = (unsafe { panel.as_ref() }, out.is_null()) else {
            return fail(NcStatus::NullPointer, "panel or out is NULL");
        };
        unsafe { *out = ptr::null_mut() };
        let cfg = unsafe { config.as_ref() }
            .copied()
            .unwrap_or_else(|| nc_estimator_config_default())
            .to_core();
        match estimate(&p.inner, &cfg) {
            Ok(inner) => {
                unsafe { *out = Box::into_raw(Box::new(NcEstimate { inner })) };
                NcStatus::Ok
            }
            Err(e) => fail_with(&e),
        }
    })
}

/// Matrix dimension, or 0 for NULL.
///
/// # Safety
/// `est` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn nc_estimate_dim(est: *const NcEstimate) -> usize {
    unsafe { est.as_ref() }.map_or(0, |e| e.inner.raw.dim())
}

/// Effective sample size used by the threshold rule, or 0 for NULL.
///
/// # Safety
/// `est` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn nc_estimate_n_star(est: *const NcEstimate) -> usize {
    unsafe { est.as_ref() }.map_or(0, |e| e.inner.n_star_used)
}

unsafe fn copy_matrix(est: *const NcEstimate, buf: *mut f64, len: usize, thresholded: bool) -> NcStatus {
    guard(|| {
        let (Some(e), false) = (unsafe { est.as_ref() }, buf.is_null()) else {
            return fail(NcStatus::NullPointer, "estimate or buffer is NULL");
        };
        let m = if thresholded { &e.inner.thresholded } else { &e.inner.raw };
        let data = m.as_slice();
        if len < data.len() {
            return fail(
                NcStatus::BufferTooSmall,
                format!("buffer holds {len} values, {} needed", data.len()),
            );
        }
        // SAFETY: caller guarantees `len` writable doubles at `buf`.
        unsafe { ptr::copy_nonoverlapping(data.as_ptr(), buf, data.len()) };
        NcStatus::Ok
    })
}

/// Copies the unthresholded estimate, row-major, into `buf[0..p*p]`.
///
/// # Safety
/// `buf` must have room for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn nc_estimate_copy_raw(est: *const NcEstimate, buf: *mut f64, len: usize) -> NcStatus {
    unsafe { copy_matrix(est, buf, len, false) }
}

/// Copies the thresholded estimate, row-major, into `buf[0..p*p]`.
///
/// # Safety
/// `buf` must have room for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn nc_estimate_copy_thresholded(
    est: *const NcEstimate,
    buf: *mut f64,
    len: usize,
) -> NcStatus {
    unsafe { copy_matrix(est, buf, len, true) }
}

/// # Safety
/// `est` must come from [`nc_estimate`] or be NULL.
#[no_mangle]
pub unsafe extern "C" fn nc_estimate_free(est: *mut NcEstimate) {
    if !est.is_null() {
        drop(unsafe { Box::from_raw(est) });
    }
}
