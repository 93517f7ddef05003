//! C ABI over gapcert.
//!
//! Every fallible call returns a `GapcertStatus` and writes its result
//! through an out-pointer. On failure, `gapcert_last_error` describes what
//! went wrong on the calling thread. Handles are opaque; release each with
//! its matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use gapcert::certificate::{confidence_scalar, violation_bound};
use gapcert::dynamics::{ModelInput, ModelState, Platform, PlatformProfile};
use gapcert::gap::{estimate_gap, sample_comparisons, GapResult, SamplingConfig};
use gapcert::rng::Domain;
use gapcert::uncertain::{reachable_contains, DisturbanceSet};
use gapcert::verification::{verify_controller, VerificationResult, VerificationSetup};
use gapcert::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GapcertStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Simulation = 4,
    Io = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GapcertPlatform {
    Robotarium = 0,
    Quadruped = 1,
}

impl From<GapcertPlatform> for Platform {
    fn from(p: GapcertPlatform) -> Self {
        match p {
            GapcertPlatform::Robotarium => Platform::Robotarium,
            GapcertPlatform::Quadruped => Platform::Quadruped,
        }
    }
}

/// Planar pose `(x, y, theta)`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapcertPose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl From<GapcertPose> for ModelState {
    fn from(p: GapcertPose) -> Self {
        ModelState::new(p.x, p.y, p.theta)
    }
}

/// Opaque platform profile.
pub struct GapcertProfile {
    inner: PlatformProfile,
}

/// Opaque certified gap.
pub struct GapcertGapResult {
    inner: GapResult,
}

/// Opaque controller verification result.
pub struct GapcertVerification {
    inner: VerificationResult,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("interior nuls removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> GapcertStatus {
    match e {
        Error::Config(_) => GapcertStatus::Config,
        Error::Io { .. } | Error::Format { .. } => GapcertStatus::Io,
        e if e.is_simulation() => GapcertStatus::Simulation,
        _ => GapcertStatus::InvalidArgument,
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (GapcertStatus, String)>) -> GapcertStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GapcertStatus::Ok,
        Ok(Err((status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            GapcertStatus::Panic
        }
    }
}

fn lift(e: Error) -> (GapcertStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (GapcertStatus, String) {
    (GapcertStatus::NullPointer, format!("{what} is null"))
}

/// # Safety
/// `out` must be valid for a write, or null (which is reported).
unsafe fn write<T>(out: *mut T, value: T, what: &str) -> Result<(), (GapcertStatus, String)> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

/// # Safety
/// `handle` must be null or a live handle from this library.
unsafe fn borrow<'a, T>(handle: *const T, what: &str) -> Result<&'a T, (GapcertStatus, String)> {
    handle.as_ref().ok_or_else(|| null(what))
}

/// Message for the last failed call on this thread, or null. Valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn gapcert_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// `1 - (1 - epsilon)^samples`.
///
/// # Safety
/// `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn gapcert_confidence(samples: u64, epsilon: f64, out: *mut f64) -> GapcertStatus {
    guard(|| write(out, confidence_scalar(samples, epsilon).map_err(lift)?, "out"))
}

/// Probability that a scenario solution with `dimension` support
/// constraints violates more than `epsilon`.
///
/// # Safety
/// `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn gapcert_violation_bound(
    samples: u64,
    dimension: u64,
    epsilon: f64,
    out: *mut f64,
) -> GapcertStatus {
    guard(|| write(out, violation_bound(samples, dimension, epsilon).map_err(lift)?, "out"))
}

/// # Safety
/// `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn gapcert_profile_new(
    platform: GapcertPlatform,
    out: *mut *mut GapcertProfile,
) -> GapcertStatus {
    guard(|| {
        let handle = Box::new(GapcertProfile {
            inner: PlatformProfile::for_platform(platform.into()),
        });
        write(out, Box::into_raw(handle), "out")
    })
}

/// Model time step of the profile, seconds.
///
/// # Safety
/// `profile` must be a live handle; `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn gapcert_profile_dt(profile: *const GapcertProfile, out: *mut f64) -> GapcertStatus {
    guard(|| write(out, borrow(profile, "profile")?.inner.dt_model, "out"))
}

/// # Safety
/// `profile` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gapcert_profile_free(profile: *mut GapcertProfile) {
    if !profile.is_null() {
        drop(Box::from_raw(profile));
    }
}

/// Samples `samples` plant/model comparisons and certifies their maximum.
///
/// # Safety
/// `profile` must be a live handle; `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn gapcert_estimate_gap(
    profile: *const GapcertProfile,
    samples: u64,
    epsilon: f64,
    seed: u64,
    workers: u32,
    out: *mut *mut GapcertGapResult,
) -> GapcertStatus {
    guard(|| {
        let profile = &borrow(profile, "profile")?.inner;
        if samples == 0 {
            return Err((GapcertStatus::InvalidArgument, "samples must be at least 1".into()));
        }
        let sampling = SamplingConfig::for_platform(profile.platform);
        let drawn = sample_comparisons(profile, &sampling, samples as usize, seed, Domain::GapTrain, workers as usize)
            .map_err(lift)?;
        let result = estimate_gap(drawn, epsilon, profile.platform.as_str(), seed).map_err(lift)?;
        write(out, Box::into_raw(Box::new(GapcertGapResult { inner: result })), "out")
    })
}

/// # Safety
/// `result` must be a live handle; `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn gapcert_gap_result_gap(result: *const GapcertGapResult, out: *mut f64) -> GapcertStatus {
    guard(|| write(out, borrow(result, "result")?.inner.gap, "out"))
}

/// # Safety
/// `result` must be a live handle; `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn gapcert_gap_result_confidence(
    result: *const GapcertGapResult,
    out: *mut f64,
) -> GapcertStatus {
    guard(|| write(out, borrow(result, "result")?.inner.certificate.confidence, "out"))
}

/// # Safety
/// `result` must be a live handle; `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn gapcert_gap_result_sample_count(
    result: *const GapcertGapResult,
    out: *mut u64,
) -> GapcertStatus {
    guard(|| write(out, borrow(result, "result")?.inner.samples.len() as u64, "out"))
}

/// # Safety
/// `result` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gapcert_gap_result_free(result: *mut GapcertGapResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// Whether `observed` lies in the one-step reachable set of `start` under
/// input `(v, omega)` and disturbance radius `radius`.
///
/// # Safety
/// `profile` must be a live handle; `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn gapcert_reachable_contains(
    profile: *const GapcertProfile,
    start: GapcertPose,
    v: f64,
    omega: f64,
    observed: GapcertPose,
    radius: f64,
    out: *mut bool,
) -> GapcertStatus {
    guard(|| {
        let profile = &borrow(profile, "profile")?.inner;
        let set = DisturbanceSet::new(radius, profile.norm).map_err(lift)?;
        let inside = reachable_contains(
            &start.into(),
            &ModelInput::new(v, omega),
            &observed.into(),
            &set,
            profile.dt_model,
        );
        write(out, inside, "out")
    })
}

/// Verifies the platform's navigation controller with `samples` rollouts
/// of the uncertain model at disturbance radius `radius`.
///
/// # Safety
/// `profile` must be a live handle; `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn gapcert_verify(
    profile: *const GapcertProfile,
    radius: f64,
    samples: u64,
    epsilon: f64,
    seed: u64,
    workers: u32,
    out: *mut *mut GapcertVerification,
) -> GapcertStatus {
    guard(|| {
        let profile = &borrow(profile, "profile")?.inner;
        let mut setup = VerificationSetup::for_platform(profile.platform);
        setup.profile = profile.clone();
        let set = DisturbanceSet::new(radius, profile.norm).map_err(lift)?;
        let result = verify_controller(&setup, &set, samples as usize, epsilon, seed, workers as usize)
            .map_err(lift)?;
        write(out, Box::into_raw(Box::new(GapcertVerification { inner: result })), "out")
    })
}

/// Minimum safety value over the rollouts; −1 means a rollout crashed.
///
/// # Safety
/// `result` must be a live handle; `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn gapcert_verification_min_safety(
    result: *const GapcertVerification,
    out: *mut f64,
) -> GapcertStatus {
    guard(|| write(out, borrow(result, "result")?.inner.min_safety, "out"))
}

/// # Safety
/// `result` must be a live handle; `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn gapcert_verification_passed(
    result: *const GapcertVerification,
    out: *mut bool,
) -> GapcertStatus {
    guard(|| write(out, borrow(result, "result")?.inner.pass, "out"))
}

/// # Safety
/// `result` must be a live handle; `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn gapcert_verification_confidence(
    result: *const GapcertVerification,
    out: *mut f64,
) -> GapcertStatus {
    guard(|| write(out, borrow(result, "result")?.inner.certificate.confidence, "out"))
}

/// # Safety
/// `result` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gapcert_verification_free(result: *mut GapcertVerification) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}
