//! C ABI over `slatkit`.
//!
//! Objects are opaque heap handles released with the matching `*_free`
//! function. Every fallible call returns a [`SlatStatus`]; on failure the
//! message is available from [`slat_last_error`] on the same thread until the
//! next failing call.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use slatkit::crlb::{crlb_total, fisher_information};
use slatkit::error::SlatError;
use slatkit::io::{parse_noise, Method};
use slatkit::model::{generate_scenario, synthesize_ranges, ObservationMask, Point2, RangeData, Scenario, SquareBox};
use slatkit::pipeline::{slat_batch, PipelineConfig, SlatEstimate};
use slatkit::source_loc::{sll1_locate, slcp_locate, CircleSet};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlatStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    SolverFailure = 3,
    Internal = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlatLocateMethod {
    Slcp = 0,
    Sll1 = 1,
}

/// Anchors, sensors and targets.
pub struct SlatScenario(Scenario);

/// Range measurements of one scenario.
pub struct SlatRanges(RangeData);

/// Refined positions, sensors first.
pub struct SlatEstimateHandle(SlatEstimate);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: SlatStatus, msg: impl Into<String>) -> SlatStatus {
    set_error(msg.into());
    status
}

fn from_error(e: SlatError) -> SlatStatus {
    let status = if e.is_solver_failure() { SlatStatus::SolverFailure } else { SlatStatus::InvalidArgument };
    fail(status, e.to_string())
}

/// Runs `f`, mapping errors and panics to status codes.
fn guard(f: impl FnOnce() -> Result<(), SlatStatus>) -> SlatStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SlatStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(SlatStatus::Internal, "internal panic"),
    }
}

unsafe fn ref_of<'a, T>(p: *const T, what: &str) -> Result<&'a T, SlatStatus> {
    p.as_ref().ok_or_else(|| fail(SlatStatus::NullPointer, format!("{what} is null")))
}

unsafe fn str_of<'a>(p: *const c_char, what: &str) -> Result<&'a str, SlatStatus> {
    if p.is_null() {
        return Err(fail(SlatStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(SlatStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), SlatStatus> {
    if out.is_null() {
        return Err(fail(SlatStatus::NullPointer, "output pointer is null"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message of the last failed call on this thread, or null. Valid until the next failing call.
#[no_mangle]
pub extern "C" fn slat_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Random scenario in the square `[lo, hi]²`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle pointer.
#[no_mangle]
pub unsafe extern "C" fn slat_scenario_generate(
    n_anchors: usize,
    n_sensors: usize,
    n_targets: usize,
    lo: f64,
    hi: f64,
    seed: u64,
    out: *mut *mut SlatScenario,
) -> SlatStatus {
    guard(|| {
        if hi.partial_cmp(&lo) != Some(std::cmp::Ordering::Greater) {
            return Err(fail(SlatStatus::InvalidArgument, "region needs hi > lo"));
        }
        let s = generate_scenario(n_anchors, n_sensors, n_targets, SquareBox::new(lo, hi), seed).map_err(from_error)?;
        put(out, SlatScenario(s))
    })
}

/// Scenario from point arrays of `2 * count` interleaved `x, y` values.
///
/// # Safety
/// Each array must hold `2 * count` readable doubles; null is allowed for a zero count.
#[no_mangle]
pub unsafe extern "C" fn slat_scenario_new(
    anchors: *const f64,
    n_anchors: usize,
    sensors: *const f64,
    n_sensors: usize,
    targets: *const f64,
    n_targets: usize,
    out: *mut *mut SlatScenario,
) -> SlatStatus {
    guard(|| {
        let points = |p: *const f64, n: usize, what: &str| -> Result<Vec<Point2>, SlatStatus> {
            if n == 0 {
                return Ok(Vec::new());
            }
            if p.is_null() {
                return Err(fail(SlatStatus::NullPointer, format!("{what} is null")));
            }
            let xy = std::slice::from_raw_parts(p, 2 * n);
            Ok(xy.chunks_exact(2).map(|c| Point2::new(c[0], c[1])).collect())
        };
        let s = Scenario {
            anchors: points(anchors, n_anchors, "anchors")?,
            sensors: points(sensors, n_sensors, "sensors")?,
            targets: points(targets, n_targets, "targets")?,
        };
        s.validate().map_err(from_error)?;
        put(out, SlatScenario(s))
    })
}

/// # Safety
/// `s` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn slat_scenario_free(s: *mut SlatScenario) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// # Safety
/// `s` must be a live handle; the count pointers may be null.
#[no_mangle]
pub unsafe extern "C" fn slat_scenario_counts(
    s: *const SlatScenario,
    n_anchors: *mut usize,
    n_sensors: *mut usize,
    n_targets: *mut usize,
) -> SlatStatus {
    guard(|| {
        let s = &ref_of(s, "scenario")?.0;
        for (p, v) in [(n_anchors, s.n_anchors()), (n_sensors, s.n_sensors()), (n_targets, s.n_targets())] {
            if !p.is_null() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Noisy ranges for every sensor-target and anchor-target pair.
/// `noise` uses the CLI grammar, e.g. `"gaussian:0.01"`.
///
/// # Safety
/// `s` must be a live handle, `noise` a NUL-terminated string, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn slat_ranges_synthesize(
    s: *const SlatScenario,
    noise: *const c_char,
    seed: u64,
    out: *mut *mut SlatRanges,
) -> SlatStatus {
    guard(|| {
        let s = &ref_of(s, "scenario")?.0;
        let noise = parse_noise(str_of(noise, "noise")?).map_err(from_error)?;
        let r = synthesize_ranges(s, &noise, &ObservationMask::for_scenario(s), seed).map_err(from_error)?;
        put(out, SlatRanges(r))
    })
}

/// Exact ranges of the scenario.
///
/// # Safety
/// `s` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn slat_ranges_exact(s: *const SlatScenario, out: *mut *mut SlatRanges) -> SlatStatus {
    guard(|| {
        let s = &ref_of(s, "scenario")?.0;
        let r = synthesize_ranges(s, &slatkit::model::NoiseModel::exact(), &ObservationMask::for_scenario(s), 0)
            .map_err(from_error)?;
        put(out, SlatRanges(r))
    })
}

/// # Safety
/// `r` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn slat_ranges_free(r: *mut SlatRanges) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Batch estimation; `method` is e.g. `"edm-r+mm"` or `"edm-r-l1+wmm"`.
///
/// # Safety
/// Handles must be live, `method` NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn slat_batch_run(
    s: *const SlatScenario,
    r: *const SlatRanges,
    method: *const c_char,
    out: *mut *mut SlatEstimateHandle,
) -> SlatStatus {
    guard(|| {
        let s = &ref_of(s, "scenario")?.0;
        let r = &ref_of(r, "ranges")?.0;
        let cfg = match str_of(method, "method")?.parse::<Method>().map_err(from_error)? {
            Method::Edm { init, refine: Some(mode) } => PipelineConfig::new(init, mode),
            other => return Err(fail(SlatStatus::InvalidArgument, format!("'{other}' is not a refined EDM method"))),
        };
        let est = slat_batch(&s.anchors, r, &cfg).map_err(from_error)?;
        put(out, SlatEstimateHandle(est))
    })
}

/// # Safety
/// `e` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn slat_estimate_free(e: *mut SlatEstimateHandle) {
    if !e.is_null() {
        drop(Box::from_raw(e));
    }
}

/// Number of estimated points (sensors then targets); 0 for a null handle.
///
/// # Safety
/// `e` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn slat_estimate_num_points(e: *const SlatEstimateHandle) -> usize {
    e.as_ref().map_or(0, |e| e.0.coords.num_points())
}

/// Copies `2 * num_points` interleaved coordinates into `buf`.
///
/// # Safety
/// `e` must be a live handle and `buf` must hold `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn slat_estimate_coords(e: *const SlatEstimateHandle, buf: *mut f64, len: usize) -> SlatStatus {
    guard(|| {
        let xs = ref_of(e, "estimate")?.0.coords.as_slice();
        if buf.is_null() {
            return Err(fail(SlatStatus::NullPointer, "buffer is null"));
        }
        if len < xs.len() {
            return Err(fail(SlatStatus::InvalidArgument, format!("buffer holds {len} values, need {}", xs.len())));
        }
        std::slice::from_raw_parts_mut(buf, xs.len()).copy_from_slice(xs);
        Ok(())
    })
}

/// Initial and final refinement cost.
///
/// # Safety
/// `e` must be a live handle; output pointers may be null.
#[no_mangle]
pub unsafe extern "C" fn slat_estimate_costs(e: *const SlatEstimateHandle, initial: *mut f64, final_: *mut f64) -> SlatStatus {
    guard(|| {
        let e = &ref_of(e, "estimate")?.0;
        if !initial.is_null() {
            *initial = e.init_cost;
        }
        if !final_.is_null() {
            *final_ = e.final_cost;
        }
        Ok(())
    })
}

/// Single-source position from `n` stations `(x[i], y[i])` with ranges `d[i]`.
/// `sigma` is the SLℓ1 projector constant and is ignored by SLCP.
///
/// # Safety
/// `x`, `y`, `d` must hold `n` readable doubles; `out_xy` must hold 2 writable doubles;
/// `rank1_ratio` may be null.
#[no_mangle]
pub unsafe extern "C" fn slat_locate(
    x: *const f64,
    y: *const f64,
    d: *const f64,
    n: usize,
    method: SlatLocateMethod,
    sigma: f64,
    out_xy: *mut f64,
    rank1_ratio: *mut f64,
) -> SlatStatus {
    guard(|| {
        if x.is_null() || y.is_null() || d.is_null() || out_xy.is_null() {
            return Err(fail(SlatStatus::NullPointer, "station or output array is null"));
        }
        let xs = std::slice::from_raw_parts(x, n);
        let ys = std::slice::from_raw_parts(y, n);
        let centers = xs.iter().zip(ys).map(|(&a, &b)| Point2::new(a, b)).collect();
        let c = CircleSet::new(centers, std::slice::from_raw_parts(d, n).to_vec()).map_err(from_error)?;
        let res = match method {
            SlatLocateMethod::Slcp => slcp_locate(&c),
            SlatLocateMethod::Sll1 => sll1_locate(&c, sigma),
        }
        .map_err(from_error)?;
        *out_xy = res.position.x;
        *out_xy.add(1) = res.position.y;
        if !rank1_ratio.is_null() {
            *rank1_ratio = res.rank1_ratio;
        }
        Ok(())
    })
}

/// Total Cramér-Rao bound of the scenario for Gaussian range noise `sigma`.
///
/// # Safety
/// `s` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn slat_crlb(s: *const SlatScenario, sigma: f64, out: *mut f64) -> SlatStatus {
    guard(|| {
        let s = &ref_of(s, "scenario")?.0;
        if out.is_null() {
            return Err(fail(SlatStatus::NullPointer, "output pointer is null"));
        }
        let f = fisher_information(&s.truth(), &s.anchors, &ObservationMask::for_scenario(s), sigma).map_err(from_error)?;
        *out = crlb_total(&f, s.n_sensors() + s.n_targets()).map_err(from_error)?;
        Ok(())
    })
}
