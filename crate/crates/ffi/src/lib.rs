// Copyright 2026 The spinreg Contributors
// SPDX-License-Identifier: Apache-2.0

//! C ABI over the `spinreg` core.
//!
//! Objects cross the boundary as opaque handles created by `*_new` or a
//! producing call and released with the matching `*_free`. Every fallible
//! function returns a [`SpinregStatus`]; on failure a message is available
//! from [`spinreg_last_error`] until the next failing call on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use spinreg::analysis::wilson_interval;
use spinreg::hologram::{wgs_phase, PhaseMask, TargetSpots};
use spinreg::model::{make_grid, sample_loading, LoadingModel, Occupancy, RegisterSpec, TrapArray};
use spinreg::readout::povm_correct;
use spinreg::rearrange::{execute_plan, plan_moves, validate_plan, LossModel, MovePlan, RearrangeError};
use spinreg::seed::SeedSpec;
use spinreg::spin::{propagate_pulse, DriveParams, SiteState};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpinregStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InsufficientAtoms = 3,
    PlanningStalled = 4,
    InvalidPlan = 5,
    Panic = 255,
}

/// Trap geometry.
pub struct SpinregArray(TrapArray);

/// Per-site occupancy of an array.
pub struct SpinregOccupancy(Occupancy);

/// Ordered rearrangement moves.
pub struct SpinregPlan(MovePlan);

/// Hologram phase mask.
pub struct SpinregMask(PhaseMask);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl ToString) {
    let text = msg.to_string().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn fail(status: SpinregStatus, msg: impl ToString) -> SpinregStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> SpinregStatus) -> SpinregStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(SpinregStatus::Panic, "internal panic"))
}

fn boxed<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

/// Message of the last failure on this thread, or null. Owned by the
/// library; valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn spinreg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn spinreg_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => c"unknown",
    };
    VERSION.as_ptr()
}

/// Rectangular `rows` x `cols` array with `pitch_um` spacing.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn spinreg_array_new(
    rows: usize,
    cols: usize,
    pitch_um: f64,
    out: *mut *mut SpinregArray,
) -> SpinregStatus {
    guard(|| {
        if out.is_null() {
            return fail(SpinregStatus::NullPointer, "out is null");
        }
        match make_grid(rows, cols, pitch_um) {
            Ok(a) => {
                *out = boxed(SpinregArray(a));
                SpinregStatus::Ok
            }
            Err(e) => fail(SpinregStatus::InvalidArgument, e),
        }
    })
}

/// Number of sites, or 0 for a null handle.
///
/// # Safety
/// `array` must be null or a live handle from [`spinreg_array_new`].
#[no_mangle]
pub unsafe extern "C" fn spinreg_array_len(array: *const SpinregArray) -> usize {
    array.as_ref().map_or(0, |a| a.0.len())
}

/// # Safety
/// `array` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn spinreg_array_free(array: *mut SpinregArray) {
    if !array.is_null() {
        drop(Box::from_raw(array));
    }
}

/// Independent fill of every site with probability `p_fill`.
///
/// # Safety
/// `array` must be a live handle and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn spinreg_occupancy_sample(
    array: *const SpinregArray,
    p_fill: f64,
    seed: u64,
    out: *mut *mut SpinregOccupancy,
) -> SpinregStatus {
    guard(|| {
        let (Some(a), false) = (array.as_ref(), out.is_null()) else {
            return fail(SpinregStatus::NullPointer, "array or out is null");
        };
        match sample_loading(&a.0, LoadingModel::Bernoulli { p_fill }, &SeedSpec::new(seed)) {
            Ok(o) => {
                *out = boxed(SpinregOccupancy(o));
                SpinregStatus::Ok
            }
            Err(e) => fail(SpinregStatus::InvalidArgument, e),
        }
    })
}

/// Occupancy from one byte per site in row-major order (non-zero = atom).
///
/// # Safety
/// `bits` must point to `len` readable bytes; `array` must be live and `out`
/// valid for one write.
#[no_mangle]
pub unsafe extern "C" fn spinreg_occupancy_from_bits(
    array: *const SpinregArray,
    bits: *const u8,
    len: usize,
    out: *mut *mut SpinregOccupancy,
) -> SpinregStatus {
    guard(|| {
        let (Some(a), false, false) = (array.as_ref(), bits.is_null(), out.is_null()) else {
            return fail(SpinregStatus::NullPointer, "null argument");
        };
        let bits = std::slice::from_raw_parts(bits, len).iter().map(|&b| b != 0).collect();
        match Occupancy::from_bits(&a.0, bits) {
            Ok(o) => {
                *out = boxed(SpinregOccupancy(o));
                SpinregStatus::Ok
            }
            Err(e) => fail(SpinregStatus::InvalidArgument, e),
        }
    })
}

/// Number of occupied sites, or 0 for a null handle.
///
/// # Safety
/// `occ` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn spinreg_occupancy_count(occ: *const SpinregOccupancy) -> usize {
    occ.as_ref().map_or(0, |o| o.0.count())
}

/// Whether `site` holds an atom; false when out of range.
///
/// # Safety
/// `occ` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn spinreg_occupancy_get(occ: *const SpinregOccupancy, site: usize) -> bool {
    occ.as_ref().is_some_and(|o| site < o.0.len() && o.0.get(site))
}

/// # Safety
/// `occ` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn spinreg_occupancy_free(occ: *mut SpinregOccupancy) {
    if !occ.is_null() {
        drop(Box::from_raw(occ));
    }
}

/// Plans moves filling a centred `reg_rows` x `reg_cols` block.
///
/// # Safety
/// `array` and `occ` must be live handles and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn spinreg_plan_moves(
    array: *const SpinregArray,
    occ: *const SpinregOccupancy,
    reg_rows: usize,
    reg_cols: usize,
    out: *mut *mut SpinregPlan,
) -> SpinregStatus {
    guard(|| {
        let (Some(a), Some(o), false) = (array.as_ref(), occ.as_ref(), out.is_null()) else {
            return fail(SpinregStatus::NullPointer, "null argument");
        };
        let reg = match RegisterSpec::centered(&a.0, reg_rows, reg_cols) {
            Ok(r) => r,
            Err(e) => return fail(SpinregStatus::InvalidArgument, e),
        };
        match plan_moves(&a.0, &o.0, &reg) {
            Ok(p) => {
                *out = boxed(SpinregPlan(p));
                SpinregStatus::Ok
            }
            Err(e @ RearrangeError::InsufficientAtoms { .. }) => fail(SpinregStatus::InsufficientAtoms, e),
            Err(e @ RearrangeError::PlanningStalled) => fail(SpinregStatus::PlanningStalled, e),
            Err(e) => fail(SpinregStatus::InvalidArgument, e),
        }
    })
}

/// Number of moves, or 0 for a null handle.
///
/// # Safety
/// `plan` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn spinreg_plan_len(plan: *const SpinregPlan) -> usize {
    plan.as_ref().map_or(0, |p| p.0.len())
}

/// Reads move `index` as source site, destination site and parking flag.
///
/// # Safety
/// `plan` must be a live handle; the out pointers must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn spinreg_plan_move(
    plan: *const SpinregPlan,
    index: usize,
    from: *mut usize,
    to: *mut usize,
    is_parking: *mut bool,
) -> SpinregStatus {
    guard(|| {
        let Some(p) = plan.as_ref() else {
            return fail(SpinregStatus::NullPointer, "plan is null");
        };
        if from.is_null() || to.is_null() || is_parking.is_null() {
            return fail(SpinregStatus::NullPointer, "null output pointer");
        }
        let Some(m) = p.0.moves.get(index) else {
            return fail(SpinregStatus::InvalidArgument, format!("move {index} out of range"));
        };
        *from = m.from;
        *to = m.to;
        *is_parking = m.is_parking;
        SpinregStatus::Ok
    })
}

/// Runs the plan with the given per-move loss probabilities and returns the
/// resulting occupancy. The plan is validated first.
///
/// # Safety
/// All handles must be live and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn spinreg_plan_execute(
    array: *const SpinregArray,
    occ: *const SpinregOccupancy,
    plan: *const SpinregPlan,
    p_pickup: f64,
    p_transit_per_site: f64,
    p_dropoff: f64,
    seed: u64,
    out: *mut *mut SpinregOccupancy,
) -> SpinregStatus {
    guard(|| {
        let (Some(a), Some(o), Some(p), false) = (array.as_ref(), occ.as_ref(), plan.as_ref(), out.is_null()) else {
            return fail(SpinregStatus::NullPointer, "null argument");
        };
        let loss = LossModel {
            p_pickup,
            p_transit_per_site,
            p_dropoff,
        };
        if !loss.is_valid() {
            return fail(SpinregStatus::InvalidArgument, "loss probabilities must lie in [0, 1]");
        }
        let violations = validate_plan(&a.0, &o.0, &p.0);
        if let Some(v) = violations.first() {
            return fail(SpinregStatus::InvalidPlan, format!("{v:?}"));
        }
        let (after, _) = execute_plan(&a.0, &o.0, &p.0, &loss, &SeedSpec::new(seed));
        *out = boxed(SpinregOccupancy(after));
        SpinregStatus::Ok
    })
}

/// # Safety
/// `plan` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn spinreg_plan_free(plan: *mut SpinregPlan) {
    if !plan.is_null() {
        drop(Box::from_raw(plan));
    }
}

/// Weighted Gerchberg-Saxton mask for a `rows` x `cols` spot grid with
/// `spacing` focal pixels between spots. Writes the final uniformity.
///
/// # Safety
/// `out` and `uniformity` must be valid for one write each.
#[no_mangle]
pub unsafe extern "C" fn spinreg_wgs(
    rows: usize,
    cols: usize,
    spacing: usize,
    grid_size: usize,
    iterations: usize,
    seed: u64,
    out: *mut *mut SpinregMask,
    uniformity: *mut f64,
) -> SpinregStatus {
    guard(|| {
        if out.is_null() || uniformity.is_null() {
            return fail(SpinregStatus::NullPointer, "null output pointer");
        }
        let result = TargetSpots::grid(rows, cols, spacing, grid_size)
            .and_then(|t| wgs_phase(&t, grid_size, iterations, &SeedSpec::new(seed)));
        match result {
            Ok((mask, report)) => {
                *out = boxed(SpinregMask(mask));
                *uniformity = report.uniformity;
                SpinregStatus::Ok
            }
            Err(e) => fail(SpinregStatus::InvalidArgument, e),
        }
    })
}

/// Side length of the mask, or 0 for a null handle.
///
/// # Safety
/// `mask` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn spinreg_mask_grid_size(mask: *const SpinregMask) -> usize {
    mask.as_ref().map_or(0, |m| m.0.grid_size())
}

/// Copies the row-major phases (radians) into `buf`, which must hold
/// `grid_size * grid_size` values.
///
/// # Safety
/// `mask` must be live and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn spinreg_mask_phases(mask: *const SpinregMask, buf: *mut f64, len: usize) -> SpinregStatus {
    guard(|| {
        let (Some(m), false) = (mask.as_ref(), buf.is_null()) else {
            return fail(SpinregStatus::NullPointer, "null argument");
        };
        let phase = m.0.phase();
        if len < phase.len() {
            return fail(
                SpinregStatus::InvalidArgument,
                format!("buffer holds {len}, need {}", phase.len()),
            );
        }
        std::slice::from_raw_parts_mut(buf, phase.len()).copy_from_slice(phase);
        SpinregStatus::Ok
    })
}

/// # Safety
/// `mask` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn spinreg_mask_free(mask: *mut SpinregMask) {
    if !mask.is_null() {
        drop(Box::from_raw(mask));
    }
}

/// Wilson score interval for `k` successes in `n` trials.
///
/// # Safety
/// `lo` and `hi` must be valid for one write each.
#[no_mangle]
pub unsafe extern "C" fn spinreg_wilson_interval(k: u64, n: u64, z: f64, lo: *mut f64, hi: *mut f64) -> SpinregStatus {
    guard(|| {
        if lo.is_null() || hi.is_null() {
            return fail(SpinregStatus::NullPointer, "null output pointer");
        }
        match wilson_interval(k, n, z) {
            Ok((l, h)) => {
                *lo = l;
                *hi = h;
                SpinregStatus::Ok
            }
            Err(e) => fail(SpinregStatus::InvalidArgument, e),
        }
    })
}

/// `(m - p) / (1 - p - q)` clamped to `[0, 1]`; `clamped` reports clamping.
///
/// # Safety
/// `value` and `clamped` must be valid for one write each.
#[no_mangle]
pub unsafe extern "C" fn spinreg_povm_correct(
    m: f64,
    p: f64,
    q: f64,
    value: *mut f64,
    clamped: *mut bool,
) -> SpinregStatus {
    guard(|| {
        if value.is_null() || clamped.is_null() {
            return fail(SpinregStatus::NullPointer, "null output pointer");
        }
        match povm_correct(m, p, q) {
            Ok(c) => {
                *value = c.value;
                *clamped = c.clamped;
                SpinregStatus::Ok
            }
            Err(e) => fail(SpinregStatus::InvalidArgument, e),
        }
    })
}

/// `|up>` population after driving `|down>` on the two-level qubit.
///
/// # Safety
/// `p_up` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn spinreg_rabi_population(
    rabi_hz: f64,
    detuning_hz: f64,
    duration_s: f64,
    p_up: *mut f64,
) -> SpinregStatus {
    guard(|| {
        if p_up.is_null() {
            return fail(SpinregStatus::NullPointer, "p_up is null");
        }
        let d = DriveParams::two_level(rabi_hz, detuning_hz);
        match propagate_pulse(&SiteState::down(), &d, duration_s) {
            Ok(s) => {
                *p_up = s.p_up();
                SpinregStatus::Ok
            }
            Err(e) => fail(SpinregStatus::InvalidArgument, e),
        }
    })
}
