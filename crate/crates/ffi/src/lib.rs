//! C ABI over the dividend-drawdown solver.
//!
//! Conventions: every fallible call returns a [`DdStatus`]; results come back
//! through out-pointers; handles are opaque and freed with their `_free`
//! function; `dd_last_error` copies the most recent error message of the
//! calling thread. Panics are caught at the boundary and surface as
//! `DD_STATUS_PANIC`.

use divdraw::boundaries::{self, FreeBoundaries};
use divdraw::sim::{self, SimConfig, Strategy};
use divdraw::solver::{self, SolverGrid, SolverOptions, ValueSurface};
use divdraw::{Error, Model, ModelParams, Regime};
use std::cell::RefCell;
use std::ffi::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};

/// Status code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DdStatus {
    Ok = 0,
    InvalidParams = 1,
    Domain = 2,
    Regime = 3,
    NoRoot = 4,
    NonConvergence = 5,
    ObstacleViolation = 6,
    NotFound = 7,
    Admissibility = 8,
    Config = 9,
    Gate = 10,
    Io = 11,
    NullPointer = 12,
    Panic = 13,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: &str) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.to_string());
}

fn status_of(err: &Error) -> DdStatus {
    match err {
        Error::InvalidParams(_) => DdStatus::InvalidParams,
        Error::Domain(_) => DdStatus::Domain,
        Error::Regime(_) => DdStatus::Regime,
        Error::NoRoot(_) => DdStatus::NoRoot,
        Error::NonConvergence { .. } => DdStatus::NonConvergence,
        Error::ObstacleViolation { .. } => DdStatus::ObstacleViolation,
        Error::NotFound(_) => DdStatus::NotFound,
        Error::Admissibility(_) => DdStatus::Admissibility,
        Error::Config(_) => DdStatus::Config,
        Error::Gate(_) => DdStatus::Gate,
        Error::Io(_) | Error::Json(_) => DdStatus::Io,
    }
}

/// Copies the calling thread's last error message into `buf` (NUL
/// terminated, truncated to `len`); returns the full message length.
///
/// # Safety
/// `buf` must point to `len` writable bytes, or be null (query mode).
#[no_mangle]
pub unsafe extern "C" fn dd_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast(), n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

fn guarded<T>(out: *mut T, f: impl FnOnce() -> Result<T, Error>) -> DdStatus {
    if out.is_null() {
        set_error("null out pointer");
        return DdStatus::NullPointer;
    }
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(value)) => {
            unsafe { out.write(value) };
            DdStatus::Ok
        }
        Ok(Err(e)) => {
            set_error(&e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("panic across the FFI boundary");
            DdStatus::Panic
        }
    }
}

/// Opaque model handle: validated parameters plus derived constants.
pub struct DdModel {
    model: Model,
}

/// Opaque solution handle: a solved value surface with extracted boundaries.
pub struct DdSolution {
    surface: ValueSurface,
    fb: FreeBoundaries,
}

/// Monte Carlo outcome. `mean_ruin_time` is NaN when no path ruined.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DdSimOutcome {
    pub estimate: f64,
    pub std_error: f64,
    pub ruin_fraction: f64,
    pub mean_ruin_time: f64,
}

/// Builds a model from the five primitive parameters.
///
/// # Safety
/// `out` must be a valid pointer; the returned handle must be released with
/// `dd_model_free`.
#[no_mangle]
pub unsafe extern "C" fn dd_model_new(
    mu: f64,
    sigma: f64,
    r: f64,
    cbar: f64,
    b: f64,
    out: *mut *mut DdModel,
) -> DdStatus {
    guarded(out, || {
        let model = Model::new(ModelParams::new(mu, sigma, r, cbar, b)?)?;
        Ok(Box::into_raw(Box::new(DdModel { model })))
    })
}

/// # Safety
/// `handle` must come from `dd_model_new` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn dd_model_free(handle: *mut DdModel) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Returns 0 for the simple regime, 1 for the complicated one, -1 on null.
///
/// # Safety
/// `handle` must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn dd_model_regime(handle: *const DdModel) -> i32 {
    match handle.as_ref() {
        None => -1,
        Some(h) => match h.model.regime {
            Regime::Simple => 0,
            Regime::Complicated => 1,
        },
    }
}

fn model_scalar(
    handle: *const DdModel,
    out: *mut f64,
    call: impl FnOnce(&Model) -> Result<f64, Error>,
) -> DdStatus {
    let Some(h) = (unsafe { handle.as_ref() }) else {
        set_error("null model handle");
        return DdStatus::NullPointer;
    };
    guarded(out, || call(&h.model))
}

/// Value of the boundary case (running maximum pinned at `cbar`).
///
/// # Safety
/// `handle` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn dd_boundary_value(
    handle: *const DdModel,
    x: f64,
    out: *mut f64,
) -> DdStatus {
    model_scalar(handle, out, |m| m.boundary_value(x))
}

/// First derivative of the boundary-case value.
///
/// # Safety
/// `handle` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn dd_boundary_value_dx(
    handle: *const DdModel,
    x: f64,
    out: *mut f64,
) -> DdStatus {
    model_scalar(handle, out, |m| m.boundary_value_dx(x))
}

/// Barrier super-solution (upper bound with slope >= 1).
///
/// # Safety
/// `handle` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn dd_barrier_value(
    handle: *const DdModel,
    x: f64,
    out: *mut f64,
) -> DdStatus {
    model_scalar(handle, out, |m| m.barrier_value(x))
}

/// Optimal boundary-case payout rate at surplus `x`.
///
/// # Safety
/// `handle` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn dd_boundary_strategy_rate(
    handle: *const DdModel,
    x: f64,
    out: *mut f64,
) -> DdStatus {
    model_scalar(handle, out, |m| Ok(m.boundary_strategy_rate(x)))
}

/// Free point of the boundary case; errors in the simple regime.
///
/// # Safety
/// `handle` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn dd_model_free_point(handle: *const DdModel, out: *mut f64) -> DdStatus {
    let Some(h) = handle.as_ref() else {
        set_error("null model handle");
        return DdStatus::NullPointer;
    };
    guarded(out, || h.model.free_point())
}

/// Solves the value surface and extracts both free boundaries.
///
/// Pass `x_max <= 0` or `nx == 0` / `nc == 0` for model-dependent defaults.
///
/// # Safety
/// `handle` and `out` must be valid; release the solution with
/// `dd_solution_free`.
#[no_mangle]
pub unsafe extern "C" fn dd_solve(
    handle: *const DdModel,
    nx: usize,
    nc: usize,
    x_max: f64,
    out: *mut *mut DdSolution,
) -> DdStatus {
    let Some(h) = handle.as_ref() else {
        set_error("null model handle");
        return DdStatus::NullPointer;
    };
    guarded(out, || {
        let default = SolverGrid::default_for(&h.model);
        let grid = SolverGrid::new(
            if x_max > 0.0 { x_max } else { default.x_max },
            if nx > 0 { nx } else { default.nx },
            if nc > 0 { nc } else { default.nc },
        );
        let (surface, fb) =
            boundaries::solve_and_extract(&h.model, &grid, &SolverOptions::default(), 1e-8)?;
        Ok(Box::into_raw(Box::new(DdSolution { surface, fb })))
    })
}

/// # Safety
/// `handle` must come from `dd_solve` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn dd_solution_free(handle: *mut DdSolution) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Bilinear value lookup on the solved surface.
///
/// # Safety
/// `handle` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn dd_solution_value(
    handle: *const DdSolution,
    x: f64,
    c: f64,
    out: *mut f64,
) -> DdStatus {
    let Some(h) = handle.as_ref() else {
        set_error("null solution handle");
        return DdStatus::NullPointer;
    };
    guarded(out, || h.surface.interpolate(x, c))
}

/// Bilinear slope lookup on the solved surface.
///
/// # Safety
/// `handle` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn dd_solution_slope(
    handle: *const DdSolution,
    x: f64,
    c: f64,
    out: *mut f64,
) -> DdStatus {
    let Some(h) = handle.as_ref() else {
        set_error("null solution handle");
        return DdStatus::NullPointer;
    };
    guarded(out, || h.surface.interpolate_vx(x, c))
}

/// Number of payout levels carrying both boundary curves.
///
/// # Safety
/// `handle` must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn dd_solution_levels(handle: *const DdSolution) -> usize {
    handle.as_ref().map_or(0, |h| h.fb.x_of_c.len())
}

/// Reads one sampled point of both boundary curves.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn dd_solution_boundary_point(
    handle: *const DdSolution,
    level: usize,
    c: *mut f64,
    x_switch: *mut f64,
    y_convert: *mut f64,
) -> DdStatus {
    let Some(h) = handle.as_ref() else {
        set_error("null solution handle");
        return DdStatus::NullPointer;
    };
    if c.is_null() || x_switch.is_null() || y_convert.is_null() {
        set_error("null out pointer");
        return DdStatus::NullPointer;
    }
    if level >= h.fb.x_of_c.len() {
        set_error("level index out of range");
        return DdStatus::Domain;
    }
    c.write(h.fb.c_levels[level]);
    x_switch.write(h.fb.x_of_c[level]);
    y_convert.write(h.fb.y_of_c[level]);
    DdStatus::Ok
}

#[allow(clippy::too_many_arguments)]
fn sim_config(
    x0: f64,
    c0: f64,
    dt: f64,
    horizon: f64,
    n_paths: usize,
    seed: u64,
    antithetic: bool,
    bridge: bool,
) -> SimConfig {
    SimConfig {
        x0,
        c0,
        dt,
        horizon,
        n_paths,
        seed,
        antithetic,
        bridge,
        ..SimConfig::default()
    }
}

fn outcome_c(o: sim::SimOutcome) -> DdSimOutcome {
    DdSimOutcome {
        estimate: o.estimate,
        std_error: o.stderr,
        ruin_fraction: o.ruin_fraction,
        mean_ruin_time: o.mean_ruin_time.unwrap_or(f64::NAN),
    }
}

/// Simulates the optimal feedback strategy against a solved surface.
///
/// Pass `horizon <= 0` for the default `100 / r`.
///
/// # Safety
/// All handles and `out` must be valid pointers.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn dd_simulate_optimal(
    model: *const DdModel,
    solution: *const DdSolution,
    x0: f64,
    c0: f64,
    dt: f64,
    horizon: f64,
    n_paths: usize,
    seed: u64,
    antithetic: bool,
    bridge: bool,
    out: *mut DdSimOutcome,
) -> DdStatus {
    let (Some(m), Some(s)) = (model.as_ref(), solution.as_ref()) else {
        set_error("null handle");
        return DdStatus::NullPointer;
    };
    guarded(out, || {
        let cfg = sim_config(x0, c0, dt, horizon.max(0.0), n_paths, seed, antithetic, bridge);
        Ok(outcome_c(sim::simulate_optimal(&m.model, &s.surface, &s.fb, &cfg)?))
    })
}

/// Simulates the closed-form boundary-case strategy; needs no solve.
///
/// # Safety
/// `model` and `out` must be valid pointers.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn dd_simulate_boundary_case(
    model: *const DdModel,
    x0: f64,
    c0: f64,
    dt: f64,
    horizon: f64,
    n_paths: usize,
    seed: u64,
    antithetic: bool,
    bridge: bool,
    out: *mut DdSimOutcome,
) -> DdStatus {
    let Some(m) = model.as_ref() else {
        set_error("null handle");
        return DdStatus::NullPointer;
    };
    guarded(out, || {
        let cfg = sim_config(x0, c0, dt, horizon.max(0.0), n_paths, seed, antithetic, bridge);
        Ok(outcome_c(sim::simulate_boundary_case(&m.model, &cfg)?))
    })
}

/// Simulates a constant-rate comparison strategy.
///
/// # Safety
/// `model` and `out` must be valid pointers.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn dd_simulate_constant_rate(
    model: *const DdModel,
    rate: f64,
    x0: f64,
    c0: f64,
    dt: f64,
    horizon: f64,
    n_paths: usize,
    seed: u64,
    antithetic: bool,
    bridge: bool,
    out: *mut DdSimOutcome,
) -> DdStatus {
    let Some(m) = model.as_ref() else {
        set_error("null handle");
        return DdStatus::NullPointer;
    };
    guarded(out, || {
        let cfg = sim_config(x0, c0, dt, horizon.max(0.0), n_paths, seed, antithetic, bridge);
        Ok(outcome_c(sim::simulate_comparison(
            &m.model,
            Strategy::ConstantRate(rate),
            &cfg,
        )?))
    })
}

// keep the solver module linked even when only scalar calls are used
#[doc(hidden)]
pub fn _touch() {
    let _ = solver::SolverGrid::new(1.0, 100, 1);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_lifecycle_and_scalars() {
        unsafe {
            let mut h: *mut DdModel = std::ptr::null_mut();
            assert_eq!(dd_model_new(0.3, 0.3, 0.05, 0.3, 0.6, &mut h), DdStatus::Ok);
            assert_eq!(dd_model_regime(h), 1);
            let mut v = f64::NAN;
            assert_eq!(dd_boundary_value(h, 0.0, &mut v), DdStatus::Ok);
            assert_eq!(v, 0.0);
            assert_eq!(dd_model_free_point(h, &mut v), DdStatus::Ok);
            assert!((v - 1.1594784640064429).abs() < 1e-9);
            assert_eq!(dd_boundary_value(h, -1.0, &mut v), DdStatus::Domain);
            let n = dd_last_error(std::ptr::null_mut(), 0);
            assert!(n > 0, "error message must be recorded");
            let mut buf = vec![0i8; 256];
            dd_last_error(buf.as_mut_ptr(), buf.len());
            dd_model_free(h);
        }
    }

    #[test]
    fn invalid_params_are_reported() {
        unsafe {
            let mut h: *mut DdModel = std::ptr::null_mut();
            assert_eq!(
                dd_model_new(0.3, -1.0, 0.05, 0.3, 0.6, &mut h),
                DdStatus::InvalidParams
            );
            assert_eq!(dd_model_regime(std::ptr::null()), -1);
        }
    }

    #[test]
    fn solve_and_simulate_roundtrip() {
        unsafe {
            let mut h: *mut DdModel = std::ptr::null_mut();
            assert_eq!(dd_model_new(0.3, 0.3, 0.05, 0.3, 0.6, &mut h), DdStatus::Ok);
            let mut s: *mut DdSolution = std::ptr::null_mut();
            assert_eq!(dd_solve(h, 600, 30, 6.0, &mut s), DdStatus::Ok);
            assert_eq!(dd_solution_levels(s), 31);
            let mut v = f64::NAN;
            assert_eq!(dd_solution_value(s, 0.0, 0.3, &mut v), DdStatus::Ok);
            assert_eq!(v, 0.0);
            assert_eq!(dd_solution_value(s, 2.0, 0.15, &mut v), DdStatus::Ok);
            assert!(v > 0.0 && v < 6.0 + 1e-9);
            let (mut c, mut xs, mut yc) = (0.0, 0.0, 0.0);
            assert_eq!(
                dd_solution_boundary_point(s, 0, &mut c, &mut xs, &mut yc),
                DdStatus::Ok
            );
            assert_eq!(c, 0.3);
            assert!(yc > 0.0 && yc < xs);
            assert_eq!(
                dd_solution_boundary_point(s, 999, &mut c, &mut xs, &mut yc),
                DdStatus::Domain
            );

            let mut o = DdSimOutcome {
                estimate: 0.0,
                std_error: 0.0,
                ruin_fraction: 0.0,
                mean_ruin_time: 0.0,
            };
            assert_eq!(
                dd_simulate_boundary_case(h, 1.0, 0.3, 2e-3, 0.0, 200, 3, false, true, &mut o),
                DdStatus::Ok
            );
            assert!(o.estimate > 0.0 && o.std_error > 0.0);
            assert_eq!(
                dd_simulate_constant_rate(h, 0.05, 1.0, 0.3, 2e-3, 0.0, 16, 3, false, true, &mut o),
                DdStatus::Admissibility
            );
            dd_solution_free(s);
            dd_model_free(h);
        }
    }
}
