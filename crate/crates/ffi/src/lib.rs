//! C ABI over `gfc-core`.
//!
//! Handles are opaque and owned by the caller, who releases them with the
//! matching `_free` function. Every fallible call returns a status code; on a
//! non-zero status the message is available from [`gfc_last_error`] on the
//! same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use gfc_core::config::ScenarioConfig;
use gfc_core::evolution::{duhamel_solve, solve, Scheme, Trajectory};
use gfc_core::runner::verify;
use gfc_core::Error;

pub const GFC_OK: i32 = 0;
pub const GFC_ERR_NULL: i32 = -1;
pub const GFC_ERR_UTF8: i32 = -2;
pub const GFC_ERR_CONFIG: i32 = -3;
pub const GFC_ERR_NUMERICAL: i32 = -4;
pub const GFC_ERR_DOMAIN: i32 = -5;
pub const GFC_ERR_PANIC: i32 = -6;
pub const GFC_ERR_RANGE: i32 = -7;

/// A validated scenario.
pub struct GfcScenario {
    cfg: ScenarioConfig,
}

/// A solved trajectory.
pub struct GfcTrajectory {
    inner: Trajectory,
}

/// Observables at one output time.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct GfcObservables {
    pub t: f64,
    pub m0: f64,
    pub m1: f64,
    pub m2: f64,
    pub mm: f64,
    pub norm0m: f64,
    pub min_density: f64,
    pub escaped_mass: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Vec<u8>> = const { RefCell::new(Vec::new()) };
}

fn set_error(msg: &str) {
    LAST_ERROR.with(|e| {
        let mut v = e.borrow_mut();
        v.clear();
        v.extend(msg.bytes().filter(|b| *b != 0));
    });
}

fn code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Io(_) | Error::ProbeSetup(_) => GFC_ERR_CONFIG,
        Error::ParameterDomain(_) | Error::InfeasibleParams(_) | Error::NegativeProjection { .. } => GFC_ERR_DOMAIN,
        Error::Quadrature { .. } | Error::Numerical { .. } => GFC_ERR_NUMERICAL,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (i32, String)>) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GFC_OK,
        Ok(Err((c, msg))) => {
            set_error(&msg);
            c
        }
        Err(_) => {
            set_error("internal panic");
            GFC_ERR_PANIC
        }
    }
}

fn core(err: Error) -> (i32, String) {
    (code(&err), err.to_string())
}

fn null(what: &str) -> (i32, String) {
    (GFC_ERR_NULL, format!("{what} is null"))
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (i32, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (GFC_ERR_UTF8, format!("{what} is not UTF-8")))
}

unsafe fn put<T>(out: *mut *mut T, v: T) {
    *out = Box::into_raw(Box::new(v));
}

fn validated(cfg: ScenarioConfig) -> Result<GfcScenario, (i32, String)> {
    cfg.build().map_err(core)?;
    Ok(GfcScenario { cfg })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gfc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copy the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length in bytes.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes of writes.
#[no_mangle]
pub unsafe extern "C" fn gfc_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Parse and validate a scenario from TOML text.
///
/// # Safety
/// `toml` must be a NUL-terminated string; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn gfc_scenario_from_toml(toml: *const c_char, out: *mut *mut GfcScenario) -> i32 {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let text = read_str(toml, "toml")?;
        let sc = validated(ScenarioConfig::from_toml_str(text).map_err(core)?)?;
        put(out, sc);
        Ok(())
    })
}

/// Load a built-in scenario by name.
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn gfc_scenario_from_preset(name: *const c_char, out: *mut *mut GfcScenario) -> i32 {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let name = read_str(name, "name")?;
        let sc = validated(gfc_core::presets::preset(name).map_err(core)?)?;
        put(out, sc);
        Ok(())
    })
}

/// Override cell count, time step and seed. Zero leaves a value unchanged.
///
/// # Safety
/// `sc` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn gfc_scenario_override(sc: *mut GfcScenario, cells: usize, dt: f64, seed: u64) -> i32 {
    guard(|| {
        let sc = sc.as_mut().ok_or_else(|| null("scenario"))?;
        if dt < 0.0 || dt.is_nan() {
            return Err((GFC_ERR_RANGE, format!("dt must be positive, got {dt}")));
        }
        let cfg = sc.cfg.clone().with_overrides(
            (cells > 0).then_some(cells),
            (dt > 0.0).then_some(dt),
            (seed > 0).then_some(seed),
        );
        *sc = validated(cfg)?;
        Ok(())
    })
}

/// Number of grid cells.
///
/// # Safety
/// `sc` must be a live handle; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn gfc_scenario_cells(sc: *const GfcScenario, out: *mut usize) -> i32 {
    guard(|| {
        let sc = sc.as_ref().ok_or_else(|| null("scenario"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = sc.cfg.grid.cells;
        Ok(())
    })
}

/// # Safety
/// `sc` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gfc_scenario_free(sc: *mut GfcScenario) {
    if !sc.is_null() {
        drop(Box::from_raw(sc));
    }
}

/// Solve the scenario with its configured scheme.
///
/// # Safety
/// `sc` must be a live handle; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn gfc_solve(sc: *const GfcScenario, out: *mut *mut GfcTrajectory) -> i32 {
    guard(|| {
        let sc = sc.as_ref().ok_or_else(|| null("scenario"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let s = sc.cfg.build().map_err(core)?;
        let traj = match s.cfg.scheme {
            Scheme::Duhamel => duhamel_solve(&s.f0, &s.cfg, &s.ks),
            _ => solve(&s.f0, &s.cfg, &s.ks),
        }
        .map_err(core)?;
        put(out, GfcTrajectory { inner: traj });
        Ok(())
    })
}

/// Run every check the scenario enables. `failed` receives the number of
/// failing checks and `total` the number run.
///
/// # Safety
/// `sc` must be a live handle; `failed` and `total` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn gfc_verify(sc: *const GfcScenario, failed: *mut usize, total: *mut usize) -> i32 {
    guard(|| {
        let sc = sc.as_ref().ok_or_else(|| null("scenario"))?;
        if failed.is_null() || total.is_null() {
            return Err(null("out"));
        }
        let (rep, _) = verify(&sc.cfg).map_err(core)?;
        *failed = rep.failures().count();
        *total = rep.checks.len();
        Ok(())
    })
}

/// Number of output times.
///
/// # Safety
/// `tr` must be a live handle; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn gfc_trajectory_len(tr: *const GfcTrajectory, out: *mut usize) -> i32 {
    guard(|| {
        let tr = tr.as_ref().ok_or_else(|| null("trajectory"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = tr.inner.times.len();
        Ok(())
    })
}

/// Observables at output `index`.
///
/// # Safety
/// `tr` must be a live handle; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn gfc_trajectory_observables(
    tr: *const GfcTrajectory,
    index: usize,
    out: *mut GfcObservables,
) -> i32 {
    guard(|| {
        let tr = tr.as_ref().ok_or_else(|| null("trajectory"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let o = tr
            .inner
            .observables
            .get(index)
            .ok_or_else(|| (GFC_ERR_RANGE, format!("index {index} out of range")))?;
        *out = GfcObservables {
            t: o.t,
            m0: o.m0,
            m1: o.m1,
            m2: o.m2,
            mm: o.mm,
            norm0m: o.norm0m,
            min_density: o.min_density,
            escaped_mass: o.escaped_mass,
        };
        Ok(())
    })
}

/// Copy the cell values of output `index` into `buf`, which must hold
/// exactly as many values as the grid has cells.
///
/// # Safety
/// `tr` must be a live handle; `buf` must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn gfc_trajectory_snapshot(
    tr: *const GfcTrajectory,
    index: usize,
    buf: *mut f64,
    len: usize,
) -> i32 {
    guard(|| {
        let tr = tr.as_ref().ok_or_else(|| null("trajectory"))?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let snap = tr
            .inner
            .snapshots
            .get(index)
            .ok_or_else(|| (GFC_ERR_RANGE, format!("index {index} out of range")))?;
        if snap.values.len() != len {
            return Err((GFC_ERR_RANGE, format!("buffer holds {len} values, grid has {}", snap.values.len())));
        }
        ptr::copy_nonoverlapping(snap.values.as_ptr(), buf, len);
        Ok(())
    })
}

/// # Safety
/// `tr` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gfc_trajectory_free(tr: *mut GfcTrajectory) {
    if !tr.is_null() {
        drop(Box::from_raw(tr));
    }
}
