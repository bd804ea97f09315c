//! C interface to the simulator.
//!
//! Scenarios and finished runs are opaque handles owned by the caller and
//! released with their `_free` function. Every fallible call returns a
//! [`SafexpStatus`]; the message of the last failure on the calling thread
//! is available from [`safexp_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use safexp::dynamics::{DubinsPath, PlannerState};
use safexp::sim::{self, Mode, Outcome, RunOutcome, ScenarioConfig};
use safexp::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SafexpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidString = 2,
    InvalidInput = 3,
    Config = 4,
    Io = 5,
    Solver = 6,
    Invariant = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SafexpMode {
    Framework = 0,
    Optimistic = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SafexpOutcome {
    Success = 0,
    Timeout = 1,
    Collision = 2,
}

/// Scenario configuration handle.
pub struct SafexpScenario(ScenarioConfig);

/// Finished run handle.
pub struct SafexpRun(RunOutcome);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> SafexpStatus {
    match e {
        Error::InvalidInput(_) | Error::NonFinite(_) => SafexpStatus::InvalidInput,
        Error::Config(_) => SafexpStatus::Config,
        Error::Io { .. } | Error::Artifact(_) | Error::Log { .. } => SafexpStatus::Io,
        Error::NotConverged { .. } | Error::EmptySublevel(_) | Error::NoInvariantLevel(_) => SafexpStatus::Solver,
        Error::Invariant(_) => SafexpStatus::Invariant,
    }
}

/// Runs `f`, turning errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (SafexpStatus, String)>) -> SafexpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SafexpStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            SafexpStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (SafexpStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (SafexpStatus, String) {
    (SafexpStatus::NullPointer, format!("{what} is null"))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, (SafexpStatus, String)> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| (SafexpStatus::InvalidString, "path is not valid UTF-8".into()))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, (SafexpStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

/// Message of the last failed call on this thread, or an empty string.
/// Valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn safexp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Loads a scenario file. On success `*out` receives a new handle.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn safexp_scenario_load(path: *const c_char, out: *mut *mut SafexpScenario) -> SafexpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = ScenarioConfig::load(&path_arg(path)?).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(SafexpScenario(cfg)));
        Ok(())
    })
}

/// # Safety
/// `scenario` must be a handle from [`safexp_scenario_load`].
#[no_mangle]
pub unsafe extern "C" fn safexp_scenario_set_seed(scenario: *mut SafexpScenario, seed: u64) -> SafexpStatus {
    guard(|| {
        scenario.as_mut().ok_or_else(|| null("scenario"))?.0.planner.seed = seed;
        Ok(())
    })
}

/// # Safety
/// `scenario` must be a handle from [`safexp_scenario_load`].
#[no_mangle]
pub unsafe extern "C" fn safexp_scenario_set_max_ticks(scenario: *mut SafexpScenario, max_ticks: u64) -> SafexpStatus {
    guard(|| {
        let s = scenario.as_mut().ok_or_else(|| null("scenario"))?;
        s.0.termination.max_ticks = usize::try_from(max_ticks).map_err(|_| (SafexpStatus::InvalidInput, "max_ticks too large".into()))?;
        Ok(())
    })
}

/// Releases a scenario handle. Null is ignored.
///
/// # Safety
/// `scenario` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn safexp_scenario_free(scenario: *mut SafexpScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Builds (or loads from cache) the tracking model and runs the scenario to
/// termination. On success `*out` receives a new run handle.
///
/// # Safety
/// `scenario` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn safexp_run(scenario: *const SafexpScenario, mode: SafexpMode, out: *mut *mut SafexpRun) -> SafexpStatus {
    guard(|| {
        let cfg = &deref(scenario, "scenario")?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        let mode = match mode {
            SafexpMode::Framework => Mode::Framework,
            SafexpMode::Optimistic => Mode::Optimistic,
        };
        let run = sim::run(cfg, mode).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(SafexpRun(run)));
        Ok(())
    })
}

/// # Safety
/// `run` must be a live handle and `outcome` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn safexp_run_outcome(run: *const SafexpRun, outcome: *mut SafexpOutcome) -> SafexpStatus {
    guard(|| {
        let r = &deref(run, "run")?.0;
        if outcome.is_null() {
            return Err(null("outcome"));
        }
        *outcome = match r.outcome {
            Outcome::Success => SafexpOutcome::Success,
            Outcome::Timeout => SafexpOutcome::Timeout,
            Outcome::Collision => SafexpOutcome::Collision,
        };
        Ok(())
    })
}

/// Ticks simulated and violations recorded.
///
/// # Safety
/// `run` must be a live handle; `ticks` and `violations` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn safexp_run_counts(run: *const SafexpRun, ticks: *mut u64, violations: *mut u64) -> SafexpStatus {
    guard(|| {
        let r = &deref(run, "run")?.0;
        if ticks.is_null() || violations.is_null() {
            return Err(null("output"));
        }
        *ticks = r.ticks as u64;
        *violations = r.violations().len() as u64;
        Ok(())
    })
}

/// Largest planar and vertical tracking errors over the run.
///
/// # Safety
/// `run` must be a live handle; `planar` and `vertical` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn safexp_run_tracking_error(run: *const SafexpRun, planar: *mut f64, vertical: *mut f64) -> SafexpStatus {
    guard(|| {
        let r = &deref(run, "run")?.0;
        if planar.is_null() || vertical.is_null() {
            return Err(null("output"));
        }
        *planar = r.max_distance;
        *vertical = r.max_z_error;
        Ok(())
    })
}

/// Writes the run log as JSON lines.
///
/// # Safety
/// `run` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn safexp_run_write_log(run: *const SafexpRun, path: *const c_char) -> SafexpStatus {
    guard(|| {
        let r = &deref(run, "run")?.0;
        r.log.save(&path_arg(path)?).map_err(lib_err)
    })
}

/// Releases a run handle. Null is ignored.
///
/// # Safety
/// `run` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn safexp_run_free(run: *mut SafexpRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Length of the shortest bounded-curvature path between two `(x, y, heading)` poses.
///
/// # Safety
/// `from` and `to` must point to three doubles each, `length` to one.
#[no_mangle]
pub unsafe extern "C" fn safexp_dubins_length(from: *const f64, to: *const f64, radius: f64, length: *mut f64) -> SafexpStatus {
    guard(|| {
        if from.is_null() || to.is_null() || length.is_null() {
            return Err(null("argument"));
        }
        let pose = |p: *const f64| {
            let s = std::slice::from_raw_parts(p, 3);
            PlannerState::new(s[0], s[1], s[2])
        };
        let path = DubinsPath::shortest(&pose(from), &pose(to), radius)
            .map_err(lib_err)?
            .ok_or_else(|| (SafexpStatus::InvalidInput, "no path".into()))?;
        *length = path.length();
        Ok(())
    })
}
