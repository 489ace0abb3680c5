//! C ABI over the cloud-tracking pipeline.
//!
//! The interface follows the usual handle-and-status-code shape: every
//! fallible call returns a [`TtStatus`], results travel through out
//! pointers, and the pipeline output lives behind the opaque [`TtRun`]
//! handle until [`tt_run_free`]. Failure details are kept per thread and
//! readable via [`tt_last_error`]. All functions catch panics at the
//! boundary and turn them into [`TtStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use topotrack::field::{generate_synthetic, write_sequence, SyntheticSpec};
use topotrack::pipeline::{run_pipeline, RunOutput};
use topotrack::tracker::EventKind;
use topotrack::RunConfig;

/// Status code returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TtStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// The configuration or spec document failed to parse or validate.
    InvalidConfig = 3,
    /// The pipeline reported an error; see `tt_last_error`.
    RunFailed = 4,
    /// An index argument was out of range.
    OutOfRange = 5,
    /// A panic was caught at the boundary; see `tt_last_error`.
    Panic = 6,
}

/// Event kinds, mirroring the tracker's enum.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TtEventKind {
    Birth = 0,
    Split = 1,
    Merge = 2,
    Termination = 3,
}

/// One trajectory entry: where a system sat at one frame.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct TtTrajectoryPoint {
    pub time_index: u64,
    pub system_id: u32,
    pub area_px: u64,
    pub x_km: f64,
    pub y_km: f64,
    pub mean_value: f64,
}

/// Fixed-size view of one event; member system ids are fetched separately
/// with `tt_run_event_from_id` / `tt_run_event_to_id`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct TtEvent {
    pub time_index: u64,
    pub kind: TtEventKind,
    pub from_count: usize,
    pub to_count: usize,
}

/// Opaque pipeline result handle.
pub struct TtRun {
    output: RunOutput,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn guarded(f: impl FnOnce() -> TtStatus) -> TtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(&format!("panic: {msg}"));
            TtStatus::Panic
        }
    }
}

/// Reads a C string argument, recording the failure kind on error.
unsafe fn read_str<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, TtStatus> {
    if ptr.is_null() {
        set_error(&format!("{what} is null"));
        return Err(TtStatus::NullPointer);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error(&format!("{what} is not valid UTF-8"));
        TtStatus::InvalidUtf8
    })
}

unsafe fn deref_run<'a>(run: *const TtRun) -> Result<&'a TtRun, TtStatus> {
    if run.is_null() {
        set_error("run handle is null");
        return Err(TtStatus::NullPointer);
    }
    Ok(&*run)
}

fn require_out<T>(out: *mut T) -> Result<(), TtStatus> {
    if out.is_null() {
        set_error("out pointer is null");
        return Err(TtStatus::NullPointer);
    }
    Ok(())
}

/// Returns the crate version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Returns the calling thread's last error message as a NUL-terminated
/// string. The pointer stays valid until the next failing call on the same
/// thread. Never null; empty when no error was recorded.
#[no_mangle]
pub extern "C" fn tt_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Parses a flat JSON run configuration, executes the pipeline (including
/// artifact writes to the configured output directory) and hands back the
/// result. `jobs = 0` keeps the default worker count.
///
/// # Safety
/// `config_json` must be a valid NUL-terminated C string and `out` a valid
/// pointer. On `TtStatus::Ok`, `*out` owns the run and must be released
/// with [`tt_run_free`]; on any other status `*out` is untouched.
#[no_mangle]
pub unsafe extern "C" fn tt_run_from_json(
    config_json: *const c_char,
    jobs: u32,
    out: *mut *mut TtRun,
) -> TtStatus {
    guarded(|| {
        if let Err(status) = require_out(out) {
            return status;
        }
        let json = match read_str(config_json, "config_json") {
            Ok(s) => s,
            Err(status) => return status,
        };
        let cfg: RunConfig = match serde_json::from_str(json) {
            Ok(cfg) => cfg,
            Err(err) => {
                set_error(&format!("config parse error: {err}"));
                return TtStatus::InvalidConfig;
            }
        };
        if let Err(err) = cfg.validate() {
            set_error(&format!("config validation error: {err}"));
            return TtStatus::InvalidConfig;
        }
        let threads = if jobs == 0 { None } else { Some(jobs as usize) };
        match run_pipeline(&cfg, threads) {
            Ok(output) => {
                *out = Box::into_raw(Box::new(TtRun { output }));
                TtStatus::Ok
            }
            Err(err) => {
                set_error(&format!("run failed: {err}"));
                TtStatus::RunFailed
            }
        }
    })
}

/// Releases a run handle. Null is a no-op.
///
/// # Safety
/// `run` must be null or a pointer obtained from [`tt_run_from_json`] that
/// has not been freed yet.
#[no_mangle]
pub unsafe extern "C" fn tt_run_free(run: *mut TtRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Writes the number of trajectories to `out`.
///
/// # Safety
/// `run` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tt_run_trajectory_count(
    run: *const TtRun,
    out: *mut usize,
) -> TtStatus {
    guarded(|| {
        if let Err(status) = require_out(out) {
            return status;
        }
        match deref_run(run) {
            Ok(r) => {
                *out = r.output.trajectories.trajectories.len();
                TtStatus::Ok
            }
            Err(status) => status,
        }
    })
}

/// Writes trajectory `index`'s identifier to `out`.
///
/// # Safety
/// `run` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tt_run_trajectory_id(
    run: *const TtRun,
    index: usize,
    out: *mut u32,
) -> TtStatus {
    guarded(|| {
        if let Err(status) = require_out(out) {
            return status;
        }
        let r = match deref_run(run) {
            Ok(r) => r,
            Err(status) => return status,
        };
        match r.output.trajectories.trajectories.get(index) {
            Some(traj) => {
                *out = traj.id;
                TtStatus::Ok
            }
            None => {
                set_error(&format!("trajectory index {index} out of range"));
                TtStatus::OutOfRange
            }
        }
    })
}

/// Writes the entry count of trajectory `index` to `out`.
///
/// # Safety
/// `run` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tt_run_trajectory_length(
    run: *const TtRun,
    index: usize,
    out: *mut usize,
) -> TtStatus {
    guarded(|| {
        if let Err(status) = require_out(out) {
            return status;
        }
        let r = match deref_run(run) {
            Ok(r) => r,
            Err(status) => return status,
        };
        match r.output.trajectories.trajectories.get(index) {
            Some(traj) => {
                *out = traj.entries.len();
                TtStatus::Ok
            }
            None => {
                set_error(&format!("trajectory index {index} out of range"));
                TtStatus::OutOfRange
            }
        }
    })
}

/// Copies entry `entry` of trajectory `traj` into `out`.
///
/// # Safety
/// `run` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tt_run_trajectory_point(
    run: *const TtRun,
    traj: usize,
    entry: usize,
    out: *mut TtTrajectoryPoint,
) -> TtStatus {
    guarded(|| {
        if let Err(status) = require_out(out) {
            return status;
        }
        let r = match deref_run(run) {
            Ok(r) => r,
            Err(status) => return status,
        };
        let Some(t) = r.output.trajectories.trajectories.get(traj) else {
            set_error(&format!("trajectory index {traj} out of range"));
            return TtStatus::OutOfRange;
        };
        let Some(e) = t.entries.get(entry) else {
            set_error(&format!("entry index {entry} out of range"));
            return TtStatus::OutOfRange;
        };
        *out = TtTrajectoryPoint {
            time_index: e.time_index as u64,
            system_id: e.system_id,
            area_px: e.area_px,
            x_km: e.centroid_km.0,
            y_km: e.centroid_km.1,
            mean_value: e.mean_value,
        };
        TtStatus::Ok
    })
}

/// Writes the number of events to `out`.
///
/// # Safety
/// `run` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tt_run_event_count(run: *const TtRun, out: *mut usize) -> TtStatus {
    guarded(|| {
        if let Err(status) = require_out(out) {
            return status;
        }
        match deref_run(run) {
            Ok(r) => {
                *out = r.output.trajectories.events.len();
                TtStatus::Ok
            }
            Err(status) => status,
        }
    })
}

/// Copies the fixed-size header of event `index` into `out`.
///
/// # Safety
/// `run` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tt_run_event(
    run: *const TtRun,
    index: usize,
    out: *mut TtEvent,
) -> TtStatus {
    guarded(|| {
        if let Err(status) = require_out(out) {
            return status;
        }
        let r = match deref_run(run) {
            Ok(r) => r,
            Err(status) => return status,
        };
        let Some(event) = r.output.trajectories.events.get(index) else {
            set_error(&format!("event index {index} out of range"));
            return TtStatus::OutOfRange;
        };
        *out = TtEvent {
            time_index: event.time_index as u64,
            kind: match event.kind {
                EventKind::Birth => TtEventKind::Birth,
                EventKind::Split => TtEventKind::Split,
                EventKind::Merge => TtEventKind::Merge,
                EventKind::Termination => TtEventKind::Termination,
            },
            from_count: event.from_ids.len(),
            to_count: event.to_ids.len(),
        };
        TtStatus::Ok
    })
}

unsafe fn event_member(
    run: *const TtRun,
    index: usize,
    member: usize,
    out: *mut u32,
    to_side: bool,
) -> TtStatus {
    if let Err(status) = require_out(out) {
        return status;
    }
    let r = match deref_run(run) {
        Ok(r) => r,
        Err(status) => return status,
    };
    let Some(event) = r.output.trajectories.events.get(index) else {
        set_error(&format!("event index {index} out of range"));
        return TtStatus::OutOfRange;
    };
    let ids = if to_side { &event.to_ids } else { &event.from_ids };
    match ids.get(member) {
        Some(&id) => {
            *out = id;
            TtStatus::Ok
        }
        None => {
            set_error(&format!("event member index {member} out of range"));
            TtStatus::OutOfRange
        }
    }
}

/// Writes the `member`-th source system id of event `index` to `out`.
///
/// # Safety
/// `run` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tt_run_event_from_id(
    run: *const TtRun,
    index: usize,
    member: usize,
    out: *mut u32,
) -> TtStatus {
    guarded(|| event_member(run, index, member, out, false))
}

/// Writes the `member`-th target system id of event `index` to `out`.
///
/// # Safety
/// `run` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tt_run_event_to_id(
    run: *const TtRun,
    index: usize,
    member: usize,
    out: *mut u32,
) -> TtStatus {
    guarded(|| event_member(run, index, member, out, true))
}

/// Serializes the run's evaluation report to JSON and hands ownership of
/// the string to the caller.
///
/// # Safety
/// `run` must be a live handle and `out` a valid pointer. On
/// `TtStatus::Ok`, `*out` must be released with [`tt_string_free`].
#[no_mangle]
pub unsafe extern "C" fn tt_run_report_json(
    run: *const TtRun,
    out: *mut *mut c_char,
) -> TtStatus {
    guarded(|| {
        if let Err(status) = require_out(out) {
            return status;
        }
        let r = match deref_run(run) {
            Ok(r) => r,
            Err(status) => return status,
        };
        let json = match serde_json::to_string_pretty(&r.output.report) {
            Ok(json) => json,
            Err(err) => {
                set_error(&format!("report serialization failed: {err}"));
                return TtStatus::RunFailed;
            }
        };
        match CString::new(json) {
            Ok(cstr) => {
                *out = cstr.into_raw();
                TtStatus::Ok
            }
            Err(_) => {
                set_error("report contained an interior NUL byte");
                TtStatus::RunFailed
            }
        }
    })
}

/// Releases a string returned by [`tt_run_report_json`]. Null is a no-op.
///
/// # Safety
/// `s` must be null or a pointer obtained from this library that has not
/// been freed yet.
#[no_mangle]
pub unsafe extern "C" fn tt_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Renders a synthetic scene spec (JSON) into a directory of grid frames,
/// ready to be consumed as a pipeline input directory.
///
/// # Safety
/// `spec_json` and `dir` must be valid NUL-terminated C strings.
#[no_mangle]
pub unsafe extern "C" fn tt_synthesize_json(
    spec_json: *const c_char,
    dir: *const c_char,
) -> TtStatus {
    guarded(|| {
        let json = match read_str(spec_json, "spec_json") {
            Ok(s) => s,
            Err(status) => return status,
        };
        let dir = match read_str(dir, "dir") {
            Ok(s) => PathBuf::from(s),
            Err(status) => return status,
        };
        let spec: SyntheticSpec = match serde_json::from_str(json) {
            Ok(spec) => spec,
            Err(err) => {
                set_error(&format!("spec parse error: {err}"));
                return TtStatus::InvalidConfig;
            }
        };
        let seq = match generate_synthetic(&spec) {
            Ok(seq) => seq,
            Err(err) => {
                set_error(&format!("synthesis failed: {err}"));
                return TtStatus::RunFailed;
            }
        };
        match write_sequence(&seq, &dir) {
            Ok(()) => TtStatus::Ok,
            Err(err) => {
                set_error(&format!("write failed: {err}"));
                TtStatus::RunFailed
            }
        }
    })
}
