//! C ABI over `mmh-core`: load maps, parse or compile NavScript, execute,
//! and score. Objects are opaque handles released with their `_free`
//! function. Every fallible call returns an [`MmhStatus`]; on failure the
//! message is available from [`mmh_last_error_message`] on the same thread.

use mmh_core::compiler::compile_rules;
use mmh_core::kinematics::RobotState;
use mmh_core::metrics::{evaluate_episode, Episode, MetricsConfig};
use mmh_core::navgraph::build_grid_graph;
use mmh_core::navscript::{execute, parse_source, ExecConfig, ExecStatus, ExecutionResult, NavProgram};
use mmh_core::world::{load_map, WorldMap};
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MmhStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    MapError = 3,
    ParseError = 4,
    CompileError = 5,
    ExecError = 6,
    MetricError = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MmhExecStatus {
    Success = 0,
    StoppedEarly = 1,
    Stuck = 2,
    BudgetExceeded = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MmhPose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

/// `spd` is `INFINITY` when the goal is unreachable.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MmhMetrics {
    pub sr: f64,
    pub osr: f64,
    pub spd: f64,
    pub cls: f64,
}

pub struct MmhMap(WorldMap);
pub struct MmhProgram(NavProgram);
pub struct MmhRunResult(ExecutionResult);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

type Failure = (MmhStatus, String);

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MmhStatus {
    set_error("");
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MmhStatus::Ok,
        Ok(Err((code, msg))) => {
            set_error(&msg);
            code
        }
        Err(_) => {
            set_error("internal panic");
            MmhStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err((MmhStatus::NullArgument, "null string argument".into()));
    }
    CStr::from_ptr(p).to_str().map_err(|e| (MmhStatus::InvalidUtf8, e.to_string()))
}

unsafe fn obj<'a, T>(p: *const T) -> Result<&'a T, Failure> {
    p.as_ref().ok_or((MmhStatus::NullArgument, "null handle".into()))
}

unsafe fn out<'a, T>(p: *mut *mut T) -> Result<&'a mut *mut T, Failure> {
    p.as_mut().ok_or((MmhStatus::NullArgument, "null output pointer".into()))
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn mmh_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mmh_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a map from its JSON text.
///
/// # Safety
/// `json` must be a valid NUL-terminated string; `out_map` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn mmh_map_load_json(json: *const c_char, out_map: *mut *mut MmhMap) -> MmhStatus {
    guard(|| {
        let slot = out(out_map)?;
        *slot = ptr::null_mut();
        let m = load_map(text(json)?).map_err(|e| (MmhStatus::MapError, e.to_string()))?;
        *slot = Box::into_raw(Box::new(MmhMap(m)));
        Ok(())
    })
}

/// # Safety
/// `map` must come from `mmh_map_load_json` and not be freed twice. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn mmh_map_free(map: *mut MmhMap) {
    if !map.is_null() {
        drop(Box::from_raw(map));
    }
}

/// Parses NavScript source.
///
/// # Safety
/// `source` must be a valid NUL-terminated string; `out_program` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn mmh_program_parse(source: *const c_char, out_program: *mut *mut MmhProgram) -> MmhStatus {
    guard(|| {
        let slot = out(out_program)?;
        *slot = ptr::null_mut();
        let p = parse_source(text(source)?).map_err(|e| (MmhStatus::ParseError, e.to_string()))?;
        *slot = Box::into_raw(Box::new(MmhProgram(p)));
        Ok(())
    })
}

/// Compiles a controlled-English instruction with the rule backend.
///
/// # Safety
/// `instruction` must be a valid NUL-terminated string; `out_program` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn mmh_program_compile_rules(
    instruction: *const c_char,
    out_program: *mut *mut MmhProgram,
) -> MmhStatus {
    guard(|| {
        let slot = out(out_program)?;
        *slot = ptr::null_mut();
        let rec = compile_rules(text(instruction)?).map_err(|e| (MmhStatus::CompileError, e.to_string()))?;
        let p = parse_source(&rec.navscript).map_err(|e| (MmhStatus::CompileError, e.to_string()))?;
        *slot = Box::into_raw(Box::new(MmhProgram(p)));
        Ok(())
    })
}

/// Canonical source text of a program; release with `mmh_string_free`.
/// Returns null on a null handle.
///
/// # Safety
/// `program` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn mmh_program_to_string(program: *const MmhProgram) -> *mut c_char {
    match program.as_ref() {
        Some(p) => CString::new(p.0.pretty_print()).map_or(ptr::null_mut(), CString::into_raw),
        None => ptr::null_mut(),
    }
}

/// # Safety
/// `program` must come from this library and not be freed twice. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn mmh_program_free(program: *mut MmhProgram) {
    if !program.is_null() {
        drop(Box::from_raw(program));
    }
}

/// Runs `program` from the map's start pose with default simulation settings.
///
/// # Safety
/// `map` and `program` must be live handles; `out_result` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn mmh_execute(
    map: *const MmhMap,
    program: *const MmhProgram,
    budget_s: f64,
    seed: u64,
    out_result: *mut *mut MmhRunResult,
) -> MmhStatus {
    guard(|| {
        let slot = out(out_result)?;
        *slot = ptr::null_mut();
        let (m, p) = (obj(map)?, obj(program)?);
        let cfg = ExecConfig::default();
        let initial = RobotState::at_start(&m.0, &cfg.sim);
        let r =
            execute(&p.0, &m.0, &initial, budget_s, seed, &cfg).map_err(|e| (MmhStatus::ExecError, e.to_string()))?;
        *slot = Box::into_raw(Box::new(MmhRunResult(r)));
        Ok(())
    })
}

/// # Safety
/// `result` must be a live handle; `out_status` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn mmh_run_result_status(
    result: *const MmhRunResult,
    out_status: *mut MmhExecStatus,
) -> MmhStatus {
    guard(|| {
        let r = obj(result)?;
        let s = out_status.as_mut().ok_or((MmhStatus::NullArgument, "null output pointer".into()))?;
        *s = match r.0.status {
            ExecStatus::Success => MmhExecStatus::Success,
            ExecStatus::StoppedEarly => MmhExecStatus::StoppedEarly,
            ExecStatus::Stuck => MmhExecStatus::Stuck,
            ExecStatus::BudgetExceeded => MmhExecStatus::BudgetExceeded,
        };
        Ok(())
    })
}

/// # Safety
/// `result` must be a live handle; `out_pose` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn mmh_run_result_final_pose(result: *const MmhRunResult, out_pose: *mut MmhPose) -> MmhStatus {
    guard(|| {
        let r = obj(result)?;
        let o = out_pose.as_mut().ok_or((MmhStatus::NullArgument, "null output pointer".into()))?;
        let p = r.0.final_state.pose;
        *o = MmhPose { x: p.x, y: p.y, heading: p.heading };
        Ok(())
    })
}

/// Number of trajectory samples; 0 for a null handle.
///
/// # Safety
/// `result` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn mmh_run_result_sample_count(result: *const MmhRunResult) -> usize {
    result.as_ref().map_or(0, |r| r.0.trajectory.samples.len())
}

/// Trajectory as JSON lines; release with `mmh_string_free`. Null on a null handle.
///
/// # Safety
/// `result` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn mmh_run_result_trajectory_jsonl(result: *const MmhRunResult) -> *mut c_char {
    let Some(r) = result.as_ref() else { return ptr::null_mut() };
    let mut buf = Vec::new();
    if r.0.trajectory.write_jsonl(&mut buf).is_err() {
        return ptr::null_mut();
    }
    CString::new(buf).map_or(ptr::null_mut(), CString::into_raw)
}

/// Scores a run against the map's reference route (or start to goal when the
/// map has none) with default metric settings.
///
/// # Safety
/// `map` and `result` must be live handles; `out_metrics` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn mmh_run_result_metrics(
    map: *const MmhMap,
    result: *const MmhRunResult,
    out_metrics: *mut MmhMetrics,
) -> MmhStatus {
    guard(|| {
        let (m, r) = (obj(map)?, obj(result)?);
        let o = out_metrics.as_mut().ok_or((MmhStatus::NullArgument, "null output pointer".into()))?;
        let cfg = MetricsConfig::default();
        let grid = build_grid_graph(&m.0, cfg.grid_cell).map_err(|e| (MmhStatus::MetricError, e.to_string()))?;
        let reference =
            if m.0.reference.is_empty() { vec![m.0.start.point(), m.0.goal] } else { m.0.reference.clone() };
        let ep = Episode { trajectory: r.0.trajectory.points(), reference, goal: m.0.goal };
        let rep = evaluate_episode(&ep, &grid, &cfg).map_err(|e| (MmhStatus::MetricError, e.to_string()))?;
        *o = MmhMetrics { sr: rep.sr, osr: rep.osr, spd: rep.spd, cls: rep.cls };
        Ok(())
    })
}

/// # Safety
/// `result` must come from `mmh_execute` and not be freed twice. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn mmh_run_result_free(result: *mut MmhRunResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// # Safety
/// `s` must be a string returned by this library, freed once. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn mmh_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
