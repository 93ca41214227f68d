//! C ABI over `coig-core`.
//!
//! Every function returns a [`CoigStatus`]. Results come back as
//! NUL-terminated JSON strings through out-pointers and must be released
//! with [`coig_string_free`]. On failure, [`coig_last_error`] describes the
//! most recent error on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use coig_core::canonical;
use coig_core::engine::{CliConfig, Engine, EngineError, ErrorKind};
use coig_core::executor::Intervention;
use coig_core::planner::ChainPlan;
use coig_core::runstore::RunSummary;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CoigStatus {
    Ok = 0,
    NotFound = 1,
    InvalidInput = 2,
    Conflict = 3,
    BackendFailure = 4,
    Internal = 5,
    NullArgument = 6,
    InvalidUtf8 = 7,
}

impl From<ErrorKind> for CoigStatus {
    fn from(kind: ErrorKind) -> Self {
        match kind {
            ErrorKind::NotFound => CoigStatus::NotFound,
            ErrorKind::InvalidInput => CoigStatus::InvalidInput,
            ErrorKind::Conflict => CoigStatus::Conflict,
            ErrorKind::BackendFailure => CoigStatus::BackendFailure,
            ErrorKind::Internal => CoigStatus::Internal,
        }
    }
}

/// Opaque engine handle.
pub struct CoigEngine {
    engine: Engine,
}

struct Failure {
    status: CoigStatus,
    message: String,
}

impl Failure {
    fn new(status: CoigStatus, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        Self::new(e.kind().into(), e.to_string())
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CoigStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            CoigStatus::Ok
        }
        Ok(Err(failure)) => {
            set_last_error(&failure.message);
            failure.status
        }
        Err(_) => {
            set_last_error("internal error: panic inside coig");
            CoigStatus::Internal
        }
    }
}

unsafe fn opt_str<'a>(p: *const c_char, name: &str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        return Ok(None);
    }
    CStr::from_ptr(p).to_str().map(Some).map_err(|_| {
        Failure::new(
            CoigStatus::InvalidUtf8,
            format!("{name} is not valid UTF-8"),
        )
    })
}

unsafe fn req_str<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    opt_str(p, name)?
        .ok_or_else(|| Failure::new(CoigStatus::NullArgument, format!("{name} is null")))
}

unsafe fn engine<'a>(p: *const CoigEngine) -> Result<&'a Engine, Failure> {
    p.as_ref()
        .map(|h| &h.engine)
        .ok_or_else(|| Failure::new(CoigStatus::NullArgument, "engine is null"))
}

unsafe fn check_out<T>(out: *mut *mut T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::new(
            CoigStatus::NullArgument,
            "output pointer is null",
        ));
    }
    *out = ptr::null_mut();
    Ok(())
}

unsafe fn put_string(out: *mut *mut c_char, text: String) -> Result<(), Failure> {
    let c = CString::new(text)
        .map_err(|_| Failure::new(CoigStatus::Internal, "result contains NUL"))?;
    *out = c.into_raw();
    Ok(())
}

unsafe fn put_json<T: serde::Serialize>(out: *mut *mut c_char, value: &T) -> Result<(), Failure> {
    let text = canonical::to_string(value)
        .map_err(|e| Failure::new(CoigStatus::Internal, e.to_string()))?;
    put_string(out, text)
}

fn parse_json<T: serde::de::DeserializeOwned>(text: &str, name: &str) -> Result<T, Failure> {
    canonical::from_str(text)
        .map_err(|e| Failure::new(CoigStatus::InvalidInput, format!("{name}: {e}")))
}

/// Opens an engine. `config_path` may be null for the built-in mock-only
/// configuration; a non-null `store_root` overrides the configured store.
///
/// # Safety
/// String arguments must be null or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn coig_engine_open(
    config_path: *const c_char,
    store_root: *const c_char,
    out: *mut *mut CoigEngine,
) -> CoigStatus {
    guard(|| {
        check_out(out)?;
        let mut config = match opt_str(config_path, "config_path")? {
            Some(path) => CliConfig::load(Path::new(path))?,
            None => CliConfig::default(),
        };
        if let Some(root) = opt_str(store_root, "store_root")? {
            config.store_root = root.into();
        }
        let engine = Engine::new(config)?;
        *out = Box::into_raw(Box::new(CoigEngine { engine }));
        Ok(())
    })
}

/// # Safety
/// `engine` must come from [`coig_engine_open`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn coig_engine_free(engine: *mut CoigEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn coig_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn coig_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Decomposes `prompt` into a plan (JSON).
///
/// # Safety
/// Pointers must be valid as described in the header; `profile` may be null.
#[no_mangle]
pub unsafe extern "C" fn coig_plan(
    engine: *const CoigEngine,
    prompt: *const c_char,
    profile: *const c_char,
    out_plan_json: *mut *mut c_char,
) -> CoigStatus {
    guard(|| {
        check_out(out_plan_json)?;
        let plan =
            self::engine(engine)?.plan(req_str(prompt, "prompt")?, opt_str(profile, "profile")?)?;
        put_json(out_plan_json, &plan)
    })
}

/// Starts a run from a plan document and executes it (one step when
/// `step_mode` is set). Writes the run summary (JSON).
///
/// # Safety
/// Pointers must be valid as described in the header; `profile` may be null.
#[no_mangle]
pub unsafe extern "C" fn coig_run_plan(
    engine: *const CoigEngine,
    plan_json: *const c_char,
    profile: *const c_char,
    step_mode: bool,
    out_summary_json: *mut *mut c_char,
) -> CoigStatus {
    guard(|| {
        check_out(out_summary_json)?;
        let plan: ChainPlan = parse_json(req_str(plan_json, "plan_json")?, "plan_json")?;
        let run = self::engine(engine)?.start(plan, opt_str(profile, "profile")?, step_mode)?;
        put_json(out_summary_json, &RunSummary::of(&run))
    })
}

/// Plans `prompt` and runs the plan. Writes the run summary (JSON).
///
/// # Safety
/// Pointers must be valid as described in the header; `profile` may be null.
#[no_mangle]
pub unsafe extern "C" fn coig_run_prompt(
    engine: *const CoigEngine,
    prompt: *const c_char,
    profile: *const c_char,
    step_mode: bool,
    out_summary_json: *mut *mut c_char,
) -> CoigStatus {
    guard(|| {
        check_out(out_summary_json)?;
        let e = self::engine(engine)?;
        let profile = opt_str(profile, "profile")?;
        let plan = e.plan(req_str(prompt, "prompt")?, profile)?;
        let run = e.start(plan, profile, step_mode)?;
        put_json(out_summary_json, &RunSummary::of(&run))
    })
}

/// Writes the full run manifest (JSON).
///
/// # Safety
/// Pointers must be valid as described in the header.
#[no_mangle]
pub unsafe extern "C" fn coig_run_get(
    engine: *const CoigEngine,
    run_id: *const c_char,
    out_run_json: *mut *mut c_char,
) -> CoigStatus {
    guard(|| {
        check_out(out_run_json)?;
        let run = self::engine(engine)?
            .store()
            .load_run(req_str(run_id, "run_id")?)
            .map_err(EngineError::from)?;
        put_json(out_run_json, &run)
    })
}

/// # Safety
/// Pointers must be valid as described in the header.
#[no_mangle]
pub unsafe extern "C" fn coig_run_pause(
    engine: *const CoigEngine,
    run_id: *const c_char,
    out_summary_json: *mut *mut c_char,
) -> CoigStatus {
    guard(|| {
        check_out(out_summary_json)?;
        let run = self::engine(engine)?.pause(req_str(run_id, "run_id")?)?;
        put_json(out_summary_json, &RunSummary::of(&run))
    })
}

/// # Safety
/// Pointers must be valid as described in the header.
#[no_mangle]
pub unsafe extern "C" fn coig_run_resume(
    engine: *const CoigEngine,
    run_id: *const c_char,
    retry_failed: bool,
    out_summary_json: *mut *mut c_char,
) -> CoigStatus {
    guard(|| {
        check_out(out_summary_json)?;
        let run = self::engine(engine)?.resume(req_str(run_id, "run_id")?, retry_failed)?;
        put_json(out_summary_json, &RunSummary::of(&run))
    })
}

/// Applies an intervention document to a paused run.
///
/// # Safety
/// Pointers must be valid as described in the header.
#[no_mangle]
pub unsafe extern "C" fn coig_run_intervene(
    engine: *const CoigEngine,
    run_id: *const c_char,
    intervention_json: *const c_char,
    out_summary_json: *mut *mut c_char,
) -> CoigStatus {
    guard(|| {
        check_out(out_summary_json)?;
        let iv: Intervention = parse_json(
            req_str(intervention_json, "intervention_json")?,
            "intervention_json",
        )?;
        let run = self::engine(engine)?.intervene(req_str(run_id, "run_id")?, iv)?;
        put_json(out_summary_json, &RunSummary::of(&run))
    })
}

/// # Safety
/// Pointers must be valid as described in the header.
#[no_mangle]
pub unsafe extern "C" fn coig_eval_readability(
    engine: *const CoigEngine,
    run_id: *const c_char,
    out_report_json: *mut *mut c_char,
) -> CoigStatus {
    guard(|| {
        check_out(out_report_json)?;
        let report = self::engine(engine)?.eval_readability(req_str(run_id, "run_id")?)?;
        put_json(out_report_json, &report)
    })
}

/// Perturbs the color set at plan step `step` to `to_color`.
///
/// # Safety
/// Pointers must be valid as described in the header.
#[no_mangle]
pub unsafe extern "C" fn coig_eval_causal(
    engine: *const CoigEngine,
    run_id: *const c_char,
    step: u32,
    to_color: *const c_char,
    out_report_json: *mut *mut c_char,
) -> CoigStatus {
    guard(|| {
        check_out(out_report_json)?;
        let outcome = self::engine(engine)?.eval_causal(
            req_str(run_id, "run_id")?,
            step,
            req_str(to_color, "to_color")?,
        )?;
        put_json(out_report_json, &outcome)
    })
}

/// Writes `count` entity-collapse prompts as JSON lines.
///
/// # Safety
/// Pointers must be valid as described in the header.
#[no_mangle]
pub unsafe extern "C" fn coig_ec_generate(
    engine: *const CoigEngine,
    count: usize,
    seed: u64,
    out_jsonl: *mut *mut c_char,
) -> CoigStatus {
    guard(|| {
        check_out(out_jsonl)?;
        let prompts = self::engine(engine)?.ec_generate(count, Some(seed))?;
        put_string(out_jsonl, coig_core::bench::to_jsonl(&prompts))
    })
}
