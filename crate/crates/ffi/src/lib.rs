//! C ABI for the gridplan simulator.
//!
//! Every function returns a [`GpStatus`]. On failure the message is kept in a
//! thread-local slot readable through [`gp_last_error`]. Objects cross the
//! boundary as opaque pointers and must be released with their `_free`
//! function; strings returned through out-parameters are released with
//! [`gp_string_free`].

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use gridplan::config::RunConfig;
use gridplan::execution::JobStatus;
use gridplan::feeder::{disaggregate_loads, load_feeder, validate_radial, FeederModel};
use gridplan::pipeline::{run_pipeline, PipelineError, Stage};
use gridplan::powerflow::{solve_snapshot, PowerFlowConfig};

/// Result code of every exported function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    InvalidFeeder = 5,
    Domain = 6,
    NonConvergence = 7,
    NotFound = 8,
    Config = 9,
    Pipeline = 10,
    Partial = 11,
    Panic = 12,
}

/// A validated feeder model.
pub struct GpFeeder {
    model: FeederModel,
}

/// The outcome of a finished pipeline run.
pub struct GpRun {
    run_id: String,
    total: usize,
    completed: usize,
    failed: usize,
    wall_seconds: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(CString::new(msg).expect("no interior nul")));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Failure(GpStatus, String);

impl From<gridplan::Error> for Failure {
    fn from(e: gridplan::Error) -> Self {
        use gridplan::Error as E;
        let status = match &e {
            E::Io { .. } => GpStatus::Io,
            E::Parse { .. } => GpStatus::Parse,
            E::Validation(_) | E::Cycle { .. } | E::Unreachable(_) => GpStatus::InvalidFeeder,
            E::Domain(_) | E::LengthMismatch { .. } | E::Unknown { .. } => GpStatus::Domain,
            E::NonConvergence { .. } => GpStatus::NonConvergence,
            E::NotFound(_) => GpStatus::NotFound,
            E::Config(_) => GpStatus::Config,
            _ => GpStatus::Pipeline,
        };
        Failure(status, e.to_string())
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        let status = if e.stage == Stage::Config {
            GpStatus::Config
        } else {
            GpStatus::Pipeline
        };
        Failure(status, e.to_string())
    }
}

fn fail(status: GpStatus, msg: impl Into<String>) -> Failure {
    Failure(status, msg.into())
}

/// Runs `f`, records any error or panic and converts it to a status.
fn guard(f: impl FnOnce() -> Result<GpStatus, Failure>) -> GpStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(status)) => status,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            GpStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(fail(GpStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(GpStatus::InvalidArgument, format!("{name} is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| fail(GpStatus::NullPointer, format!("{name} is null")))
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| fail(GpStatus::NullPointer, format!("{name} is null")))
}

fn c_string(s: &str) -> *mut c_char {
    CString::new(s.replace('\0', " ")).expect("no interior nul").into_raw()
}

/// Message of the last failed call on this thread, or null. Owned by the
/// library and valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn gp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Frees a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn gp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads and validates a feeder JSON file.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn gp_feeder_load(path: *const c_char, out: *mut *mut GpFeeder) -> GpStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let model = load_feeder(str_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(GpFeeder { model }));
        Ok(GpStatus::Ok)
    })
}

/// Replaces lumped transformer loads by individual customers.
///
/// # Safety
/// `feeder` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn gp_feeder_disaggregate(
    feeder: *const GpFeeder,
    houses_per_kva: f64,
    out: *mut *mut GpFeeder,
) -> GpStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let f = ref_arg(feeder, "feeder")?;
        let model = disaggregate_loads(&f.model, houses_per_kva)?;
        *out = Box::into_raw(Box::new(GpFeeder { model }));
        Ok(GpStatus::Ok)
    })
}

/// Releases a feeder. Null is ignored.
///
/// # Safety
/// `feeder` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn gp_feeder_free(feeder: *mut GpFeeder) {
    if !feeder.is_null() {
        drop(Box::from_raw(feeder));
    }
}

/// Bus, transformer and customer counts.
///
/// # Safety
/// `feeder` must be a live handle; each out pointer may be null.
#[no_mangle]
pub unsafe extern "C" fn gp_feeder_counts(
    feeder: *const GpFeeder,
    buses: *mut usize,
    transformers: *mut usize,
    customers: *mut usize,
) -> GpStatus {
    guard(|| {
        let m = &ref_arg(feeder, "feeder")?.model;
        if let Some(b) = buses.as_mut() {
            *b = m.buses.len();
        }
        if let Some(t) = transformers.as_mut() {
            *t = m.transformers.len();
        }
        if let Some(c) = customers.as_mut() {
            *c = m.customers.len();
        }
        Ok(GpStatus::Ok)
    })
}

/// Longest source-to-bus path, in lines.
///
/// # Safety
/// `feeder` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gp_feeder_max_depth(feeder: *const GpFeeder, out: *mut usize) -> GpStatus {
    guard(|| {
        let m = &ref_arg(feeder, "feeder")?.model;
        let out = out_arg(out, "out")?;
        *out = validate_radial(m)?.max_depth();
        Ok(GpStatus::Ok)
    })
}

/// Id of transformer `index` in feeder order, as a new string.
///
/// # Safety
/// `feeder` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gp_feeder_transformer_id(
    feeder: *const GpFeeder,
    index: usize,
    out: *mut *mut c_char,
) -> GpStatus {
    guard(|| {
        let m = &ref_arg(feeder, "feeder")?.model;
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let t = m.transformers.get(index).ok_or_else(|| {
            fail(
                GpStatus::InvalidArgument,
                format!("transformer index {index} out of range 0..{}", m.transformers.len()),
            )
        })?;
        *out = c_string(&t.id);
        Ok(GpStatus::Ok)
    })
}

/// Probability that a customer has adopted by year `t`: `1 - (1 - p)^t`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gp_adoption_probability(p: f64, t: i64, out: *mut f64) -> GpStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = gridplan::adoption::adoption_probability_by_year(p, t)?;
        Ok(GpStatus::Ok)
    })
}

/// Solves one hour with default power-flow settings.
///
/// `customer_ids`, `p_kw` and `q_kvar` have `count` entries each. Customers
/// not listed draw nothing. `loading_kva` receives one value per transformer
/// in feeder order and must hold `loading_len` entries, at least the
/// transformer count. `balance_error` (nullable) receives the relative
/// power-balance mismatch.
///
/// # Safety
/// All arrays must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn gp_solve_snapshot(
    feeder: *const GpFeeder,
    customer_ids: *const *const c_char,
    p_kw: *const f64,
    q_kvar: *const f64,
    count: usize,
    loading_kva: *mut f64,
    loading_len: usize,
    balance_error: *mut f64,
) -> GpStatus {
    guard(|| {
        let m = &ref_arg(feeder, "feeder")?.model;
        if count > 0 && (customer_ids.is_null() || p_kw.is_null() || q_kvar.is_null()) {
            return Err(fail(GpStatus::NullPointer, "injection arrays are null"));
        }
        if loading_kva.is_null() {
            return Err(fail(GpStatus::NullPointer, "loading_kva is null"));
        }
        if loading_len < m.transformers.len() {
            return Err(fail(
                GpStatus::InvalidArgument,
                format!("loading_len {loading_len} below transformer count {}", m.transformers.len()),
            ));
        }
        let mut inj = BTreeMap::new();
        for k in 0..count {
            let id = str_arg(*customer_ids.add(k), "customer id")?;
            let e = inj.entry(id.to_string()).or_insert((0.0, 0.0));
            e.0 += *p_kw.add(k);
            e.1 += *q_kvar.add(k);
        }
        let sol = solve_snapshot(m, &inj, &PowerFlowConfig::default())?;
        std::slice::from_raw_parts_mut(loading_kva, sol.transformer_loading.len())
            .copy_from_slice(&sol.transformer_loading);
        if let Some(b) = balance_error.as_mut() {
            *b = sol.balance_error();
        }
        Ok(GpStatus::Ok)
    })
}

/// Runs (or resumes) the full pipeline from a TOML config file.
///
/// `out` receives the run even when some jobs failed, in which case the
/// status is `GP_STATUS_PARTIAL`.
///
/// # Safety
/// `config_path` must be a nul-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gp_run_pipeline(config_path: *const c_char, out: *mut *mut GpRun) -> GpStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let cfg = RunConfig::load(PathBuf::from(str_arg(config_path, "config_path")?))?;
        cfg.validate()?;
        let outcome = run_pipeline(cfg)?;
        let m = &outcome.manifest;
        let run = GpRun {
            run_id: m.run_id.clone(),
            total: m.jobs.len(),
            completed: m.count(JobStatus::Completed),
            failed: m.count(JobStatus::Failed),
            wall_seconds: outcome.wall.as_secs_f64(),
        };
        *out = Box::into_raw(Box::new(run));
        Ok(if outcome.is_partial() {
            GpStatus::Partial
        } else {
            GpStatus::Ok
        })
    })
}

/// Total, completed and failed job counts; out pointers may be null.
///
/// # Safety
/// `run` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn gp_run_counts(
    run: *const GpRun,
    total: *mut usize,
    completed: *mut usize,
    failed: *mut usize,
) -> GpStatus {
    guard(|| {
        let r = ref_arg(run, "run")?;
        if let Some(v) = total.as_mut() {
            *v = r.total;
        }
        if let Some(v) = completed.as_mut() {
            *v = r.completed;
        }
        if let Some(v) = failed.as_mut() {
            *v = r.failed;
        }
        Ok(GpStatus::Ok)
    })
}

/// Wall-clock seconds of the invocation that produced `run`.
///
/// # Safety
/// `run` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gp_run_wall_seconds(run: *const GpRun, out: *mut f64) -> GpStatus {
    guard(|| {
        *out_arg(out, "out")? = ref_arg(run, "run")?.wall_seconds;
        Ok(GpStatus::Ok)
    })
}

/// Run id as a new string.
///
/// # Safety
/// `run` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gp_run_id(run: *const GpRun, out: *mut *mut c_char) -> GpStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = c_string(&ref_arg(run, "run")?.run_id);
        Ok(GpStatus::Ok)
    })
}

/// Releases a run. Null is ignored.
///
/// # Safety
/// `run` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn gp_run_free(run: *mut GpRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}
