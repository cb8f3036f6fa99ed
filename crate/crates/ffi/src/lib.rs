//! C interface to the motorstart planner.
//!
//! Objects cross the boundary as opaque handles created by `ms_*_from_json`
//! or `ms_solve` and released with the matching `ms_*_free`. Every fallible
//! call returns an [`MsStatus`]; the message of the most recent failure on
//! the calling thread is available from [`ms_last_error`]. Strings returned
//! to the caller are owned by the caller and must be released with
//! [`ms_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use motorstart::cli::RunConfig;
use motorstart::mip::{build_model, check_exactness, slip_models};
use motorstart::netmodel::{Network, ScenarioInput};
use motorstart::simulate::validate_plan;
use motorstart::solve::{branch_and_bound, extract_plan, RestorationPlan, SearchStatus};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MsStatus {
    Ok = 0,
    /// A required pointer was null or a string was not UTF-8.
    InvalidArgument = 1,
    /// Input JSON failed to parse or validate.
    InputError = 2,
    /// No plan satisfies the start constraints.
    Infeasible = 3,
    /// The search stopped at a limit; a plan may still be returned.
    Incomplete = 4,
    /// Simulation of the plan did not match the optimizer's predictions.
    ValidationFailed = 5,
    /// Model construction, solve or simulation error.
    SolveError = 6,
    /// A panic was caught at the boundary.
    Internal = 7,
}

/// Parsed network.
pub struct MsNetwork(Network);

/// Parsed scenario with defaults applied.
pub struct MsScenario(ScenarioInput);

/// Solved restoration plan together with the network it was built on and
/// the configuration used to produce it.
pub struct MsPlan {
    net: Network,
    plan: RestorationPlan,
    config: RunConfig,
    optimal: bool,
    exactness: String,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Failure(MsStatus, String);

impl Failure {
    fn input(e: impl ToString) -> Self {
        Failure(MsStatus::InputError, e.to_string())
    }
    fn solve(e: impl ToString) -> Self {
        Failure(MsStatus::SolveError, e.to_string())
    }
    fn arg(what: &str) -> Self {
        Failure(MsStatus::InvalidArgument, format!("{what} is null or not valid UTF-8"))
    }
}

fn guard(f: impl FnOnce() -> Result<MsStatus, Failure>) -> MsStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(s)) => s,
        Ok(Err(Failure(s, msg))) => {
            set_error(msg);
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {msg}"));
            MsStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::arg(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure::arg(what))
}

unsafe fn config_arg(p: *const c_char) -> Result<RunConfig, Failure> {
    if p.is_null() {
        return Ok(RunConfig::default());
    }
    RunConfig::from_json(str_arg(p, "config_json")?).map_err(Failure::input)
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure(MsStatus::InvalidArgument, format!("{what} is null")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| Failure(MsStatus::InvalidArgument, format!("{what} is null")))
}

fn owned_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s).map(CString::into_raw).map_err(Failure::solve)
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ms_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the most recent failure on this thread, or null. The pointer
/// stays valid until the next `ms_*` call on the same thread.
#[no_mangle]
pub extern "C" fn ms_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must be null or a pointer obtained from this library that has not
/// been freed.
#[no_mangle]
pub unsafe extern "C" fn ms_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses and validates a network document.
///
/// # Safety
/// `json` must be null or NUL-terminated; `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn ms_network_from_json(json: *const c_char, out: *mut *mut MsNetwork) -> MsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let net = Network::from_json(str_arg(json, "json")?).map_err(Failure::input)?;
        *out = Box::into_raw(Box::new(MsNetwork(net)));
        Ok(MsStatus::Ok)
    })
}

/// # Safety
/// `net` must be null or a handle from [`ms_network_from_json`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ms_network_free(net: *mut MsNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Parses a scenario document. `config_json` may be null for the default
/// configuration; its scenario defaults fill fields the scenario omits.
///
/// # Safety
/// String arguments must be null or NUL-terminated; `out` must be null or
/// writable.
#[no_mangle]
pub unsafe extern "C" fn ms_scenario_from_json(
    json: *const c_char,
    config_json: *const c_char,
    out: *mut *mut MsScenario,
) -> MsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let cfg = config_arg(config_json)?;
        let sc = ScenarioInput::from_json(str_arg(json, "json")?, &cfg.scenario_defaults).map_err(Failure::input)?;
        *out = Box::into_raw(Box::new(MsScenario(sc)));
        Ok(MsStatus::Ok)
    })
}

/// # Safety
/// `sc` must be null or a handle from [`ms_scenario_from_json`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ms_scenario_free(sc: *mut MsScenario) {
    if !sc.is_null() {
        drop(Box::from_raw(sc));
    }
}

/// Builds the restoration model and runs branch and bound.
///
/// Returns `MS_STATUS_OK` with a plan when optimality is proven,
/// `MS_STATUS_INCOMPLETE` when a limit stopped the search (with a plan if an
/// incumbent exists, otherwise `*out` is null) and `MS_STATUS_INFEASIBLE`
/// with a null plan when no plan exists.
///
/// # Safety
/// Handles must be valid; `config_json` must be null or NUL-terminated;
/// `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn ms_solve(
    net: *const MsNetwork,
    sc: *const MsScenario,
    config_json: *const c_char,
    out: *mut *mut MsPlan,
) -> MsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let net = &handle(net, "net")?.0;
        let sc = &handle(sc, "scenario")?.0;
        let config = config_arg(config_json)?;
        let models = slip_models(net, sc).map_err(Failure::solve)?;
        let model = build_model(net, sc, &models, &config.model).map_err(Failure::solve)?;
        if let Some(cert) = &model.stall {
            return Err(Failure(MsStatus::Infeasible, format!("infeasible: {cert}")));
        }
        let result = branch_and_bound(&model.program, &config.solver.backend(), &config.solver);
        let inc = match (&result.status, &result.incumbent) {
            (SearchStatus::Infeasible, _) => {
                return Err(Failure(MsStatus::Infeasible, "infeasible: no restoration plan satisfies the start constraints".into()))
            }
            (SearchStatus::Unbounded, _) => return Err(Failure::solve("relaxation is unbounded")),
            (_, None) => {
                return Err(Failure(
                    MsStatus::Incomplete,
                    format!("no incumbent found within limits after {} nodes", result.nodes),
                ))
            }
            (_, Some(inc)) => inc,
        };
        let plan = extract_plan(&model, inc).map_err(Failure::solve)?;
        let exactness = serde_json::to_string(&check_exactness(&model, &inc.x)).map_err(Failure::solve)?;
        let optimal = result.status == SearchStatus::Optimal;
        *out = Box::into_raw(Box::new(MsPlan { net: model.net.clone(), plan, config, optimal, exactness }));
        Ok(if optimal { MsStatus::Ok } else { MsStatus::Incomplete })
    })
}

/// # Safety
/// `plan` must be null or a handle from [`ms_solve`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ms_plan_free(plan: *mut MsPlan) {
    if !plan.is_null() {
        drop(Box::from_raw(plan));
    }
}

/// Writes the weighted objective total of the plan to `*out`.
///
/// # Safety
/// `plan` must be a valid handle; `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn ms_plan_objective(plan: *const MsPlan, out: *mut f64) -> MsStatus {
    guard(|| {
        *out_arg(out, "out")? = handle(plan, "plan")?.plan.objective.total;
        Ok(MsStatus::Ok)
    })
}

/// Writes 1 to `*out` if the search proved optimality, 0 otherwise.
///
/// # Safety
/// `plan` must be a valid handle; `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn ms_plan_is_optimal(plan: *const MsPlan, out: *mut c_int) -> MsStatus {
    guard(|| {
        *out_arg(out, "out")? = c_int::from(handle(plan, "plan")?.optimal);
        Ok(MsStatus::Ok)
    })
}

/// Number of motor starts in the plan.
///
/// # Safety
/// `plan` must be a valid handle; `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn ms_plan_start_count(plan: *const MsPlan, out: *mut usize) -> MsStatus {
    guard(|| {
        *out_arg(out, "out")? = handle(plan, "plan")?.plan.starts.len();
        Ok(MsStatus::Ok)
    })
}

/// Serializes the plan as JSON into a new string owned by the caller.
///
/// # Safety
/// `plan` must be a valid handle; `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn ms_plan_to_json(plan: *const MsPlan, out: *mut *mut c_char) -> MsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let text = serde_json::to_string_pretty(&handle(plan, "plan")?.plan).map_err(Failure::solve)?;
        *out = owned_string(text)?;
        Ok(MsStatus::Ok)
    })
}

/// Exactness report of the relaxation at the returned solution, as JSON.
///
/// # Safety
/// `plan` must be a valid handle; `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn ms_plan_exactness_json(plan: *const MsPlan, out: *mut *mut c_char) -> MsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        *out = owned_string(handle(plan, "plan")?.exactness.clone())?;
        Ok(MsStatus::Ok)
    })
}

/// Simulates every start of the plan and compares it with the optimizer's
/// predictions using the configuration the plan was solved with. The
/// comparison report is written to `*report_json` (may be null to skip).
/// Returns `MS_STATUS_VALIDATION_FAILED` when any start fails.
///
/// # Safety
/// `plan` must be a valid handle; `report_json` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn ms_plan_validate(plan: *const MsPlan, report_json: *mut *mut c_char) -> MsStatus {
    guard(|| {
        if let Some(r) = report_json.as_mut() {
            *r = ptr::null_mut();
        }
        let p = handle(plan, "plan")?;
        let (report, _) =
            validate_plan(&p.net, &p.plan, &p.config.simulation, &p.config.validation).map_err(Failure::solve)?;
        if let Some(r) = report_json.as_mut() {
            *r = owned_string(serde_json::to_string_pretty(&report).map_err(Failure::solve)?)?;
        }
        if report.pass {
            Ok(MsStatus::Ok)
        } else {
            let failures: Vec<String> = report
                .starts
                .iter()
                .flat_map(|s| s.failures.iter().map(move |f| format!("motor {}: {f}", s.motor)))
                .collect();
            Err(Failure(MsStatus::ValidationFailed, format!("validation failed: {}", failures.join("; "))))
        }
    })
}

/// Runs the command-line front end with `argc` arguments (the first is the
/// program name) and returns its exit code.
///
/// # Safety
/// `argv` must point to `argc` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn ms_run_cli(argc: c_int, argv: *const *const c_char) -> c_int {
    let mut code = 1;
    let status = guard(|| {
        if argv.is_null() || argc < 0 {
            return Err(Failure::arg("argv"));
        }
        let mut args = Vec::with_capacity(argc as usize);
        for i in 0..argc as usize {
            args.push(str_arg(*argv.add(i), "argv element")?.to_string());
        }
        code = motorstart::cli::run(args);
        Ok(MsStatus::Ok)
    });
    if status == MsStatus::Ok {
        code
    } else {
        1
    }
}
