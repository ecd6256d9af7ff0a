//! C ABI over the `fraccap` core.
//!
//! Every fallible function returns an [`FcStatus`]. On failure the message is
//! available from [`fc_last_error`] on the same thread. Handles are opaque
//! and must be released with their matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use fraccap::config::RunConfig;
use fraccap::exponents::{self, ExponentInputs, RegimeReport, Verdict};
use fraccap::simulator::{self, RunResult, RunStatus, SimConfig};
use fraccap::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FcStatus {
    Ok = 0,
    Io = 1,
    Validation = 2,
    CheckFailed = 3,
    NullPointer = 10,
    InvalidUtf8 = 11,
    OutOfRange = 12,
    Panic = 13,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FcProblem {
    Scalar = 0,
    Damped = 1,
    System = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FcVerdict {
    Nonexistence = 0,
    Undetermined = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FcRunStatus {
    ReachedHorizon = 0,
    BlewUp = 1,
    Diverged = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FcNormRow {
    pub step: u64,
    pub t: f64,
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
    pub v_linf: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FcSystemExponents {
    pub d: [f64; 4],
    pub e: [f64; 4],
    pub dbar: f64,
    pub ebar: f64,
}

/// Exponent parameters. Starts from the library defaults.
pub struct FcInputs(ExponentInputs);

/// Result of a regime classification.
pub struct FcReport {
    report: RegimeReport,
    fired: CString,
}

/// A simulation configuration and, once run, its result.
pub struct FcSimulation {
    config: SimConfig,
    result: Option<RunResult>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let s = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = s);
}

fn fail(status: FcStatus, msg: impl Into<String>) -> FcStatus {
    set_error(msg);
    status
}

fn from_error(e: Error) -> FcStatus {
    let status = match fraccap::cli::exit_code_for(&e) {
        fraccap::cli::EXIT_VALIDATION => FcStatus::Validation,
        fraccap::cli::EXIT_CHECK_FAILED => FcStatus::CheckFailed,
        _ => FcStatus::Io,
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> FcStatus) -> FcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(FcStatus::Panic, "internal panic"),
    }
}

unsafe fn str_arg<'a>(p: *const c_char) -> Result<&'a str, FcStatus> {
    if p.is_null() {
        return Err(fail(FcStatus::NullPointer, "null string argument"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(FcStatus::InvalidUtf8, "string argument is not valid UTF-8"))
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(FcStatus::NullPointer, concat!("`", stringify!($p), "` is null"));
        })+
    };
}

macro_rules! tri {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

/// Message of the last failure on this thread. Empty if none. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

#[no_mangle]
pub extern "C" fn fc_inputs_new() -> *mut FcInputs {
    Box::into_raw(Box::new(FcInputs(ExponentInputs::default())))
}

/// # Safety
/// `inputs` must come from [`fc_inputs_new`] or be null.
#[no_mangle]
pub unsafe extern "C" fn fc_inputs_free(inputs: *mut FcInputs) {
    if !inputs.is_null() {
        drop(Box::from_raw(inputs));
    }
}

fn field_mut<'a>(x: &'a mut ExponentInputs, name: &str) -> Option<&'a mut f64> {
    Some(match name {
        "alpha" => &mut x.alpha,
        "beta" => &mut x.beta,
        "delta" => &mut x.delta,
        "gamma" => &mut x.gamma,
        "theta" => &mut x.theta,
        "mu" => &mut x.mu,
        "sigma" => &mut x.sigma,
        "p" => &mut x.p,
        "q" => &mut x.q,
        _ => return None,
    })
}

/// Sets a field by name: `alpha`, `beta`, `delta`, `gamma`, `theta`, `mu`,
/// `sigma`, `p`, `q` or `d`. Range checks happen when the inputs are used.
///
/// # Safety
/// `inputs` must be a live handle and `name` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fc_inputs_set(
    inputs: *mut FcInputs,
    name: *const c_char,
    value: f64,
) -> FcStatus {
    guard(|| {
        non_null!(inputs);
        let name = tri!(str_arg(name));
        let x = &mut (*inputs).0;
        if name == "d" {
            if !(value >= 1.0 && value.fract() == 0.0 && value <= u32::MAX as f64) {
                return fail(
                    FcStatus::Validation,
                    format!("invalid parameter `d`: must be a positive integer, got {value}"),
                );
            }
            x.d = value as u32;
            return FcStatus::Ok;
        }
        match field_mut(x, name) {
            Some(f) => {
                *f = value;
                FcStatus::Ok
            }
            None => fail(FcStatus::Validation, format!("unknown field `{name}`")),
        }
    })
}

/// # Safety
/// `inputs` must be a live handle, `name` a NUL-terminated string and `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn fc_inputs_get(
    inputs: *const FcInputs,
    name: *const c_char,
    out: *mut f64,
) -> FcStatus {
    guard(|| {
        non_null!(inputs, out);
        let name = tri!(str_arg(name));
        let mut x = (*inputs).0;
        if name == "d" {
            *out = x.d as f64;
            return FcStatus::Ok;
        }
        match field_mut(&mut x, name) {
            Some(f) => {
                *out = *f;
                FcStatus::Ok
            }
            None => fail(FcStatus::Validation, format!("unknown field `{name}`")),
        }
    })
}

/// Critical exponent of the scalar problem for the inputs' `alpha`, `delta`, `d`.
///
/// # Safety
/// `inputs` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fc_p_star(inputs: *const FcInputs, out: *mut f64) -> FcStatus {
    guard(|| {
        non_null!(inputs, out);
        let x = &(*inputs).0;
        tri!(x.validate_scalar().map_err(from_error));
        *out = exponents::p_star(&x.alpha, &x.delta, &(x.d as f64));
        FcStatus::Ok
    })
}

/// Classifies the inputs for the given problem. On success `*out` holds a
/// new report to be released with [`fc_report_free`].
///
/// # Safety
/// `inputs` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fc_classify(
    inputs: *const FcInputs,
    problem: FcProblem,
    out: *mut *mut FcReport,
) -> FcStatus {
    guard(|| {
        non_null!(inputs, out);
        *out = ptr::null_mut();
        let x = &(*inputs).0;
        let report = tri!(match problem {
            FcProblem::Scalar => exponents::theorem1_classify_inputs(x),
            FcProblem::Damped => exponents::theorem3_classify_inputs(x),
            FcProblem::System => exponents::theorem2_classify_inputs(x),
        }
        .map_err(from_error));
        let fired = CString::new(report.fired_condition()).unwrap_or_default();
        *out = Box::into_raw(Box::new(FcReport { report, fired }));
        FcStatus::Ok
    })
}

/// # Safety
/// `report` must come from [`fc_classify`] or be null.
#[no_mangle]
pub unsafe extern "C" fn fc_report_free(report: *mut FcReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// # Safety
/// `report` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fc_report_verdict(report: *const FcReport) -> FcVerdict {
    match (*report).report.verdict {
        Verdict::Nonexistence => FcVerdict::Nonexistence,
        Verdict::Undetermined => FcVerdict::Undetermined,
    }
}

/// Conditions that fired, joined by `"; "`. Owned by the report.
///
/// # Safety
/// `report` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fc_report_fired(report: *const FcReport) -> *const c_char {
    (*report).fired.as_ptr()
}

/// Looks up a named number of the report, e.g. `p_star`, `Dbar` or `E3`.
///
/// # Safety
/// `report` must be a live handle, `name` a NUL-terminated string and `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn fc_report_number(
    report: *const FcReport,
    name: *const c_char,
    out: *mut f64,
) -> FcStatus {
    guard(|| {
        non_null!(report, out);
        let name = tri!(str_arg(name));
        match (*report).report.numbers.get(name) {
            Some(v) => {
                *out = *v;
                FcStatus::Ok
            }
            None => fail(
                FcStatus::OutOfRange,
                format!("report has no number `{name}`"),
            ),
        }
    })
}

/// Both exponent families of the system and their combined values.
///
/// # Safety
/// `inputs` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fc_system_exponents(
    inputs: *const FcInputs,
    out: *mut FcSystemExponents,
) -> FcStatus {
    guard(|| {
        non_null!(inputs, out);
        let x = &(*inputs).0;
        tri!(x.validate_system().map_err(from_error));
        let s = x.system();
        let d = tri!(exponents::d_exponents(&s).map_err(from_error));
        let e = tri!(exponents::e_exponents(&s).map_err(from_error));
        *out = FcSystemExponents {
            d: d.values,
            e: e.values,
            dbar: d.bar,
            ebar: e.bar,
        };
        FcStatus::Ok
    })
}

/// Parses a TOML document with a `[simulate]` section.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fc_simulation_from_toml(
    toml: *const c_char,
    out: *mut *mut FcSimulation,
) -> FcStatus {
    guard(|| {
        non_null!(out);
        *out = ptr::null_mut();
        let text = tri!(str_arg(toml));
        let cfg = tri!(RunConfig::parse(text).map_err(from_error));
        let Some(config) = cfg.simulate else {
            return from_error(Error::Config {
                field: "simulate".into(),
                message: "section is required".into(),
            });
        };
        *out = Box::into_raw(Box::new(FcSimulation {
            config,
            result: None,
        }));
        FcStatus::Ok
    })
}

/// # Safety
/// `sim` must come from [`fc_simulation_from_toml`] or be null.
#[no_mangle]
pub unsafe extern "C" fn fc_simulation_free(sim: *mut FcSimulation) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Runs the simulation, replacing any earlier result. `t_detect` receives the
/// detection time for a blow-up and NaN otherwise. Either output may be null.
///
/// # Safety
/// `sim` must be a live handle; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn fc_simulation_run(
    sim: *mut FcSimulation,
    status: *mut FcRunStatus,
    t_detect: *mut f64,
) -> FcStatus {
    guard(|| {
        non_null!(sim);
        let sim = &mut *sim;
        sim.result = None;
        let result = tri!(simulator::run(&sim.config).map_err(from_error));
        let (s, t) = match result.outcome.status {
            RunStatus::ReachedHorizon => (FcRunStatus::ReachedHorizon, f64::NAN),
            RunStatus::BlewUp { t_detect } => (FcRunStatus::BlewUp, t_detect),
            RunStatus::Diverged { .. } => (FcRunStatus::Diverged, f64::NAN),
        };
        if !status.is_null() {
            *status = s;
        }
        if !t_detect.is_null() {
            *t_detect = t;
        }
        sim.result = Some(result);
        FcStatus::Ok
    })
}

/// Number of recorded norm rows; zero before a run.
///
/// # Safety
/// `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fc_simulation_trace_len(sim: *const FcSimulation) -> usize {
    (*sim).result.as_ref().map_or(0, |r| r.trace.len())
}

/// # Safety
/// `sim` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fc_simulation_trace_row(
    sim: *const FcSimulation,
    index: usize,
    out: *mut FcNormRow,
) -> FcStatus {
    guard(|| {
        non_null!(sim, out);
        let Some(row) = (*sim).result.as_ref().and_then(|r| r.trace.get(index)) else {
            return fail(FcStatus::OutOfRange, format!("no trace row {index}"));
        };
        *out = FcNormRow {
            step: row.step as u64,
            t: row.t,
            l1: row.l1,
            l2: row.l2,
            linf: row.linf,
            v_linf: row.v_linf,
        };
        FcStatus::Ok
    })
}
