//! C ABI over the `pgrates` library.
//!
//! Every fallible function returns a [`PgStatus`]; on failure the message is
//! available from [`pg_last_error_message`] on the same thread. Objects are
//! handed out as opaque pointers and must be released with their `_free`
//! function. Tables are passed row-major as `num_states × num_actions`
//! doubles.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use pgrates::analysis::{count_failures, run_suite, Suite};
use pgrates::gradients::{mdp_entropy_gradient, mdp_pg_gradient, value_objective};
use pgrates::instance::mdp_from_json;
use pgrates::mdp::{solve_optimal, PolicyLogits, StateDistribution, TabularMdp, DEFAULT_SOLVER_TOL};
use pgrates::optimizer::{run, RunConfig, RunTrace};
use pgrates::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PgStatus {
    Ok = 0,
    /// A required pointer was null, a string was not UTF-8 or a length was wrong.
    InvalidArgument = 1,
    InvalidInput = 2,
    InvalidConfig = 3,
    DimensionMismatch = 4,
    Precondition = 5,
    Degenerate = 6,
    NonFinite = 7,
    TraceTooShort = 8,
    Numerical = 9,
    Io = 10,
    /// A Rust panic was caught at the boundary.
    Panic = 11,
}

/// Tabular MDP handle.
pub struct PgMdp(TabularMdp);

/// Optimizer trace handle.
pub struct PgTrace(RunTrace);

/// One recorded iteration. Fields that do not apply to the run are NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct PgRecord {
    pub t: u64,
    pub delta: f64,
    pub soft_delta: f64,
    pub opt_prob: f64,
    pub min_prob: f64,
    pub zeta_norm: f64,
    pub grad_norm: f64,
    pub tau_t: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> PgStatus {
    match e {
        Error::InvalidInput(_) => PgStatus::InvalidInput,
        Error::InvalidConfig { .. } | Error::Json(_) => PgStatus::InvalidConfig,
        Error::DimensionMismatch(_) => PgStatus::DimensionMismatch,
        Error::Precondition(_) => PgStatus::Precondition,
        Error::Degenerate(_) => PgStatus::Degenerate,
        Error::NonFinite { .. } => PgStatus::NonFinite,
        Error::TraceTooShort(_) => PgStatus::TraceTooShort,
        Error::Internal(_) => PgStatus::Numerical,
        Error::Io(_) => PgStatus::Io,
    }
}

enum Failure {
    Arg(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn arg(msg: impl Into<String>) -> Failure {
    Failure::Arg(msg.into())
}

fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> PgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            PgStatus::Ok
        }
        Ok(Err(Failure::Arg(m))) => {
            set_error(m);
            PgStatus::InvalidArgument
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            PgStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(arg(format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| arg(format!("{what} is not UTF-8")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if p.is_null() {
        return Err(arg(format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_slice<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if p.is_null() {
        return Err(arg(format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| arg(format!("{what} is null")))
}

unsafe fn put<T>(out: *mut T, v: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(arg(format!("{what} is null")));
    }
    out.write(v);
    Ok(())
}

unsafe fn logits_arg(mdp: &TabularMdp, p: *const f64, len: usize) -> Result<PolicyLogits, Failure> {
    let (s, a) = (mdp.num_states(), mdp.num_actions());
    if len != s * a {
        return Err(arg(format!("expected {} logits, got {len}", s * a)));
    }
    let v = slice_arg(p, len, "logits")?;
    let rows: Vec<Vec<f64>> = v.chunks(a).map(<[f64]>::to_vec).collect();
    Ok(PolicyLogits::from_rows(&rows)?)
}

unsafe fn dist_arg(mdp: &TabularMdp, p: *const f64) -> Result<StateDistribution, Failure> {
    let s = mdp.num_states();
    if p.is_null() {
        return Ok(StateDistribution::uniform(s));
    }
    Ok(StateDistribution::new(std::slice::from_raw_parts(p, s).to_vec())?)
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn pg_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses an MDP from JSON (full form or the `{"rewards": [...]}` bandit
/// shorthand).
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pg_mdp_from_json(json: *const c_char, out: *mut *mut PgMdp) -> PgStatus {
    guard(|| {
        let text = str_arg(json, "json")?;
        let mdp = mdp_from_json(text)?;
        put(out, Box::into_raw(Box::new(PgMdp(mdp))), "out")
    })
}

/// Single-state bandit with `num_actions` rewards.
///
/// # Safety
/// `rewards` must point to `num_actions` doubles and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn pg_mdp_bandit(rewards: *const f64, num_actions: usize, out: *mut *mut PgMdp) -> PgStatus {
    guard(|| {
        let r = slice_arg(rewards, num_actions, "rewards")?;
        let mdp = TabularMdp::bandit(r)?;
        put(out, Box::into_raw(Box::new(PgMdp(mdp))), "out")
    })
}

/// # Safety
/// `mdp` must be null or a handle from this library that was not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pg_mdp_free(mdp: *mut PgMdp) {
    if !mdp.is_null() {
        drop(Box::from_raw(mdp));
    }
}

/// # Safety
/// `mdp` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pg_mdp_dims(mdp: *const PgMdp, num_states: *mut usize, num_actions: *mut usize) -> PgStatus {
    guard(|| {
        let m = &handle(mdp, "mdp")?.0;
        put(num_states, m.num_states(), "num_states")?;
        put(num_actions, m.num_actions(), "num_actions")
    })
}

/// `V^{π_θ}(μ)`. A null `mu` means the uniform distribution.
///
/// # Safety
/// `logits` must hold `num_states × num_actions` doubles, `mu` null or
/// `num_states` doubles.
#[no_mangle]
pub unsafe extern "C" fn pg_policy_value(
    mdp: *const PgMdp,
    logits: *const f64,
    len: usize,
    mu: *const f64,
    out_value: *mut f64,
) -> PgStatus {
    guard(|| {
        let m = &handle(mdp, "mdp")?.0;
        let th = logits_arg(m, logits, len)?;
        let mu = dist_arg(m, mu)?;
        put(out_value, value_objective(m, &th, &mu)?, "out_value")
    })
}

/// Exact policy gradient at `θ`, written row-major to `out`. `tau = 0` gives
/// the plain gradient, `tau > 0` the entropy-regularized one.
///
/// # Safety
/// `logits` and `out` must each hold `len` doubles, `mu` null or
/// `num_states` doubles.
#[no_mangle]
pub unsafe extern "C" fn pg_policy_gradient(
    mdp: *const PgMdp,
    logits: *const f64,
    len: usize,
    mu: *const f64,
    tau: f64,
    out: *mut f64,
) -> PgStatus {
    guard(|| {
        let m = &handle(mdp, "mdp")?.0;
        let th = logits_arg(m, logits, len)?;
        let mu = dist_arg(m, mu)?;
        let g = if tau == 0.0 { mdp_pg_gradient(m, &th, &mu)? } else { mdp_entropy_gradient(m, &th, &mu, tau)? };
        let dst = out_slice(out, len, "out")?;
        for (s, row) in dst.chunks_mut(m.num_actions()).enumerate() {
            row.copy_from_slice(&g.row(s));
        }
        Ok(())
    })
}

/// Optimal state values into `v_star` (`num_states` doubles) and the optimal
/// value gap into `delta_star`. Either output may be null.
///
/// # Safety
/// Non-null outputs must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pg_solve_optimal(mdp: *const PgMdp, v_star: *mut f64, delta_star: *mut f64) -> PgStatus {
    guard(|| {
        let m = &handle(mdp, "mdp")?.0;
        let sol = solve_optimal(m, DEFAULT_SOLVER_TOL)?;
        if !v_star.is_null() {
            out_slice(v_star, m.num_states(), "v_star")?.copy_from_slice(sol.v_star.as_slice());
        }
        if !delta_star.is_null() {
            delta_star.write(sol.delta_star);
        }
        Ok(())
    })
}

/// Runs the optimizer on a JSON run config.
///
/// # Safety
/// `config_json` must be NUL-terminated and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn pg_run(config_json: *const c_char, out: *mut *mut PgTrace) -> PgStatus {
    guard(|| {
        let cfg = RunConfig::from_json(str_arg(config_json, "config_json")?)?;
        let trace = run(&cfg)?;
        put(out, Box::into_raw(Box::new(PgTrace(trace))), "out")
    })
}

/// # Safety
/// `trace` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pg_trace_free(trace: *mut PgTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// Number of recorded iterations, iterations executed and the instance's
/// optimal value gap. Any output may be null.
///
/// # Safety
/// `trace` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pg_trace_info(
    trace: *const PgTrace,
    num_records: *mut usize,
    iterations_run: *mut usize,
    delta_star: *mut f64,
) -> PgStatus {
    guard(|| {
        let t = &handle(trace, "trace")?.0;
        if !num_records.is_null() {
            num_records.write(t.records.len());
        }
        if !iterations_run.is_null() {
            iterations_run.write(t.iterations_run);
        }
        if !delta_star.is_null() {
            delta_star.write(t.delta_star);
        }
        Ok(())
    })
}

/// # Safety
/// `trace` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn pg_trace_record(trace: *const PgTrace, index: usize, out: *mut PgRecord) -> PgStatus {
    guard(|| {
        let t = &handle(trace, "trace")?.0;
        let r = t
            .records
            .get(index)
            .ok_or_else(|| arg(format!("record {index} out of range ({} records)", t.records.len())))?;
        let rec = PgRecord {
            t: r.t as u64,
            delta: r.delta,
            soft_delta: r.soft_delta.unwrap_or(f64::NAN),
            opt_prob: r.opt_prob,
            min_prob: r.min_prob,
            zeta_norm: r.zeta_norm.unwrap_or(f64::NAN),
            grad_norm: r.grad_norm,
            tau_t: r.tau_t,
        };
        put(out, rec, "out")
    })
}

/// The trace as CSV. Release the string with [`pg_string_free`].
///
/// # Safety
/// `trace` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn pg_trace_csv(trace: *const PgTrace, out: *mut *mut c_char) -> PgStatus {
    guard(|| {
        let t = &handle(trace, "trace")?.0;
        let s = CString::new(t.to_csv_string()).map_err(|_| arg("CSV contains a NUL byte"))?;
        put(out, s.into_raw(), "out")
    })
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn pg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Runs a verification suite; writes the report and failure counts.
///
/// # Safety
/// `suite` must be NUL-terminated; outputs may be null.
#[no_mangle]
pub unsafe extern "C" fn pg_verify(
    suite: *const c_char,
    trials: usize,
    seed: u64,
    num_checks: *mut usize,
    num_failures: *mut usize,
) -> PgStatus {
    guard(|| {
        let s: Suite = str_arg(suite, "suite")?.parse()?;
        let reports = run_suite(s, trials, seed)?;
        if !num_checks.is_null() {
            num_checks.write(reports.len());
        }
        if !num_failures.is_null() {
            num_failures.write(count_failures(&reports));
        }
        Ok(())
    })
}
