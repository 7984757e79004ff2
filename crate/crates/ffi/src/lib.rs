//! C ABI over `bilevel-prox`.
//!
//! Problems are loaded from the same JSON format the CLI reads and solved
//! into trace handles. Every fallible call returns a [`BpStatus`]; the
//! message for the last failure on the calling thread is available from
//! [`bp_last_error`]. Handles are owned by the caller and released with
//! the matching `_free` function.

use bilevel_prox::driver::{solve_file, verify_trace, VerifyError};
use bilevel_prox::gap::dual_gap;
use bilevel_prox::problem_file::{parse_problem, Problem, ProblemFile};
use bilevel_prox::trace::{read_records, StopReason, Trace, TraceRecord};
use bilevel_prox::Vector;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::io::BufWriter;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    Solver = 4,
    Io = 5,
    OutOfRange = 6,
    Certificate = 7,
    Unsupported = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BpStopReason {
    MaxIter = 0,
    Criterion = 1,
    Failure = 2,
}

/// Scalar columns of one trace row; absent values are NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BpRow {
    pub k: usize,
    pub eps_k: f64,
    pub lambda_k: f64,
    pub eta_k: f64,
    pub f: f64,
    pub g_or_gap: f64,
    pub dist_to_ref: f64,
    pub step_norm: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub stop_flag: bool,
}

/// Opaque loaded problem.
pub struct BpProblem {
    file: ProblemFile,
}

/// Opaque solver trace.
pub struct BpTrace {
    trace: Trace,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn fail(status: BpStatus, msg: impl Into<String>) -> BpStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> BpStatus) -> BpStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(BpStatus::Panic, "panic inside bilevel-prox"))
}

unsafe fn str_arg<'a>(p: *const c_char) -> Result<&'a str, BpStatus> {
    if p.is_null() {
        return Err(fail(BpStatus::NullPointer, "null string argument"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(BpStatus::InvalidUtf8, "string argument is not valid UTF-8"))
}

macro_rules! try_status {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

macro_rules! non_null {
    ($p:expr) => {
        match $p.as_ref() {
            Some(v) => v,
            None => return fail(BpStatus::NullPointer, concat!("null argument `", stringify!($p), "`")),
        }
    };
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn bp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Parses a JSON problem description into `*out`.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bp_problem_from_json(json: *const c_char, out: *mut *mut BpProblem) -> BpStatus {
    guard(|| {
        if out.is_null() {
            return fail(BpStatus::NullPointer, "null argument `out`");
        }
        *out = ptr::null_mut();
        let text = try_status!(str_arg(json));
        match parse_problem(text) {
            Ok(file) => {
                *out = Box::into_raw(Box::new(BpProblem { file }));
                BpStatus::Ok
            }
            Err(e) => fail(BpStatus::Parse, e.to_string()),
        }
    })
}

/// Dimension of the problem, or 0 for NULL.
///
/// # Safety
/// `problem` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bp_problem_dim(problem: *const BpProblem) -> usize {
    problem.as_ref().map_or(0, |p| p.file.problem.dim())
}

/// Overrides the iteration limit of SBP and SMPEC runs.
///
/// # Safety
/// `problem` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bp_problem_set_max_iter(problem: *mut BpProblem, max_iter: usize) -> BpStatus {
    let p = match problem.as_mut() {
        Some(p) => p,
        None => return fail(BpStatus::NullPointer, "null argument `problem`"),
    };
    p.file.max_iter = max_iter;
    BpStatus::Ok
}

/// Enables the ε₀ stopping test; `eps0` must be positive.
///
/// # Safety
/// `problem` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bp_problem_set_stop_eps0(problem: *mut BpProblem, eps0: f64) -> BpStatus {
    let p = match problem.as_mut() {
        Some(p) => p,
        None => return fail(BpStatus::NullPointer, "null argument `problem`"),
    };
    if !(eps0.is_finite() && eps0 > 0.0) {
        return fail(BpStatus::OutOfRange, "eps0 must be positive");
    }
    p.file.stop_eps0 = Some(eps0);
    BpStatus::Ok
}

/// # Safety
/// `problem` must be NULL or a handle from [`bp_problem_from_json`] that
/// has not been freed.
#[no_mangle]
pub unsafe extern "C" fn bp_problem_free(problem: *mut BpProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Runs the solver. On `BP_STATUS_OK` or a failure inside the loop
/// (`BP_STATUS_SOLVER` with a non-NULL `*out`) the trace is stored in
/// `*out`; a run that cannot start leaves `*out` NULL.
///
/// # Safety
/// `problem` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bp_solve(problem: *const BpProblem, out: *mut *mut BpTrace) -> BpStatus {
    guard(|| {
        if out.is_null() {
            return fail(BpStatus::NullPointer, "null argument `out`");
        }
        *out = ptr::null_mut();
        let p = non_null!(problem);
        match solve_file(&p.file) {
            Ok(trace) => {
                let failure = match &trace.stop {
                    StopReason::Failure(e) => Some(e.to_string()),
                    _ => None,
                };
                *out = Box::into_raw(Box::new(BpTrace { trace }));
                match failure {
                    Some(msg) => fail(BpStatus::Solver, msg),
                    None => BpStatus::Ok,
                }
            }
            Err(e) => fail(BpStatus::Solver, e.to_string()),
        }
    })
}

/// Number of rows (iterates) in the trace, or 0 for NULL.
///
/// # Safety
/// `trace` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bp_trace_len(trace: *const BpTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.trace.records.len())
}

/// Dimension of the iterates, or 0 for NULL.
///
/// # Safety
/// `trace` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bp_trace_dim(trace: *const BpTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.trace.records[0].x.len())
}

unsafe fn record<'a>(trace: *const BpTrace, index: usize) -> Result<&'a TraceRecord, BpStatus> {
    let t = match trace.as_ref() {
        Some(t) => t,
        None => return Err(fail(BpStatus::NullPointer, "null argument `trace`")),
    };
    t.trace
        .records
        .get(index)
        .ok_or_else(|| fail(BpStatus::OutOfRange, format!("row {index} of {}", t.trace.records.len())))
}

/// Copies iterate `index` into `out[0..len]`; `len` must equal the dimension.
///
/// # Safety
/// `trace` must be a live handle and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn bp_trace_iterate(trace: *const BpTrace, index: usize, out: *mut f64, len: usize) -> BpStatus {
    let r = try_status!(record(trace, index));
    if out.is_null() {
        return fail(BpStatus::NullPointer, "null argument `out`");
    }
    if len != r.x.len() {
        return fail(BpStatus::OutOfRange, format!("buffer holds {len} values, iterate has {}", r.x.len()));
    }
    std::slice::from_raw_parts_mut(out, len).copy_from_slice(r.x.as_slice());
    BpStatus::Ok
}

/// Scalar columns of row `index`.
///
/// # Safety
/// `trace` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bp_trace_row(trace: *const BpTrace, index: usize, out: *mut BpRow) -> BpStatus {
    let r = try_status!(record(trace, index));
    let out = match out.as_mut() {
        Some(o) => o,
        None => return fail(BpStatus::NullPointer, "null argument `out`"),
    };
    let cert = r.step.as_ref().and_then(|s| s.certificate.as_ref());
    *out = BpRow {
        k: r.k,
        eps_k: r.eps_k,
        lambda_k: r.lambda_k,
        eta_k: r.eta_k,
        f: r.f,
        g_or_gap: r.g_or_gap.unwrap_or(f64::NAN),
        dist_to_ref: r.dist_to_ref.unwrap_or(f64::NAN),
        step_norm: r.step.as_ref().map_or(f64::NAN, |s| s.step_norm),
        eta1: cert.map_or(f64::NAN, |c| c.eta1),
        eta2: cert.map_or(f64::NAN, |c| c.eta2),
        stop_flag: r.step.as_ref().is_some_and(|s| s.stop_flag),
    };
    BpStatus::Ok
}

/// Distance of the last iterate to the reference set; NaN when the problem
/// has no reference or `trace` is NULL.
///
/// # Safety
/// `trace` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bp_trace_final_dist(trace: *const BpTrace) -> f64 {
    trace.as_ref().and_then(|t| t.trace.final_dist()).unwrap_or(f64::NAN)
}

/// Why the run ended. For `BP_STOP_REASON_FAILURE` the solver message is
/// returned by [`bp_last_error`] right after [`bp_solve`].
///
/// # Safety
/// `trace` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn bp_trace_stop_reason(trace: *const BpTrace) -> BpStopReason {
    match trace.as_ref().map(|t| &t.trace.stop) {
        Some(StopReason::MaxIter) => BpStopReason::MaxIter,
        Some(StopReason::Criterion) => BpStopReason::Criterion,
        Some(StopReason::Failure(_)) | None => BpStopReason::Failure,
    }
}

/// Writes the trace as CSV to `path`.
///
/// # Safety
/// `trace` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn bp_trace_write_csv(trace: *const BpTrace, path: *const c_char) -> BpStatus {
    guard(|| {
        let t = non_null!(trace);
        let path = try_status!(str_arg(path));
        let file = match File::create(path) {
            Ok(f) => f,
            Err(e) => return fail(BpStatus::Io, format!("{path}: {e}")),
        };
        match t.trace.write_csv(BufWriter::new(file)) {
            Ok(()) => BpStatus::Ok,
            Err(e) => fail(BpStatus::Io, format!("{path}: {e}")),
        }
    })
}

/// # Safety
/// `trace` must be NULL or a handle from [`bp_solve`] that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn bp_trace_free(trace: *mut BpTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

fn verify_status(file: &ProblemFile, records: &[TraceRecord]) -> BpStatus {
    match verify_trace(file, records) {
        Ok(()) => BpStatus::Ok,
        Err(e @ VerifyError::Mismatch(_)) => fail(BpStatus::Parse, e.to_string()),
        Err(e @ VerifyError::Failed { .. }) => fail(BpStatus::Certificate, e.to_string()),
    }
}

/// Re-checks every step certificate of `trace` against `problem`.
/// Returns `BP_STATUS_CERTIFICATE` naming the failing row on a bad step.
///
/// # Safety
/// Both handles must be live.
#[no_mangle]
pub unsafe extern "C" fn bp_verify_trace(problem: *const BpProblem, trace: *const BpTrace) -> BpStatus {
    guard(|| {
        let p = non_null!(problem);
        let t = non_null!(trace);
        verify_status(&p.file, &t.trace.records)
    })
}

/// Like [`bp_verify_trace`] for a CSV trace on disk.
///
/// # Safety
/// `problem` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn bp_verify_csv(problem: *const BpProblem, path: *const c_char) -> BpStatus {
    guard(|| {
        let p = non_null!(problem);
        let path = try_status!(str_arg(path));
        let file = match File::open(path) {
            Ok(f) => f,
            Err(e) => return fail(BpStatus::Io, format!("{path}: {e}")),
        };
        match read_records(file) {
            Ok(records) => verify_status(&p.file, &records),
            Err(e) => fail(BpStatus::Parse, format!("{path}: {e}")),
        }
    })
}

/// Dual gap of the problem's operator over its set at `x[0..len]`, to
/// accuracy `tol`. Only SMPEC and penalty problems on compact sets have one.
///
/// # Safety
/// `problem` must be a live handle, `x` must hold `len` doubles and `out`
/// must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bp_dual_gap(
    problem: *const BpProblem,
    x: *const f64,
    len: usize,
    tol: f64,
    out: *mut f64,
) -> BpStatus {
    guard(|| {
        let p = non_null!(problem);
        if x.is_null() || out.is_null() {
            return fail(BpStatus::NullPointer, "null argument `x` or `out`");
        }
        let smpec = match &p.file.problem {
            Problem::Smpec(s) | Problem::Penalty { problem: s, .. } => s,
            Problem::Sbp(_) => return fail(BpStatus::Unsupported, "SBP problems have no operator"),
        };
        if len != smpec.dim() {
            return fail(BpStatus::OutOfRange, format!("point has {len} values, problem has {}", smpec.dim()));
        }
        let point = Vector::from_column_slice(std::slice::from_raw_parts(x, len));
        match dual_gap(smpec.operator(), smpec.set(), &point, tol) {
            Ok(ev) => {
                *out = ev.value;
                BpStatus::Ok
            }
            Err(e) => fail(BpStatus::Solver, e.to_string()),
        }
    })
}
