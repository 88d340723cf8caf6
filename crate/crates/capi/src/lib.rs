//! C ABI over the bilevel library.
//!
//! Problems travel as opaque handles created from JSON problem documents;
//! results travel back as JSON (or CSV) strings allocated by this library
//! and released with [`bilevel_string_free`]. Every entry point records a
//! status code and, on failure, a message retrievable with
//! [`bilevel_last_error`]. Status codes match the CLI exit codes: 0 ok,
//! 1 error, 2 infeasible, 3 schema error.
//!
//! All functions are safe to call from multiple threads; status and error
//! message are thread-local.

use std::cell::{Cell, RefCell};
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use bilevel::baselines::{solve_naive, solve_oracle};
use bilevel::calmness::{certify_calm_at, certify_local_calm};
use bilevel::fixtures::random_finite;
use bilevel::harness::{
    parse_problem_json, problem_to_json, report_to_csv, report_to_json, sweep, HarnessError,
    LoadedProblem, DEFAULT_LADDER,
};
use bilevel::model::{build_instance, validate_schedules};
use bilevel::solver::{minimal_lambda, outer_approximation, solve_stabilized_full, SolveStatus};

/// Outcome of the most recent call on this thread.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BilevelStatus {
    Ok = 0,
    Error = 1,
    Infeasible = 2,
    SchemaError = 3,
}

thread_local! {
    static LAST_STATUS: Cell<BilevelStatus> = const { Cell::new(BilevelStatus::Ok) };
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

/// Opaque problem handle: the validated problem, its approximation family,
/// and the parameter schedule.
pub struct BilevelProblemHandle {
    loaded: LoadedProblem,
}

fn set_status(status: BilevelStatus) {
    LAST_STATUS.with(|s| s.set(status));
}

fn set_error(status: BilevelStatus, message: String) {
    set_status(status);
    let msg = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn clear_error() {
    set_status(BilevelStatus::Ok);
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(err: &HarnessError) -> BilevelStatus {
    match err {
        HarnessError::Schema { .. } | HarnessError::Io { .. } => BilevelStatus::SchemaError,
        _ => BilevelStatus::Error,
    }
}

fn into_c_string(payload: String) -> *mut c_char {
    CString::new(payload.replace('\0', " "))
        .map(CString::into_raw)
        .unwrap_or(ptr::null_mut())
}

fn guarded<F: FnOnce() -> *mut c_char>(f: F) -> *mut c_char {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(p) => p,
        Err(_) => {
            set_error(BilevelStatus::Error, "internal panic".to_string());
            ptr::null_mut()
        }
    }
}

/// # Safety
/// `ptr` must be null or a valid NUL-terminated string.
unsafe fn utf8_arg<'a>(ptr: *const c_char, what: &str) -> Option<&'a str> {
    if ptr.is_null() {
        set_error(BilevelStatus::Error, format!("{what} is null"));
        return None;
    }
    match CStr::from_ptr(ptr).to_str() {
        Ok(s) => Some(s),
        Err(_) => {
            set_error(BilevelStatus::Error, format!("{what} is not UTF-8"));
            None
        }
    }
}

unsafe fn handle_ref<'a>(h: *const BilevelProblemHandle) -> Option<&'a LoadedProblem> {
    if h.is_null() {
        set_error(BilevelStatus::Error, "problem handle is null".to_string());
        None
    } else {
        Some(&(*h).loaded)
    }
}

fn json_payload<T: serde::Serialize>(value: &T) -> *mut c_char {
    match serde_json::to_string_pretty(value) {
        Ok(mut s) => {
            s.push('\n');
            into_c_string(s)
        }
        Err(e) => {
            set_error(BilevelStatus::Error, e.to_string());
            ptr::null_mut()
        }
    }
}

/// Status code of the most recent call on this thread.
#[no_mangle]
pub extern "C" fn bilevel_last_status() -> BilevelStatus {
    LAST_STATUS.with(|s| s.get())
}

/// Message of the most recent failure on this thread, or null. The caller
/// frees the returned string with [`bilevel_string_free`].
#[no_mangle]
pub extern "C" fn bilevel_last_error() -> *mut c_char {
    LAST_ERROR.with(|e| {
        e.borrow()
            .as_ref()
            .map(|msg| msg.clone().into_raw())
            .unwrap_or(ptr::null_mut())
    })
}

/// Release a string allocated by this library.
///
/// # Safety
/// `s` must be null or a pointer previously returned by one of these
/// functions, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bilevel_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

fn parse_into_handle(text: &str) -> *mut BilevelProblemHandle {
    match parse_problem_json(text) {
        Ok(loaded) => {
            clear_error();
            Box::into_raw(Box::new(BilevelProblemHandle { loaded }))
        }
        Err(e) => {
            set_error(status_of(&e), e.to_string());
            ptr::null_mut()
        }
    }
}

/// Parse a problem document from a JSON string. Null on failure.
///
/// # Safety
/// `json` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn bilevel_problem_parse(json: *const c_char) -> *mut BilevelProblemHandle {
    match catch_unwind(AssertUnwindSafe(|| {
        let Some(text) = utf8_arg(json, "json") else {
            return ptr::null_mut();
        };
        parse_into_handle(text)
    })) {
        Ok(p) => p,
        Err(_) => {
            set_error(BilevelStatus::Error, "internal panic".to_string());
            ptr::null_mut()
        }
    }
}

/// Load a problem document from a file path. Null on failure.
///
/// # Safety
/// `path` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn bilevel_problem_load(path: *const c_char) -> *mut BilevelProblemHandle {
    match catch_unwind(AssertUnwindSafe(|| {
        let Some(path) = utf8_arg(path, "path") else {
            return ptr::null_mut();
        };
        match std::fs::read_to_string(path) {
            Ok(text) => parse_into_handle(&text),
            Err(e) => {
                set_error(
                    BilevelStatus::SchemaError,
                    format!("cannot read `{path}`: {e}"),
                );
                ptr::null_mut()
            }
        }
    })) {
        Ok(p) => p,
        Err(_) => {
            set_error(BilevelStatus::Error, "internal panic".to_string());
            ptr::null_mut()
        }
    }
}

/// Release a problem handle.
///
/// # Safety
/// `h` must be null or a handle returned by the load/parse functions, not
/// yet freed.
#[no_mangle]
pub unsafe extern "C" fn bilevel_problem_free(h: *mut BilevelProblemHandle) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

fn record_status(status: SolveStatus) -> BilevelStatus {
    match status {
        SolveStatus::Infeasible => BilevelStatus::Infeasible,
        _ => BilevelStatus::Ok,
    }
}

/// Solve the lifted formulation at accuracy `nu` and return the solve record
/// as JSON. With `use_oa` the full outer-approximation trace is returned
/// instead.
///
/// # Safety
/// `h` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn bilevel_solve_json(
    h: *const BilevelProblemHandle,
    nu: u32,
    use_oa: bool,
    want_minimal_lambda: bool,
) -> *mut c_char {
    let Some(loaded) = handle_ref(h) else {
        return ptr::null_mut();
    };
    guarded(|| {
        clear_error();
        let inst = match build_instance(&loaded.problem, &loaded.family, &loaded.schedule, nu) {
            Ok(inst) => inst,
            Err(e) => {
                set_error(BilevelStatus::Error, e.to_string());
                return ptr::null_mut();
            }
        };
        let post = |record: &mut bilevel::solver::SolveRecord| -> bool {
            if want_minimal_lambda {
                if let Some(w) = record.minimizer.take() {
                    match minimal_lambda(&inst, &w) {
                        Ok(w) => record.minimizer = Some(w),
                        Err(e) => {
                            set_error(BilevelStatus::Error, e.to_string());
                            return false;
                        }
                    }
                }
            }
            true
        };
        if use_oa {
            match outer_approximation(&inst, &[], &[], 4 * inst.y_nu().len() + 4) {
                Ok(mut trace) => {
                    if !post(&mut trace.final_record) {
                        return ptr::null_mut();
                    }
                    set_status(record_status(trace.final_record.status));
                    json_payload(&trace)
                }
                Err(e) => {
                    set_error(BilevelStatus::Error, e.to_string());
                    ptr::null_mut()
                }
            }
        } else {
            match solve_stabilized_full(&inst) {
                Ok(mut record) => {
                    if !post(&mut record) {
                        return ptr::null_mut();
                    }
                    set_status(record_status(record.status));
                    json_payload(&record)
                }
                Err(e) => {
                    set_error(BilevelStatus::Error, e.to_string());
                    ptr::null_mut()
                }
            }
        }
    })
}

/// Naive substitution baseline at accuracy `nu`, as a JSON solve record.
///
/// # Safety
/// `h` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn bilevel_naive_json(
    h: *const BilevelProblemHandle,
    nu: u32,
) -> *mut c_char {
    let Some(loaded) = handle_ref(h) else {
        return ptr::null_mut();
    };
    guarded(|| {
        clear_error();
        match solve_naive(&loaded.problem, &loaded.family, nu) {
            Ok(record) => {
                set_status(record_status(record.status));
                json_payload(&record)
            }
            Err(e) => {
                set_error(BilevelStatus::Error, e.to_string());
                ptr::null_mut()
            }
        }
    })
}

/// Brute-force oracle for the exact problem, as JSON with the near-optimal
/// set.
///
/// # Safety
/// `h` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn bilevel_oracle_json(
    h: *const BilevelProblemHandle,
    tie_tol: f64,
) -> *mut c_char {
    let Some(loaded) = handle_ref(h) else {
        return ptr::null_mut();
    };
    guarded(|| {
        clear_error();
        match solve_oracle(&loaded.problem, tie_tol) {
            Ok(sol) => {
                set_status(record_status(sol.record.status));
                #[derive(serde::Serialize)]
                struct Payload {
                    record: bilevel::solver::SolveRecord,
                    optimal_set: Vec<(Vec<f64>, Vec<f64>)>,
                    tie_tol: f64,
                }
                json_payload(&Payload {
                    record: sol.record,
                    optimal_set: sol.optimal_set,
                    tie_tol: sol.tie_tol,
                })
            }
            Err(e) => {
                set_error(BilevelStatus::Error, e.to_string());
                ptr::null_mut()
            }
        }
    })
}

fn run_sweep(loaded: &LoadedProblem, nu_from: u32, nu_to: u32, tol: f64, csv: bool) -> *mut c_char {
    clear_error();
    if nu_from == 0 || nu_to < nu_from {
        set_error(
            BilevelStatus::Error,
            "nu range must satisfy 1 <= nu_from <= nu_to".to_string(),
        );
        return ptr::null_mut();
    }
    let nu_list: Vec<u32> = (nu_from..=nu_to).collect();
    match sweep(
        &loaded.problem,
        &loaded.family,
        &loaded.schedule,
        &nu_list,
        tol,
    ) {
        Ok(report) => {
            if !report.oracle_value.is_finite() {
                set_status(BilevelStatus::Infeasible);
            }
            let payload = if csv {
                report_to_csv(&report)
            } else {
                report_to_json(&report)
            };
            into_c_string(payload)
        }
        Err(e) => {
            set_error(status_of(&e), e.to_string());
            ptr::null_mut()
        }
    }
}

/// Accuracy sweep over `nu_from..=nu_to`, as a JSON convergence report.
///
/// # Safety
/// `h` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn bilevel_sweep_json(
    h: *const BilevelProblemHandle,
    nu_from: u32,
    nu_to: u32,
    tol: f64,
) -> *mut c_char {
    let Some(loaded) = handle_ref(h) else {
        return ptr::null_mut();
    };
    guarded(|| run_sweep(loaded, nu_from, nu_to, tol, false))
}

/// Accuracy sweep as fixed-column CSV rows.
///
/// # Safety
/// `h` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn bilevel_sweep_csv(
    h: *const BilevelProblemHandle,
    nu_from: u32,
    nu_to: u32,
    tol: f64,
) -> *mut c_char {
    let Some(loaded) = handle_ref(h) else {
        return ptr::null_mut();
    };
    guarded(|| run_sweep(loaded, nu_from, nu_to, tol, true))
}

/// Calmness certificate at the upper-level point `x` (length `x_len`). A
/// negative `rho` requests the pointwise certificate, a nonnegative one the
/// local certificate over the grid ball of that radius.
///
/// # Safety
/// `h` must be a live handle; `x` must point to `x_len` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn bilevel_calmness_json(
    h: *const BilevelProblemHandle,
    x: *const f64,
    x_len: usize,
    rho: f64,
    tol: f64,
) -> *mut c_char {
    let Some(loaded) = handle_ref(h) else {
        return ptr::null_mut();
    };
    if x.is_null() {
        set_error(BilevelStatus::Error, "x is null".to_string());
        return ptr::null_mut();
    }
    let point: Vec<f64> = std::slice::from_raw_parts(x, x_len).to_vec();
    guarded(move || {
        clear_error();
        if rho >= 0.0 {
            match certify_local_calm(&loaded.problem, &point, rho, &DEFAULT_LADDER, tol) {
                Ok(cert) => json_payload(&cert),
                Err(e) => {
                    set_error(BilevelStatus::Error, e.to_string());
                    ptr::null_mut()
                }
            }
        } else {
            match certify_calm_at(&loaded.problem, &point, &DEFAULT_LADDER, tol) {
                Ok(cert) => json_payload(&cert),
                Err(e) => {
                    set_error(BilevelStatus::Error, e.to_string());
                    ptr::null_mut()
                }
            }
        }
    })
}

/// Schedule validation report as JSON.
///
/// # Safety
/// `h` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn bilevel_validate_json(h: *const BilevelProblemHandle) -> *mut c_char {
    let Some(loaded) = handle_ref(h) else {
        return ptr::null_mut();
    };
    guarded(|| {
        clear_error();
        json_payload(&validate_schedules(&loaded.schedule))
    })
}

/// Seeded random finite instance as a problem document.
#[no_mangle]
pub extern "C" fn bilevel_generate_json(seed: u64) -> *mut c_char {
    guarded(|| {
        clear_error();
        let (problem, family, schedule) = random_finite(seed);
        into_c_string(problem_to_json(&LoadedProblem {
            problem,
            family,
            schedule,
        }))
    })
}
