//! C ABI over the droopgrid toolkit.
//!
//! Conventions:
//! - Handles (`dg_case`, `dg_equilibrium`) are opaque; create them through
//!   the constructors here and release them with the matching `_free`.
//! - Every fallible call returns a [`DgStatus`]; on anything but `DG_OK`
//!   (and `DG_WITHHELD`, which still produces output) the thread-local
//!   message from [`dg_last_error`] says what went wrong.
//! - Returned strings are NUL-terminated, UTF-8, owned by the caller, and
//!   must be released with [`dg_string_free`]. Output pointers are written
//!   only on success.
//! - All functions are panic-safe: a caught panic reports `DG_NUMERICAL`
//!   instead of unwinding across the boundary.
#![allow(non_camel_case_types)] // C-style handle and enum names are the ABI

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::str::FromStr;

use droopgrid::case_io::{
    builtin_by_name, builtin_reference, case_hash, gen_lossy_variant, parse_case, serialize_case,
    Case,
};
use droopgrid::dynamics::{build_model, resolve_alpha, AlphaPolicy};
use droopgrid::equilibrium::{
    calibrate_references, parse_equilibrium, pin_operating_point, serialize_equilibrium,
    solve_equilibrium, Equilibrium,
};
use droopgrid::netgraph::{build_ybus, incidence};
use droopgrid::simulate::{
    apply_disturbance, integrate, parse_disturbance, trajectory_csv, DisturbanceSpec, Method,
};
use droopgrid::smallsignal::analyze;
use droopgrid::stability::{certify, fast_mode_cutoff, AssumptionThresholds};
use droopgrid::Error;

/// Result of a droopgrid call.
///
/// Matches the CLI exit codes: 0 success, 1 negative verdict with output
/// still produced, 2 unusable input, 3 numerical failure.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DgStatus {
    /// Operation succeeded.
    DG_OK = 0,
    /// Operation ran but the answer is negative: a stability certificate
    /// was withheld, or a trajectory diverged and was truncated.
    DG_WITHHELD = 1,
    /// Malformed or inconsistent input; nothing was computed.
    DG_INVALID_INPUT = 2,
    /// Numerical failure (non-convergence, singular system, overflow).
    DG_NUMERICAL = 3,
}

/// Opaque network case handle.
pub struct dg_case {
    inner: Case,
}

/// Opaque operating-point handle.
pub struct dg_equilibrium {
    inner: Equilibrium,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let owned = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = owned);
}

fn status_of(err: &Error) -> DgStatus {
    match err.exit_code() {
        2 => DgStatus::DG_INVALID_INPUT,
        _ => DgStatus::DG_NUMERICAL,
    }
}

fn fail(err: Error) -> DgStatus {
    set_error(&err.to_string());
    status_of(&err)
}

fn invalid(msg: &str) -> DgStatus {
    set_error(msg);
    DgStatus::DG_INVALID_INPUT
}

/// Runs `body` with panics converted to `DG_NUMERICAL`.
fn guarded(body: impl FnOnce() -> DgStatus) -> DgStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic; this is a bug in droopgrid");
            DgStatus::DG_NUMERICAL
        }
    }
}

/// Reads a required UTF-8 argument string.
///
/// # Safety
/// `ptr` must be NUL-terminated when non-null.
unsafe fn read_str<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, DgStatus> {
    if ptr.is_null() {
        return Err(invalid(&format!("{what} must not be null")));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| invalid(&format!("{what} must be valid UTF-8")))
}

/// Hands a Rust string to the caller.
fn give_string(s: String, out: *mut *mut c_char) -> DgStatus {
    match CString::new(s) {
        Ok(c) => {
            unsafe { *out = c.into_raw() };
            DgStatus::DG_OK
        }
        Err(_) => {
            set_error("output contained an interior NUL byte");
            DgStatus::DG_NUMERICAL
        }
    }
}

/// Reads the optional rotation policy argument ("auto", "traditional", or
/// an angle in radians); NULL selects the case-driven default.
///
/// # Safety
/// `ptr` must be NUL-terminated when non-null.
unsafe fn read_policy(ptr: *const c_char) -> Result<Option<AlphaPolicy>, DgStatus> {
    if ptr.is_null() {
        return Ok(None);
    }
    let s = read_str(ptr, "alpha_policy")?;
    AlphaPolicy::from_str(s).map(Some).map_err(fail)
}

/// Resolves the optional equilibrium argument: the given handle when
/// non-null, a fresh solve otherwise.
unsafe fn resolve_eq(
    case: &Case,
    alpha: &[f64],
    eq: *const dg_equilibrium,
) -> Result<Equilibrium, Error> {
    if eq.is_null() {
        solve_equilibrium(case, alpha, None)
    } else {
        let eq = &(*eq).inner;
        if eq.n() != case.n() {
            return Err(Error::Case(format!(
                "equilibrium has {} buses but the case has {}",
                eq.n(),
                case.n()
            )));
        }
        Ok(eq.clone())
    }
}

/// Library version as a static string; do not free.
#[no_mangle]
pub extern "C" fn dg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message for the last failure on this thread; empty until a call fails.
/// The pointer stays valid until the next failing call on the same thread.
/// Do not free.
#[no_mangle]
pub extern "C" fn dg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Frees a string returned by this library. NULL is a no-op.
///
/// # Safety
/// `s` must have been returned by a droopgrid call and not freed before.
#[no_mangle]
pub unsafe extern "C" fn dg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses and validates a case from JSON.
///
/// # Safety
/// `json` must be NUL-terminated; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dg_case_parse(json: *const c_char, out: *mut *mut dg_case) -> DgStatus {
    guarded(|| {
        if out.is_null() {
            return invalid("out must not be null");
        }
        let json = match read_str(json, "json") {
            Ok(s) => s,
            Err(status) => return status,
        };
        match parse_case(json) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(dg_case { inner }));
                DgStatus::DG_OK
            }
            Err(e) => fail(e),
        }
    })
}

/// Loads a bundled case by name (e.g. "ieee9").
///
/// # Safety
/// `name` must be NUL-terminated; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dg_case_builtin(name: *const c_char, out: *mut *mut dg_case) -> DgStatus {
    guarded(|| {
        if out.is_null() {
            return invalid("out must not be null");
        }
        let name = match read_str(name, "name") {
            Ok(s) => s,
            Err(status) => return status,
        };
        match builtin_by_name(name) {
            Some(inner) => {
                *out = Box::into_raw(Box::new(dg_case { inner }));
                DgStatus::DG_OK
            }
            None => invalid(&format!("no builtin case named '{name}'")),
        }
    })
}

/// Serializes a case to pretty JSON.
///
/// # Safety
/// `case` must be a live case handle; `out_json` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dg_case_to_json(
    case: *const dg_case,
    out_json: *mut *mut c_char,
) -> DgStatus {
    guarded(|| {
        if case.is_null() || out_json.is_null() {
            return invalid("case and out_json must not be null");
        }
        give_string(serialize_case(&(*case).inner), out_json)
    })
}

/// Writes the case fingerprint (16 hex characters) used in CSV metadata.
///
/// # Safety
/// `case` must be a live case handle; `out_hash` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dg_case_hash(
    case: *const dg_case,
    out_hash: *mut *mut c_char,
) -> DgStatus {
    guarded(|| {
        if case.is_null() || out_hash.is_null() {
            return invalid("case and out_hash must not be null");
        }
        give_string(case_hash(&(*case).inner), out_hash)
    })
}

/// Generates a lossy variant of `base` by redrawing line R/X ratios from
/// N(rx_mean, rx_std^2); equal seeds give identical variants.
///
/// # Safety
/// `base` must be a live case handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dg_case_gen_lossy(
    base: *const dg_case,
    rx_mean: f64,
    rx_std: f64,
    seed: u64,
    out: *mut *mut dg_case,
) -> DgStatus {
    guarded(|| {
        if base.is_null() || out.is_null() {
            return invalid("base and out must not be null");
        }
        match gen_lossy_variant(&(*base).inner, rx_mean, rx_std, seed) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(dg_case { inner }));
                DgStatus::DG_OK
            }
            Err(e) => fail(e),
        }
    })
}

/// Fills null droop references of `case` so that `target` is its steady
/// operating point, returning the calibrated copy.
///
/// # Safety
/// `case` and `target` must be live handles; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dg_case_calibrate(
    case: *const dg_case,
    target: *const dg_equilibrium,
    out: *mut *mut dg_case,
) -> DgStatus {
    guarded(|| {
        if case.is_null() || target.is_null() || out.is_null() {
            return invalid("case, target, and out must not be null");
        }
        match calibrate_references(&(*case).inner, &(*target).inner) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(dg_case { inner }));
                DgStatus::DG_OK
            }
            Err(e) => fail(e),
        }
    })
}

/// Solves the operating point, then rewrites the droop references so the
/// solved state is an exact equilibrium with zero frequency drift. Returns
/// both the pinned case and its equilibrium.
///
/// `alpha_policy` is "auto", "traditional", an angle in radians, or NULL
/// for the case-driven default.
///
/// # Safety
/// `case` must be a live handle; `out_case` and `out_eq` must be valid
/// pointers; `alpha_policy` must be NUL-terminated when non-null.
#[no_mangle]
pub unsafe extern "C" fn dg_case_pin(
    case: *const dg_case,
    alpha_policy: *const c_char,
    out_case: *mut *mut dg_case,
    out_eq: *mut *mut dg_equilibrium,
) -> DgStatus {
    guarded(|| {
        if case.is_null() || out_case.is_null() || out_eq.is_null() {
            return invalid("case, out_case, and out_eq must not be null");
        }
        let case = &(*case).inner;
        let policy = match read_policy(alpha_policy) {
            Ok(p) => p,
            Err(status) => return status,
        };
        let result = (|| {
            let ybus = build_ybus(case.n(), &case.lines)?;
            let alpha = resolve_alpha(case, &ybus, policy)?;
            pin_operating_point(case, &alpha)
        })();
        match result {
            Ok((pinned, eq)) => {
                *out_case = Box::into_raw(Box::new(dg_case { inner: pinned }));
                *out_eq = Box::into_raw(Box::new(dg_equilibrium { inner: eq }));
                DgStatus::DG_OK
            }
            Err(e) => fail(e),
        }
    })
}

/// Frees a case handle. NULL is a no-op.
///
/// # Safety
/// `case` must have come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn dg_case_free(case: *mut dg_case) {
    if !case.is_null() {
        drop(Box::from_raw(case));
    }
}

/// The operating point bundled with the builtin case (zero drift; suitable
/// as a calibration target).
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dg_equilibrium_builtin_reference(
    out: *mut *mut dg_equilibrium,
) -> DgStatus {
    guarded(|| {
        if out.is_null() {
            return invalid("out must not be null");
        }
        *out = Box::into_raw(Box::new(dg_equilibrium {
            inner: builtin_reference(),
        }));
        DgStatus::DG_OK
    })
}

/// Solves the steady operating point of a calibrated case by Newton
/// iteration from a flat start.
///
/// # Safety
/// `case` must be a live handle; `out` must be a valid pointer;
/// `alpha_policy` must be NUL-terminated when non-null.
#[no_mangle]
pub unsafe extern "C" fn dg_equilibrium_solve(
    case: *const dg_case,
    alpha_policy: *const c_char,
    out: *mut *mut dg_equilibrium,
) -> DgStatus {
    guarded(|| {
        if case.is_null() || out.is_null() {
            return invalid("case and out must not be null");
        }
        let case = &(*case).inner;
        let policy = match read_policy(alpha_policy) {
            Ok(p) => p,
            Err(status) => return status,
        };
        let result = (|| {
            let ybus = build_ybus(case.n(), &case.lines)?;
            let alpha = resolve_alpha(case, &ybus, policy)?;
            solve_equilibrium(case, &alpha, None)
        })();
        match result {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(dg_equilibrium { inner }));
                DgStatus::DG_OK
            }
            Err(e) => fail(e),
        }
    })
}

/// Parses an equilibrium from JSON (as written by the CLI or
/// `dg_equilibrium_to_json`).
///
/// # Safety
/// `json` must be NUL-terminated; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dg_equilibrium_parse(
    json: *const c_char,
    out: *mut *mut dg_equilibrium,
) -> DgStatus {
    guarded(|| {
        if out.is_null() {
            return invalid("out must not be null");
        }
        let json = match read_str(json, "json") {
            Ok(s) => s,
            Err(status) => return status,
        };
        match parse_equilibrium(json) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(dg_equilibrium { inner }));
                DgStatus::DG_OK
            }
            Err(e) => fail(e),
        }
    })
}

/// Serializes an equilibrium to JSON.
///
/// # Safety
/// `eq` must be a live handle; `out_json` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dg_equilibrium_to_json(
    eq: *const dg_equilibrium,
    out_json: *mut *mut c_char,
) -> DgStatus {
    guarded(|| {
        if eq.is_null() || out_json.is_null() {
            return invalid("eq and out_json must not be null");
        }
        give_string(serialize_equilibrium(&(*eq).inner), out_json)
    })
}

/// Frees an equilibrium handle. NULL is a no-op.
///
/// # Safety
/// `eq` must have come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn dg_equilibrium_free(eq: *mut dg_equilibrium) {
    if !eq.is_null() {
        drop(Box::from_raw(eq));
    }
}

/// Runs both stability certificates at an operating point and writes the
/// full report as JSON.
///
/// Returns `DG_OK` when both certificates hold, `DG_WITHHELD` when either
/// is withheld (the report is still written), or an error status.
///
/// # Safety
/// `case` must be a live handle; `eq` is an optional live handle (solved
/// internally when NULL); `alpha_policy` must be NUL-terminated when
/// non-null; `out_json` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dg_stability_report(
    case: *const dg_case,
    eq: *const dg_equilibrium,
    alpha_policy: *const c_char,
    out_json: *mut *mut c_char,
) -> DgStatus {
    guarded(|| {
        if case.is_null() || out_json.is_null() {
            return invalid("case and out_json must not be null");
        }
        let case = &(*case).inner;
        let policy = match read_policy(alpha_policy) {
            Ok(p) => p,
            Err(status) => return status,
        };
        let result = (|| {
            let ybus = build_ybus(case.n(), &case.lines)?;
            let alpha = resolve_alpha(case, &ybus, policy)?;
            let eq = resolve_eq(case, &alpha, eq)?;
            let inc = incidence(&case.lines, case.n())?;
            let model = build_model(case, &ybus, &inc, &alpha)?;
            let ss = analyze(&model, &eq)?;
            let report = certify(
                case,
                &ybus,
                &model,
                &eq,
                &ss,
                AssumptionThresholds::default(),
                fast_mode_cutoff(&case.eps),
            )?;
            let json =
                serde_json::to_string_pretty(&report).expect("report serialization cannot fail");
            Ok::<_, Error>((report.both_certified(), json))
        })();
        match result {
            Ok((certified, json)) => {
                let status = give_string(json + "\n", out_json);
                if status != DgStatus::DG_OK {
                    return status;
                }
                if certified {
                    DgStatus::DG_OK
                } else {
                    set_error("stability certificate withheld; see the report");
                    DgStatus::DG_WITHHELD
                }
            }
            Err(e) => fail(e),
        }
    })
}

/// Integrates a disturbed trajectory and writes it as CSV.
///
/// `disturbance_json` uses the CLI schema (`{"theta": {...}, "v": {...},
/// "random": {...}}`); NULL applies the default +0.01 p.u. inverter
/// voltage kick. `method` is "rk4" or "rk45" (NULL means "rk4"); `stride`
/// keeps every Nth sample (0 is treated as 1). Returns `DG_WITHHELD` with
/// the truncated CSV when the trajectory diverges.
///
/// # Safety
/// `case` must be a live handle; `eq` is an optional live handle;
/// `disturbance_json` and `method` must be NUL-terminated when non-null;
/// `out_csv` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dg_simulate_csv(
    case: *const dg_case,
    eq: *const dg_equilibrium,
    disturbance_json: *const c_char,
    t_end: f64,
    dt: f64,
    method: *const c_char,
    stride: usize,
    out_csv: *mut *mut c_char,
) -> DgStatus {
    guarded(|| {
        if case.is_null() || out_csv.is_null() {
            return invalid("case and out_csv must not be null");
        }
        let case = &(*case).inner;
        let disturbance = if disturbance_json.is_null() {
            DisturbanceSpec::voltage_kick(case, 0.01)
        } else {
            match read_str(disturbance_json, "disturbance_json") {
                Ok(s) => match parse_disturbance(s) {
                    Ok(d) => d,
                    Err(e) => return fail(e),
                },
                Err(status) => return status,
            }
        };
        let method = if method.is_null() {
            Method::Rk4
        } else {
            match read_str(method, "method") {
                Ok(s) => match Method::from_str(s) {
                    Ok(m) => m,
                    Err(e) => return fail(e),
                },
                Err(status) => return status,
            }
        };
        let result = (|| {
            let ybus = build_ybus(case.n(), &case.lines)?;
            let alpha = resolve_alpha(case, &ybus, None)?;
            let eq = resolve_eq(case, &alpha, eq)?;
            let inc = incidence(&case.lines, case.n())?;
            let model = build_model(case, &ybus, &inc, &alpha)?;
            let x0 = apply_disturbance(&eq, &disturbance)?;
            integrate(&model, &x0, t_end, dt, method)
        })();
        match result {
            Ok(traj) => {
                let diverged = traj.meta.diverged;
                let status = give_string(trajectory_csv(&traj, stride.max(1)), out_csv);
                if status != DgStatus::DG_OK {
                    return status;
                }
                if diverged {
                    set_error("trajectory diverged; CSV truncated at the flagged sample");
                    DgStatus::DG_WITHHELD
                } else {
                    DgStatus::DG_OK
                }
            }
            Err(e) => fail(e),
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ptr;

    fn c(s: &str) -> CString {
        CString::new(s).unwrap()
    }

    unsafe fn take_string(p: *mut c_char) -> String {
        let s = CStr::from_ptr(p).to_str().unwrap().to_owned();
        dg_string_free(p);
        s
    }

    #[test]
    fn version_is_a_static_semver_string() {
        let v = unsafe { CStr::from_ptr(dg_version()) }.to_str().unwrap();
        assert_eq!(v, env!("CARGO_PKG_VERSION"));
    }

    #[test]
    fn null_arguments_are_rejected_not_crashed() {
        unsafe {
            let mut case = ptr::null_mut();
            assert_eq!(
                dg_case_parse(ptr::null(), &mut case),
                DgStatus::DG_INVALID_INPUT
            );
            assert_eq!(
                dg_case_builtin(ptr::null(), &mut case),
                DgStatus::DG_INVALID_INPUT
            );
            let err = CStr::from_ptr(dg_last_error()).to_str().unwrap();
            assert!(err.contains("null"), "got: {err}");
            dg_case_free(ptr::null_mut());
            dg_equilibrium_free(ptr::null_mut());
            dg_string_free(ptr::null_mut());
        }
    }

    #[test]
    fn full_pipeline_through_the_c_surface() {
        unsafe {
            let mut raw = ptr::null_mut();
            assert_eq!(
                dg_case_builtin(c("ieee9").as_ptr(), &mut raw),
                DgStatus::DG_OK
            );

            let mut reference = ptr::null_mut();
            assert_eq!(
                dg_equilibrium_builtin_reference(&mut reference),
                DgStatus::DG_OK
            );

            let mut case = ptr::null_mut();
            assert_eq!(
                dg_case_calibrate(raw, reference, &mut case),
                DgStatus::DG_OK
            );
            dg_case_free(raw);
            dg_equilibrium_free(reference);

            let mut json = ptr::null_mut();
            assert_eq!(dg_case_to_json(case, &mut json), DgStatus::DG_OK);
            let text = take_string(json);
            let mut reparsed = ptr::null_mut();
            assert_eq!(
                dg_case_parse(c(&text).as_ptr(), &mut reparsed),
                DgStatus::DG_OK
            );

            let mut hash_a = ptr::null_mut();
            let mut hash_b = ptr::null_mut();
            assert_eq!(dg_case_hash(case, &mut hash_a), DgStatus::DG_OK);
            assert_eq!(dg_case_hash(reparsed, &mut hash_b), DgStatus::DG_OK);
            assert_eq!(take_string(hash_a), take_string(hash_b));
            dg_case_free(reparsed);

            let mut eq = ptr::null_mut();
            assert_eq!(
                dg_equilibrium_solve(case, ptr::null(), &mut eq),
                DgStatus::DG_OK
            );
            let mut eq_json = ptr::null_mut();
            assert_eq!(dg_equilibrium_to_json(eq, &mut eq_json), DgStatus::DG_OK);
            let eq_text = take_string(eq_json);
            let mut eq2 = ptr::null_mut();
            assert_eq!(
                dg_equilibrium_parse(c(&eq_text).as_ptr(), &mut eq2),
                DgStatus::DG_OK
            );
            dg_equilibrium_free(eq2);

            let mut report = ptr::null_mut();
            assert_eq!(
                dg_stability_report(case, eq, ptr::null(), &mut report),
                DgStatus::DG_OK
            );
            let report_text = take_string(report);
            assert!(report_text.contains("\"theorem1\""));

            let mut csv = ptr::null_mut();
            assert_eq!(
                dg_simulate_csv(case, eq, ptr::null(), 0.2, 5e-4, ptr::null(), 10, &mut csv),
                DgStatus::DG_OK
            );
            let csv_text = take_string(csv);
            assert!(csv_text.starts_with("# case "));

            dg_equilibrium_free(eq);
            dg_case_free(case);
        }
    }

    #[test]
    fn pin_produces_an_exact_operating_point() {
        unsafe {
            let mut raw = ptr::null_mut();
            assert_eq!(
                dg_case_builtin(c("ieee9").as_ptr(), &mut raw),
                DgStatus::DG_OK
            );
            let mut reference = ptr::null_mut();
            assert_eq!(
                dg_equilibrium_builtin_reference(&mut reference),
                DgStatus::DG_OK
            );
            let mut case = ptr::null_mut();
            assert_eq!(
                dg_case_calibrate(raw, reference, &mut case),
                DgStatus::DG_OK
            );
            dg_case_free(raw);
            dg_equilibrium_free(reference);

            let mut pinned = ptr::null_mut();
            let mut eq = ptr::null_mut();
            assert_eq!(
                dg_case_pin(case, ptr::null(), &mut pinned, &mut eq),
                DgStatus::DG_OK
            );
            assert_eq!((*eq).inner.omega_s, 0.0);

            let mut report = ptr::null_mut();
            assert_eq!(
                dg_stability_report(pinned, eq, ptr::null(), &mut report),
                DgStatus::DG_OK
            );
            dg_string_free(report);

            dg_equilibrium_free(eq);
            dg_case_free(pinned);
            dg_case_free(case);
        }
    }

    #[test]
    fn bad_inputs_map_to_invalid_and_numerical() {
        unsafe {
            let mut case = ptr::null_mut();
            assert_eq!(
                dg_case_parse(c("{\"nope\"").as_ptr(), &mut case),
                DgStatus::DG_INVALID_INPUT
            );
            assert_eq!(
                dg_case_builtin(c("no-such-grid").as_ptr(), &mut case),
                DgStatus::DG_INVALID_INPUT
            );

            // Uncalibrated case: solving must fail as input, not crash.
            assert_eq!(
                dg_case_builtin(c("ieee9").as_ptr(), &mut case),
                DgStatus::DG_OK
            );
            let mut eq = ptr::null_mut();
            assert_eq!(
                dg_equilibrium_solve(case, ptr::null(), &mut eq),
                DgStatus::DG_INVALID_INPUT
            );
            let mut out = ptr::null_mut();
            assert_eq!(
                dg_equilibrium_solve(case, c("sideways").as_ptr(), &mut out),
                DgStatus::DG_INVALID_INPUT
            );
            dg_case_free(case);
        }
    }

    /// Inverter feeding a heavy reactive load over a resistive line, with
    /// references pinned at a depressed load voltage. A valid equilibrium
    /// whose voltage certificate is indefinite.
    fn depressed_two_bus_json() -> (String, String) {
        use droopgrid::case_io::{Bus, BusKind, Epsilons, Meta};
        use droopgrid::dynamics::power_injections;
        use droopgrid::netgraph::Line;
        use nalgebra::DVector;

        let mut case = Case {
            meta: Meta {
                name: "two-bus-depressed".into(),
                base_mva: None,
                warnings: Vec::new(),
            },
            omega0: 0.0,
            eps: Epsilons::default(),
            buses: vec![
                Bus {
                    id: 1,
                    kind: BusKind::Inverter,
                    p0_net: None,
                    q0_net: None,
                    d1: 5.0,
                    d2: 10.0,
                    t1: 0.01,
                    t2: 10.0,
                    v0: 1.0,
                    alpha_override: None,
                },
                Bus {
                    id: 2,
                    kind: BusKind::Load,
                    p0_net: None,
                    q0_net: None,
                    d1: 0.0,
                    d2: 0.0,
                    t1: 0.0,
                    t2: 0.0,
                    v0: 1.0,
                    alpha_override: None,
                },
            ],
            lines: vec![Line {
                from: 1,
                to: 2,
                r: 0.35,
                x: 0.5,
            }],
        };
        let theta = DVector::from_row_slice(&[0.0, -10.0f64.to_radians()]);
        let v = DVector::from_row_slice(&[1.0, 0.7]);
        let ybus = build_ybus(2, &case.lines).unwrap();
        let (p, q) = power_injections(&ybus, &theta, &v);
        for i in 0..2 {
            case.buses[i].p0_net = Some(p[i]);
            case.buses[i].q0_net = Some(q[i]);
        }
        case.buses[0].v0 = v[0];
        let eq = Equilibrium {
            theta,
            v,
            omega_s: 0.0,
            residual_norm: 0.0,
            iterations: 0,
        };
        (serialize_case(&case), serialize_equilibrium(&eq))
    }

    #[test]
    fn withheld_certificate_returns_status_1_with_a_report() {
        let (case_json, eq_json) = depressed_two_bus_json();
        unsafe {
            let mut case = ptr::null_mut();
            assert_eq!(
                dg_case_parse(c(&case_json).as_ptr(), &mut case),
                DgStatus::DG_OK
            );
            let mut eq = ptr::null_mut();
            assert_eq!(
                dg_equilibrium_parse(c(&eq_json).as_ptr(), &mut eq),
                DgStatus::DG_OK
            );

            let mut report = ptr::null_mut();
            assert_eq!(
                dg_stability_report(case, eq, ptr::null(), &mut report),
                DgStatus::DG_WITHHELD
            );
            let text = take_string(report);
            assert!(text.contains("\"withheld\""), "got: {text}");
            let err = CStr::from_ptr(dg_last_error()).to_str().unwrap();
            assert!(err.contains("withheld"), "got: {err}");

            dg_equilibrium_free(eq);
            dg_case_free(case);
        }
    }

    #[test]
    fn diverged_run_returns_status_1_with_truncated_csv() {
        let case_json = {
            let case = droopgrid::case_io::builtin_case();
            serialize_case(&calibrate_references(&case, &builtin_reference()).unwrap())
        };
        unsafe {
            let mut case = ptr::null_mut();
            assert_eq!(
                dg_case_parse(c(&case_json).as_ptr(), &mut case),
                DgStatus::DG_OK
            );

            let kick = r#"{"theta": {"2": 5e6}}"#;
            let mut csv = ptr::null_mut();
            assert_eq!(
                dg_simulate_csv(
                    case,
                    ptr::null(),
                    c(kick).as_ptr(),
                    0.5,
                    5e-4,
                    ptr::null(),
                    1,
                    &mut csv
                ),
                DgStatus::DG_WITHHELD
            );
            let text = take_string(csv);
            assert!(text.contains("# diverged"));
            dg_case_free(case);
        }
    }
}
