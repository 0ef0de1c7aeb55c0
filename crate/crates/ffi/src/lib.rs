//! C ABI over `kinefp`: opaque configuration and run handles, status codes
//! and a per-thread last-error message.
//!
//! Every function returning `KfpStatus` leaves its out-parameters untouched
//! on failure. Handles are released with the matching `*_free`; strings
//! returned as `char *` with `kfp_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use kinefp::cli::artifacts::execute;
use kinefp::cli::config::{parse_config, RunConfig};
use kinefp::cli::verify::run_suite;
use kinefp::kernels::{eval_g, PropagatorSpec};
use kinefp::picard::{RunStatus, SchemeOutcome};
use kinefp::{lp_norm, Error};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KfpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Hypothesis = 4,
    Stability = 5,
    Divergence = 6,
    NonFinite = 7,
    Io = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

/// Which stored series `kfp_run_copy_field` reads.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KfpField {
    /// Phase-space density, `nx^N · nv^N` values.
    Density = 0,
    /// `∫ p dv`, `nx^N` values.
    Marginal = 1,
    /// TAF concentration, `nx^N` values.
    Taf = 2,
    /// Speed-weighted flux, `nx^N` values.
    Flux = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KfpRunStatus {
    Converged = 0,
    MaxIterations = 1,
    Diverged = 2,
}

/// Parsed and validated run configuration.
pub struct KfpConfig(RunConfig);

/// Finished run: every stored time of the final iterate.
pub struct KfpRun {
    out: SchemeOutcome,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> KfpStatus {
    match e {
        Error::Config(_) | Error::Param { .. } => KfpStatus::Config,
        Error::Argument(_) => KfpStatus::InvalidArgument,
        Error::Hypothesis(_) => KfpStatus::Hypothesis,
        Error::Cfl(_) => KfpStatus::Stability,
        Error::Divergence(_) | Error::SeriesTruncation { .. } => KfpStatus::Divergence,
        Error::NonFinite(_) => KfpStatus::NonFinite,
        Error::Io(_) => KfpStatus::Io,
    }
}

fn fail(status: KfpStatus, msg: impl Into<String>) -> KfpStatus {
    set_error(msg.into());
    status
}

/// Runs `f`, mapping errors and panics to status codes.
fn guard<F: FnOnce() -> Result<(), KfpStatus>>(f: F) -> KfpStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => KfpStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(KfpStatus::Panic, "internal panic"),
    }
}

fn lift<T>(r: kinefp::Result<T>) -> Result<T, KfpStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, KfpStatus> {
    if p.is_null() {
        return Err(fail(KfpStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(KfpStatus::InvalidArgument, format!("{name} is not UTF-8")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, name: &str) -> Result<&'a [f64], KfpStatus> {
    if p.is_null() {
        return Err(fail(KfpStatus::NullPointer, format!("{name} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// Message of the last failure on this thread, or NULL. The pointer stays
/// valid until the next `kfp_*` call on the same thread.
#[no_mangle]
pub extern "C" fn kfp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn kfp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must come from a `kfp_*` function returning `char *`, or be NULL.
#[no_mangle]
pub unsafe extern "C" fn kfp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses a TOML configuration.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kfp_config_from_toml(
    text: *const c_char,
    out: *mut *mut KfpConfig,
) -> KfpStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        if out.is_null() {
            return Err(fail(KfpStatus::NullPointer, "out is null"));
        }
        let cfg = lift(parse_config(text))?;
        *out = Box::into_raw(Box::new(KfpConfig(cfg)));
        Ok(())
    })
}

/// # Safety
/// `cfg` must come from `kfp_config_from_toml` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn kfp_config_free(cfg: *mut KfpConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Hex SHA-256 of the configuration; free with `kfp_string_free`.
///
/// # Safety
/// `cfg` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn kfp_config_hash(cfg: *const KfpConfig) -> *mut c_char {
    match cfg.as_ref() {
        Some(c) => CString::new(c.0.hash()).map_or(ptr::null_mut(), CString::into_raw),
        None => {
            set_error("cfg is null".into());
            ptr::null_mut()
        }
    }
}

/// Overrides one numeric `model` or `grid` field by name.
///
/// # Safety
/// `cfg` must be a live handle and `name` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn kfp_config_set(
    cfg: *mut KfpConfig,
    name: *const c_char,
    value: f64,
) -> KfpStatus {
    guard(|| {
        let name = str_arg(name, "name")?;
        let c = cfg
            .as_mut()
            .ok_or_else(|| fail(KfpStatus::NullPointer, "cfg is null"))?;
        c.0 = lift(c.0.with_param(name, value))?;
        Ok(())
    })
}

/// Runs the coupled scheme. A run that stops without converging still
/// yields a handle; inspect it with `kfp_run_summary`.
///
/// # Safety
/// `cfg` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kfp_run(cfg: *const KfpConfig, out: *mut *mut KfpRun) -> KfpStatus {
    guard(|| {
        let c = cfg
            .as_ref()
            .ok_or_else(|| fail(KfpStatus::NullPointer, "cfg is null"))?;
        if out.is_null() {
            return Err(fail(KfpStatus::NullPointer, "out is null"));
        }
        let (run, _) = lift(execute(&c.0))?;
        *out = Box::into_raw(Box::new(KfpRun { out: run }));
        Ok(())
    })
}

/// # Safety
/// `run` must come from `kfp_run` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn kfp_run_free(run: *mut KfpRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// # Safety
/// `run` must be a live handle; `status` and `iterations` writable.
#[no_mangle]
pub unsafe extern "C" fn kfp_run_summary(
    run: *const KfpRun,
    status: *mut KfpRunStatus,
    iterations: *mut usize,
) -> KfpStatus {
    guard(|| {
        let r = run
            .as_ref()
            .ok_or_else(|| fail(KfpStatus::NullPointer, "run is null"))?;
        if status.is_null() || iterations.is_null() {
            return Err(fail(KfpStatus::NullPointer, "output pointer is null"));
        }
        *status = match r.out.report.status {
            RunStatus::Converged => KfpRunStatus::Converged,
            RunStatus::MaxIterations => KfpRunStatus::MaxIterations,
            RunStatus::Diverged { .. } => KfpRunStatus::Diverged,
        };
        *iterations = r.out.report.iterations;
        Ok(())
    })
}

/// Number of stored times (`nt + 1`), or 0 for a NULL handle.
///
/// # Safety
/// `run` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn kfp_run_time_count(run: *const KfpRun) -> usize {
    run.as_ref().map_or(0, |r| r.out.state.times.len())
}

/// Time and `‖p(t)‖₁` at stored index `n`.
///
/// # Safety
/// `run` must be a live handle; `t` and `mass` writable.
#[no_mangle]
pub unsafe extern "C" fn kfp_run_sample(
    run: *const KfpRun,
    n: usize,
    t: *mut f64,
    mass: *mut f64,
) -> KfpStatus {
    guard(|| {
        let r = run
            .as_ref()
            .ok_or_else(|| fail(KfpStatus::NullPointer, "run is null"))?;
        if t.is_null() || mass.is_null() {
            return Err(fail(KfpStatus::NullPointer, "output pointer is null"));
        }
        let p = r.out.state.p.get(n).ok_or_else(|| {
            fail(
                KfpStatus::InvalidArgument,
                format!("time index {n} out of range"),
            )
        })?;
        *t = p.time;
        *mass = lift(lp_norm(p, 1.0))?;
        Ok(())
    })
}

fn field_values(r: &KfpRun, field: KfpField, n: usize) -> Option<&[f64]> {
    let st = &r.out.state;
    Some(match field {
        KfpField::Density => &st.p.get(n)?.values,
        KfpField::Marginal => &st.marginal.get(n)?.values,
        KfpField::Taf => &st.c.get(n)?.values,
        KfpField::Flux => &st.j.get(n)?.values,
    })
}

/// Number of values per stored time of `field`.
///
/// # Safety
/// `run` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn kfp_run_field_len(run: *const KfpRun, field: KfpField) -> usize {
    run.as_ref()
        .and_then(|r| field_values(r, field, 0))
        .map_or(0, <[f64]>::len)
}

/// Copies `field` at stored index `n` into `buf` (row-major, x axes before
/// v axes). Fails with `BUFFER_TOO_SMALL` if `len` is short.
///
/// # Safety
/// `run` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn kfp_run_copy_field(
    run: *const KfpRun,
    field: KfpField,
    n: usize,
    buf: *mut f64,
    len: usize,
) -> KfpStatus {
    guard(|| {
        let r = run
            .as_ref()
            .ok_or_else(|| fail(KfpStatus::NullPointer, "run is null"))?;
        if buf.is_null() {
            return Err(fail(KfpStatus::NullPointer, "buf is null"));
        }
        let vals = field_values(r, field, n).ok_or_else(|| {
            fail(
                KfpStatus::InvalidArgument,
                format!("time index {n} out of range"),
            )
        })?;
        if len < vals.len() {
            return Err(fail(
                KfpStatus::BufferTooSmall,
                format!("need {} values, got {len}", vals.len()),
            ));
        }
        ptr::copy_nonoverlapping(vals.as_ptr(), buf, vals.len());
        Ok(())
    })
}

/// Transition density `G(t, x, v; tau, xi, nu)` of the free kinetic flow;
/// each point argument holds `dim` values.
///
/// # Safety
/// The point arguments must be valid for `dim` reads; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kfp_eval_kernel(
    k: f64,
    sigma: f64,
    dim: usize,
    t: f64,
    x: *const f64,
    v: *const f64,
    tau: f64,
    xi: *const f64,
    nu: *const f64,
    out: *mut f64,
) -> KfpStatus {
    guard(|| {
        if !(1..=3).contains(&dim) {
            return Err(fail(KfpStatus::InvalidArgument, "dim must be 1, 2 or 3"));
        }
        if out.is_null() {
            return Err(fail(KfpStatus::NullPointer, "out is null"));
        }
        let spec = PropagatorSpec::new(k, sigma, dim);
        let (x, v) = (slice_arg(x, dim, "x")?, slice_arg(v, dim, "v")?);
        let (xi, nu) = (slice_arg(xi, dim, "xi")?, slice_arg(nu, dim, "nu")?);
        *out = lift(eval_g(t, x, v, tau, xi, nu, &spec))?;
        Ok(())
    })
}

/// Runs a verification suite by name; counts go to `passed` and `failed`.
/// Returns `OK` even when checks fail.
///
/// # Safety
/// `suite` must be NUL-terminated; `passed` and `failed` writable.
#[no_mangle]
pub unsafe extern "C" fn kfp_verify(
    suite: *const c_char,
    passed: *mut usize,
    failed: *mut usize,
) -> KfpStatus {
    guard(|| {
        let suite = str_arg(suite, "suite")?;
        if passed.is_null() || failed.is_null() {
            return Err(fail(KfpStatus::NullPointer, "output pointer is null"));
        }
        let rows = lift(run_suite(suite))?;
        let bad = rows.iter().filter(|r| !r.passed).count();
        *passed = rows.len() - bad;
        *failed = bad;
        Ok(())
    })
}
