//! C interface to pardyn reduced models.
//!
//! Every fallible function returns a [`PardynStatus`] code; on failure the
//! message is kept per thread and can be read with
//! [`pardyn_last_error_message`]. Models are opaque handles released with
//! [`pardyn_model_free`]. Arrays are caller-allocated; functions that fill
//! one take its capacity and fail with `PARDYN_INVALID_ARGUMENT` when it is
//! too small.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use pardyn::config::ProblemConfig;
use pardyn::discretization::Discretization;
use pardyn::error::DvsError;
use pardyn::model::ReducedModel;
use pardyn::offline::{run_offline, OfflineConfig};
use pardyn::online::{online_zetas_truncated, Reconstructor};
use pardyn::persist::{load_model, save_model};

pub type PardynStatus = i32;

pub const PARDYN_OK: PardynStatus = 0;
/// A required pointer argument was null.
pub const PARDYN_NULL_POINTER: PardynStatus = 1;
/// Bad input: parameter outside the box, wrong length, short buffer, bad config.
pub const PARDYN_INVALID_ARGUMENT: PardynStatus = 2;
/// The numerical method failed (singular step, divergence, ...).
pub const PARDYN_NUMERICAL: PardynStatus = 3;
pub const PARDYN_IO: PardynStatus = 4;
/// Malformed or unsupported model file.
pub const PARDYN_FORMAT: PardynStatus = 5;
/// A Rust panic was caught at the boundary.
pub const PARDYN_INTERNAL: PardynStatus = 6;

/// Opaque reduced-model handle.
pub struct PardynModel {
    model: ReducedModel,
    recon: Option<Reconstructor>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &DvsError) -> PardynStatus {
    match e {
        DvsError::Io { .. } => PARDYN_IO,
        DvsError::Format(_) | DvsError::Version { .. } => PARDYN_FORMAT,
        e if e.is_numerical() => PARDYN_NUMERICAL,
        _ => PARDYN_INVALID_ARGUMENT,
    }
}

struct Fail(PardynStatus, String);

impl From<DvsError> for Fail {
    fn from(e: DvsError) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(PARDYN_NULL_POINTER, format!("{what} is null"))
}

fn invalid(msg: String) -> Fail {
    Fail(PARDYN_INVALID_ARGUMENT, msg)
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> PardynStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            PARDYN_OK
        }
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal error: {msg}"));
            PARDYN_INTERNAL
        }
    }
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not valid UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn model_arg<'a>(m: *const PardynModel) -> Result<&'a PardynModel, Fail> {
    m.as_ref().ok_or_else(|| null("model"))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_arg<'a>(p: *mut f64, len: usize, need: usize, what: &str) -> Result<&'a mut [f64], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    if len < need {
        return Err(invalid(format!("{what} holds {len} values, {need} needed")));
    }
    Ok(std::slice::from_raw_parts_mut(p, need))
}

unsafe fn store<T>(out: *mut T, v: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = v;
    Ok(())
}

fn into_handle(model: ReducedModel) -> *mut PardynModel {
    let recon = if model.has_fields() { Reconstructor::new(&model).ok() } else { None };
    Box::into_raw(Box::new(PardynModel { model, recon }))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pardyn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length without the NUL,
/// or 0 when the last call succeeded.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn pardyn_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else {
            if !buf.is_null() && len > 0 {
                *buf = 0;
            }
            return 0;
        };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Loads a model file written by `pardyn offline` or [`pardyn_model_save`].
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pardyn_model_load(path: *const c_char, out: *mut *mut PardynModel) -> PardynStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = path_arg(path, "path")?;
        let model = load_model(&path)?;
        *out = into_handle(model);
        Ok(())
    })
}

/// Runs the offline stage on a TOML problem configuration with the default
/// settings (true-error greedy) and the given term limit and tolerance.
///
/// # Safety
/// `config_path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pardyn_model_build(
    config_path: *const c_char,
    n_max: usize,
    tolerance: f64,
    out: *mut *mut PardynModel,
) -> PardynStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if n_max == 0 || !(tolerance > 0.0) {
            return Err(invalid("n_max and tolerance must be positive".into()));
        }
        let cfg = ProblemConfig::load(&path_arg(config_path, "config_path")?)?;
        let disc = Discretization::new(&cfg.problem, &cfg.mesh()?)?;
        let offline = OfflineConfig { n_max, tolerance, ..OfflineConfig::default() };
        let model = run_offline(&cfg.problem, &disc, &cfg.grid()?, &cfg.training_set()?, &offline)
            .map_err(|f| Fail::from(f.error))?;
        *out = into_handle(model);
        Ok(())
    })
}

/// Writes the model (and its manifest sidecar); `strip != 0` drops the
/// spatial fields.
///
/// # Safety
/// `model` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn pardyn_model_save(model: *const PardynModel, path: *const c_char, strip: i32) -> PardynStatus {
    guard(|| {
        let m = model_arg(model)?;
        save_model(&m.model, &path_arg(path, "path")?, strip != 0)?;
        Ok(())
    })
}

/// Releases a handle; null is ignored.
///
/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pardyn_model_free(model: *mut PardynModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of separated terms N.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pardyn_model_n_terms(model: *const PardynModel, out: *mut usize) -> PardynStatus {
    guard(|| store(out, model_arg(model)?.model.n_terms()))
}

/// Number of parameters.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pardyn_model_n_params(model: *const PardynModel, out: *mut usize) -> PardynStatus {
    guard(|| store(out, model_arg(model)?.model.problem.param_dim()))
}

/// Number of time nodes, steps + 1.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pardyn_model_n_time_nodes(model: *const PardynModel, out: *mut usize) -> PardynStatus {
    guard(|| store(out, model_arg(model)?.model.grid.nodes()))
}

/// Number of mesh nodes of a reconstructed field (boundary included).
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pardyn_model_n_mesh_nodes(model: *const PardynModel, out: *mut usize) -> PardynStatus {
    guard(|| {
        let m = model_arg(model)?;
        let r = m.recon.as_ref().ok_or_else(|| invalid("model has no spatial fields".into()))?;
        store(out, r.mesh().n_nodes())
    })
}

/// Time step τ and final time T.
///
/// # Safety
/// `model` must be a live handle; both outputs writable.
#[no_mangle]
pub unsafe extern "C" fn pardyn_model_time_grid(model: *const PardynModel, tau: *mut f64, t_final: *mut f64) -> PardynStatus {
    guard(|| {
        let g = &model_arg(model)?.model.grid;
        store(tau, g.tau())?;
        store(t_final, g.t_final)
    })
}

/// Parameter box bounds, `len` = number of parameters.
///
/// # Safety
/// `model` must be a live handle; `lo` and `hi` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn pardyn_model_parameter_box(
    model: *const PardynModel,
    lo: *mut f64,
    hi: *mut f64,
    len: usize,
) -> PardynStatus {
    guard(|| {
        let b = &model_arg(model)?.model.problem.parameter_box;
        let lo = out_arg(lo, len, b.len(), "lo")?;
        let hi = out_arg(hi, len, b.len(), "hi")?;
        for (i, &(a, c)) in b.iter().enumerate() {
            lo[i] = a;
            hi[i] = c;
        }
        Ok(())
    })
}

unsafe fn evaluate(
    m: &PardynModel,
    xi: *const f64,
    xi_len: usize,
    n_terms: usize,
) -> Result<pardyn::online::OnlineEvaluation, Fail> {
    let xi = slice_arg(xi, xi_len, "xi")?;
    if n_terms == 0 || n_terms > m.model.n_terms() {
        return Err(invalid(format!("n_terms must be in 1..={}", m.model.n_terms())));
    }
    Ok(online_zetas_truncated(&m.model, xi, n_terms)?)
}

/// Online stage: writes `ζ_k(t_n; ξ)` row-major (`out[k * nodes + n]`) for
/// the first `n_terms` terms. `out_len` must be at least
/// `n_terms * nodes`.
///
/// # Safety
/// `model` must be a live handle, `xi` must hold `xi_len` values and `out`
/// `out_len` values.
#[no_mangle]
pub unsafe extern "C" fn pardyn_model_evaluate(
    model: *const PardynModel,
    xi: *const f64,
    xi_len: usize,
    n_terms: usize,
    out: *mut f64,
    out_len: usize,
) -> PardynStatus {
    guard(|| {
        let m = model_arg(model)?;
        let ev = evaluate(m, xi, xi_len, n_terms)?;
        let nodes = m.model.grid.nodes();
        let out = out_arg(out, out_len, n_terms * nodes, "out")?;
        for (k, row) in ev.zetas.iter().enumerate() {
            out[k * nodes..(k + 1) * nodes].copy_from_slice(row);
        }
        Ok(())
    })
}

/// Reduced solution `u_N(x, t_n; ξ)` at every mesh node (lifting included),
/// using the first `n_terms` terms.
///
/// # Safety
/// As for [`pardyn_model_evaluate`]; `out` must hold `out_len` values.
#[no_mangle]
pub unsafe extern "C" fn pardyn_model_reconstruct(
    model: *const PardynModel,
    xi: *const f64,
    xi_len: usize,
    n_terms: usize,
    time_index: usize,
    out: *mut f64,
    out_len: usize,
) -> PardynStatus {
    guard(|| {
        let m = model_arg(model)?;
        let r = m.recon.as_ref().ok_or_else(|| invalid("model has no spatial fields".into()))?;
        let ev = evaluate(m, xi, xi_len, n_terms)?;
        let field = r.field(&m.model, &ev, time_index)?;
        out_arg(out, out_len, field.len(), "out")?.copy_from_slice(&field);
        Ok(())
    })
}
