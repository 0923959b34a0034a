//! C ABI over the equiwave library.
//!
//! Objects are opaque handles created by `eqw_*_new`-style calls and released with
//! the matching `*_free`. Every fallible call returns an [`EqwStatus`]; on failure
//! the message is available from [`eqw_last_error`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use equiwave::acceptance::{run_criterion, AcceptanceOptions};
use equiwave::dynamics::{evolve, FlowConfig};
use equiwave::gibbs::potential_v;
use equiwave::grid::{Field, PhaseState};
use equiwave::measures::{sample_gaussian, CholeskySampler, Ensemble};
use equiwave::operator::{assemble, greens_numeric, DiscreteOperator};
use equiwave::soliton::{compute_soliton, Background, DEFAULT_FAR_RADIUS, DEFAULT_TOL};
use equiwave::{EquiwaveError, ModelParams};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EqwStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidParams = 3,
    /// Solver, eigensolver or positivity failure.
    Numerical = 4,
    Io = 5,
    /// Output buffer shorter than required.
    BufferTooSmall = 6,
    /// A Rust panic was caught at the boundary.
    Panic = 7,
}

/// Model (n, k, R, M) with its soliton background, operator and sampler.
pub struct EqwModel {
    params: ModelParams,
    bg: Background,
    op: DiscreteOperator,
    sampler: CholeskySampler,
}

/// Ensemble of fields on the model grid.
pub struct EqwEnsemble {
    inner: Ensemble,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &EquiwaveError) -> EqwStatus {
    match e {
        EquiwaveError::InvalidParams(_) => EqwStatus::InvalidParams,
        EquiwaveError::InvalidArgument(_)
        | EquiwaveError::GridMismatch(_)
        | EquiwaveError::CflViolation { .. }
        | EquiwaveError::WindowViolation(_)
        | EquiwaveError::TooFewSamples { .. } => EqwStatus::InvalidArgument,
        EquiwaveError::Io(_) | EquiwaveError::Json(_) | EquiwaveError::Format(_) => EqwStatus::Io,
        _ => EqwStatus::Numerical,
    }
}

fn guard(f: impl FnOnce() -> Result<(), EqwStatus>) -> EqwStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EqwStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("panic inside equiwave".into());
            EqwStatus::Panic
        }
    }
}

fn check<T>(r: equiwave::Result<T>) -> Result<T, EqwStatus> {
    r.map_err(|e| {
        let s = status_of(&e);
        set_error(e.to_string());
        s
    })
}

fn nonnull<T>(p: *const T, name: &str) -> Result<(), EqwStatus> {
    if p.is_null() {
        set_error(format!("{name} is null"));
        Err(EqwStatus::NullPointer)
    } else {
        Ok(())
    }
}

fn fits(len: usize, need: usize) -> Result<(), EqwStatus> {
    if len < need {
        set_error(format!("buffer holds {len} values, need {need}"));
        Err(EqwStatus::BufferTooSmall)
    } else {
        Ok(())
    }
}

/// Version string; static, never freed.
#[no_mangle]
pub extern "C" fn eqw_version() -> *const c_char {
    static VERSION: std::sync::OnceLock<CString> = std::sync::OnceLock::new();
    VERSION.get_or_init(|| CString::new(equiwave::io::VERSION).unwrap()).as_ptr()
}

/// Copies the last error message on this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length, 0 if there is none.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn eqw_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Builds a model; `*out` receives the handle.
///
/// # Safety
/// `out` must point to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn eqw_model_new(n: u32, k: u32, radius: f64, intervals: usize, out: *mut *mut EqwModel) -> EqwStatus {
    guard(|| {
        nonnull(out, "out")?;
        let params = check(ModelParams::new(n, k, radius, intervals))?;
        let profile = check(compute_soliton(&params, DEFAULT_FAR_RADIUS.max(radius), DEFAULT_TOL))?;
        let bg = check(profile.on_grid(params.grid()))?;
        let op = check(assemble(&params, &profile))?;
        let sampler = check(CholeskySampler::new(&op))?;
        *out = Box::into_raw(Box::new(EqwModel { params, bg, op, sampler }));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from [`eqw_model_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn eqw_model_free(model: *mut EqwModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of grid nodes M + 1, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn eqw_model_nodes(model: *const EqwModel) -> usize {
    model.as_ref().map_or(0, |m| m.params.grid().len())
}

/// Writes the grid nodes r_i into `out`.
///
/// # Safety
/// `model` must be a live handle and `out` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn eqw_model_grid(model: *const EqwModel, out: *mut f64, len: usize) -> EqwStatus {
    guard(|| {
        nonnull(model, "model")?;
        nonnull(out, "out")?;
        let nodes = (*model).params.grid().nodes();
        fits(len, nodes.len())?;
        ptr::copy_nonoverlapping(nodes.as_ptr(), out, nodes.len());
        Ok(())
    })
}

/// Writes the soliton profile Q(r_i) into `out`.
///
/// # Safety
/// `model` must be a live handle and `out` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn eqw_model_soliton(model: *const EqwModel, out: *mut f64, len: usize) -> EqwStatus {
    guard(|| {
        nonnull(model, "model")?;
        nonnull(out, "out")?;
        let q = &(*model).bg.q;
        fits(len, q.len())?;
        ptr::copy_nonoverlapping(q.as_ptr(), out, q.len());
        Ok(())
    })
}

/// Writes the numeric Green's matrix, row-major (M+1) x (M+1), into `out`.
///
/// # Safety
/// `model` must be a live handle and `out` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn eqw_model_greens(model: *const EqwModel, out: *mut f64, len: usize) -> EqwStatus {
    guard(|| {
        nonnull(model, "model")?;
        nonnull(out, "out")?;
        let n = (*model).params.grid().len();
        fits(len, n * n)?;
        let g = check(greens_numeric(&(*model).op))?;
        ptr::copy_nonoverlapping(g.values.as_ptr(), out, n * n);
        Ok(())
    })
}

/// V_L(psi) for a field given at every node.
///
/// # Safety
/// `model` must be a live handle, `psi` must point to `len` doubles and `out` to one.
#[no_mangle]
pub unsafe extern "C" fn eqw_potential(model: *const EqwModel, psi: *const f64, len: usize, cutoff: f64, out: *mut f64) -> EqwStatus {
    guard(|| {
        nonnull(model, "model")?;
        nonnull(psi, "psi")?;
        nonnull(out, "out")?;
        let m = &*model;
        let n = m.params.grid().len();
        if len != n {
            set_error(format!("psi has {len} values, the grid has {n} nodes"));
            return Err(EqwStatus::InvalidArgument);
        }
        let psi = std::slice::from_raw_parts(psi, len);
        *out = check(potential_v(psi, cutoff, &m.bg))?;
        Ok(())
    })
}

/// Draws `count` Gaussian fields; `*out` receives the ensemble handle.
///
/// # Safety
/// `model` must be a live handle and `out` must point to storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn eqw_sample_gaussian(model: *const EqwModel, seed: u64, count: usize, out: *mut *mut EqwEnsemble) -> EqwStatus {
    guard(|| {
        nonnull(model, "model")?;
        nonnull(out, "out")?;
        let m = &*model;
        let inner = sample_gaussian(&m.sampler, m.params, seed, count);
        *out = Box::into_raw(Box::new(EqwEnsemble { inner }));
        Ok(())
    })
}

/// # Safety
/// `ens` must be null or a live ensemble handle.
#[no_mangle]
pub unsafe extern "C" fn eqw_ensemble_free(ens: *mut EqwEnsemble) {
    if !ens.is_null() {
        drop(Box::from_raw(ens));
    }
}

/// Number of samples, or 0 for a null handle.
///
/// # Safety
/// `ens` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn eqw_ensemble_len(ens: *const EqwEnsemble) -> usize {
    ens.as_ref().map_or(0, |e| e.inner.len())
}

/// Copies sample `index` into `out`.
///
/// # Safety
/// `ens` must be a live handle and `out` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn eqw_ensemble_sample(ens: *const EqwEnsemble, index: usize, out: *mut f64, len: usize) -> EqwStatus {
    guard(|| {
        nonnull(ens, "ens")?;
        nonnull(out, "out")?;
        let e = &*ens;
        let Some(s) = e.inner.samples.get(index) else {
            set_error(format!("index {index} out of range"));
            return Err(EqwStatus::InvalidArgument);
        };
        fits(len, s.len())?;
        ptr::copy_nonoverlapping(s.as_ptr(), out, s.len());
        Ok(())
    })
}

/// Evolves (psi, W) to time `t` with the unit-CFL scheme, in place.
/// `truncation` = 0 runs the full flow, otherwise the Galerkin flow with that many modes.
///
/// # Safety
/// `model` must be a live handle; `psi` and `w` must each point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn eqw_evolve(model: *const EqwModel, psi: *mut f64, w: *mut f64, len: usize, t: f64, truncation: usize) -> EqwStatus {
    guard(|| {
        nonnull(model, "model")?;
        nonnull(psi, "psi")?;
        nonnull(w, "w")?;
        let m = &*model;
        let grid = m.params.grid();
        if len != grid.len() {
            set_error(format!("fields have {len} values, the grid has {} nodes", grid.len()));
            return Err(EqwStatus::InvalidArgument);
        }
        let psi_s = std::slice::from_raw_parts_mut(psi, len);
        let w_s = std::slice::from_raw_parts_mut(w, len);
        let state = check(PhaseState::new(
            check(Field::new(grid, psi_s.to_vec()))?,
            check(Field::new(grid, w_s.to_vec()))?,
        ))?;
        let mut cfg = FlowConfig::cfl1(grid, t);
        if truncation > 0 {
            cfg = cfg.with_truncation(truncation);
        }
        let tr = check(evolve(&state, &cfg, &m.bg))?;
        psi_s.copy_from_slice(&tr.last().psi.values);
        w_s.copy_from_slice(&tr.last().w.values);
        Ok(())
    })
}

/// Runs acceptance criterion `id` (1..=14) with suite seed `seed`; `*passed` is 1 or 0.
///
/// # Safety
/// `passed` must point to one writable int.
#[no_mangle]
pub unsafe extern "C" fn eqw_acceptance_criterion(id: u8, seed: u64, passed: *mut i32) -> EqwStatus {
    guard(|| {
        nonnull(passed, "passed")?;
        if !(1..=equiwave::acceptance::CRITERIA).contains(&id) {
            set_error(format!("no criterion {id}"));
            return Err(EqwStatus::InvalidArgument);
        }
        let r = run_criterion(id, &AcceptanceOptions { seed, fault: None });
        if !r.passed {
            set_error(format!("criterion {id} failed: {}", r.detail));
        }
        *passed = r.passed as i32;
        Ok(())
    })
}

/// Parses a NUL-terminated model description "n,k,R,M" (helper for bindings
/// without struct support).
///
/// # Safety
/// `desc` must be a valid NUL-terminated string and `out` writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn eqw_model_from_str(desc: *const c_char, out: *mut *mut EqwModel) -> EqwStatus {
    if desc.is_null() {
        set_error("desc is null".into());
        return EqwStatus::NullPointer;
    }
    let text = CStr::from_ptr(desc).to_string_lossy().into_owned();
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    let parsed = (|| -> Option<(u32, u32, f64, usize)> {
        if parts.len() != 4 {
            return None;
        }
        Some((parts[0].parse().ok()?, parts[1].parse().ok()?, parts[2].parse().ok()?, parts[3].parse().ok()?))
    })();
    match parsed {
        Some((n, k, r, m)) => eqw_model_new(n, k, r, m, out),
        None => {
            set_error(format!("expected \"n,k,R,M\", got {text:?}"));
            EqwStatus::InvalidArgument
        }
    }
}
