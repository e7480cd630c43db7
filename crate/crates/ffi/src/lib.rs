//! C ABI over the pksh library.
//!
//! Every fallible function returns a [`PkshStatus`]; on failure
//! [`pksh_last_error`] describes the cause on the calling thread. Handles are
//! opaque and must be released with the matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use pksh::config::Scenario;
use pksh::effective::EffectiveCoefficients;
use pksh::pipeline::{run_scenario, RunOptions};
use pksh::signal::{build_weight, SignalSpec, WeightField};
use pksh::stability::{eigen_oracle, threshold_chat2, triad, ModeParams};
use pksh::torus_field::TorusGrid;
use pksh::Error;

/// Result codes of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PkshStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Numerical = 3,
    Config = 4,
    Io = 5,
    /// The threshold lemma's preconditions do not hold.
    LemmaFailed = 6,
    /// A stage of a scenario run reported an error.
    StageFailed = 7,
    Panic = 8,
}

/// Weight fields `𝔢`, `𝔢_*` of a signal on the fast torus.
pub struct PkshWeight(WeightField);

/// Effective diffusivity and drift.
pub struct PkshCoefficients(EffectiveCoefficients);

/// Scalar data of one normal mode.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PkshMode {
    pub mu_hat: f64,
    pub chi_hat: f64,
    pub delta_hat: f64,
    pub c_hat: f64,
}

/// Sign-change triad of a normal mode.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct PkshTriad {
    pub delta0: f64,
    pub delta2: f64,
    pub delta4: f64,
    pub sign_changes: u32,
    pub neutral: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> PkshStatus {
    match e {
        Error::Config { .. } => PkshStatus::Config,
        Error::Io(_) => PkshStatus::Io,
        Error::InvalidGrid(_)
        | Error::InvalidSignal(_)
        | Error::InvalidParameter { .. }
        | Error::GridMismatch(_)
        | Error::UnknownModel(_)
        | Error::MissingDecomposition(_) => PkshStatus::InvalidArgument,
        _ => PkshStatus::Numerical,
    }
}

struct Fail(PkshStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> PkshStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PkshStatus::Ok,
        Ok(Err(Fail(s, msg))) => {
            set_error(&msg);
            s
        }
        Err(_) => {
            set_error("internal panic");
            PkshStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(PkshStatus::NullPointer, format!("`{what}` is null"))
}

/// # Safety
/// `p` must be null or point to `len` readable values.
unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// # Safety
/// `p` must be null or point to `len` writable values.
unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

/// # Safety
/// `p` must be null or a valid nul-terminated string.
unsafe fn string(p: *const c_char, what: &str) -> Result<String, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| Fail(PkshStatus::InvalidArgument, format!("`{what}` is not UTF-8")))
}

/// # Safety
/// `xi_periods` and `xi_points` must hold `dim` values each.
unsafe fn torus(
    dim: usize,
    xi_periods: *const f64,
    xi_points: *const usize,
    tau_period: f64,
    tau_points: usize,
) -> Result<TorusGrid, Fail> {
    let l = slice(xi_periods, dim, "xi_periods")?;
    let n = slice(xi_points, dim, "xi_points")?;
    Ok(TorusGrid::new(l.to_vec(), n.to_vec(), tau_period, tau_points)?)
}

fn store<T>(out: *mut *mut T, v: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("out"));
    }
    // SAFETY: checked non-null; the caller provides a writable slot.
    unsafe { *out = Box::into_raw(Box::new(v)) };
    Ok(())
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn pksh_version() -> *const c_char {
    static V: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(s) => s,
        Err(_) => c"unknown",
    };
    V.as_ptr()
}

/// Message of the last failure on this thread, or null. Valid until the
/// next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn pksh_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Weights of a tabulated signal `h` given in τ-major order
/// (`tau_points × Π xi_points` samples).
///
/// # Safety
/// Array arguments must hold the documented number of values and `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn pksh_weight_new_tabulated(
    dim: usize,
    xi_periods: *const f64,
    xi_points: *const usize,
    tau_period: f64,
    tau_points: usize,
    h: *const f64,
    h_len: usize,
    kappa: f64,
    mu: f64,
    out: *mut *mut PkshWeight,
) -> PkshStatus {
    guard(|| {
        let grid = torus(dim, xi_periods, xi_points, tau_period, tau_points)?;
        let values = slice(h, h_len, "h")?.to_vec();
        let w = build_weight(&SignalSpec::Tabulated { values }, kappa, mu, &grid)?;
        store(out, PkshWeight(w))
    })
}

/// Weights of the traveling wave `h = a cos(θ·ξ − cτ)`.
///
/// # Safety
/// `xi_periods`, `xi_points` and `direction` must hold `dim` values and
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pksh_weight_new_traveling_wave(
    dim: usize,
    xi_periods: *const f64,
    xi_points: *const usize,
    tau_period: f64,
    tau_points: usize,
    amplitude: f64,
    direction: *const f64,
    speed: f64,
    kappa: f64,
    mu: f64,
    out: *mut *mut PkshWeight,
) -> PkshStatus {
    guard(|| {
        let grid = torus(dim, xi_periods, xi_points, tau_period, tau_points)?;
        let theta = slice(direction, dim, "direction")?.to_vec();
        let h = SignalSpec::traveling_wave(amplitude, theta, speed);
        let w = build_weight(&h, kappa, mu, &grid)?;
        store(out, PkshWeight(w))
    })
}

/// Number of τ nodes of the weight's torus, or 0 for a null handle.
///
/// # Safety
/// `w` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pksh_weight_tau_points(w: *const PkshWeight) -> usize {
    w.as_ref().map_or(0, |w| w.0.grid().tau_points())
}

/// Copy `⟨𝔢⟩^ξ` and `⟨𝔢⁻¹⟩^ξ` at every τ node into two buffers of `len`
/// values; `len` must equal the number of τ nodes.
///
/// # Safety
/// `w` must be a live handle and both buffers must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn pksh_weight_means(
    w: *const PkshWeight,
    mean_e: *mut f64,
    mean_inv_e: *mut f64,
    len: usize,
) -> PkshStatus {
    guard(|| {
        let w = w.as_ref().ok_or_else(|| null("w"))?;
        let nt = w.0.grid().tau_points();
        if len != nt {
            return Err(Fail(PkshStatus::InvalidArgument, format!("len {len} != tau points {nt}")));
        }
        slice_mut(mean_e, len, "mean_e")?.copy_from_slice(w.0.mean_e.values());
        slice_mut(mean_inv_e, len, "mean_inv_e")?.copy_from_slice(w.0.mean_inv_e.values());
        Ok(())
    })
}

/// # Safety
/// `w` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pksh_weight_free(w: *mut PkshWeight) {
    if !w.is_null() {
        drop(Box::from_raw(w));
    }
}

/// Effective diffusivity `D̄` and drift `c̄` of a weight.
///
/// # Safety
/// `w` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pksh_coefficients_compute(
    w: *const PkshWeight,
    mu: f64,
    out: *mut *mut PkshCoefficients,
) -> PkshStatus {
    guard(|| {
        let w = w.as_ref().ok_or_else(|| null("w"))?;
        let c = EffectiveCoefficients::compute(&w.0, mu)?;
        store(out, PkshCoefficients(c))
    })
}

/// Spatial dimension, or 0 for a null handle.
///
/// # Safety
/// `c` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pksh_coefficients_dim(c: *const PkshCoefficients) -> usize {
    c.as_ref().map_or(0, |c| c.0.dim())
}

/// Copy `D̄` row-major into `out` (`len = dim²`).
///
/// # Safety
/// `c` must be a live handle and `out` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn pksh_coefficients_dbar(c: *const PkshCoefficients, out: *mut f64, len: usize) -> PkshStatus {
    guard(|| {
        let c = c.as_ref().ok_or_else(|| null("c"))?;
        let n = c.0.dim();
        if len != n * n {
            return Err(Fail(PkshStatus::InvalidArgument, format!("len {len} != {}", n * n)));
        }
        let o = slice_mut(out, len, "out")?;
        for i in 0..n {
            for j in 0..n {
                o[i * n + j] = c.0.dbar[(i, j)];
            }
        }
        Ok(())
    })
}

/// Copy `c̄` into `out` (`len = dim`).
///
/// # Safety
/// `c` must be a live handle and `out` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn pksh_coefficients_cbar(c: *const PkshCoefficients, out: *mut f64, len: usize) -> PkshStatus {
    guard(|| {
        let c = c.as_ref().ok_or_else(|| null("c"))?;
        if len != c.0.dim() {
            return Err(Fail(PkshStatus::InvalidArgument, format!("len {len} != {}", c.0.dim())));
        }
        slice_mut(out, len, "out")?.copy_from_slice(&c.0.cbar);
        Ok(())
    })
}

/// # Safety
/// `c` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pksh_coefficients_free(c: *mut PkshCoefficients) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// # Safety
/// `mode` must be readable and `abar` must hold four values, row-major.
unsafe fn mode_inputs(mode: *const PkshMode, abar: *const f64) -> Result<(ModeParams, [[f64; 2]; 2]), Fail> {
    let m = mode.as_ref().ok_or_else(|| null("mode"))?;
    let a = slice(abar, 4, "abar")?;
    if !a.iter().chain([m.mu_hat, m.chi_hat, m.delta_hat, m.c_hat].iter()).all(|v| v.is_finite()) {
        return Err(Fail(PkshStatus::InvalidArgument, "non-finite input".into()));
    }
    let params = ModeParams {
        k: vec![1.0],
        alpha: 1.0,
        kbar: vec![1.0],
        mu_hat: m.mu_hat,
        chi_hat: m.chi_hat,
        delta_hat: m.delta_hat,
        c_hat: m.c_hat,
    };
    Ok((params, [[a[0], a[1]], [a[2], a[3]]]))
}

/// Triad `(Δ₀, Δ₂, Δ₄)` and its sign-change count.
///
/// # Safety
/// `mode` and `out` must be valid; `abar` must hold four values.
#[no_mangle]
pub unsafe extern "C" fn pksh_triad(mode: *const PkshMode, abar: *const f64, out: *mut PkshTriad) -> PkshStatus {
    guard(|| {
        let (m, a) = mode_inputs(mode, abar)?;
        let t = triad(&m, &a);
        let o = out.as_mut().ok_or_else(|| null("out"))?;
        *o = PkshTriad {
            delta0: t.delta0,
            delta2: t.delta2,
            delta4: t.delta4,
            sign_changes: t.sign_changes as u32,
            neutral: t.neutral,
        };
        Ok(())
    })
}

/// Number of eigenvalues of the mode matrix with positive real part.
///
/// # Safety
/// `mode` and `out` must be valid; `abar` must hold four values.
#[no_mangle]
pub unsafe extern "C" fn pksh_unstable_count(mode: *const PkshMode, abar: *const f64, out: *mut u32) -> PkshStatus {
    guard(|| {
        let (m, a) = mode_inputs(mode, abar)?;
        let o = out.as_mut().ok_or_else(|| null("out"))?;
        *o = eigen_oracle(&m, &a).unstable_count as u32;
        Ok(())
    })
}

/// Squared drift threshold `ĉ*²`; `LemmaFailed` when the preconditions do
/// not hold.
///
/// # Safety
/// `mode` and `out` must be valid; `abar` must hold four values.
#[no_mangle]
pub unsafe extern "C" fn pksh_threshold_chat2(mode: *const PkshMode, abar: *const f64, out: *mut f64) -> PkshStatus {
    guard(|| {
        let (m, a) = mode_inputs(mode, abar)?;
        let o = out.as_mut().ok_or_else(|| null("out"))?;
        match threshold_chat2(&m, &a) {
            Ok(c2) => {
                *o = c2;
                Ok(())
            }
            Err(f) => Err(Fail(PkshStatus::LemmaFailed, format!("precondition fails: {f}"))),
        }
    })
}

/// Run every stage listed in a scenario file, writing artifacts to
/// `out_dir`. Returns `StageFailed` when any stage reported an error.
///
/// # Safety
/// Both arguments must be valid nul-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn pksh_run_scenario(config_path: *const c_char, out_dir: *const c_char) -> PkshStatus {
    guard(|| {
        let path = string(config_path, "config_path")?;
        let out = string(out_dir, "out_dir")?;
        let text = std::fs::read_to_string(&path).map_err(Error::from)?;
        let s = Scenario::from_toml(&text)?;
        let stages = s.stages_to_run(&[])?;
        let opts = RunOptions {
            out: PathBuf::from(out),
            seed: None,
            threads: available_threads(),
        };
        let m = run_scenario(&s, &text, &stages, &opts)?;
        if m.failed() {
            let msg = m
                .stages
                .iter()
                .filter_map(|r| r.message.as_ref().map(|e| format!("{}: {e}", r.stage)))
                .collect::<Vec<_>>()
                .join("; ");
            return Err(Fail(PkshStatus::StageFailed, msg));
        }
        Ok(())
    })
}

fn available_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}
