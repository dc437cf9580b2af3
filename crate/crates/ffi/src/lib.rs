//! C ABI over the dense QFI/SLD engine: opaque probe handles, status codes,
//! and a thread-local last-error message. All pointers are borrowed unless a
//! function documents ownership transfer.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use lyapqfi::cli::run_qfi;
use lyapqfi::lyapunov::{integrate_qfi, DenseBackend, IntegrationConfig};
use lyapqfi::oracle::{qfi_exact, qfi_truncated_exact, sld_exact, SpectralQfiInput};
use lyapqfi::probes::{
    encode_dense, encoding_generator_dense, state_derivative_dense, thermal_probe_dense,
    ProbeSpec,
};
use lyapqfi::{DenseOperator, Error};

/// Status code returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LyapqfiStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// Rejected parameters or an undersized output buffer.
    InvalidArgument = 2,
    /// Diagonalization, convergence, or another numerical failure.
    NumericalFailure = 3,
    /// A panic was caught at the ABI boundary.
    Internal = 4,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let sanitized: String = msg.chars().filter(|&c| c != '\0').collect();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = CString::new(sanitized).unwrap());
}

fn status_for(err: &Error) -> LyapqfiStatus {
    match err {
        Error::InvalidParameter(_)
        | Error::DimMismatch { .. }
        | Error::TooLargeForDense { .. }
        | Error::Io(_)
        | Error::Serde(_)
        | Error::BadCheckpoint(_) => LyapqfiStatus::InvalidArgument,
        _ => LyapqfiStatus::NumericalFailure,
    }
}

fn fail(err: Error) -> LyapqfiStatus {
    let status = status_for(&err);
    set_last_error(&err.to_string());
    status
}

/// Runs `body` with panics converted to `Internal`.
fn guarded(body: impl FnOnce() -> LyapqfiStatus) -> LyapqfiStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => {
            set_last_error("internal panic");
            LyapqfiStatus::Internal
        }
    }
}

/// Opaque handle to a dense thermal probe with its encoded state, derivative,
/// and spectral data.
pub struct LyapqfiProbe {
    rho: DenseOperator,
    drho: DenseOperator,
    a: DenseOperator,
    input: SpectralQfiInput,
}

impl LyapqfiProbe {
    fn build(n: usize, j: f64, g: f64, beta: f64, theta: f64) -> Result<Self, Error> {
        let spec = ProbeSpec::new(n, j, g, beta, theta)?;
        let rho0 = thermal_probe_dense(&spec)?;
        let rho = encode_dense(&rho0, spec.theta, spec.n)?;
        let a = encoding_generator_dense(spec.n);
        let drho = state_derivative_dense(&rho, &a)?;
        let input = SpectralQfiInput::from_state(&rho, &drho)?;
        Ok(Self { rho, drho, a, input })
    }
}

/// Copies the last error message into `buf` (NUL-terminated, truncated to
/// `cap` bytes) and returns the full message length excluding the NUL.
/// With a null `buf` or zero `cap` only the length is returned.
#[no_mangle]
pub extern "C" fn lyapqfi_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let msg = slot.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap - 1);
            unsafe {
                std::ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
                *buf.add(n) = 0;
            }
        }
        bytes.len()
    })
}

/// Builds a transverse-field Ising thermal probe with the local-Z encoding.
/// `g` is in units of `j`, `beta` in units of 1/`j`. On success `*out` owns
/// the handle; release it with `lyapqfi_probe_free`.
#[no_mangle]
pub extern "C" fn lyapqfi_probe_new(
    n: u32,
    j: f64,
    g: f64,
    beta: f64,
    theta: f64,
    out: *mut *mut LyapqfiProbe,
) -> LyapqfiStatus {
    guarded(|| {
        if out.is_null() {
            return LyapqfiStatus::NullPointer;
        }
        if n == 0 || n > lyapqfi::mpo::MAX_DENSE_SITES as u32 {
            return fail(Error::TooLargeForDense {
                n: n as usize,
                limit: lyapqfi::mpo::MAX_DENSE_SITES,
            });
        }
        match LyapqfiProbe::build(n as usize, j, g, beta, theta) {
            Ok(probe) => {
                unsafe { *out = Box::into_raw(Box::new(probe)) };
                LyapqfiStatus::Ok
            }
            Err(err) => fail(err),
        }
    })
}

/// Releases a probe handle. A null pointer is a no-op.
#[no_mangle]
pub extern "C" fn lyapqfi_probe_free(probe: *mut LyapqfiProbe) {
    if !probe.is_null() {
        drop(unsafe { Box::from_raw(probe) });
    }
}

/// Hilbert-space dimension of the probe.
#[no_mangle]
pub extern "C" fn lyapqfi_probe_dim(probe: *const LyapqfiProbe, out: *mut usize) -> LyapqfiStatus {
    guarded(|| {
        let (Some(probe), false) = (unsafe { probe.as_ref() }, out.is_null()) else {
            return LyapqfiStatus::NullPointer;
        };
        unsafe { *out = probe.rho.dim() };
        LyapqfiStatus::Ok
    })
}

/// Converged QFI from the spectral closed form.
#[no_mangle]
pub extern "C" fn lyapqfi_qfi_exact(probe: *const LyapqfiProbe, out: *mut f64) -> LyapqfiStatus {
    guarded(|| {
        let (Some(probe), false) = (unsafe { probe.as_ref() }, out.is_null()) else {
            return LyapqfiStatus::NullPointer;
        };
        match qfi_exact(&probe.input) {
            Ok(f) => {
                unsafe { *out = f };
                LyapqfiStatus::Ok
            }
            Err(err) => fail(err),
        }
    })
}

/// Truncated QFI F(X) from the spectral closed form.
#[no_mangle]
pub extern "C" fn lyapqfi_qfi_truncated(
    probe: *const LyapqfiProbe,
    x: f64,
    out: *mut f64,
) -> LyapqfiStatus {
    guarded(|| {
        let (Some(probe), false) = (unsafe { probe.as_ref() }, out.is_null()) else {
            return LyapqfiStatus::NullPointer;
        };
        match qfi_truncated_exact(&probe.input, x) {
            Ok(f) => {
                unsafe { *out = f };
                LyapqfiStatus::Ok
            }
            Err(err) => fail(err),
        }
    })
}

fn integrate_with(probe: &LyapqfiProbe, config: IntegrationConfig, out: *mut f64) -> LyapqfiStatus {
    let backend = DenseBackend::new(&probe.rho, &probe.drho, Some(&probe.a));
    let mut backend = match backend {
        Ok(b) => b,
        Err(err) => return fail(err),
    };
    match integrate_qfi(&mut backend, &config) {
        Ok((_, trace)) => {
            unsafe { *out = trace.f_total() };
            LyapqfiStatus::Ok
        }
        Err(err) => fail(err),
    }
}

/// Numerically integrated QFI with adaptive stepping (tolerance `tau`) and
/// tail extrapolation over the final window of width `tail_window` (0 turns
/// the fit off). Writes the tail-augmented total.
#[no_mangle]
pub extern "C" fn lyapqfi_qfi_integrate_adaptive(
    probe: *const LyapqfiProbe,
    x_max: f64,
    tau: f64,
    tail_window: f64,
    out: *mut f64,
) -> LyapqfiStatus {
    guarded(|| {
        let (Some(probe), false) = (unsafe { probe.as_ref() }, out.is_null()) else {
            return LyapqfiStatus::NullPointer;
        };
        let mut config = IntegrationConfig::adaptive(x_max, tau);
        config.tail_window = tail_window;
        integrate_with(probe, config, out)
    })
}

/// Numerically integrated QFI with a fixed step and no tail fit.
#[no_mangle]
pub extern "C" fn lyapqfi_qfi_integrate_fixed(
    probe: *const LyapqfiProbe,
    x_max: f64,
    ds: f64,
    out: *mut f64,
) -> LyapqfiStatus {
    guarded(|| {
        let (Some(probe), false) = (unsafe { probe.as_ref() }, out.is_null()) else {
            return LyapqfiStatus::NullPointer;
        };
        let mut config = IntegrationConfig::fixed(x_max, ds);
        config.tail_window = 0.0;
        integrate_with(probe, config, out)
    })
}

/// Exact SLD in the computational basis, written as interleaved re/im pairs
/// in row-major order. `len` must be at least 2 * dim * dim.
#[no_mangle]
pub extern "C" fn lyapqfi_sld_exact(
    probe: *const LyapqfiProbe,
    out: *mut f64,
    len: usize,
) -> LyapqfiStatus {
    guarded(|| {
        let (Some(probe), false) = (unsafe { probe.as_ref() }, out.is_null()) else {
            return LyapqfiStatus::NullPointer;
        };
        let d = probe.rho.dim();
        if len < 2 * d * d {
            return fail(Error::InvalidParameter(format!(
                "output buffer holds {len} doubles, need {}",
                2 * d * d
            )));
        }
        match sld_exact(&probe.input) {
            Ok(l) => {
                let mat = l.matrix();
                let mut k = 0usize;
                for i in 0..d {
                    for j in 0..d {
                        unsafe {
                            *out.add(k) = mat[[i, j]].re;
                            *out.add(k + 1) = mat[[i, j]].im;
                        }
                        k += 2;
                    }
                }
                LyapqfiStatus::Ok
            }
            Err(err) => fail(err),
        }
    })
}

/// Runs a full dense QFI pipeline in one call without exposing a handle:
/// thermal TFIM probe, adaptive integration to `x_max`, tail fit.
#[no_mangle]
pub extern "C" fn lyapqfi_qfi_tfim(
    n: u32,
    j: f64,
    g: f64,
    beta: f64,
    x_max: f64,
    tau: f64,
    out: *mut f64,
) -> LyapqfiStatus {
    guarded(|| {
        if out.is_null() {
            return LyapqfiStatus::NullPointer;
        }
        let args = lyapqfi::cli::RunArgs {
            n: Some(n as usize),
            j: Some(j),
            g: Some(g),
            beta: Some(beta),
            x_max: Some(x_max),
            adaptive_tol: Some(tau),
            ..Default::default()
        };
        let manifest = match lyapqfi::cli::build_manifest(&args) {
            Ok(m) => m,
            Err(err) => return fail(err),
        };
        match run_qfi(&manifest) {
            Ok(trace) => {
                unsafe { *out = trace.f_total() };
                LyapqfiStatus::Ok
            }
            Err(err) => fail(err),
        }
    })
}
