//! The core integrator: propagates the Lyapunov integrand, accumulates QFI
//! and SLD with selectable quadrature, adaptive stepping, dynamic
//! compression, and tail extrapolation; backend-agnostic over dense/MPO.

mod backend;

pub use backend::{
    dense_exact_step, mpo_exact_step, qfi_integrand_value, Backend, DenseBackend, MpoBackend,
    PSD_TOL,
};

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mpo::TruncationPolicy;

/// Discarded weight above which a step leaves a warning in the trace.
pub const DISCARDED_ALARM: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StepMode {
    Fixed {
        ds: f64,
    },
    Adaptive {
        tau: f64,
        ds_init: f64,
        ds_min: f64,
        ds_max: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Quadrature {
    /// Right-endpoint rule; underestimates a decaying integrand, so the
    /// reported QFI never overestimates the achievable precision.
    Lower,
    Trapezoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    /// Propagate B(s) = e^{-rho s} drho e^{-rho s}.
    Integrand,
    /// Propagate the encoded operator Abar(s) = e^{-rho s} A e^{-rho s} and
    /// reconstruct L = -2i[K, rho] from its integral K.
    EncodingOperator,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrationConfig {
    pub x_max: f64,
    pub step_mode: StepMode,
    pub quadrature: Quadrature,
    pub truncation: TruncationPolicy,
    pub dynamic_eps: Option<f64>,
    pub tail_window: f64,
    pub accumulate_sld: bool,
    pub variant: Variant,
}

impl IntegrationConfig {
    pub fn fixed(x_max: f64, ds: f64) -> Self {
        Self {
            x_max,
            step_mode: StepMode::Fixed { ds },
            quadrature: Quadrature::Lower,
            truncation: TruncationPolicy::exact(),
            dynamic_eps: None,
            tail_window: 10.0,
            accumulate_sld: false,
            variant: Variant::Integrand,
        }
    }

    pub fn adaptive(x_max: f64, tau: f64) -> Self {
        Self {
            x_max,
            step_mode: StepMode::Adaptive {
                tau,
                ds_init: 1e-3,
                ds_min: 1e-10,
                ds_max: 1.0,
            },
            ..Self::fixed(x_max, 0.0)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.x_max < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "cutoff X must be nonnegative, got {}",
                self.x_max
            )));
        }
        match self.step_mode {
            StepMode::Fixed { ds } => {
                if ds <= 0.0 && self.x_max > 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "fixed step must be positive, got {ds}"
                    )));
                }
            }
            StepMode::Adaptive {
                tau,
                ds_init,
                ds_min,
                ds_max,
            } => {
                if tau <= 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "adaptive tolerance must be positive, got {tau}"
                    )));
                }
                if !(ds_min <= ds_init && ds_init <= ds_max) || ds_min <= 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "need 0 < ds_min <= ds_init <= ds_max, got {ds_min}, {ds_init}, {ds_max}"
                    )));
                }
            }
        }
        if let Some(eps) = self.dynamic_eps {
            if eps < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "dynamic cutoff control must be nonnegative, got {eps}"
                )));
            }
        }
        if self.tail_window < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "tail window must be nonnegative, got {}",
                self.tail_window
            )));
        }
        Ok(())
    }
}

/// One accepted quadrature step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub s: f64,
    pub ds: f64,
    pub d_f: f64,
    pub f_cum: f64,
    pub max_bond: usize,
    pub sv_cutoff: f64,
    pub discarded_weight: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub a: f64,
    pub b: f64,
    pub delta_f: f64,
}

#[derive(Debug, Clone, Default)]
pub struct IntegrationTrace {
    pub rows: Vec<TraceRow>,
    pub f_num: f64,
    pub tail: Option<TailFit>,
    pub warnings: Vec<String>,
}

impl IntegrationTrace {
    /// F_num plus the tail estimate when one was fitted.
    pub fn f_total(&self) -> f64 {
        self.f_num + self.tail.map_or(0.0, |t| t.delta_f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepDecision {
    Accept { next_ds: f64 },
    Reject { retry_ds: f64 },
}

/// Accept iff the relative integrand drop over the step is at most tau; on a
/// drop of at most tau/4 the next step doubles; on rejection the step halves
/// and is redone from the cached integrand. A vanishing new value with a
/// nonvanishing previous one counts as an infinite drop.
pub fn adaptive_controller(df_prev: f64, df_new: f64, tau: f64, ds: f64) -> StepDecision {
    if df_new <= 0.0 {
        if df_prev <= 0.0 {
            return StepDecision::Accept { next_ds: 2.0 * ds };
        }
        return StepDecision::Reject { retry_ds: 0.5 * ds };
    }
    let ratio = (df_prev - df_new) / df_new;
    if ratio <= tau {
        let next_ds = if ratio <= 0.25 * tau { 2.0 * ds } else { ds };
        StepDecision::Accept { next_ds }
    } else {
        StepDecision::Reject { retry_ds: 0.5 * ds }
    }
}

/// Amplitude-weighted Schmidt cutoff: delta(s) = eps_tilde * dF(0) / dF(s).
pub fn dynamic_cutoff(df0: f64, df_s: f64, eps_tilde: f64) -> f64 {
    if df_s <= 0.0 {
        return f64::INFINITY;
    }
    eps_tilde * df0 / df_s
}

/// Log-linear least-squares fit dF ~ a e^{-b s} over the final window
/// [x - w, x] of the trace; requires at least 4 strictly positive samples and
/// a positive fitted rate, otherwise no fit is returned.
pub fn tail_extrapolate(rows: &[TraceRow], x: f64, w: f64) -> Option<TailFit> {
    let window: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.s >= x - w && r.s <= x)
        .map(|r| (r.s, r.d_f))
        .collect();
    if window.len() < 4 || window.iter().any(|&(_, df)| df <= 0.0) {
        return None;
    }
    let n = window.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(s, df) in &window {
        let y = df.ln();
        sx += s;
        sy += y;
        sxx += s * s;
        sxy += s * y;
    }
    let denom = n * sxx - sx * sx;
    if denom <= 0.0 {
        return None;
    }
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    let b = -slope;
    if b <= 0.0 {
        return None;
    }
    let a = intercept.exp();
    let delta_f = 2.0 * (a / b) * (-b * x).exp();
    Some(TailFit { a, b, delta_f })
}

enum Mode {
    /// Propagate at half argument; dF is the squared norm.
    QfiOnly,
    /// Propagate at full argument and accumulate L = 2 sum w_k B(s_k).
    Sld,
    /// Propagate Abar at full argument and accumulate K = sum w_k Abar(s_k).
    Encoding,
}

struct EngineOutput<Op> {
    trace: IntegrationTrace,
    acc: Option<Op>,
}

fn run_engine<B: Backend>(
    backend: &mut B,
    config: &IntegrationConfig,
    mode: Mode,
) -> Result<EngineOutput<B::Op>> {
    config.validate()?;
    let mut trace = IntegrationTrace::default();
    let wants_acc = !matches!(mode, Mode::QfiOnly);
    let mut omega = match mode {
        Mode::Encoding => backend.encoding_op()?,
        _ => backend.drho(),
    };
    let df_of = |backend: &mut B, op: &B::Op, policy: &TruncationPolicy| -> Result<f64> {
        let raw = match mode {
            Mode::QfiOnly => backend.hs_norm_sq(op),
            Mode::Sld => backend.inner_with_drho(op),
            Mode::Encoding => {
                let twice_b = backend.sld_from_k(op, policy)?;
                0.5 * backend.inner_with_drho(&twice_b)
            }
        };
        Ok(raw.max(0.0))
    };
    let mut df_prev = df_of(backend, &omega, &config.truncation)?;
    let df0 = df_prev;
    let mut acc = if wants_acc { Some(backend.zero()) } else { None };
    let mut f_cum = 0.0;
    let mut s = 0.0;
    let (adaptive, mut ds, ds_min, ds_max) = match config.step_mode {
        StepMode::Fixed { ds } => (None, ds, ds, ds),
        StepMode::Adaptive {
            tau,
            ds_init,
            ds_min,
            ds_max,
        } => (Some(tau), ds_init, ds_min, ds_max),
    };
    let mut alarm_raised = false;
    let mut floor_warned = false;

    while s < config.x_max - 1e-15 * config.x_max.max(1.0) {
        let step_start = Instant::now();
        let mut step = ds.min(config.x_max - s);
        let (omega_new, df_new, discarded, policy_used) = loop {
            let policy = match config.dynamic_eps {
                Some(eps) => {
                    let delta = dynamic_cutoff(df0, df_prev.max(f64::MIN_POSITIVE), eps);
                    config.truncation.with_cutoff(delta.min(1.0))
                }
                None => config.truncation,
            };
            let amount = match mode {
                Mode::QfiOnly => 0.5 * step,
                _ => step,
            };
            let (cand, discarded) = backend.propagate(&omega, amount, &policy)?;
            let df_new = df_of(backend, &cand, &policy)?;
            let Some(tau) = adaptive else {
                break (cand, df_new, discarded, policy);
            };
            match adaptive_controller(df_prev, df_new, tau, step) {
                StepDecision::Accept { next_ds } => {
                    ds = next_ds.clamp(ds_min, ds_max);
                    break (cand, df_new, discarded, policy);
                }
                StepDecision::Reject { retry_ds } => {
                    if step <= ds_min * (1.0 + 1e-12) {
                        if !floor_warned {
                            trace.warnings.push(format!(
                                "adaptive tolerance unmet at minimum step {ds_min:.3e} (s = {s:.6})"
                            ));
                            floor_warned = true;
                        }
                        ds = ds_min;
                        break (cand, df_new, discarded, policy);
                    }
                    step = retry_ds.max(ds_min);
                    ds = step;
                }
            }
        };
        let s_new = s + step;
        match config.quadrature {
            Quadrature::Lower => {
                f_cum += 2.0 * step * df_new;
                if let Some(a) = acc.take() {
                    let w = match mode {
                        Mode::Sld => 2.0 * step,
                        _ => step,
                    };
                    acc = Some(backend.axpy(&a, w, &omega_new, &policy_used)?);
                }
            }
            Quadrature::Trapezoid => {
                f_cum += step * (df_prev + df_new);
                if let Some(a) = acc.take() {
                    let w = match mode {
                        Mode::Sld => step,
                        _ => 0.5 * step,
                    };
                    let half = backend.axpy(&a, w, &omega, &policy_used)?;
                    acc = Some(backend.axpy(&half, w, &omega_new, &policy_used)?);
                }
            }
        }
        if discarded > DISCARDED_ALARM && !alarm_raised {
            trace.warnings.push(format!(
                "discarded weight {discarded:.3e} exceeds {DISCARDED_ALARM:.1e} at s = {s_new:.6}"
            ));
            alarm_raised = true;
        }
        trace.rows.push(TraceRow {
            s: s_new,
            ds: step,
            d_f: df_new,
            f_cum,
            max_bond: backend.max_bond(&omega_new),
            sv_cutoff: policy_used.sv_cutoff,
            discarded_weight: discarded,
            wall_ms: step_start.elapsed().as_secs_f64() * 1e3,
        });
        omega = omega_new;
        df_prev = df_new;
        s = s_new;
    }
    trace.f_num = f_cum;
    if config.tail_window > 0.0 {
        trace.tail = tail_extrapolate(&trace.rows, config.x_max, config.tail_window);
        if trace.tail.is_none() && !trace.rows.is_empty() {
            trace
                .warnings
                .push("tail extrapolation skipped (no decaying fit window)".into());
        }
    }
    Ok(EngineOutput { trace, acc })
}

/// Truncated QFI F_num(X) by quadrature over dF(s) = ||B(s/2)||^2.
pub fn integrate_qfi<B: Backend>(
    backend: &mut B,
    config: &IntegrationConfig,
) -> Result<(f64, IntegrationTrace)> {
    let out = run_engine(backend, config, Mode::QfiOnly)?;
    Ok((out.trace.f_num, out.trace))
}

/// Truncated SLD L(X) = 2 sum_k w_k B(s_k) together with its trace; the
/// integrand runs at full argument so the accumulated operator is usable.
pub fn accumulate_sld<B: Backend>(
    backend: &mut B,
    config: &IntegrationConfig,
) -> Result<(B::Op, IntegrationTrace)> {
    let out = run_engine(backend, config, Mode::Sld)?;
    Ok((out.acc.expect("sld mode accumulates"), out.trace))
}

/// Encoding-operator variant: propagates Abar(s) = e^{-rho s} A e^{-rho s},
/// accumulates K(X), and reconstructs L(X) = -2i[K(X), rho]; the QFI comes
/// from the same quadrature nodes. The constant and sign in the
/// reconstruction follow from e^{-rho s}[A, rho]e^{-rho s} = [Abar(s), rho].
pub fn integrate_encoding_variant<B: Backend>(
    backend: &mut B,
    config: &IntegrationConfig,
) -> Result<(B::Op, B::Op, f64, IntegrationTrace)> {
    let out = run_engine(backend, config, Mode::Encoding)?;
    let k = out.acc.expect("encoding mode accumulates");
    let l = backend.sld_from_k(&k, &config.truncation)?;
    let f = out.trace.f_num;
    Ok((k, l, f, out.trace))
}

#[cfg(test)]
mod tests;
