//! Analytic convergence bounds for the truncated Lyapunov integral: worst-case,
//! low-temperature (approximate and full three-term), and spectrum-tail
//! families, plus relative-error and entropy utilities.

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::qfi_error_exact;

/// Relative error (F_ref - F_num) / F_ref of a truncated QFI value.
pub fn relative_error(f_num: f64, f_ref: f64) -> Result<f64> {
    if f_ref <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "reference QFI must be positive, got {f_ref}"
        )));
    }
    Ok((f_ref - f_num) / f_ref)
}

/// Worst-case relative error bound
/// 2 offdiag_A_sq / F_inf * min[(e X)^{-1}, e^{-lambda_min X}],
/// where offdiag_A_sq = sum_{i, j != i} |A_ij|^2 (or the looser tr A^2) and
/// lambda_min is the slowest nonzero eigenvalue-pair rate of rho.
pub fn worst_case_bound(offdiag_a_sq: f64, f_inf: f64, lambda_min: f64, x: f64) -> Result<f64> {
    if x <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "cutoff X must be positive, got {x}"
        )));
    }
    if f_inf <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "converged QFI must be positive, got {f_inf}"
        )));
    }
    if !(0.0..=1.0).contains(&lambda_min) || lambda_min == 0.0 {
        return Err(Error::InvalidParameter(format!(
            "lambda_min must lie in (0, 1], got {lambda_min}"
        )));
    }
    let inverse = 1.0 / (std::f64::consts::E * x);
    let exponential = (-lambda_min * x).exp();
    Ok(2.0 * offdiag_a_sq / f_inf * inverse.min(exponential))
}

/// Slowest nonzero decay rate min_{i != j} (lambda_i + lambda_j) over pairs
/// with a positive sum; this drives the exponential branch of the worst-case
/// bound.
pub fn slowest_pair_rate(spectrum: &[f64]) -> Result<f64> {
    let mut best = f64::INFINITY;
    let d = spectrum.len();
    for i in 0..d {
        for j in 0..d {
            if i == j {
                continue;
            }
            let rate = spectrum[i] + spectrum[j];
            if rate > 0.0 && rate < best {
                best = rate;
            }
        }
    }
    if best.is_finite() {
        Ok(best)
    } else {
        Err(Error::InvalidParameter(
            "spectrum has no nonzero pair rate".into(),
        ))
    }
}

/// "Much smaller" margin for the low-temperature regime test: p counts as
/// small against n/(m+n) when it stays an order of magnitude below.
pub const REGIME_FACTOR: f64 = 0.1;

/// Result of a low-temperature bound evaluation. The small-population regime
/// p << n / (m + n) underlies the derivation; outside it the value is still
/// returned but flagged unreliable.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LowTempBound {
    pub value: f64,
    /// Excited-level population used for the regime check. For the
    /// entropy-based form this is the linearized estimate, not an input.
    pub p: f64,
    pub regime_ok: bool,
}

/// Entropy-based low-temperature bound
/// e^{-X/m} + (c/2)(m/n)(S m / (2 log 2) - m + 1)
/// for a ground manifold of degeneracy m and excited manifold of degeneracy n.
pub fn low_temp_bound(s: f64, m: usize, n: usize, c: f64, x: f64) -> Result<LowTempBound> {
    if s < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "entropy must be nonnegative, got {s}"
        )));
    }
    if m < 1 || n < 1 {
        return Err(Error::InvalidParameter(format!(
            "degeneracies must be at least 1, got m={m}, n={n}"
        )));
    }
    let (mf, nf) = (m as f64, n as f64);
    let log2 = std::f64::consts::LN_2;
    let value = (-x / mf).exp() + (c / 2.0) * (mf / nf) * (s * mf / (2.0 * log2) - mf + 1.0);
    // linearized population estimate backing the regime flag
    let p = s * mf / (4.0 * log2) - (mf - 1.0) / 2.0;
    let regime_ok = p <= REGIME_FACTOR * nf / (mf + nf);
    Ok(LowTempBound { value, p, regime_ok })
}

/// Full three-term low-temperature error numerator (not divided by F_inf)
/// for the model spectrum [(1-p)/m x m, p/n x n, 0 x rest]:
/// 2 (c1 a e^{-aX} + c2 b e^{-bX} + c3 (a-b)^2/(a+b) e^{-(a+b)X})
/// with a = (1-p)/m and b = p/n.
pub fn low_temp_error_full(
    c1: f64,
    c2: f64,
    c3: f64,
    p: f64,
    m: usize,
    n: usize,
    x: f64,
) -> Result<LowTempBound> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!(
            "population must lie in [0, 1], got {p}"
        )));
    }
    if m < 1 || n < 1 {
        return Err(Error::InvalidParameter(format!(
            "degeneracies must be at least 1, got m={m}, n={n}"
        )));
    }
    let (mf, nf) = (m as f64, n as f64);
    let a = (1.0 - p) / mf;
    let b = p / nf;
    let mut value = c1 * a * (-a * x).exp() + c2 * b * (-b * x).exp();
    if a + b > 0.0 {
        value += c3 * (a - b).powi(2) / (a + b) * (-(a + b) * x).exp();
    }
    let regime_ok = p <= REGIME_FACTOR * nf / (mf + nf);
    Ok(LowTempBound {
        value: 2.0 * value,
        p,
        regime_ok,
    })
}

/// Encoding constants for the low-temperature family, extracted from the
/// encoding operator in the eigenbasis of rho.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LowTempConstants {
    /// Coupling of the ground manifold to the depleted remainder.
    pub c1: f64,
    /// Coupling of the excited manifold to the depleted remainder.
    pub c2: f64,
    /// Coupling between the ground and excited manifolds.
    pub c3: f64,
    /// c = c2 / (c1 + c3).
    pub c: f64,
    /// Population not carried by the ground manifold, 1 - m * lambda_GS.
    pub p: f64,
    /// Ground-manifold degeneracy.
    pub m: usize,
    /// Excited-manifold degeneracy.
    pub n: usize,
}

/// Splits a descending spectrum into ground / excited / remainder manifolds at
/// the given degeneracy tolerance and sums |A_ij|^2 blocks of the rotated
/// encoding operator. Requires at least two distinct manifolds.
pub fn low_temp_constants(
    spectrum: &[f64],
    a_eig: &Array2<C64>,
    tol: f64,
) -> Result<LowTempConstants> {
    let d = spectrum.len();
    if d < 2 {
        return Err(Error::InvalidParameter(
            "need at least two eigenvalues for manifold splitting".into(),
        ));
    }
    if a_eig.dim() != (d, d) {
        return Err(Error::DimMismatch {
            left: a_eig.dim().0,
            right: d,
        });
    }
    let mut m = 1;
    while m < d && (spectrum[0] - spectrum[m]).abs() <= tol {
        m += 1;
    }
    if m == d {
        return Err(Error::InvalidParameter(
            "spectrum has a single manifold, no excited level to split off".into(),
        ));
    }
    let mut n = 1;
    while m + n < d && (spectrum[m] - spectrum[m + n]).abs() <= tol {
        n += 1;
    }
    let gs = 0..m;
    let es = m..m + n;
    let rest = m + n..d;
    let block = |rows: std::ops::Range<usize>, cols: std::ops::Range<usize>| -> f64 {
        let mut acc = 0.0;
        for i in rows {
            for j in cols.clone() {
                acc += a_eig[[i, j]].norm_sqr();
            }
        }
        acc
    };
    let c1 = 2.0 * block(gs.clone(), rest.clone());
    let c2 = 2.0 * block(es.clone(), rest);
    let c3 = 2.0 * block(gs, es.clone());
    let c = if c1 + c3 > 0.0 { c2 / (c1 + c3) } else { 0.0 };
    // the model pins the ground population at (1-p)/m, so p is whatever the
    // ground manifold does not carry
    let p = (1.0 - m as f64 * spectrum[0]).clamp(0.0, 1.0);
    Ok(LowTempConstants {
        c1,
        c2,
        c3,
        c,
        p,
        m,
        n,
    })
}

/// Spectrum-tail relative error bound
/// (4 c_tilde / F_inf) p_tilde (n_tilde - 1) e^{-2 p_tilde X / n_tilde}
/// on the unknown-unknown contribution. Valid only for X <= 1/(2 Lambda_min)
/// where Lambda_min is the smallest known eigenvalue.
pub fn spectrum_tail_bound(
    p_tilde: f64,
    n_tilde: usize,
    c_tilde: f64,
    f_inf: f64,
    x: f64,
    lambda_min: f64,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&p_tilde) {
        return Err(Error::InvalidParameter(format!(
            "unknown-set population must lie in [0, 1], got {p_tilde}"
        )));
    }
    if n_tilde < 1 {
        return Err(Error::InvalidParameter(
            "unknown set must contain at least one state".into(),
        ));
    }
    if f_inf <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "converged QFI must be positive, got {f_inf}"
        )));
    }
    if lambda_min > 0.0 && x > 1.0 / (2.0 * lambda_min) {
        return Err(Error::BoundValidity(format!(
            "tail bound requires X <= 1/(2 Lambda_min) = {}, got X = {x}",
            1.0 / (2.0 * lambda_min)
        )));
    }
    let nt = n_tilde as f64;
    Ok(4.0 * c_tilde / f_inf * p_tilde * (nt - 1.0) * (-2.0 * p_tilde * x / nt).exp())
}

/// Three-way split of the truncation error by known spectrum Lambda:
/// the exact known-known term and upper bounds on the mixed and
/// unknown-unknown terms. All values are error numerators (same units as
/// F_inf - F(X)); their sum upper-bounds the exact error on the tail bound's
/// validity domain.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ThreeTermSplit {
    pub known: f64,
    pub mixed_bound: f64,
    pub tail_bound: f64,
}

impl ThreeTermSplit {
    pub fn total(&self) -> f64 {
        self.known + self.mixed_bound + self.tail_bound
    }
}

/// Evaluates the error split for the first `n_known` eigenvalues of a
/// descending spectrum, with the encoding operator rotated to rho's eigenbasis.
pub fn three_term_error_split(
    spectrum: &[f64],
    a_eig: &Array2<C64>,
    n_known: usize,
    x: f64,
) -> Result<ThreeTermSplit> {
    let d = spectrum.len();
    if n_known == 0 || n_known > d {
        return Err(Error::InvalidParameter(format!(
            "known set size {n_known} out of range for dimension {d}"
        )));
    }
    if a_eig.dim() != (d, d) {
        return Err(Error::DimMismatch {
            left: a_eig.dim().0,
            right: d,
        });
    }
    let k = n_known;
    let mut known = 0.0;
    for i in 0..k {
        for j in 0..k {
            let sum = spectrum[i] + spectrum[j];
            if sum > 0.0 {
                let diff = spectrum[i] - spectrum[j];
                known += a_eig[[i, j]].norm_sqr() * diff * diff / sum * (-sum * x).exp();
            }
        }
    }
    known *= 2.0;
    if k == d {
        return Ok(ThreeTermSplit {
            known,
            mixed_bound: 0.0,
            tail_bound: 0.0,
        });
    }
    let lambda_min = spectrum[k - 1];
    // the mixed block enters the error twice, once per ordering
    let mut mixed = 0.0;
    for i in 0..k {
        for j in k..d {
            mixed += a_eig[[i, j]].norm_sqr() * (spectrum[i] + lambda_min)
                * (-spectrum[i] * x).exp();
        }
    }
    mixed *= 2.0 * 2.0;
    let p_tilde = (1.0 - spectrum[..k].iter().sum::<f64>()).max(0.0);
    let n_tilde = d - k;
    let mut c_tilde: f64 = 0.0;
    for i in k..d {
        for j in k..d {
            c_tilde = c_tilde.max(a_eig[[i, j]].norm_sqr());
        }
    }
    // reuse the relative-error form with unit normalization to get the numerator
    let tail = spectrum_tail_bound(p_tilde.min(1.0), n_tilde, c_tilde, 1.0, x, lambda_min)?;
    Ok(ThreeTermSplit {
        known,
        mixed_bound: mixed,
        tail_bound: tail,
    })
}

/// Von Neumann entropy -sum lambda ln lambda with 0 ln 0 := 0.
pub fn von_neumann_entropy(spectrum: &[f64]) -> f64 {
    spectrum
        .iter()
        .filter(|&&l| l > 0.0)
        .map(|&l| -l * l.ln())
        .sum()
}

/// Checks sum lambda (1 - lambda) <= S / (2 ln 2) for a probability spectrum.
pub fn entropy_population_relation(spectrum: &[f64]) -> bool {
    let lhs: f64 = spectrum.iter().map(|&l| l * (1.0 - l)).sum();
    let rhs = von_neumann_entropy(spectrum) / (2.0 * std::f64::consts::LN_2);
    lhs <= rhs + 1e-12
}

/// Constants block of a bound report.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BoundReportConstants {
    pub c: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c_tilde: f64,
    pub p_tilde: f64,
    pub n_tilde: usize,
    pub m: usize,
    pub n: usize,
    #[serde(rename = "S")]
    pub entropy: f64,
}

/// Bound families evaluated on a common cutoff grid. Entries where a bound is
/// outside its validity domain are NaN (serialized as null).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundReport {
    #[serde(rename = "X_grid")]
    pub x_grid: Vec<f64>,
    pub eps_exact: Option<Vec<f64>>,
    pub eps_worst: Vec<f64>,
    #[serde(rename = "eps_lowT")]
    pub eps_low_t: Vec<f64>,
    pub eps_tail: Vec<f64>,
    pub constants: BoundReportConstants,
}

/// Evaluates all bound families for a dense probe given rho's descending
/// spectrum and the encoding operator rotated to its eigenbasis. The tail
/// bound treats the first `n_known` eigenpairs as known; `tol` sets the
/// degeneracy tolerance for manifold splitting.
pub fn bound_report(
    spectrum: &Array1<f64>,
    a_eig: &Array2<C64>,
    x_grid: &[f64],
    n_known: usize,
    tol: f64,
) -> Result<BoundReport> {
    let d = spectrum.len();
    if n_known == 0 || n_known > d {
        return Err(Error::InvalidParameter(format!(
            "known set size {n_known} out of range for dimension {d}"
        )));
    }
    let lambdas = spectrum.as_slice().ok_or_else(|| {
        Error::InvalidParameter("spectrum must be contiguous".into())
    })?;
    // F(0) = 0, so the error numerator at X = 0 is the converged QFI itself
    let f_inf = qfi_error_exact(spectrum, a_eig, 0.0);
    if f_inf <= 0.0 {
        return Err(Error::InvalidParameter(
            "encoding does not generate any QFI, bounds are undefined".into(),
        ));
    }
    let mut offdiag = 0.0;
    for i in 0..d {
        for j in 0..d {
            if i != j {
                offdiag += a_eig[[i, j]].norm_sqr();
            }
        }
    }
    let pair_rate = slowest_pair_rate(lambdas)?.min(1.0);
    let lt = low_temp_constants(lambdas, a_eig, tol)?;
    let s = von_neumann_entropy(lambdas);
    let p_tilde = (1.0 - lambdas[..n_known].iter().sum::<f64>()).clamp(0.0, 1.0);
    let n_tilde = d - n_known;
    let mut c_tilde: f64 = 0.0;
    for i in n_known..d {
        for j in n_known..d {
            c_tilde = c_tilde.max(a_eig[[i, j]].norm_sqr());
        }
    }
    let lambda_known_min = lambdas[n_known - 1];
    let mut eps_exact = Vec::with_capacity(x_grid.len());
    let mut eps_worst = Vec::with_capacity(x_grid.len());
    let mut eps_low_t = Vec::with_capacity(x_grid.len());
    let mut eps_tail = Vec::with_capacity(x_grid.len());
    for &x in x_grid {
        eps_exact.push(qfi_error_exact(spectrum, a_eig, x) / f_inf);
        eps_worst.push(worst_case_bound(offdiag, f_inf, pair_rate, x).unwrap_or(f64::NAN));
        eps_low_t.push(
            low_temp_bound(s, lt.m, lt.n, lt.c, x)
                .map(|b| b.value)
                .unwrap_or(f64::NAN),
        );
        eps_tail.push(
            if n_tilde >= 1 {
                spectrum_tail_bound(p_tilde, n_tilde, c_tilde, f_inf, x, lambda_known_min)
                    .unwrap_or(f64::NAN)
            } else {
                0.0
            },
        );
    }
    Ok(BoundReport {
        x_grid: x_grid.to_vec(),
        eps_exact: Some(eps_exact),
        eps_worst,
        eps_low_t,
        eps_tail,
        constants: BoundReportConstants {
            c: lt.c,
            c1: lt.c1,
            c2: lt.c2,
            c3: lt.c3,
            c_tilde,
            p_tilde,
            n_tilde,
            m: lt.m,
            n: lt.n,
            entropy: s,
        },
    })
}
