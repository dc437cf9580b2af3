//! Exact spectral ground truth. Everything here is closed-form in the
//! eigenbasis of `rho` and serves as the independent reference for the
//! integrator, the bounds, and the MPO backend at small N.

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::operator::{spectral_decompose, DenseOperator, SpectralDecomposition};

/// Default relative floor under which an eigenvalue pair is treated as null.
pub const RANK_TOL_REL: f64 = 1e-12;

/// Spectral data for the closed-form QFI/SLD expressions: eigenvalues of
/// `rho` (descending), the state derivative rotated into that eigenbasis, and
/// the null-pair exclusion threshold.
#[derive(Debug, Clone)]
pub struct SpectralQfiInput {
    pub decomposition: SpectralDecomposition,
    pub drho_eig: Array2<C64>,
    pub rank_tol: f64,
}

impl SpectralQfiInput {
    pub fn from_state(rho: &DenseOperator, drho: &DenseOperator) -> Result<Self> {
        let decomposition = spectral_decompose(rho)?;
        let lambda_max = decomposition.eigenvalues[0].abs().max(1e-300);
        let drho_eig = decomposition.rotate_into_eigenbasis(drho);
        Ok(Self {
            decomposition,
            drho_eig,
            rank_tol: RANK_TOL_REL * lambda_max,
        })
    }

    pub fn with_rank_tol(mut self, rank_tol: f64) -> Self {
        self.rank_tol = rank_tol;
        self
    }

    pub fn eigenvalues(&self) -> &Array1<f64> {
        &self.decomposition.eigenvalues
    }

    fn dim(&self) -> usize {
        self.decomposition.source_dim
    }

    /// Pairs with lambda_i + lambda_j above the null threshold.
    fn kept_pairs(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let lam = self.eigenvalues();
        let d = self.dim();
        (0..d).flat_map(move |i| {
            (0..d).filter_map(move |j| {
                let s = lam[i] + lam[j];
                (s > self.rank_tol).then_some((i, j, s))
            })
        })
    }

    fn check_consistency(&self) -> Result<()> {
        let lam = self.eigenvalues();
        let d = self.dim();
        for i in 0..d {
            for j in 0..d {
                if lam[i] + lam[j] <= self.rank_tol {
                    let el = self.drho_eig[[i, j]].norm();
                    if el > self.rank_tol.max(1e-12) {
                        return Err(Error::IllDefinedSld { element: el });
                    }
                }
            }
        }
        Ok(())
    }
}

/// F(inf) = 2 sum_ij |drho_ij|^2 / (lambda_i + lambda_j) over non-null pairs.
pub fn qfi_exact(input: &SpectralQfiInput) -> Result<f64> {
    input.check_consistency()?;
    Ok(input
        .kept_pairs()
        .map(|(i, j, s)| 2.0 * input.drho_eig[[i, j]].norm_sqr() / s)
        .sum())
}

/// F(X) = 2 sum_ij |drho_ij|^2 (1 - e^{-(lambda_i+lambda_j) X}) / (lambda_i + lambda_j).
pub fn qfi_truncated_exact(input: &SpectralQfiInput, x: f64) -> Result<f64> {
    input.check_consistency()?;
    Ok(input
        .kept_pairs()
        .map(|(i, j, s)| -2.0 * input.drho_eig[[i, j]].norm_sqr() * (-(s * x)).exp_m1() / s)
        .sum())
}

/// Exact QFI integrand dF(s) = sum_ij |drho_ij|^2 e^{-(lambda_i+lambda_j) s}.
pub fn qfi_integrand_exact(input: &SpectralQfiInput, s: f64) -> f64 {
    let lam = input.eigenvalues();
    let d = input.dim();
    let mut acc = 0.0;
    for i in 0..d {
        for j in 0..d {
            acc += input.drho_eig[[i, j]].norm_sqr() * (-(lam[i] + lam[j]) * s).exp();
        }
    }
    acc
}

/// L_ij = 2 drho_ij / (lambda_i + lambda_j); null pairs set to zero
/// (pseudoinverse convention). Returned in the computational basis.
pub fn sld_exact(input: &SpectralQfiInput) -> Result<DenseOperator> {
    input.check_consistency()?;
    let d = input.dim();
    let mut l_eig: Array2<C64> = Array2::zeros((d, d));
    // fill the upper triangle and mirror: division by near-null pair sums
    // amplifies asymmetric rounding noise, so Hermiticity is enforced by
    // construction
    for (i, j, s) in input.kept_pairs() {
        if j < i {
            continue;
        }
        l_eig[[i, j]] = 2.0 * input.drho_eig[[i, j]] / s;
        l_eig[[j, i]] = l_eig[[i, j]].conj();
    }
    for i in 0..d {
        l_eig[[i, i]] = C64::new(l_eig[[i, i]].re, 0.0);
    }
    let mat = input.decomposition.rotate_from_eigenbasis(&l_eig);
    Ok(DenseOperator::hermitian_unchecked(mat))
}

/// Convergence error F(inf) - F(X) for a unitary encoding, from the encoding
/// operator in the eigenbasis:
/// 2 sum_ij |A_ij|^2 (lambda_i - lambda_j)^2 e^{-(lambda_i+lambda_j) X} / (lambda_i + lambda_j).
pub fn qfi_error_exact(rho_spectrum: &Array1<f64>, a_eig: &Array2<C64>, x: f64) -> f64 {
    let d = rho_spectrum.len();
    let mut acc = 0.0;
    for i in 0..d {
        for j in 0..d {
            let s = rho_spectrum[i] + rho_spectrum[j];
            if s <= 0.0 {
                continue;
            }
            let diff = rho_spectrum[i] - rho_spectrum[j];
            acc += 2.0 * a_eig[[i, j]].norm_sqr() * diff * diff * (-(s * x)).exp() / s;
        }
    }
    acc
}

/// QFI figure of merit 2 tr[drho L] - tr[rho L^2]; maximal (= exact QFI) at
/// the true SLD.
pub fn variational_merit(
    rho: &DenseOperator,
    drho: &DenseOperator,
    l: &DenseOperator,
) -> Result<f64> {
    let first = drho.hs_inner(l)?.re;
    let l_sq = l.matmul(l)?;
    let second = rho.hs_inner(&l_sq)?.re;
    Ok(2.0 * first - second)
}

/// Conjugate-gradient solve of (rho L + L rho)/2 = drho over the Hermitian
/// operator space, using only applications of the map. Iterates stay in the
/// range of the map, so the singular case converges to the pseudoinverse
/// solution.
pub fn solve_sld_krylov(
    rho: &DenseOperator,
    drho: &DenseOperator,
    tol: f64,
    max_iter: usize,
) -> Result<DenseOperator> {
    let apply = |l: &Array2<C64>| -> Array2<C64> {
        let rl = rho.matrix().dot(l);
        let lr = l.dot(rho.matrix());
        (&rl + &lr).mapv(|z| z * 0.5)
    };
    let inner = |a: &Array2<C64>, b: &Array2<C64>| -> f64 {
        a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
    };

    let mut x: Array2<C64> = Array2::zeros(rho.matrix().raw_dim());
    let mut r = drho.matrix().clone();
    let mut rs = inner(&r, &r);
    if rs.sqrt() <= tol {
        return Ok(DenseOperator::hermitian_unchecked(x));
    }
    let mut p = r.clone();
    let mut last_residual = rs.sqrt();
    for _ in 0..max_iter {
        let ap = apply(&p);
        let p_ap = inner(&p, &ap);
        if p_ap <= 0.0 {
            // map is PSD; a nonpositive curvature means the residual left the
            // range (inconsistent right-hand side)
            return Err(Error::NoConvergence {
                max_iter,
                residual: last_residual,
            });
        }
        let alpha = rs / p_ap;
        x = &x + &p.mapv(|z| z * alpha);
        r = &r - &ap.mapv(|z| z * alpha);
        let rs_new = inner(&r, &r);
        last_residual = rs_new.sqrt();
        if last_residual <= tol {
            return Ok(DenseOperator::hermitian_unchecked(x));
        }
        let beta = rs_new / rs;
        p = &r + &p.mapv(|z| z * beta);
        rs = rs_new;
    }
    Err(Error::NoConvergence {
        max_iter,
        residual: last_residual,
    })
}
