//! Dense complex operator algebra: Hermitian-tagged matrices, spectral
//! decomposition, matrix functions and the handful of derivative operations
//! the integrator needs.

use ndarray::{Array1, Array2};
use ndarray_linalg::{Eigh, Norm, UPLO};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Relative tolerance for the Hermiticity check on tagged operators.
pub const HERMITICITY_TOL: f64 = 1e-12;

/// Relative Frobenius tolerance for eigen-reconstruction.
pub const EIG_RECONSTRUCT_TOL: f64 = 1e-10;

/// Square complex matrix with a Hermiticity tag.
#[derive(Debug, Clone)]
pub struct DenseOperator {
    mat: Array2<C64>,
    hermitian: bool,
}

impl DenseOperator {
    /// Wraps a square matrix without a Hermiticity claim.
    pub fn new(mat: Array2<C64>) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::DimMismatch {
                left: mat.nrows(),
                right: mat.ncols(),
            });
        }
        Ok(Self {
            mat,
            hermitian: false,
        })
    }

    /// Wraps a square matrix and verifies the Hermiticity tag.
    pub fn hermitian(mat: Array2<C64>) -> Result<Self> {
        let op = Self::new(mat)?;
        let dev = op.hermiticity_deviation();
        let scale = op.max_abs().max(1e-300);
        if dev > HERMITICITY_TOL * scale {
            return Err(Error::NotHermitian { deviation: dev });
        }
        Ok(Self {
            hermitian: true,
            ..op
        })
    }

    /// Tags the operator Hermitian without re-checking. Callers must only use
    /// this when Hermiticity is guaranteed by construction; debug builds still
    /// verify.
    pub(crate) fn hermitian_unchecked(mat: Array2<C64>) -> Self {
        let op = Self {
            mat,
            hermitian: true,
        };
        debug_assert!(
            op.hermiticity_deviation() <= 1e-9 * op.max_abs().max(1e-300),
            "hermitian_unchecked on a non-Hermitian matrix"
        );
        op
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            mat: Array2::zeros((dim, dim)),
            hermitian: true,
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mat: Array2::eye(dim),
            hermitian: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.mat
    }

    pub fn into_matrix(self) -> Array2<C64> {
        self.mat
    }

    pub fn max_abs(&self) -> f64 {
        self.mat.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    pub fn hermiticity_deviation(&self) -> f64 {
        let n = self.dim();
        let mut dev: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                dev = dev.max((self.mat[[i, j]] - self.mat[[j, i]].conj()).norm());
            }
        }
        dev
    }

    pub fn trace(&self) -> C64 {
        self.mat.diag().sum()
    }

    pub fn adjoint(&self) -> Self {
        Self {
            mat: self.mat.t().mapv(|z| z.conj()),
            hermitian: self.hermitian,
        }
    }

    pub fn scale(&self, c: C64) -> Self {
        Self {
            mat: self.mat.mapv(|z| z * c),
            hermitian: self.hermitian && c.im == 0.0,
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        Ok(Self {
            mat: &self.mat + &other.mat,
            hermitian: self.hermitian && other.hermitian,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        Ok(Self {
            mat: &self.mat - &other.mat,
            hermitian: self.hermitian && other.hermitian,
        })
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        Self::new(self.mat.dot(&other.mat))
    }

    /// tr[self† other]
    pub fn hs_inner(&self, other: &Self) -> Result<C64> {
        self.check_dim(other)?;
        Ok(self
            .mat
            .iter()
            .zip(other.mat.iter())
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.mat.norm_l2()
    }

    pub fn frobenius_dist(&self, other: &Self) -> Result<f64> {
        Ok(self.sub(other)?.frobenius_norm())
    }

    fn check_dim(&self, other: &Self) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimMismatch {
                left: self.dim(),
                right: other.dim(),
            });
        }
        Ok(())
    }
}

/// Eigenvalues (descending) and eigenvectors of a Hermitian operator.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub eigenvalues: Array1<f64>,
    /// Unitary with eigenvectors as columns, matching `eigenvalues` order.
    pub eigenvectors: Array2<C64>,
    pub source_dim: usize,
}

impl SpectralDecomposition {
    /// V diag(f(lambda)) V†
    pub fn apply_fn(&self, f: impl Fn(f64) -> f64) -> DenseOperator {
        let d = self.source_dim;
        let mut scaled = self.eigenvectors.clone();
        for (k, mut col) in scaled.columns_mut().into_iter().enumerate() {
            let w = C64::new(f(self.eigenvalues[k]), 0.0);
            col.mapv_inplace(|z| z * w);
        }
        let mat = scaled.dot(&self.eigenvectors.t().mapv(|z| z.conj()));
        debug_assert_eq!(mat.nrows(), d);
        DenseOperator::hermitian_unchecked(mat)
    }

    /// V diag(e^{i phase(lambda)}) V† — unitary function of the operator.
    pub fn apply_phase(&self, phase: impl Fn(f64) -> f64) -> DenseOperator {
        let mut scaled = self.eigenvectors.clone();
        for (k, mut col) in scaled.columns_mut().into_iter().enumerate() {
            let w = C64::from_polar(1.0, phase(self.eigenvalues[k]));
            col.mapv_inplace(|z| z * w);
        }
        DenseOperator::new(scaled.dot(&self.eigenvectors.t().mapv(|z| z.conj())))
            .expect("square by construction")
    }

    pub fn reconstruct(&self) -> DenseOperator {
        self.apply_fn(|x| x)
    }

    /// Rotates an operator into this eigenbasis: V† O V.
    pub fn rotate_into_eigenbasis(&self, op: &DenseOperator) -> Array2<C64> {
        let vdag = self.eigenvectors.t().mapv(|z| z.conj());
        vdag.dot(op.matrix()).dot(&self.eigenvectors)
    }

    /// Rotates an eigenbasis matrix back to the computational basis: V M V†.
    pub fn rotate_from_eigenbasis(&self, m: &Array2<C64>) -> Array2<C64> {
        let vdag = self.eigenvectors.t().mapv(|z| z.conj());
        self.eigenvectors.dot(m).dot(&vdag)
    }
}

/// Eigendecomposition of a Hermitian operator, eigenvalues descending.
pub fn spectral_decompose(h: &DenseOperator) -> Result<SpectralDecomposition> {
    if !h.is_hermitian() {
        return Err(Error::NotHermitian {
            deviation: h.hermiticity_deviation(),
        });
    }
    let (vals, vecs) = h
        .matrix()
        .eigh(UPLO::Lower)
        .map_err(|e| Error::EigenFailed(e.to_string()))?;
    // LAPACK returns ascending order; flip to descending. The row-major
    // complex path solves the transposed problem, so the returned columns are
    // the conjugated eigenvectors.
    let n = vals.len();
    let eigenvalues = Array1::from_iter((0..n).map(|k| vals[n - 1 - k]));
    let mut eigenvectors = Array2::zeros((n, n));
    for k in 0..n {
        eigenvectors
            .column_mut(k)
            .assign(&vecs.column(n - 1 - k).mapv(|z| z.conj()));
    }
    let dec = SpectralDecomposition {
        eigenvalues,
        eigenvectors,
        source_dim: n,
    };
    let h_norm = h.frobenius_norm().max(1e-300);
    let resid = dec.reconstruct().frobenius_dist(h)?;
    if resid > EIG_RECONSTRUCT_TOL * h_norm {
        return Err(Error::EigenFailed(format!(
            "reconstruction residual {resid:.3e} exceeds {EIG_RECONSTRUCT_TOL:.1e} * ||H||"
        )));
    }
    Ok(dec)
}

/// e^{c H} for Hermitian H, via the spectral decomposition.
pub fn matrix_exp_scaled(h: &DenseOperator, c: f64) -> Result<DenseOperator> {
    let dec = spectral_decompose(h)?;
    Ok(dec.apply_fn(|x| (c * x).exp()))
}

/// -i[A, rho]; the derivative of e^{-i theta A} rho e^{i theta A} at theta=0.
pub fn commutator_derivative(a: &DenseOperator, rho: &DenseOperator) -> Result<DenseOperator> {
    if !a.is_hermitian() || !rho.is_hermitian() {
        return Err(Error::NotHermitian { deviation: f64::NAN });
    }
    let comm = a.matmul(rho)?.sub(&rho.matmul(a)?)?;
    let mi = C64::new(0.0, -1.0);
    Ok(DenseOperator::hermitian_unchecked(
        comm.matrix().mapv(|z| mi * z),
    ))
}

/// (1 - nu) rho + nu I/d — full-rank regularization of a state.
pub fn mix_with_identity(rho: &DenseOperator, nu: f64) -> Result<DenseOperator> {
    if !(0.0..=1.0).contains(&nu) {
        return Err(Error::InvalidParameter(format!(
            "mixing weight nu={nu} outside [0, 1]"
        )));
    }
    let d = rho.dim() as f64;
    let mut mat = rho.matrix().mapv(|z| z * (1.0 - nu));
    for i in 0..rho.dim() {
        mat[[i, i]] += nu / d;
    }
    Ok(DenseOperator {
        mat,
        hermitian: rho.is_hermitian(),
    })
}

/// tr[O O†] = squared Hilbert-Schmidt (Frobenius) norm.
pub fn hs_norm_sq(op: &DenseOperator) -> f64 {
    op.matrix().iter().map(|z| z.norm_sqr()).sum()
}
