//! Propagation backends: dense eigenbasis propagation and MPO propagation.

use std::collections::HashMap;

use ndarray::Array2;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::mpo::{
    exp_propagator, exp_step_apply, mpo_add, mpo_multiply, sandwich_apply, Mpo,
    TruncationPolicy,
};
use crate::operator::{spectral_decompose, DenseOperator, SpectralDecomposition};

/// Largest negative eigenvalue tolerated before a state is rejected as not
/// positive semidefinite.
pub const PSD_TOL: f64 = 1e-10;

/// Operations the integrator needs from a propagation backend. The integrand
/// operator type is backend-specific; all operations are pure except for
/// internal propagator caching.
pub trait Backend {
    type Op: Clone;

    /// Initial integrand B(0) = drho.
    fn drho(&self) -> Self::Op;
    /// Initial integrand of the encoding-operator variant, A itself.
    fn encoding_op(&self) -> Result<Self::Op>;
    /// e^{-rho ds} op e^{-rho ds}; returns the propagated operator and the
    /// discarded compression weight.
    fn propagate(&mut self, op: &Self::Op, ds: f64, policy: &TruncationPolicy)
        -> Result<(Self::Op, f64)>;
    /// Squared Hilbert-Schmidt norm of the integrand.
    fn hs_norm_sq(&self, op: &Self::Op) -> f64;
    /// Re tr[drho op].
    fn inner_with_drho(&self, op: &Self::Op) -> f64;
    fn zero(&self) -> Self::Op;
    /// acc + x * op.
    fn axpy(&self, acc: &Self::Op, x: f64, op: &Self::Op, policy: &TruncationPolicy)
        -> Result<Self::Op>;
    /// -2i [K, rho]: the SLD reconstructed from the integrated encoding
    /// operator.
    fn sld_from_k(&self, k: &Self::Op, policy: &TruncationPolicy) -> Result<Self::Op>;
    /// Largest virtual bond of the operator; 0 on the dense backend.
    fn max_bond(&self, op: &Self::Op) -> usize;
}

/// dF(s) = ||B(s/2)||_2^2 for an integrand propagated to half argument.
pub fn qfi_integrand_value<B: Backend>(backend: &B, b_half: &B::Op) -> f64 {
    backend.hs_norm_sq(b_half)
}

/// Dense backend working in the eigenbasis of rho, where propagation over ds
/// is an elementwise product with e^{-(lambda_i + lambda_j) ds}. The factor
/// matrix is cached per distinct ds, so propagation is exact and cheap.
pub struct DenseBackend {
    decomposition: SpectralDecomposition,
    /// Eigenvalues clamped to [0, inf) for propagation.
    lambdas: Vec<f64>,
    drho_eig: Array2<C64>,
    a_eig: Option<Array2<C64>>,
    factor_cache: HashMap<u64, Array2<f64>>,
}

impl DenseBackend {
    pub fn new(
        rho: &DenseOperator,
        drho: &DenseOperator,
        a: Option<&DenseOperator>,
    ) -> Result<Self> {
        let decomposition = spectral_decompose(rho)?;
        let min = decomposition
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        if min < -PSD_TOL {
            return Err(Error::NotPositive(min));
        }
        let lambdas = decomposition
            .eigenvalues
            .iter()
            .map(|&x| x.max(0.0))
            .collect();
        let drho_eig = decomposition.rotate_into_eigenbasis(drho);
        let a_eig = a.map(|op| decomposition.rotate_into_eigenbasis(op));
        Ok(Self {
            decomposition,
            lambdas,
            drho_eig,
            a_eig,
            factor_cache: HashMap::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.lambdas.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.lambdas
    }

    /// Rotates an integrand or accumulated operator back to the computational
    /// basis.
    pub fn to_computational(&self, op: &Array2<C64>) -> DenseOperator {
        DenseOperator::new(self.decomposition.rotate_from_eigenbasis(op))
            .expect("square by construction")
    }

    fn factors(&mut self, ds: f64) -> &Array2<f64> {
        let d = self.dim();
        let lambdas = &self.lambdas;
        self.factor_cache.entry(ds.to_bits()).or_insert_with(|| {
            Array2::from_shape_fn((d, d), |(i, j)| (-(lambdas[i] + lambdas[j]) * ds).exp())
        })
    }
}

impl Backend for DenseBackend {
    type Op = Array2<C64>;

    fn drho(&self) -> Self::Op {
        self.drho_eig.clone()
    }

    fn encoding_op(&self) -> Result<Self::Op> {
        self.a_eig
            .clone()
            .ok_or_else(|| Error::InvalidParameter("no encoding operator supplied".into()))
    }

    fn propagate(
        &mut self,
        op: &Self::Op,
        ds: f64,
        _policy: &TruncationPolicy,
    ) -> Result<(Self::Op, f64)> {
        let factors = self.factors(ds);
        let mut out = op.clone();
        out.zip_mut_with(factors, |z, &f| *z *= f);
        Ok((out, 0.0))
    }

    fn hs_norm_sq(&self, op: &Self::Op) -> f64 {
        op.iter().map(|z| z.norm_sqr()).sum()
    }

    fn inner_with_drho(&self, op: &Self::Op) -> f64 {
        self.drho_eig
            .iter()
            .zip(op.iter())
            .map(|(a, b)| (a.conj() * b).re)
            .sum()
    }

    fn zero(&self) -> Self::Op {
        Array2::zeros((self.dim(), self.dim()))
    }

    fn axpy(
        &self,
        acc: &Self::Op,
        x: f64,
        op: &Self::Op,
        _policy: &TruncationPolicy,
    ) -> Result<Self::Op> {
        Ok(acc + &op.mapv(|z| z * x))
    }

    fn sld_from_k(&self, k: &Self::Op, _policy: &TruncationPolicy) -> Result<Self::Op> {
        // rho is diagonal in this basis, so [K, rho]_ij = K_ij (lambda_j - lambda_i)
        let d = self.dim();
        let mut out = Array2::zeros((d, d));
        for i in 0..d {
            for j in 0..d {
                let w = C64::new(0.0, -2.0 * (self.lambdas[j] - self.lambdas[i]));
                out[[i, j]] = w * k[[i, j]];
            }
        }
        Ok(out)
    }

    fn max_bond(&self, _op: &Self::Op) -> usize {
        0
    }
}

/// MPO backend. The scaled-and-squared propagator factor for each distinct
/// ds is cached; the per-step truncation policy only affects the sandwich
/// products.
pub struct MpoBackend {
    rho: Mpo,
    drho: Mpo,
    a: Option<Mpo>,
    /// Policy used to build and cache the propagator factors.
    rho_policy: TruncationPolicy,
    f2_cache: HashMap<u64, Mpo>,
}

impl MpoBackend {
    pub fn new(rho: Mpo, drho: Mpo, a: Option<Mpo>, rho_policy: TruncationPolicy) -> Self {
        Self {
            rho,
            drho,
            a,
            rho_policy,
            f2_cache: HashMap::new(),
        }
    }

    pub fn rho(&self) -> &Mpo {
        &self.rho
    }
}

impl Backend for MpoBackend {
    type Op = Mpo;

    fn drho(&self) -> Self::Op {
        self.drho.clone()
    }

    fn encoding_op(&self) -> Result<Self::Op> {
        self.a
            .clone()
            .ok_or_else(|| Error::InvalidParameter("no encoding operator supplied".into()))
    }

    fn propagate(
        &mut self,
        op: &Self::Op,
        ds: f64,
        policy: &TruncationPolicy,
    ) -> Result<(Self::Op, f64)> {
        if ds == 0.0 {
            return Ok((op.clone(), 0.0));
        }
        let key = ds.to_bits();
        if !self.f2_cache.contains_key(&key) {
            let f2 = exp_propagator(&self.rho, ds, &self.rho_policy)?;
            self.f2_cache.insert(key, f2);
        }
        let f2 = self.f2_cache.get(&key).unwrap();
        sandwich_apply(f2, op, policy)
    }

    fn hs_norm_sq(&self, op: &Self::Op) -> f64 {
        op.hs_norm_sq()
    }

    fn inner_with_drho(&self, op: &Self::Op) -> f64 {
        self.drho.hs_inner(op).map(|z| z.re).unwrap_or(f64::NAN)
    }

    fn zero(&self) -> Self::Op {
        Mpo::identity(self.rho.n_sites()).scale(C64::new(0.0, 0.0))
    }

    fn axpy(
        &self,
        acc: &Self::Op,
        x: f64,
        op: &Self::Op,
        policy: &TruncationPolicy,
    ) -> Result<Self::Op> {
        let (sum, _) = mpo_add(acc, &op.scale(C64::new(x, 0.0)), policy)?;
        Ok(sum)
    }

    fn sld_from_k(&self, k: &Self::Op, policy: &TruncationPolicy) -> Result<Self::Op> {
        let (krho, _) = mpo_multiply(k, &self.rho, policy)?;
        let (rhok, _) = mpo_multiply(&self.rho, k, policy)?;
        let (comm, _) = mpo_add(&krho, &rhok.scale(C64::new(-1.0, 0.0)), policy)?;
        Ok(comm.scale(C64::new(0.0, -2.0)))
    }

    fn max_bond(&self, op: &Self::Op) -> usize {
        op.max_bond()
    }
}

/// Exact one-step map on the dense backend for cross-checks: uses the true
/// exponential rather than the truncated series.
pub fn dense_exact_step(
    rho: &DenseOperator,
    omega: &DenseOperator,
    ds: f64,
) -> Result<DenseOperator> {
    let prop = crate::operator::matrix_exp_scaled(rho, -ds)?;
    prop.matmul(omega)?.matmul(&prop)
}

/// Convenience: one MPO integrand update through the series propagator.
pub fn mpo_exact_step(
    rho: &Mpo,
    omega: &Mpo,
    ds: f64,
    policy: &TruncationPolicy,
) -> Result<(Mpo, f64)> {
    exp_step_apply(rho, omega, ds, policy)
}
