//! Thermal state construction by imaginary-time evolution of the identity.

use ndarray::Array2;
use num_complex::Complex64 as C64;

use super::{Mpo, TruncationPolicy};
use crate::error::{Error, Result};
use crate::operator::{matrix_exp_scaled, DenseOperator};

/// Nearest-neighbour chain Hamiltonian given by its local terms: a uniform
/// on-site field and a uniform two-site coupling (open boundary).
#[derive(Debug, Clone)]
pub struct NnChainHamiltonian {
    pub n: usize,
    /// 2x2 on-site term.
    pub field: Array2<C64>,
    /// 4x4 coupling on each bond (j, j+1), index 2*b_j + b_{j+1}.
    pub bond: Array2<C64>,
}

impl NnChainHamiltonian {
    pub fn new(n: usize, field: Array2<C64>, bond: Array2<C64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("empty chain".into()));
        }
        if field.dim() != (2, 2) || bond.dim() != (4, 4) {
            return Err(Error::InvalidParameter(
                "field must be 2x2 and bond must be 4x4".into(),
            ));
        }
        Ok(Self { n, field, bond })
    }

    /// `-J sum sigma^x_j sigma^x_{j+1} - g sum sigma^z_j`.
    pub fn tfim(n: usize, j: f64, g: f64) -> Result<Self> {
        let one = C64::new(1.0, 0.0);
        let mut field = Array2::zeros((2, 2));
        field[[0, 0]] = -g * one;
        field[[1, 1]] = g * one;
        let mut bond = Array2::zeros((4, 4));
        // sigma^x (x) sigma^x flips both spins
        bond[[0, 3]] = -j * one;
        bond[[3, 0]] = -j * one;
        bond[[1, 2]] = -j * one;
        bond[[2, 1]] = -j * one;
        Self::new(n, field, bond)
    }
}

fn gate_exp(term: &Array2<C64>, tau: f64) -> Result<Array2<C64>> {
    let op = DenseOperator::hermitian(term.clone())?;
    Ok(matrix_exp_scaled(&op, -tau)?.into_matrix())
}

/// Unnormalized-then-renormalized Gibbs operator `e^{-beta H} / tr` as an MPO.
///
/// Second-order Trotter evolution of the identity: each step of size `dbeta`
/// conjugates the state two-sidedly with the symmetric splitting
/// field-odd-even-odd-field at half the step, so one step advances `rho` by
/// the full `dbeta` in inverse temperature. Truncation is applied at every
/// two-site gate against the current canonical-form Schmidt spectrum; the
/// trace is renormalized after every step.
pub fn thermal_mpo(
    h: &NnChainHamiltonian,
    beta: f64,
    dbeta: f64,
    policy: &TruncationPolicy,
) -> Result<Mpo> {
    if beta < 0.0 || dbeta <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "need beta >= 0 and dbeta > 0, got beta={beta}, dbeta={dbeta}"
        )));
    }
    let n = h.n;
    let dim_norm = 1.0 / (1u64 << n.min(63)) as f64;
    let mut rho = Mpo::identity(n).scale(C64::new(dim_norm, 0.0));
    if beta == 0.0 || n == 0 {
        return Ok(rho);
    }
    let steps = (beta / dbeta).ceil() as usize;
    let tau = beta / steps as f64;
    // one-sided propagator is S2(tau/2); its internal half-step is tau/4
    let field_gate = gate_exp(&h.field, tau / 4.0)?;
    let bond_half = if n >= 2 {
        Some(gate_exp(&h.bond, tau / 4.0)?)
    } else {
        None
    };
    let bond_full = if n >= 2 {
        Some(gate_exp(&h.bond, tau / 2.0)?)
    } else {
        None
    };
    let odd_bonds: Vec<usize> = (1..n.saturating_sub(1)).step_by(2).collect();
    let even_bonds: Vec<usize> = (0..n.saturating_sub(1)).step_by(2).collect();
    for _ in 0..steps {
        apply_field_layer(&mut rho, &field_gate);
        if let (Some(gh), Some(gf)) = (&bond_half, &bond_full) {
            apply_bond_layer(&mut rho, &odd_bonds, gh, policy)?;
            apply_bond_layer(&mut rho, &even_bonds, gf, policy)?;
            apply_bond_layer(&mut rho, &odd_bonds, gh, policy)?;
        }
        apply_field_layer(&mut rho, &field_gate);
        let t = rho.trace().re;
        if t <= 0.0 || !t.is_finite() {
            return Err(Error::NotPositive(t));
        }
        rho = rho.scale(C64::new(1.0 / t, 0.0));
    }
    Ok(rho)
}

fn apply_field_layer(rho: &mut Mpo, gate: &Array2<C64>) {
    for j in 0..rho.n_sites() {
        // gate = gate†, so the two-sided map G rho G reuses the conjugation
        // path u . u†
        rho.apply_local_unitary(j, gate);
    }
    // the gate is not unitary, so isometry conditions no longer hold
    rho.set_canonical_center(None);
}

fn apply_bond_layer(
    rho: &mut Mpo,
    bonds: &[usize],
    gate: &Array2<C64>,
    policy: &TruncationPolicy,
) -> Result<()> {
    if bonds.is_empty() {
        return Ok(());
    }
    // sweep in whichever direction is closer to the current center
    let ascending = match rho.canonical_center() {
        Some(c) => {
            let first = bonds[0];
            let last = *bonds.last().unwrap();
            c.abs_diff(first) <= c.abs_diff(last + 1)
        }
        None => true,
    };
    let order: Vec<usize> = if ascending {
        bonds.to_vec()
    } else {
        bonds.iter().rev().copied().collect()
    };
    for &j in &order {
        let target = if ascending { j } else { j + 1 };
        rho.move_center_to(target)?;
        rho.apply_two_site_gate(j, gate, policy)?;
    }
    Ok(())
}
