//! Canonical-form sweeps, Schmidt truncation, and two-site gate application.

use ndarray::{Array1, Array2, Array4, Axis, Slice};
use ndarray_linalg::{SVDInto, QR};
use num_complex::Complex64 as C64;

use super::{dims4, Mpo};
use crate::error::{Error, Result};

/// Truncation rule shared by every compression point: drop Schmidt values of
/// the unit-normalized operator below `sv_cutoff` and cap bonds at `max_bond`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TruncationPolicy {
    pub sv_cutoff: f64,
    pub max_bond: usize,
    /// When set, the integrator rescales `sv_cutoff` with the decaying
    /// integrand amplitude; the MPO operations themselves only read the
    /// effective cutoff.
    pub dynamic: bool,
}

impl TruncationPolicy {
    pub fn new(sv_cutoff: f64, max_bond: usize) -> Self {
        Self {
            sv_cutoff,
            max_bond: max_bond.max(1),
            dynamic: false,
        }
    }

    /// No cutoff, no bond cap.
    pub fn exact() -> Self {
        Self {
            sv_cutoff: 0.0,
            max_bond: usize::MAX,
            dynamic: false,
        }
    }

    /// Same policy with a different effective cutoff.
    pub fn with_cutoff(&self, sv_cutoff: f64) -> Self {
        Self { sv_cutoff, ..*self }
    }
}

pub(crate) fn svd(m: &Array2<C64>) -> Result<(Array2<C64>, Array1<f64>, Array2<C64>)> {
    let (u, s, vt) = m
        .clone()
        .svd_into(true, true)
        .map_err(|e| Error::SvdFailed(e.to_string()))?;
    Ok((u.unwrap(), s, vt.unwrap()))
}

/// Number of singular values to keep and the squared normalized weight of the
/// dropped ones. `g_norm` is the Frobenius norm the Schmidt values are
/// normalized against.
pub(crate) fn truncation_rank(
    s: &Array1<f64>,
    g_norm: f64,
    policy: &TruncationPolicy,
) -> (usize, f64) {
    let g = g_norm.max(1e-300);
    let cap = policy.max_bond.min(s.len()).max(1);
    let mut keep = s
        .iter()
        .take(cap)
        .filter(|&&sv| sv / g >= policy.sv_cutoff)
        .count()
        .max(1);
    keep = keep.min(cap);
    let dropped = s.iter().skip(keep).map(|sv| (sv / g).powi(2)).sum();
    (keep, dropped)
}

impl Mpo {
    /// Full compression sweep: left-canonicalize with QR, then truncate right
    /// to left with SVDs against the global Frobenius norm. Returns the
    /// compressed operator (canonical center 0) and the discarded weight.
    pub fn compress(&self, policy: &TruncationPolicy) -> Result<(Mpo, f64)> {
        let mut out = self.clone();
        let n = out.sites.len();
        for i in 0..n - 1 {
            out.left_orthonormalize_site(i)?;
        }
        let g_norm = out.sites[n - 1].iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let mut discarded = 0.0;
        for i in (1..n).rev() {
            let site = &out.sites[i];
            let (l, _, _, r) = dims4(site);
            let m = site
                .view()
                .into_shape_with_order((l, 4 * r))
                .unwrap()
                .to_owned();
            let (u, s, vt) = svd(&m)?;
            let (keep, dropped) = truncation_rank(&s, g_norm, policy);
            discarded += dropped;
            out.sites[i] = vt
                .slice_axis(Axis(0), Slice::from(0..keep))
                .to_owned()
                .into_shape_with_order((keep, 2, 2, r))
                .unwrap();
            let mut us = u.slice_axis(Axis(1), Slice::from(0..keep)).to_owned();
            for (k, mut col) in us.columns_mut().into_iter().enumerate() {
                let w = C64::new(s[k], 0.0);
                col.mapv_inplace(|z| z * w);
            }
            out.absorb_from_right(i - 1, &us);
        }
        out.canonical_center = Some(0);
        Ok((out, discarded))
    }

    /// QR the site into a left isometry; the triangular factor moves into the
    /// next site.
    pub(crate) fn left_orthonormalize_site(&mut self, i: usize) -> Result<()> {
        let n = self.sites.len();
        debug_assert!(i + 1 < n);
        let (l, _, _, r) = dims4(&self.sites[i]);
        let m = self.sites[i]
            .view()
            .into_shape_with_order((l * 4, r))
            .unwrap()
            .to_owned();
        let (q, rr) = m.qr().map_err(|e| Error::SvdFailed(e.to_string()))?;
        let k = q.ncols();
        self.sites[i] = q.into_shape_with_order((l, 2, 2, k)).unwrap();
        // next site: rr (k x r) times its left bond
        let (nl, _, _, nr) = dims4(&self.sites[i + 1]);
        debug_assert_eq!(nl, r);
        let next = self.sites[i + 1]
            .view()
            .into_shape_with_order((nl, 4 * nr))
            .unwrap()
            .to_owned();
        self.sites[i + 1] = rr
            .dot(&next)
            .into_shape_with_order((k, 2, 2, nr))
            .unwrap();
        Ok(())
    }

    /// LQ the site into a right isometry; the triangular factor moves into the
    /// previous site.
    pub(crate) fn right_orthonormalize_site(&mut self, i: usize) -> Result<()> {
        debug_assert!(i > 0);
        let (l, _, _, r) = dims4(&self.sites[i]);
        let m = self.sites[i]
            .view()
            .into_shape_with_order((l, 4 * r))
            .unwrap()
            .to_owned();
        // M = L Q from the QR of M†
        let mh = m.t().mapv(|z| z.conj());
        let (q, rr) = mh.qr().map_err(|e| Error::SvdFailed(e.to_string()))?;
        let k = q.ncols();
        // (k, 4r) with orthonormal rows; transposition leaves F-order data,
        // so restore standard layout before reshaping
        let qh = q.t().mapv(|z| z.conj()).as_standard_layout().to_owned();
        let lh = rr.t().mapv(|z| z.conj()).as_standard_layout().to_owned(); // (l, k)
        self.sites[i] = qh.into_shape_with_order((k, 2, 2, r)).unwrap();
        self.absorb_from_right(i - 1, &lh);
        Ok(())
    }

    /// Contracts the matrix `m` (old_right x new_right) into the right bond of
    /// site `i`.
    fn absorb_from_right(&mut self, i: usize, m: &Array2<C64>) {
        let (l, _, _, r) = dims4(&self.sites[i]);
        debug_assert_eq!(m.nrows(), r);
        let k = m.ncols();
        let site = self.sites[i]
            .view()
            .into_shape_with_order((l * 4, r))
            .unwrap()
            .to_owned();
        self.sites[i] = site.dot(m).into_shape_with_order((l, 2, 2, k)).unwrap();
    }

    /// Brings the MPO to mixed-canonical form with the center at `k`,
    /// sweeping stepwise from the current center when it is known.
    pub fn move_center_to(&mut self, k: usize) -> Result<()> {
        let n = self.sites.len();
        debug_assert!(k < n);
        match self.canonical_center {
            None => {
                for i in 0..k {
                    self.left_orthonormalize_site(i)?;
                }
                for i in (k + 1..n).rev() {
                    self.right_orthonormalize_site(i)?;
                }
            }
            Some(c) if c < k => {
                for i in c..k {
                    self.left_orthonormalize_site(i)?;
                }
            }
            Some(c) => {
                for i in (k + 1..=c).rev() {
                    self.right_orthonormalize_site(i)?;
                }
            }
        }
        self.canonical_center = Some(k);
        Ok(())
    }

    /// Conjugates sites (j, j+1) with the two-site gate `u` (4x4, bra pair
    /// index 2*b_j + b_{j+1}): theta -> u theta u†. The pair is merged,
    /// transformed, and split with an SVD truncated per `policy` against the
    /// norm of the merged block; the canonical center ends at j+1. Returns the
    /// discarded weight. The center must already sit at j or j+1.
    pub fn apply_two_site_gate(
        &mut self,
        j: usize,
        u: &Array2<C64>,
        policy: &TruncationPolicy,
    ) -> Result<f64> {
        debug_assert!(matches!(self.canonical_center, Some(c) if c == j || c == j + 1));
        let (l, _, _, c) = dims4(&self.sites[j]);
        let (c2, _, _, r) = dims4(&self.sites[j + 1]);
        debug_assert_eq!(c, c2);
        let left = self.sites[j]
            .view()
            .into_shape_with_order((l * 4, c))
            .unwrap()
            .to_owned();
        let right = self.sites[j + 1]
            .view()
            .into_shape_with_order((c, 4 * r))
            .unwrap()
            .to_owned();
        // theta indices (l, b1, k1, b2, k2, r) -> grouped (l, B, K, r)
        let theta = left
            .dot(&right)
            .into_shape_with_order((l, 2, 2, 2, 2, r))
            .unwrap()
            .permuted_axes([0, 1, 3, 2, 4, 5]) // (l, b1, b2, k1, k2, r)
            .as_standard_layout()
            .to_owned();
        // bra side: theta[B] <- sum_B' u[B, B'] theta[B']
        let t = theta
            .into_shape_with_order((l, 4, 4, r))
            .unwrap()
            .permuted_axes([1, 0, 2, 3]) // (B, l, K, r)
            .as_standard_layout()
            .to_owned()
            .into_shape_with_order((4, l * 4 * r))
            .unwrap();
        let t = u.dot(&t).into_shape_with_order((4, l, 4, r)).unwrap();
        // ket side: theta[K] <- sum_K' conj(u[K, K']) theta[K']
        let t = t
            .permuted_axes([2, 1, 0, 3]) // (K, l, B, r)
            .as_standard_layout()
            .to_owned()
            .into_shape_with_order((4, l * 4 * r))
            .unwrap();
        let uc = u.mapv(|z| z.conj());
        let t = uc.dot(&t).into_shape_with_order((4, l, 4, r)).unwrap();
        // back to split order (l, b1, k1) x (b2, k2, r)
        let t = t
            .permuted_axes([1, 2, 0, 3]) // (l, B, K, r)
            .as_standard_layout()
            .to_owned()
            .into_shape_with_order((l, 2, 2, 2, 2, r))
            .unwrap()
            .permuted_axes([0, 1, 3, 2, 4, 5]) // (l, b1, k1, b2, k2, r)
            .as_standard_layout()
            .to_owned()
            .into_shape_with_order((l * 4, 4 * r))
            .unwrap();
        let (uu, s, vt) = svd(&t)?;
        let theta_norm = s.iter().map(|x| x * x).sum::<f64>().sqrt();
        let (keep, dropped) = truncation_rank(&s, theta_norm, policy);
        self.sites[j] = uu
            .slice_axis(Axis(1), Slice::from(0..keep))
            .to_owned()
            .into_shape_with_order((l, 2, 2, keep))
            .unwrap();
        let mut sv = vt.slice_axis(Axis(0), Slice::from(0..keep)).to_owned();
        for (k, mut row) in sv.rows_mut().into_iter().enumerate() {
            let w = C64::new(s[k], 0.0);
            row.mapv_inplace(|z| z * w);
        }
        self.sites[j + 1] = sv.into_shape_with_order((keep, 2, 2, r)).unwrap();
        self.canonical_center = Some(j + 1);
        Ok(dropped)
    }

    /// Max deviation of every site left (right) of the center from a left
    /// (right) isometry; diagnostic for tests.
    pub fn canonical_defect(&self) -> f64 {
        let Some(c) = self.canonical_center else {
            return f64::INFINITY;
        };
        let mut worst: f64 = 0.0;
        for (i, site) in self.sites.iter().enumerate() {
            let (l, _, _, r) = dims4(site);
            if i < c {
                let m = site.view().into_shape_with_order((l * 4, r)).unwrap();
                let g = m.t().mapv(|z| z.conj()).dot(&m.to_owned());
                worst = worst.max(defect_from_identity(&g));
            } else if i > c {
                let m = site.view().into_shape_with_order((l, 4 * r)).unwrap();
                let g = m.to_owned().dot(&m.t().mapv(|z| z.conj()));
                worst = worst.max(defect_from_identity(&g));
            }
        }
        worst
    }
}

fn defect_from_identity(g: &Array2<C64>) -> f64 {
    let n = g.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let expect = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[[i, j]] - C64::new(expect, 0.0)).norm());
        }
    }
    worst
}

/// A rank-4 site tensor filled from a dense 4x4 block, mainly for tests.
#[allow(dead_code)]
pub(crate) fn site_from_matrix(l: usize, r: usize, fill: &dyn Fn(usize, usize, usize, usize) -> C64) -> Array4<C64> {
    let mut t = Array4::zeros((l, 2, 2, r));
    for a in 0..l {
        for b in 0..2 {
            for k in 0..2 {
                for c in 0..r {
                    t[[a, b, k, c]] = fill(a, b, k, c);
                }
            }
        }
    }
    t
}
