//! Matrix-product-operator representation and algebra.
//!
//! Operators on a chain of N qubits are stored as a train of rank-4 site
//! tensors with index order (left-bond, bra, ket, right-bond) — "LBKR". The
//! terminal bonds have dimension 1. Compression truncates the Schmidt
//! decomposition of the globally unit-Frobenius-normalized operator at the
//! cutoff `sv_cutoff` and caps every bond at `max_bond`.

mod compress;
mod io;
mod thermal;


pub use compress::TruncationPolicy;
pub use io::{load_mpo, save_mpo};
pub use thermal::{thermal_mpo, NnChainHamiltonian};

use ndarray::{Array2, Array3, Array4, Axis};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::operator::DenseOperator;

/// Densification guard: 2^12 x 2^12 is the largest dense matrix we build.
pub const MAX_DENSE_SITES: usize = 12;

/// Tolerance for the canonical-form isometry checks.
pub const CANONICAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct Mpo {
    /// Site tensors, index order (left, bra, ket, right); phys dim 2.
    sites: Vec<Array4<C64>>,
    /// Site index k such that sites left of k are left-isometries and sites
    /// right of k are right-isometries; `None` when unknown.
    canonical_center: Option<usize>,
}

impl Mpo {
    pub fn new(sites: Vec<Array4<C64>>) -> Result<Self> {
        if sites.is_empty() {
            return Err(Error::InvalidParameter("empty MPO".into()));
        }
        let n = sites.len();
        if sites[0].shape()[0] != 1 || sites[n - 1].shape()[3] != 1 {
            return Err(Error::InvalidParameter(
                "terminal bond dimensions must be 1".into(),
            ));
        }
        for w in sites.windows(2) {
            if w[0].shape()[3] != w[1].shape()[0] {
                return Err(Error::InvalidParameter("bond dimension mismatch".into()));
            }
        }
        Ok(Self {
            sites,
            canonical_center: None,
        })
    }

    pub fn identity(n: usize) -> Self {
        let mut site = Array4::zeros((1, 2, 2, 1));
        site[[0, 0, 0, 0]] = C64::new(1.0, 0.0);
        site[[0, 1, 1, 0]] = C64::new(1.0, 0.0);
        Self {
            sites: vec![site; n],
            canonical_center: None,
        }
    }

    /// Product operator `op_0 (x) op_1 (x) ... (x) op_{n-1}`; all bonds 1.
    pub fn from_site_matrices(ops: &[Array2<C64>]) -> Result<Self> {
        if ops.is_empty() {
            return Err(Error::InvalidParameter("empty MPO".into()));
        }
        let sites = ops
            .iter()
            .map(|m| {
                let mut t = Array4::zeros((1, 2, 2, 1));
                for b in 0..2 {
                    for k in 0..2 {
                        t[[0, b, k, 0]] = m[[b, k]];
                    }
                }
                t
            })
            .collect();
        Ok(Self {
            sites,
            canonical_center: None,
        })
    }

    /// `op` at site `j`, identity elsewhere.
    pub fn single_site(n: usize, j: usize, op: &Array2<C64>) -> Result<Self> {
        let eye = Array2::eye(2);
        let ops: Vec<Array2<C64>> = (0..n)
            .map(|i| if i == j { op.clone() } else { eye.clone() })
            .collect();
        Self::from_site_matrices(&ops)
    }

    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn sites(&self) -> &[Array4<C64>] {
        &self.sites
    }

    pub fn canonical_center(&self) -> Option<usize> {
        self.canonical_center
    }

    pub(crate) fn set_canonical_center(&mut self, c: Option<usize>) {
        self.canonical_center = c;
    }

    /// Bond dimensions, length N+1 with 1 at both ends.
    pub fn bond_dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.n_sites() + 1);
        dims.push(1);
        for s in &self.sites {
            dims.push(s.shape()[3]);
        }
        dims
    }

    pub fn max_bond(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    pub fn scale(&self, c: C64) -> Self {
        let mut out = self.clone();
        out.sites[0].mapv_inplace(|z| z * c);
        out
    }

    pub fn trace(&self) -> C64 {
        // contract bra = ket per site, then chain the bond matrices
        let mut carry: Array2<C64> = Array2::eye(1);
        for site in &self.sites {
            let (l, _, _, r) = dims4(site);
            let mut m = Array2::zeros((l, r));
            for a in 0..l {
                for b in 0..r {
                    m[[a, b]] = site[[a, 0, 0, b]] + site[[a, 1, 1, b]];
                }
            }
            carry = carry.dot(&m);
        }
        carry[[0, 0]]
    }

    /// tr[self† other] via the two-layer transfer network.
    pub fn hs_inner(&self, other: &Mpo) -> Result<C64> {
        if self.n_sites() != other.n_sites() {
            return Err(Error::DimMismatch {
                left: self.n_sites(),
                right: other.n_sites(),
            });
        }
        let mut env: Array2<C64> = Array2::eye(1);
        for (a, b) in self.sites.iter().zip(&other.sites) {
            let (al, _, _, ar) = dims4(a);
            let (bl, _, _, br) = dims4(b);
            // tmp[aL, (p q bR)] = sum_bL env[aL, bL] B[bL, (p q bR)]
            let b_mat = b.view().into_shape_with_order((bl, 4 * br)).unwrap().to_owned();
            let tmp = env.dot(&b_mat); // (aL, 4*bR)
            let tmp = tmp.into_shape_with_order((al * 4, br)).unwrap();
            let a_mat = a.view().into_shape_with_order((al * 4, ar)).unwrap().to_owned();
            env = a_mat.t().mapv(|z| z.conj()).dot(&tmp); // (aR, bR)
        }
        Ok(env[[0, 0]])
    }

    pub fn hs_norm_sq(&self) -> f64 {
        self.hs_inner(self).map(|z| z.re.max(0.0)).unwrap_or(0.0)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.hs_norm_sq().sqrt()
    }

    /// Dense matrix of the full operator; site 0 carries the most significant
    /// bit of the row/column index.
    pub fn to_dense(&self) -> Result<DenseOperator> {
        let n = self.n_sites();
        if n > MAX_DENSE_SITES {
            return Err(Error::TooLargeForDense {
                n,
                limit: MAX_DENSE_SITES,
            });
        }
        // accumulator acc[bra, ket, bond]
        let mut acc: Array3<C64> = Array3::ones((1, 1, 1));
        for site in &self.sites {
            let (l, _, _, r) = dims4(site);
            let (nb, nk, _) = (acc.shape()[0], acc.shape()[1], acc.shape()[2]);
            let mut next: Array3<C64> = Array3::zeros((nb * 2, nk * 2, r));
            for bb in 0..nb {
                for kk in 0..nk {
                    for p in 0..2 {
                        for q in 0..2 {
                            for rr in 0..r {
                                let mut z = C64::new(0.0, 0.0);
                                for ll in 0..l {
                                    z += acc[[bb, kk, ll]] * site[[ll, p, q, rr]];
                                }
                                next[[bb * 2 + p, kk * 2 + q, rr]] = z;
                            }
                        }
                    }
                }
            }
            acc = next;
        }
        let dim = 1usize << n;
        let mat = acc.index_axis(Axis(2), 0).to_owned();
        debug_assert_eq!(mat.nrows(), dim);
        DenseOperator::new(mat)
    }

    /// Factorizes a dense operator on `n` qubits into an MPO by successive
    /// bipartite SVDs, truncating per `policy`. Returns the MPO and the
    /// discarded weight.
    pub fn from_dense(op: &DenseOperator, policy: &TruncationPolicy) -> Result<(Self, f64)> {
        let dim = op.dim();
        let n = dim.trailing_zeros() as usize;
        if dim != 1 << n || n == 0 {
            return Err(Error::InvalidParameter(format!(
                "dimension {dim} is not a power of two"
            )));
        }
        if n > MAX_DENSE_SITES {
            return Err(Error::TooLargeForDense {
                n,
                limit: MAX_DENSE_SITES,
            });
        }
        // regroup O[b, k] into the site-major index (b1 k1)(b2 k2)...(bN kN)
        let mut theta: Vec<C64> = vec![C64::new(0.0, 0.0); dim * dim];
        for b in 0..dim {
            for k in 0..dim {
                let mut idx = 0usize;
                for i in 0..n {
                    let bi = (b >> (n - 1 - i)) & 1;
                    let ki = (k >> (n - 1 - i)) & 1;
                    idx = idx * 4 + (2 * bi + ki);
                }
                theta[idx] = op.matrix()[[b, k]];
            }
        }
        let g_norm = op.frobenius_norm();
        let mut discarded = 0.0;
        let mut sites = Vec::with_capacity(n);
        let mut chi = 1usize;
        let mut rest = theta.len();
        let mut m = Array2::from_shape_vec((1, rest), theta).unwrap();
        for i in 0..n {
            rest /= 4;
            let m2 = m.into_shape_with_order((chi * 4, rest)).unwrap();
            if i == n - 1 {
                let site = m2.into_shape_with_order((chi, 2, 2, 1)).unwrap();
                sites.push(site);
                break;
            }
            let (u, s, vt) = compress::svd(&m2)?;
            let (keep, dropped) = compress::truncation_rank(&s, g_norm, policy);
            discarded += dropped;
            let site = u
                .slice_axis(Axis(1), ndarray::Slice::from(0..keep))
                .to_owned()
                .into_shape_with_order((chi, 2, 2, keep))
                .unwrap();
            sites.push(site);
            let mut sv = vt
                .slice_axis(Axis(0), ndarray::Slice::from(0..keep))
                .to_owned();
            for (k, mut row) in sv.rows_mut().into_iter().enumerate() {
                let w = C64::new(s[k], 0.0);
                row.mapv_inplace(|z| z * w);
            }
            chi = keep;
            m = sv;
        }
        let mut out = Self::new(sites)?;
        out.canonical_center = Some(n - 1);
        Ok((out, discarded))
    }

    /// Conjugates the bra and ket physical index of site `j` with the 2x2
    /// unitary `u`: site -> u site u†. Bond dimensions are unchanged.
    pub fn apply_local_unitary(&mut self, j: usize, u: &Array2<C64>) {
        let site = &self.sites[j];
        let (l, _, _, r) = dims4(site);
        let mut next = Array4::zeros((l, 2, 2, r));
        for ll in 0..l {
            for rr in 0..r {
                for b in 0..2 {
                    for k in 0..2 {
                        let mut z = C64::new(0.0, 0.0);
                        for bp in 0..2 {
                            for kp in 0..2 {
                                z += u[[b, bp]] * site[[ll, bp, kp, rr]] * u[[k, kp]].conj();
                            }
                        }
                        next[[ll, b, k, rr]] = z;
                    }
                }
            }
        }
        self.sites[j] = next;
    }
}

/// A + B by block-diagonal bond concatenation, then compression.
pub fn mpo_add(a: &Mpo, b: &Mpo, policy: &TruncationPolicy) -> Result<(Mpo, f64)> {
    let raw = add_raw(a, b)?;
    raw.compress(policy)
}

fn add_raw(a: &Mpo, b: &Mpo) -> Result<Mpo> {
    let n = a.n_sites();
    if n != b.n_sites() {
        return Err(Error::DimMismatch {
            left: n,
            right: b.n_sites(),
        });
    }
    if n == 1 {
        let sum = &a.sites[0] + &b.sites[0];
        return Mpo::new(vec![sum]);
    }
    let mut sites = Vec::with_capacity(n);
    for i in 0..n {
        let sa = &a.sites[i];
        let sb = &b.sites[i];
        let (la, _, _, ra) = dims4(sa);
        let (lb, _, _, rb) = dims4(sb);
        let (l, r) = if i == 0 {
            (1, ra + rb)
        } else if i == n - 1 {
            (la + lb, 1)
        } else {
            (la + lb, ra + rb)
        };
        let mut t = Array4::zeros((l, 2, 2, r));
        let (loff, roff) = if i == 0 { (0, ra) } else { (la, ra) };
        for p in 0..2 {
            for q in 0..2 {
                for x in 0..la {
                    for y in 0..ra {
                        t[[x, p, q, y]] = sa[[x, p, q, y]];
                    }
                }
                for x in 0..lb {
                    for y in 0..rb {
                        let xi = if i == 0 { x } else { x + loff };
                        let yi = if i == n - 1 { y } else { y + roff };
                        t[[xi, p, q, yi]] = sb[[x, p, q, y]];
                    }
                }
            }
        }
        sites.push(t);
    }
    Mpo::new(sites)
}

/// A · B with zip-up contraction and a final compression sweep. Returns the
/// product and the total discarded weight.
pub fn mpo_multiply(a: &Mpo, b: &Mpo, policy: &TruncationPolicy) -> Result<(Mpo, f64)> {
    let n = a.n_sites();
    if n != b.n_sites() {
        return Err(Error::DimMismatch {
            left: n,
            right: b.n_sites(),
        });
    }
    // zip-up: carry[(m), (aR, bR)] holds the not-yet-factorized right part;
    // truncation here is loose (the final compress enforces the policy)
    let zip_cutoff = 1e-15;
    let mut carry: Array3<C64> = Array3::ones((1, 1, 1));
    let mut sites: Vec<Array4<C64>> = Vec::with_capacity(n);
    for i in 0..n {
        let sa = &a.sites[i];
        let sb = &b.sites[i];
        let (al, _, _, ar) = dims4(sa);
        let (bl, _, _, br) = dims4(sb);
        let m = carry.shape()[0];
        // d1[(m, bL), (p, t, aR)] = sum_aL carry[m, aL, bL] A[aL, p, t, aR]
        let carry_m = permute3(&carry, [0, 2, 1]) // (m, bL, aL)
            .into_shape_with_order((m * bl, al))
            .unwrap();
        let a_mat = sa.view().into_shape_with_order((al, 4 * ar)).unwrap().to_owned();
        let d1 = carry_m.dot(&a_mat); // (m*bL, p*t*aR)
        // regroup to rows (m, p, aR), cols (bL, t)
        let d1 = d1.into_shape_with_order((m, bl, 2, 2, ar)).unwrap();
        let d1 = d1
            .permuted_axes([0, 2, 4, 1, 3]) // (m, p, aR, bL, t)
            .as_standard_layout()
            .to_owned()
            .into_shape_with_order((m * 2 * ar, bl * 2))
            .unwrap();
        // b_mat[(bL, t), (q, bR)]: B's bra index is the contracted t
        let b_mat = sb
            .view()
            .into_shape_with_order((bl * 2, 2 * br))
            .unwrap()
            .to_owned();
        let t = d1.dot(&b_mat); // (m*2*aR, 2*bR) rows (m, p, aR) cols (q, bR)
        let t = t.into_shape_with_order((m, 2, ar, 2, br)).unwrap();
        let t = t
            .permuted_axes([0, 1, 3, 2, 4]) // (m, p, q, aR, bR)
            .as_standard_layout()
            .to_owned();
        if i == n - 1 {
            let site = t.into_shape_with_order((m, 2, 2, 1)).unwrap();
            sites.push(site);
            break;
        }
        let mat = t.into_shape_with_order((m * 4, ar * br)).unwrap();
        let (u, s, vt) = compress::svd(&mat)?;
        let local_norm = s.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
        let cap = policy.max_bond.min(s.len()).max(1);
        let mut keep = s
            .iter()
            .take(cap)
            .filter(|&&sv| sv > zip_cutoff * local_norm)
            .count()
            .max(1);
        keep = keep.min(cap);
        let site = u
            .slice_axis(Axis(1), ndarray::Slice::from(0..keep))
            .to_owned()
            .into_shape_with_order((m, 2, 2, keep))
            .unwrap();
        sites.push(site);
        let mut sv = vt
            .slice_axis(Axis(0), ndarray::Slice::from(0..keep))
            .to_owned();
        for (k, mut row) in sv.rows_mut().into_iter().enumerate() {
            let w = C64::new(s[k], 0.0);
            row.mapv_inplace(|z| z * w);
        }
        carry = sv.into_shape_with_order((keep, ar, br)).unwrap();
    }
    let raw = Mpo::new(sites)?;
    raw.compress(policy)
}

pub(crate) fn dims4(t: &Array4<C64>) -> (usize, usize, usize, usize) {
    let s = t.shape();
    (s[0], s[1], s[2], s[3])
}

fn permute3(a: &Array3<C64>, perm: [usize; 3]) -> Array3<C64> {
    a.view().permuted_axes(perm).as_standard_layout().to_owned()
}

/// Bond-3 MPO of the open-boundary transverse-field Ising Hamiltonian
/// `-J sum sigma^x_j sigma^x_{j+1} - g sum sigma^z_j`.
pub fn build_tfim_mpo(n: usize, j: f64, g: f64) -> Result<Mpo> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "TFIM MPO needs at least 2 sites, got {n}"
        )));
    }
    let one = C64::new(1.0, 0.0);
    let sx = [(0usize, 1usize, one), (1, 0, one)];
    let sz = [(0usize, 0usize, one), (1, 1, -one)];
    let put = |t: &mut Array4<C64>, l: usize, r: usize, op: &[(usize, usize, C64)], w: f64| {
        for &(b, k, v) in op {
            t[[l, b, k, r]] += v * w;
        }
    };
    let eye = [(0usize, 0usize, one), (1, 1, one)];

    let mut first = Array4::zeros((1, 2, 2, 3));
    put(&mut first, 0, 0, &eye, 1.0);
    put(&mut first, 0, 1, &sx, 1.0);
    put(&mut first, 0, 2, &sz, -g);

    let mut mid = Array4::zeros((3, 2, 2, 3));
    put(&mut mid, 0, 0, &eye, 1.0);
    put(&mut mid, 0, 1, &sx, 1.0);
    put(&mut mid, 0, 2, &sz, -g);
    put(&mut mid, 1, 2, &sx, -j);
    put(&mut mid, 2, 2, &eye, 1.0);

    let mut last = Array4::zeros((3, 2, 2, 1));
    put(&mut last, 0, 0, &sz, -g);
    put(&mut last, 1, 0, &sx, -j);
    put(&mut last, 2, 0, &eye, 1.0);

    let mut sites = vec![first];
    for _ in 1..n - 1 {
        sites.push(mid.clone());
    }
    sites.push(last);
    Mpo::new(sites)
}

/// Bond-2 MPO of the encoding generator `A = sum_j sigma^z_j`.
pub fn encoding_mpo(n: usize) -> Result<Mpo> {
    let one = C64::new(1.0, 0.0);
    if n == 1 {
        let mut t = Array4::zeros((1, 2, 2, 1));
        t[[0, 0, 0, 0]] = one;
        t[[0, 1, 1, 0]] = -one;
        return Mpo::new(vec![t]);
    }
    let mut first = Array4::zeros((1, 2, 2, 2));
    first[[0, 0, 0, 0]] = one;
    first[[0, 1, 1, 0]] = one;
    first[[0, 0, 0, 1]] = one;
    first[[0, 1, 1, 1]] = -one;

    let mut mid = Array4::zeros((2, 2, 2, 2));
    mid[[0, 0, 0, 0]] = one;
    mid[[0, 1, 1, 0]] = one;
    mid[[0, 0, 0, 1]] = one;
    mid[[0, 1, 1, 1]] = -one;
    mid[[1, 0, 0, 1]] = one;
    mid[[1, 1, 1, 1]] = one;

    let mut last = Array4::zeros((2, 2, 2, 1));
    last[[0, 0, 0, 0]] = one;
    last[[0, 1, 1, 0]] = -one;
    last[[1, 0, 0, 0]] = one;
    last[[1, 1, 1, 0]] = one;

    let mut sites = vec![first];
    for _ in 1..n - 1 {
        sites.push(mid.clone());
    }
    sites.push(last);
    Mpo::new(sites)
}

/// Second-order truncated propagator F2 = I - rho*ds + rho^2 ds^2/2.
pub fn series_propagator(rho: &Mpo, ds: f64, policy: &TruncationPolicy) -> Result<Mpo> {
    let (rho_sq, _) = mpo_multiply(rho, rho, policy)?;
    let eye = Mpo::identity(rho.n_sites());
    let term1 = rho.scale(C64::new(-ds, 0.0));
    let term2 = rho_sq.scale(C64::new(0.5 * ds * ds, 0.0));
    let (partial, _) = mpo_add(&eye, &term1, policy)?;
    let (f2, _) = mpo_add(&partial, &term2, policy)?;
    Ok(f2)
}

/// Substep width below which the second-order series error drops to the
/// compression noise floor for density-matrix spectra (rates <= 2).
pub const PROPAGATOR_SUBSTEP: f64 = 0.01;

/// Propagator factor e^{-rho ds} built by scaling and squaring the
/// second-order series: the series is evaluated at ds/2^k <= substep width
/// and squared k times, so the factor is accurate well beyond the single-shot
/// O(ds^3) series error. Intended for cached, reused factors.
pub fn exp_propagator(rho: &Mpo, ds: f64, policy: &TruncationPolicy) -> Result<Mpo> {
    let k = if ds > PROPAGATOR_SUBSTEP {
        (ds / PROPAGATOR_SUBSTEP).log2().ceil() as i32
    } else {
        0
    };
    let mut f = series_propagator(rho, ds / 2f64.powi(k), policy)?;
    for _ in 0..k {
        let (sq, _) = mpo_multiply(&f, &f, policy)?;
        f = sq;
    }
    Ok(f)
}

/// One integrand update: Omega -> F2 Omega F2 with F2 = I - rho*ds + rho^2 ds^2/2,
/// compressed after each product. Single-step error O(ds^3).
pub fn exp_step_apply(
    rho: &Mpo,
    omega: &Mpo,
    ds: f64,
    policy: &TruncationPolicy,
) -> Result<(Mpo, f64)> {
    if ds == 0.0 {
        return Ok((omega.clone(), 0.0));
    }
    let f2 = series_propagator(rho, ds, policy)?;
    sandwich_apply(&f2, omega, policy)
}

/// Omega -> F Omega F for a precomputed propagator factor F.
pub fn sandwich_apply(
    f: &Mpo,
    omega: &Mpo,
    policy: &TruncationPolicy,
) -> Result<(Mpo, f64)> {
    let (half, w1) = mpo_multiply(f, omega, policy)?;
    let (full, w2) = mpo_multiply(&half, f, policy)?;
    Ok((full, w1 + w2))
}
