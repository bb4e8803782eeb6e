//! Matrix-product states: construction, canonicalization, transfer-based
//! block norms, perturbation bounds, truncation, and the equality-achieving
//! worst-case instance.
//!
//! Site tensors use fixed leg names: interior sites carry `l` (left bond),
//! `p` (physical), `r` (right bond); the first site drops `l` and the last
//! drops `r`. Sites are indexed from zero. A chain flattens to the network
//! format with vertices `s000..`, bonds `b000..`, physical legs `p000..`,
//! so the contracted state's sorted legs enumerate sites left to right.
//!
//! Block matricizations follow the chain orientation: the right-going
//! matrix at bond `b` maps the bond index to the fused physical indices of
//! sites `0..=b`, and the left-going matrix at bond `b` maps it to the
//! fused physical indices of sites `b+1..`. Their spectral norms are found
//! by power iteration on bond-space Gram matrices built by transfer
//! contraction, so the exponential-size matricizations are never formed.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::network::{contract_network_with_cap, Edge, OpenLeg, TensorNetwork, DEFAULT_CAP};
use crate::perturb::PerturbationSet;
use crate::spectral::{gram_spectral_norm, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::tensor::{legs, random_tensor_with, DenseTensor, Dist};

/// Tolerance for the sitewise isometry check backing the center invariant.
const CANONICAL_TOL: f64 = 1e-8;
/// Seed for the deterministic tail of the worst-case instance.
const CONSTRUCTION_SEED: u64 = 0x5eed_cafe;

/// An ordered chain of site tensors with optional canonical center.
///
/// When `center` is set, every site left of it is left-orthogonal and every
/// site right of it is right-orthogonal, verified at construction time to
/// `1e-8`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mps {
    sites: Vec<DenseTensor>,
    center: Option<usize>,
}

/// Spectral norms of all left and right block matricizations plus the
/// state norm, one entry per bond.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockNorms {
    /// `right_going[b]` is the 2-norm of the matrix formed by sites `0..=b`
    /// with the bond leg as columns.
    pub right_going: Vec<f64>,
    /// `left_going[b]` is the 2-norm of the matrix formed by sites `b+1..`
    /// with the bond leg as rows.
    pub left_going: Vec<f64>,
    /// Frobenius norm of the full contracted state.
    pub frob: f64,
}

/// The two forms of the canonical all-site bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CanonicalBound {
    /// Budget times `1 + sum_b sqrt(D_b) * (block norm ratio)`.
    pub exact_sum: f64,
    /// Budget times `1 + (n-1) sqrt(max D)`; never below `exact_sum`.
    pub simple: f64,
}

fn site_leg_names(j: usize, n: usize) -> Vec<&'static str> {
    if j == 0 {
        vec!["p", "r"]
    } else if j == n - 1 {
        vec!["l", "p"]
    } else {
        vec!["l", "p", "r"]
    }
}

impl Mps {
    /// Validates chain structure and, when a center is given, the sitewise
    /// isometries that make it canonical.
    pub fn new(sites: Vec<DenseTensor>, center: Option<usize>) -> Result<Self> {
        let n = sites.len();
        if n < 2 {
            return Err(Error::ShapeError {
                detail: format!("an MPS needs at least two sites, got {n}"),
            });
        }
        let mut ordered = Vec::with_capacity(n);
        for (j, site) in sites.into_iter().enumerate() {
            let names = site_leg_names(j, n);
            if site.order() != names.len() {
                return Err(Error::ShapeError {
                    detail: format!(
                        "site {j} has {} legs, expected {}",
                        site.order(),
                        names.len()
                    ),
                });
            }
            ordered.push(site.permuted(&names)?);
        }
        for j in 0..n - 1 {
            let r = ordered[j].leg_dim("r")?;
            let l = ordered[j + 1].leg_dim("l")?;
            if r != l {
                return Err(Error::DimensionError {
                    a_leg: format!("site {j}.r"),
                    a_dim: r,
                    b_leg: format!("site {}.l", j + 1),
                    b_dim: l,
                });
            }
        }
        if let Some(c) = center {
            if c >= n {
                return Err(Error::ShapeError {
                    detail: format!("center {c} out of range for {n} sites"),
                });
            }
            let m = Self {
                sites: ordered,
                center: None,
            };
            for j in 0..c {
                if !m.site_is_left_isometry(j, CANONICAL_TOL) {
                    return Err(Error::NotCanonical {
                        detail: format!("site {j} left of center {c} is not left-orthogonal"),
                    });
                }
            }
            for j in c + 1..n {
                if !m.site_is_right_isometry(j, CANONICAL_TOL) {
                    return Err(Error::NotCanonical {
                        detail: format!("site {j} right of center {c} is not right-orthogonal"),
                    });
                }
            }
            return Ok(Self {
                sites: m.sites,
                center,
            });
        }
        Ok(Self {
            sites: ordered,
            center,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn sites(&self) -> &[DenseTensor] {
        &self.sites
    }

    pub fn site(&self, j: usize) -> Result<&DenseTensor> {
        self.sites.get(j).ok_or_else(|| Error::ShapeError {
            detail: format!("site {j} out of range for {} sites", self.sites.len()),
        })
    }

    pub fn center(&self) -> Option<usize> {
        self.center
    }

    /// Bond dimensions between consecutive sites, `n - 1` entries.
    pub fn bond_dims(&self) -> Vec<usize> {
        (0..self.sites.len() - 1)
            .map(|j| self.sites[j].leg_dim("r").expect("validated"))
            .collect()
    }

    pub fn phys_dims(&self) -> Vec<usize> {
        self.sites
            .iter()
            .map(|s| s.leg_dim("p").expect("validated"))
            .collect()
    }

    pub fn max_bond_dim(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    /// Site data reshaped to dense `(l, p, r)` dimensions with phantom unit
    /// bonds at the boundary.
    fn site_lpr(&self, j: usize) -> (usize, usize, usize, &[f64]) {
        let s = &self.sites[j];
        let n = self.sites.len();
        let p = s.leg_dim("p").expect("validated");
        let l = if j == 0 {
            1
        } else {
            s.leg_dim("l").expect("validated")
        };
        let r = if j == n - 1 {
            1
        } else {
            s.leg_dim("r").expect("validated")
        };
        (l, p, r, s.data())
    }

    fn site_is_left_isometry(&self, j: usize, tol: f64) -> bool {
        let (l, p, r, data) = self.site_lpr(j);
        let a = DMatrix::from_row_slice(l * p, r, data);
        let g = a.transpose() * a;
        max_dev_from_identity(&g) <= tol
    }

    fn site_is_right_isometry(&self, j: usize, tol: f64) -> bool {
        let (l, p, r, data) = self.site_lpr(j);
        let b = DMatrix::from_row_slice(l, p * r, data);
        let g = &b * b.transpose();
        max_dev_from_identity(&g) <= tol
    }

    /// The same state read right to left: site order, bond legs, and the
    /// center index all mirror.
    pub fn reversed(&self) -> Self {
        let n = self.sites.len();
        let sites = (0..n)
            .rev()
            .map(|j| {
                let (l, p, r, data) = self.site_lpr(j);
                let mut out = vec![0.0; data.len()];
                for il in 0..l {
                    for ip in 0..p {
                        for ir in 0..r {
                            out[(ir * p + ip) * l + il] = data[(il * p + ip) * r + ir];
                        }
                    }
                }
                let rj = n - 1 - j;
                let leg_list: Vec<(String, usize)> = match site_leg_names(rj, n).as_slice() {
                    ["p", "r"] => vec![("p".into(), p), ("r".into(), l)],
                    ["l", "p"] => vec![("l".into(), r), ("p".into(), p)],
                    _ => vec![("l".into(), r), ("p".into(), p), ("r".into(), l)],
                };
                DenseTensor::new(leg_list, out).expect("validated dims")
            })
            .collect();
        Self {
            sites,
            center: self.center.map(|c| n - 1 - c),
        }
    }
}

fn max_dev_from_identity(g: &DMatrix<f64>) -> f64 {
    let mut dev = 0.0_f64;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let expect = if i == j { 1.0 } else { 0.0 };
            dev = dev.max((g[(i, j)] - expect).abs());
        }
    }
    dev
}

fn dmatrix_row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

fn tensor_from_lpr(
    j: usize,
    n: usize,
    l: usize,
    p: usize,
    r: usize,
    data: Vec<f64>,
) -> Result<DenseTensor> {
    let leg_list = match site_leg_names(j, n).as_slice() {
        ["p", "r"] => legs(&[("p", p), ("r", r)]),
        ["l", "p"] => legs(&[("l", l), ("p", p)]),
        _ => legs(&[("l", l), ("p", p), ("r", r)]),
    };
    DenseTensor::new(leg_list, data)
}

/// Capped exponential bond envelope: dimension of the bond after site `j`
/// (zero-based) in an `n`-site chain of physical dimension `p`.
pub fn bond_envelope(n: usize, max_bond: usize, p: usize, j: usize) -> usize {
    let grow = p.saturating_pow((j + 1).min(63) as u32).max(1);
    let shrink = p.saturating_pow((n - 1 - j).min(63) as u32).max(1);
    grow.min(shrink).min(max_bond).max(1)
}

/// Deterministic random MPS with the capped exponential bond profile.
pub fn random_mps(n: usize, max_bond: usize, p: usize, seed: u64, dist: Dist) -> Result<Mps> {
    if n < 2 || p == 0 || max_bond == 0 {
        return Err(Error::ShapeError {
            detail: format!("invalid MPS shape n={n}, D={max_bond}, p={p}"),
        });
    }
    let mut sites = Vec::with_capacity(n);
    for j in 0..n {
        let l = if j == 0 {
            1
        } else {
            bond_envelope(n, max_bond, p, j - 1)
        };
        let r = if j == n - 1 {
            1
        } else {
            bond_envelope(n, max_bond, p, j)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(j as u64);
        let leg_list = match site_leg_names(j, n).as_slice() {
            ["p", "r"] => legs(&[("p", p), ("r", r)]),
            ["l", "p"] => legs(&[("l", l), ("p", p)]),
            _ => legs(&[("l", l), ("p", p), ("r", r)]),
        };
        sites.push(random_tensor_with(leg_list, dist, &mut rng)?);
    }
    Mps::new(sites, None)
}

/// Orthogonalizes every site toward `center` by QR sweeps, leaving the
/// represented state unchanged.
pub fn canonicalize(m: &Mps, center: usize) -> Result<Mps> {
    let n = m.n_sites();
    if center >= n {
        return Err(Error::ShapeError {
            detail: format!("center {center} out of range for {n} sites"),
        });
    }
    let mut sites = m.sites.clone();
    let work = |sites: &Vec<DenseTensor>, j: usize| -> (usize, usize, usize, Vec<f64>) {
        let tmp = Mps {
            sites: sites.clone(),
            center: None,
        };
        let (l, p, r, d) = tmp.site_lpr(j);
        (l, p, r, d.to_vec())
    };
    for j in 0..center {
        let (l, p, r, data) = work(&sites, j);
        let a = DMatrix::from_row_slice(l * p, r, &data);
        let (mut q, mut rr) = a.qr().unpack();
        fix_qr_signs(&mut q, &mut rr);
        let k = q.ncols();
        sites[j] = tensor_from_lpr(j, n, l, p, k, dmatrix_row_major(&q))?;
        let (l2, p2, r2, next) = work(&sites, j + 1);
        debug_assert_eq!(l2, r);
        let nxt = DMatrix::from_row_slice(l2, p2 * r2, &next);
        let merged = &rr * nxt;
        sites[j + 1] = tensor_from_lpr(j + 1, n, k, p2, r2, dmatrix_row_major(&merged))?;
    }
    for j in (center + 1..n).rev() {
        let (l, p, r, data) = work(&sites, j);
        let b = DMatrix::from_row_slice(l, p * r, &data);
        let (mut q, mut rr) = b.transpose().qr().unpack();
        fix_qr_signs(&mut q, &mut rr);
        let k = q.ncols();
        sites[j] = tensor_from_lpr(j, n, k, p, r, dmatrix_row_major(&q.transpose()))?;
        let (l2, p2, r2, prev) = work(&sites, j - 1);
        debug_assert_eq!(r2, l);
        let pv = DMatrix::from_row_slice(l2 * p2, r2, &prev);
        let merged = pv * rr.transpose();
        sites[j - 1] = tensor_from_lpr(j - 1, n, l2, p2, k, dmatrix_row_major(&merged))?;
    }
    Mps::new(sites, Some(center))
}

/// Flips factor signs so the triangular diagonal is nonnegative, making
/// the sweep output independent of the Householder sign convention.
fn fix_qr_signs(q: &mut DMatrix<f64>, r: &mut DMatrix<f64>) {
    for i in 0..q.ncols().min(r.nrows()) {
        if r[(i, i)] < 0.0 {
            for a in 0..q.nrows() {
                q[(a, i)] = -q[(a, i)];
            }
            for b in 0..r.ncols() {
                r[(i, b)] = -r[(i, b)];
            }
        }
    }
}

fn phys_slice(l: usize, p: usize, r: usize, data: &[f64], s: usize) -> DMatrix<f64> {
    DMatrix::from_fn(l, r, |il, ir| data[(il * p + s) * r + ir])
}

/// One transfer step from the left: `E' = sum_s A_s^T E A_s`.
fn transfer_from_left(m: &Mps, j: usize, e: &DMatrix<f64>) -> DMatrix<f64> {
    let (l, p, r, data) = m.site_lpr(j);
    let mut out = DMatrix::zeros(r, r);
    for s in 0..p {
        let a = phys_slice(l, p, r, data, s);
        out += a.transpose() * e * &a;
    }
    symmetrized(out)
}

/// One transfer step from the right: `F' = sum_s A_s F A_s^T`.
fn transfer_from_right(m: &Mps, j: usize, f: &DMatrix<f64>) -> DMatrix<f64> {
    let (l, p, r, data) = m.site_lpr(j);
    let mut out = DMatrix::zeros(l, l);
    for s in 0..p {
        let a = phys_slice(l, p, r, data, s);
        out += &a * f * a.transpose();
    }
    symmetrized(out)
}

fn symmetrized(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

fn top_sqrt_eigenvalue(g: &DMatrix<f64>) -> Result<f64> {
    let dim = g.nrows();
    gram_spectral_norm(
        |v| {
            let x = nalgebra::DVector::from_column_slice(v);
            let y = g * x;
            y.as_slice().to_vec()
        },
        dim,
        DEFAULT_TOL,
        DEFAULT_MAX_ITER,
    )
}

/// Norms of every block matricization plus the state norm, by transfer
/// contraction and power iteration on the bond-space Gram matrices.
pub fn block_norms(m: &Mps) -> Result<BlockNorms> {
    let n = m.n_sites();
    let mut right_going = Vec::with_capacity(n - 1);
    let mut e = DMatrix::from_element(1, 1, 1.0);
    for j in 0..n {
        e = transfer_from_left(m, j, &e);
        if j < n - 1 {
            right_going.push(top_sqrt_eigenvalue(&e)?);
        }
    }
    let frob = e[(0, 0)].max(0.0).sqrt();
    let mut left_going = vec![0.0; n - 1];
    let mut f = DMatrix::from_element(1, 1, 1.0);
    for j in (1..n).rev() {
        f = transfer_from_right(m, j, &f);
        left_going[j - 1] = top_sqrt_eigenvalue(&f)?;
    }
    Ok(BlockNorms {
        right_going,
        left_going,
        frob,
    })
}

/// State norm by transfer contraction, without materializing the state.
pub fn state_norm(m: &Mps) -> f64 {
    let mut e = DMatrix::from_element(1, 1, 1.0);
    for j in 0..m.n_sites() {
        e = transfer_from_left(m, j, &e);
    }
    e[(0, 0)].max(0.0).sqrt()
}

/// Inner product of two states on the same physical spaces.
pub fn state_inner(a: &Mps, b: &Mps) -> Result<f64> {
    if a.phys_dims() != b.phys_dims() {
        return Err(Error::ShapeError {
            detail: "inner product needs matching physical dimensions".to_string(),
        });
    }
    let mut x = DMatrix::from_element(1, 1, 1.0);
    for j in 0..a.n_sites() {
        let (la, p, ra, da) = a.site_lpr(j);
        let (lb, _, rb, db) = b.site_lpr(j);
        let mut out = DMatrix::zeros(ra, rb);
        for s in 0..p {
            let ma = phys_slice(la, p, ra, da, s);
            let mb = phys_slice(lb, p, rb, db, s);
            out += ma.transpose() * &x * mb;
        }
        x = out;
    }
    Ok(x[(0, 0)])
}

/// Relative distance between two states. Uses the dense difference when the
/// state fits the materialization cap; otherwise falls back to the
/// inner-product identity, which loses accuracy below differences of about
/// `1e-6 * |a|` through cancellation.
pub fn state_diff_rel(a: &Mps, b: &Mps) -> Result<f64> {
    let entries: u128 = a
        .phys_dims()
        .iter()
        .fold(1u128, |acc, p| acc.saturating_mul(*p as u128));
    let na = state_norm(a);
    if entries <= DEFAULT_CAP as u128 {
        let ta = state(a)?;
        let tb = state(b)?;
        return Ok(ta.add_scaled(&tb, -1.0)?.frobenius_norm() / na);
    }
    let nb = state_norm(b);
    let cross = state_inner(a, b)?;
    let diff_sq = (na * na + nb * nb - 2.0 * cross).max(0.0);
    Ok(diff_sq.sqrt() / na)
}

/// Flattens the chain into the general network format with vertices
/// `s000..`, bond edges `b000..`, and physical legs `p000..`.
pub fn to_network(m: &Mps) -> Result<TensorNetwork> {
    let n = m.n_sites();
    let vertices: Vec<(String, DenseTensor)> = m
        .sites
        .iter()
        .enumerate()
        .map(|(j, t)| (format!("s{j:03}"), t.clone()))
        .collect();
    let edges: Vec<Edge> = (0..n - 1)
        .map(|j| Edge {
            id: format!("b{j:03}"),
            a: (format!("s{j:03}"), "r".to_string()),
            b: (format!("s{:03}", j + 1), "l".to_string()),
        })
        .collect();
    let open: Vec<OpenLeg> = (0..n)
        .map(|j| OpenLeg {
            id: format!("p{j:03}"),
            vertex: format!("s{j:03}"),
            leg: "p".to_string(),
        })
        .collect();
    TensorNetwork::new(vertices, edges, open)
}

/// Network vertex id of site `j` in [`to_network`] order.
pub fn site_vertex_id(j: usize) -> String {
    format!("s{j:03}")
}

/// Rebuilds a chain from its [`to_network`] flattening. The vertex, bond,
/// and physical-leg naming must follow that convention exactly; a claimed
/// `center` is verified sitewise.
pub fn from_network(tn: &TensorNetwork, center: Option<usize>) -> Result<Mps> {
    let mut ids: Vec<String> = tn.vertex_ids().into_iter().map(str::to_string).collect();
    ids.sort_unstable();
    for (j, id) in ids.iter().enumerate() {
        if *id != site_vertex_id(j) {
            return Err(Error::NetworkInvalid {
                detail: format!("vertex '{id}' does not follow the chain naming convention"),
            });
        }
    }
    let sites: Vec<DenseTensor> = ids
        .iter()
        .map(|id| tn.vertex(id).cloned())
        .collect::<Result<_>>()?;
    let m = Mps::new(sites, center)?;
    if !crate::network::same_topology(tn, &to_network(&m)?) {
        return Err(Error::NetworkInvalid {
            detail: "edges or open legs do not follow the chain convention".to_string(),
        });
    }
    Ok(m)
}

/// Dense contracted state with legs `p000..` in site order.
pub fn state(m: &Mps) -> Result<DenseTensor> {
    contract_network_with_cap(&to_network(m)?, DEFAULT_CAP)
}

/// First-order relative error bound for a single perturbed site:
/// `eps * |left block|_2 * |site|_F * |right block|_2 / |state|_F`.
/// At the canonical center all three factors cancel and the bound is
/// exactly `eps`.
pub fn single_site_bound(m: &Mps, j: usize, eps: f64) -> Result<f64> {
    let n = m.n_sites();
    if j >= n {
        return Err(Error::ShapeError {
            detail: format!("site {j} out of range for {n} sites"),
        });
    }
    if m.center == Some(j) {
        return Ok(eps);
    }
    let norms = block_norms(m)?;
    let left = if j == 0 {
        1.0
    } else {
        norms.right_going[j - 1]
    };
    let right = if j == n - 1 { 1.0 } else { norms.left_going[j] };
    Ok(eps * left * m.sites[j].frobenius_norm() * right / norms.frob)
}

/// All-site worst-case bound for a general MPS: the sum of single-site
/// factors over every site.
pub fn all_site_bound_general(m: &Mps, eps: f64) -> Result<f64> {
    let n = m.n_sites();
    let norms = block_norms(m)?;
    let mut total = 0.0;
    for j in 0..n {
        let left = if j == 0 {
            1.0
        } else {
            norms.right_going[j - 1]
        };
        let right = if j == n - 1 { 1.0 } else { norms.left_going[j] };
        total += left * m.sites[j].frobenius_norm() * right;
    }
    Ok(eps * total / norms.frob)
}

/// All-site bound specialized to a canonical MPS. Away from the center
/// every site norm is the square root of a bond dimension and the
/// same-side block norm is one, giving `exact_sum`; bounding each block
/// norm ratio by one gives `simple`.
pub fn all_site_bound_canonical(m: &Mps, eps: f64) -> Result<CanonicalBound> {
    let Some(c) = m.center else {
        return Err(Error::NotCanonical {
            detail: "all-site canonical bound needs a canonical center".to_string(),
        });
    };
    let n = m.n_sites();
    let norms = block_norms(m)?;
    let bonds = m.bond_dims();
    let mut sum = 1.0;
    for j in 0..n {
        if j < c {
            sum += (bonds[j] as f64).sqrt() * norms.left_going[j] / norms.frob;
        } else if j > c {
            sum += (bonds[j - 1] as f64).sqrt() * norms.right_going[j - 1] / norms.frob;
        }
    }
    let d = m.max_bond_dim() as f64;
    Ok(CanonicalBound {
        exact_sum: eps * sum,
        simple: eps * (1.0 + (n as f64 - 1.0) * d.sqrt()),
    })
}

/// Ratio between the simple canonical bound and the naive `n * eps` bound.
pub fn comparison_factor_mps(n: usize, d: usize) -> f64 {
    if n == 0 {
        return 1.0;
    }
    (1.0 + (n as f64 - 1.0) * (d as f64).sqrt()) / n as f64
}

/// Sweeps left to right, truncating each bond by SVD with per-site relative
/// tolerance, recanonicalizing as it goes. Returns the truncated chain
/// (centered at the last site) and the exact relative error against the
/// input state. The error never exceeds the budget sum to first order.
pub fn truncate_all_with_canonicalization(m: &Mps, eps: &[f64]) -> Result<(Mps, f64)> {
    let n = m.n_sites();
    if eps.len() != n {
        return Err(Error::InvalidPerturbationBudget {
            detail: format!("{} tolerances for {n} sites", eps.len()),
        });
    }
    if let Some(bad) = eps.iter().find(|e| !(0.0..1.0).contains(*e)) {
        return Err(Error::InvalidPerturbationBudget {
            detail: format!("truncation tolerance {bad} outside [0, 1)"),
        });
    }
    let mut cur = canonicalize(m, 0)?;
    let mut sites = cur.sites.clone();
    for i in 0..n {
        let (l, p, r, data) = {
            let tmp = Mps {
                sites: sites.clone(),
                center: None,
            };
            let (l, p, r, d) = tmp.site_lpr(i);
            (l, p, r, d.to_vec())
        };
        if i < n - 1 {
            // Center sits at i; split off the right bond and truncate it.
            let a = DMatrix::from_row_slice(l * p, r, &data);
            let (u, sv, vt) = sorted_svd(a)?;
            let keep = kept_rank(&sv, eps[i]);
            let uk = u.columns(0, keep).into_owned();
            let mut svk = vt.rows(0, keep).into_owned();
            for (row, s) in sv.iter().take(keep).enumerate() {
                for col in 0..svk.ncols() {
                    svk[(row, col)] *= *s;
                }
            }
            sites[i] = tensor_from_lpr(i, n, l, p, keep, dmatrix_row_major(&uk))?;
            let tmp = Mps {
                sites: sites.clone(),
                center: None,
            };
            let (l2, p2, r2, next) = tmp.site_lpr(i + 1);
            let nxt = DMatrix::from_row_slice(l2, p2 * r2, next);
            let merged = svk * nxt;
            sites[i + 1] = tensor_from_lpr(i + 1, n, keep, p2, r2, dmatrix_row_major(&merged))?;
        } else {
            // Last site: the only remaining bond is on its left.
            let b = DMatrix::from_row_slice(l, p * r, &data);
            let (u, sv, vt) = sorted_svd(b)?;
            let keep = kept_rank(&sv, eps[i]);
            let uk = u.columns(0, keep).into_owned();
            let mut svk = vt.rows(0, keep).into_owned();
            for (row, s) in sv.iter().take(keep).enumerate() {
                for col in 0..svk.ncols() {
                    svk[(row, col)] *= *s;
                }
            }
            sites[i] = tensor_from_lpr(i, n, keep, p, r, dmatrix_row_major(&svk))?;
            let tmp = Mps {
                sites: sites.clone(),
                center: None,
            };
            let (l2, p2, r2, prev) = tmp.site_lpr(i - 1);
            let pv = DMatrix::from_row_slice(l2 * p2, r2, prev);
            let merged = pv * uk;
            sites[i - 1] = tensor_from_lpr(i - 1, n, l2, p2, keep, dmatrix_row_major(&merged))?;
        }
    }
    cur = Mps::new(sites, Some(n - 1))?;
    let err = state_diff_rel(m, &cur)?;
    Ok((cur, err))
}

fn sorted_svd(a: DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>, DMatrix<f64>)> {
    let mut svd = a.svd(true, true);
    svd.sort_by_singular_values();
    let u = svd.u.ok_or(Error::ConvergenceError {
        best: 0.0,
        iters: 0,
    })?;
    let vt = svd.v_t.ok_or(Error::ConvergenceError {
        best: 0.0,
        iters: 0,
    })?;
    Ok((u, svd.singular_values.as_slice().to_vec(), vt))
}

/// Smallest kept rank whose discarded tail keeps Frobenius mass within
/// `eps` of the current site norm. At least one value is always kept.
fn kept_rank(sv: &[f64], eps: f64) -> usize {
    let total_sq: f64 = sv.iter().map(|s| s * s).sum();
    let budget_sq = eps * eps * total_sq;
    let mut tail_sq = 0.0;
    let mut keep = sv.len();
    for i in (0..sv.len()).rev() {
        let with = tail_sq + sv[i] * sv[i];
        if with <= budget_sq {
            tail_sq = with;
            keep = i;
        } else {
            break;
        }
    }
    keep.max(1)
}

/// Canonical MPS on which the simple all-site bound is attained, paired
/// with the attaining perturbation direction.
///
/// Every site left of the center copies its bond index with the physical
/// leg pinned, so the chain is exactly isometric; the last site is a
/// rank-one matrix plus a small full tail of magnitude `delta`. The
/// returned perturbation has `|d_j|_F = |site_j|_F`, so scaling it by
/// `eps` yields an eps-relative perturbation whose measured error
/// approaches `eps * (1 + (n-1) sqrt(D))` as `delta` and `eps` shrink.
/// Entries are keyed by [`to_network`] vertex ids.
pub fn worst_case_construction(
    n: usize,
    d: usize,
    p: usize,
    delta: f64,
) -> Result<(Mps, PerturbationSet)> {
    if n < 2 || d == 0 || p == 0 {
        return Err(Error::ShapeError {
            detail: format!("invalid construction shape n={n}, D={d}, p={p}"),
        });
    }
    if p < d {
        return Err(Error::ShapeError {
            detail: format!(
                "first-site isometry needs physical dimension >= bond dimension, got p={p} < D={d}"
            ),
        });
    }
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::ShapeError {
            detail: format!("tail magnitude {delta} outside [0, 1)"),
        });
    }
    let mut sites = Vec::with_capacity(n);
    // First site: the top D x D block of the identity embedded in p rows.
    let mut first = vec![0.0; p * d];
    for i in 0..d {
        first[i * d + i] = 1.0;
    }
    sites.push(DenseTensor::new(legs(&[("p", p), ("r", d)]), first)?);
    // Interior sites: copy the bond, pin the physical index to zero.
    for _ in 1..n - 1 {
        let mut w = vec![0.0; d * p * d];
        for b in 0..d {
            w[(b * p) * d + b] = 1.0;
        }
        sites.push(DenseTensor::new(legs(&[("l", d), ("p", p), ("r", d)]), w)?);
    }
    // Last site: rank-one matrix plus a normalized random tail.
    let mut last = vec![0.0; d * p];
    last[0] = 1.0;
    if delta > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(CONSTRUCTION_SEED);
        let tail = random_tensor_with(
            legs(&[("l", d), ("p", p)]),
            Dist::Uniform { lo: -1.0, hi: 1.0 },
            &mut rng,
        )?;
        let tn = tail.frobenius_norm();
        for (x, t) in last.iter_mut().zip(tail.data()) {
            *x += delta * t / tn;
        }
    }
    sites.push(DenseTensor::new(legs(&[("l", d), ("p", p)]), last)?);
    let m = Mps::new(sites, Some(n - 1))?;

    // Perturbation directions: along the state's dominant product component
    // on every isometric site, and along the site itself at the center, all
    // Frobenius-matched to their sites.
    let sqrt_d = (d as f64).sqrt();
    let mut entries = Vec::with_capacity(n);
    let mut df = vec![0.0; p * d];
    df[0] = sqrt_d;
    entries.push((
        site_vertex_id(0),
        DenseTensor::new(legs(&[("p", p), ("r", d)]), df)?,
    ));
    for j in 1..n - 1 {
        let mut dw = vec![0.0; d * p * d];
        dw[0] = sqrt_d;
        entries.push((
            site_vertex_id(j),
            DenseTensor::new(legs(&[("l", d), ("p", p), ("r", d)]), dw)?,
        ));
    }
    entries.push((site_vertex_id(n - 1), m.site(n - 1)?.clone()));
    Ok((m, PerturbationSet::explicit(entries)))
}
