//! PEPS grids, the column-to-MPS reduction, and columnwise worst-case
//! bounds under the mixed budget model: columns carry one budget, the
//! sites inside the last column another.
//!
//! Grid sites use fixed leg names `u`, `d`, `l`, `r`, `p` (up, down, left,
//! right, physical), with boundary sites dropping the absent directions.
//! The network flattening names vertices `g{row}{col}`, horizontal edges
//! `h{row}{col}` (to the right of the site), vertical edges `v{row}{col}`
//! (below the site), and physical legs `p{col}{row}`. Physical ids sort
//! column-major, so the contracted grid state and the contracted
//! column-MPS state share one flat layout and can be compared entrywise.

use crate::error::{Error, Result};
use crate::mps::{
    all_site_bound_canonical, all_site_bound_general, block_norms, CanonicalBound, Mps,
};
use crate::network::{
    contract_network_with_cap, sub_network, Edge, OpenLeg, TensorNetwork, DEFAULT_CAP,
};
use crate::tensor::{DenseTensor, Legs};
use std::collections::BTreeSet;

/// An `m x n` grid of site tensors in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Peps {
    rows: usize,
    cols: usize,
    sites: Vec<DenseTensor>,
}

fn peps_leg_names(i: usize, j: usize, m: usize, n: usize) -> Vec<&'static str> {
    let mut names = Vec::with_capacity(5);
    if i > 0 {
        names.push("u");
    }
    if i + 1 < m {
        names.push("d");
    }
    if j > 0 {
        names.push("l");
    }
    if j + 1 < n {
        names.push("r");
    }
    names.push("p");
    names
}

impl Peps {
    /// Validates the grid: per-position leg sets and matched bond
    /// dimensions along both directions.
    pub fn new(rows: usize, cols: usize, sites: Vec<DenseTensor>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::ShapeError {
                detail: "a PEPS needs a nonempty grid".to_string(),
            });
        }
        if sites.len() != rows * cols {
            return Err(Error::ShapeError {
                detail: format!("{} sites supplied for a {rows}x{cols} grid", sites.len()),
            });
        }
        let mut ordered = Vec::with_capacity(sites.len());
        for (idx, site) in sites.into_iter().enumerate() {
            let (i, j) = (idx / cols, idx % cols);
            let names = peps_leg_names(i, j, rows, cols);
            if site.order() != names.len() {
                return Err(Error::ShapeError {
                    detail: format!(
                        "site ({i},{j}) has {} legs, expected {}",
                        site.order(),
                        names.len()
                    ),
                });
            }
            ordered.push(site.permuted(&names)?);
        }
        let grid = Self {
            rows,
            cols,
            sites: ordered,
        };
        for i in 0..rows {
            for j in 0..cols {
                if j + 1 < cols {
                    let r = grid.site(i, j)?.leg_dim("r")?;
                    let l = grid.site(i, j + 1)?.leg_dim("l")?;
                    if r != l {
                        return Err(Error::DimensionError {
                            a_leg: format!("({i},{j}).r"),
                            a_dim: r,
                            b_leg: format!("({i},{}).l", j + 1),
                            b_dim: l,
                        });
                    }
                }
                if i + 1 < rows {
                    let d = grid.site(i, j)?.leg_dim("d")?;
                    let u = grid.site(i + 1, j)?.leg_dim("u")?;
                    if d != u {
                        return Err(Error::DimensionError {
                            a_leg: format!("({i},{j}).d"),
                            a_dim: d,
                            b_leg: format!("({},{j}).u", i + 1),
                            b_dim: u,
                        });
                    }
                }
            }
        }
        Ok(grid)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn site(&self, i: usize, j: usize) -> Result<&DenseTensor> {
        if i >= self.rows || j >= self.cols {
            return Err(Error::ShapeError {
                detail: format!("site ({i},{j}) outside {}x{} grid", self.rows, self.cols),
            });
        }
        Ok(&self.sites[i * self.cols + j])
    }

    pub fn with_replaced_site(&self, i: usize, j: usize, t: DenseTensor) -> Result<Self> {
        let mut sites = self.sites.clone();
        let old = self.site(i, j)?;
        if t.order() != old.order() {
            return Err(Error::ShapeError {
                detail: format!("replacement for ({i},{j}) changes the leg count"),
            });
        }
        sites[i * self.cols + j] = t.permuted(&peps_leg_names(i, j, self.rows, self.cols))?;
        Self::new(self.rows, self.cols, sites)
    }

    /// Largest bond dimension over both directions.
    pub fn max_bond_dim(&self) -> usize {
        let mut d = 1;
        for i in 0..self.rows {
            for j in 0..self.cols {
                let site = self.site(i, j).expect("validated");
                if j + 1 < self.cols {
                    d = d.max(site.leg_dim("r").expect("validated"));
                }
                if i + 1 < self.rows {
                    d = d.max(site.leg_dim("d").expect("validated"));
                }
            }
        }
        d
    }
}

/// Network vertex id of grid position `(i, j)`.
pub fn grid_vertex_id(i: usize, j: usize) -> String {
    format!("g{i:02}{j:02}")
}

fn h_edge_id(i: usize, j: usize) -> String {
    format!("h{i:02}{j:02}")
}

fn v_edge_id(i: usize, j: usize) -> String {
    format!("v{i:02}{j:02}")
}

fn phys_id(i: usize, j: usize) -> String {
    format!("p{j:02}{i:02}")
}

/// Flattens the grid into the general network format.
pub fn to_network(p: &Peps) -> Result<TensorNetwork> {
    let (m, n) = (p.rows, p.cols);
    let mut vertices = Vec::with_capacity(m * n);
    let mut edges = Vec::new();
    let mut open = Vec::new();
    for i in 0..m {
        for j in 0..n {
            vertices.push((grid_vertex_id(i, j), p.site(i, j)?.clone()));
            if j + 1 < n {
                edges.push(Edge {
                    id: h_edge_id(i, j),
                    a: (grid_vertex_id(i, j), "r".to_string()),
                    b: (grid_vertex_id(i, j + 1), "l".to_string()),
                });
            }
            if i + 1 < m {
                edges.push(Edge {
                    id: v_edge_id(i, j),
                    a: (grid_vertex_id(i, j), "d".to_string()),
                    b: (grid_vertex_id(i + 1, j), "u".to_string()),
                });
            }
            open.push(OpenLeg {
                id: phys_id(i, j),
                vertex: grid_vertex_id(i, j),
                leg: "p".to_string(),
            });
        }
    }
    TensorNetwork::new(vertices, edges, open)
}

/// Rebuilds a grid from its [`to_network`] flattening. Vertex ids must
/// follow the `g{row}{col}` convention, and the edge and open-leg naming
/// must match the grid topology exactly.
pub fn from_network(tn: &TensorNetwork) -> Result<Peps> {
    let mut cells: Vec<(usize, usize, String)> = Vec::new();
    let mut rows = 0usize;
    let mut cols = 0usize;
    for id in tn.vertex_ids() {
        let bad = || Error::NetworkInvalid {
            detail: format!("vertex '{id}' does not follow the grid naming convention"),
        };
        let digits = id.strip_prefix('g').ok_or_else(bad)?;
        if digits.len() != 4 || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let i: usize = digits[..2].parse().map_err(|_| bad())?;
        let j: usize = digits[2..].parse().map_err(|_| bad())?;
        rows = rows.max(i + 1);
        cols = cols.max(j + 1);
        cells.push((i, j, id.to_string()));
    }
    if cells.len() != rows * cols {
        return Err(Error::NetworkInvalid {
            detail: format!("{} vertices do not fill a {rows}x{cols} grid", cells.len()),
        });
    }
    cells.sort();
    let sites: Vec<DenseTensor> = cells
        .iter()
        .map(|(_, _, id)| tn.vertex(id).cloned())
        .collect::<Result<_>>()?;
    let p = Peps::new(rows, cols, sites)?;
    if !crate::network::same_topology(tn, &to_network(&p)?) {
        return Err(Error::NetworkInvalid {
            detail: "edges or open legs do not follow the grid convention".to_string(),
        });
    }
    Ok(p)
}

/// Contracts one column of the grid into a single tensor whose legs are the
/// column's horizontal bonds and physical legs, named by edge ids.
fn column_tensor(p: &Peps, tn: &TensorNetwork, j: usize, cap: usize) -> Result<DenseTensor> {
    let vset: BTreeSet<String> = (0..p.rows).map(|i| grid_vertex_id(i, j)).collect();
    contract_network_with_cap(&sub_network(tn, &vset)?, cap)
}

/// Fuses grouped legs in place: the tensor is permuted to the concatenated
/// group order, then reinterpreted with one leg per group.
fn fuse_groups(t: &DenseTensor, groups: &[(&str, Vec<String>)]) -> Result<DenseTensor> {
    let order: Vec<&str> = groups
        .iter()
        .flat_map(|(_, ids)| ids.iter().map(|s| s.as_str()))
        .collect();
    let perm = t.permuted(&order)?;
    let mut fused: Legs = Vec::with_capacity(groups.len());
    for (name, ids) in groups {
        let mut dim = 1usize;
        for id in ids {
            dim *= perm.leg_dim(id)?;
        }
        fused.push((name.to_string(), dim));
    }
    DenseTensor::new(fused, perm.into_data())
}

/// Contracts every column and fuses its legs into an `n`-site MPS: left and
/// right horizontal bonds become the chain bonds, the column's physical
/// legs the site's physical leg. Preserves the contracted state exactly.
pub fn columns_to_mps(p: &Peps) -> Result<Mps> {
    columns_to_mps_with_cap(p, DEFAULT_CAP)
}

pub fn columns_to_mps_with_cap(p: &Peps, cap: usize) -> Result<Mps> {
    let (m, n) = (p.rows, p.cols);
    if n < 2 {
        return Err(Error::ShapeError {
            detail: "column reduction needs at least two columns".to_string(),
        });
    }
    let tn = to_network(p)?;
    let mut sites = Vec::with_capacity(n);
    for j in 0..n {
        let t = column_tensor(p, &tn, j, cap)?;
        let phys: Vec<String> = (0..m).map(|i| phys_id(i, j)).collect();
        let mut groups: Vec<(&str, Vec<String>)> = Vec::new();
        if j > 0 {
            groups.push(("l", (0..m).map(|i| h_edge_id(i, j - 1)).collect()));
        }
        groups.push(("p", phys));
        if j + 1 < n {
            groups.push(("r", (0..m).map(|i| h_edge_id(i, j)).collect()));
        }
        sites.push(fuse_groups(&t, &groups)?);
    }
    Mps::new(sites, None)
}

/// Reads column `j` as a vertical chain over its rows: vertical bonds
/// become the chain bonds and everything else on a site (physical plus
/// dangling horizontal legs) fuses into its physical leg. Needs at least
/// two rows.
pub fn column_as_vertical_mps(p: &Peps, j: usize, center: Option<usize>) -> Result<Mps> {
    let (m, n) = (p.rows, p.cols);
    if m < 2 {
        return Err(Error::ShapeError {
            detail: "vertical reduction needs at least two rows".to_string(),
        });
    }
    let mut sites = Vec::with_capacity(m);
    for i in 0..m {
        let site = p.site(i, j)?;
        let mut rest: Vec<String> = Vec::new();
        if j > 0 {
            rest.push("l".to_string());
        }
        if j + 1 < n {
            rest.push("r".to_string());
        }
        rest.push("p".to_string());
        let mut groups: Vec<(&str, Vec<String>)> = Vec::new();
        if i > 0 {
            groups.push(("l", vec!["u".to_string()]));
        }
        groups.push(("p", rest));
        if i + 1 < m {
            groups.push(("r", vec!["d".to_string()]));
        }
        sites.push(fuse_groups(site, &groups)?);
    }
    Mps::new(sites, center)
}

fn check_budgets(e1: f64, e2: f64) -> Result<()> {
    if !(e1.is_finite() && e2.is_finite()) || e1 < 0.0 || e2 < 0.0 {
        return Err(Error::InvalidPerturbationBudget {
            detail: format!("budgets ({e1}, {e2}) must be finite and nonnegative"),
        });
    }
    Ok(())
}

/// Relative-error bound for the last column's tensor under sitewise
/// perturbations of budget `eps`, through its vertical chain.
fn last_column_sitewise_bound(p: &Peps, eps: f64) -> Result<f64> {
    if p.rows == 1 {
        // A single site is its own column: the relative error is exactly
        // the budget to first order.
        return Ok(eps);
    }
    let v = column_as_vertical_mps(p, p.cols - 1, None)?;
    all_site_bound_general(&v, eps)
}

/// Worst-case first-order bound for the mixed model on a general PEPS:
/// every column perturbed within `e1` of its norm, plus the last column's
/// sites perturbed within `e2`, propagated through the left environment.
pub fn peps_bound_general(p: &Peps, e1: f64, e2: f64) -> Result<f64> {
    check_budgets(e1, e2)?;
    let n = p.cols;
    if n == 1 {
        return Ok(e1 + last_column_sitewise_bound(p, e2)?);
    }
    let col = columns_to_mps(p)?;
    let columnwise = all_site_bound_general(&col, e1)?;
    let norms = block_norms(&col)?;
    let left = norms.right_going[n - 2];
    let last_norm = col.site(n - 1)?.frobenius_norm();
    let sitewise = last_column_sitewise_bound(p, e2)? * left * last_norm / norms.frob;
    Ok(columnwise + sitewise)
}

/// The same bound for a corner-canonical grid, in both the exact-sum and
/// simple forms. Canonicality is verified columnwise (every column left of
/// the last is a fused isometry, and inside the last column every row
/// above the corner is isometric); failures surface as `NotCanonical`.
///
/// Each part's simple form uses the largest bond of its own chain: the
/// fused product of horizontal bonds for the columnwise part, the vertical
/// bonds for the sitewise part. With one uniform bond dimension `D` these
/// are `D^{m/2}` and `sqrt(D)`.
pub fn peps_bound_canonical(p: &Peps, e1: f64, e2: f64) -> Result<CanonicalBound> {
    check_budgets(e1, e2)?;
    let (m, n) = (p.rows, p.cols);
    let columnwise = if n == 1 {
        CanonicalBound {
            exact_sum: e1,
            simple: e1,
        }
    } else {
        let col = columns_to_mps(p)?;
        let canon = Mps::new(col.sites().to_vec(), Some(n - 1)).map_err(|e| match e {
            Error::NotCanonical { detail } => Error::NotCanonical {
                detail: format!("column reduction: {detail}"),
            },
            other => other,
        })?;
        all_site_bound_canonical(&canon, e1)?
    };
    let sitewise = if m == 1 {
        CanonicalBound {
            exact_sum: e2,
            simple: e2,
        }
    } else {
        let v = column_as_vertical_mps(p, n - 1, Some(m - 1)).map_err(|e| match e {
            Error::NotCanonical { detail } => Error::NotCanonical {
                detail: format!("last column: {detail}"),
            },
            other => other,
        })?;
        all_site_bound_canonical(&v, e2)?
    };
    Ok(CanonicalBound {
        exact_sum: columnwise.exact_sum + sitewise.exact_sum,
        simple: columnwise.simple + sitewise.simple,
    })
}

/// Ratio of the simple canonical bound to the naive budget sum
/// `e1 (n-1) + e2 m`.
pub fn comparison_factor_peps(m: usize, n: usize, d: usize, e1: f64, e2: f64) -> Result<f64> {
    check_budgets(e1, e2)?;
    let den = e1 * (n as f64 - 1.0) + e2 * m as f64;
    if den == 0.0 {
        return Err(Error::InvalidPerturbationBudget {
            detail: "comparison factor needs a nonzero naive budget".to_string(),
        });
    }
    let sd = (d as f64).sqrt();
    let num =
        e1 * (1.0 + (n as f64 - 1.0) * sd.powi(m as i32)) + e2 * (1.0 + (m as f64 - 1.0) * sd);
    Ok(num / den)
}

/// Corner-canonical test grid: `m` copies of the worst-case chain stacked
/// with unit vertical bonds, every non-corner row normalized so its state
/// has unit norm. The corner keeps the chain's small tail, so the grid is
/// exactly canonical while staying full-rank at the corner.
pub fn stacked_canonical_peps(m: usize, n: usize, d: usize, p: usize, delta: f64) -> Result<Peps> {
    if m == 0 {
        return Err(Error::ShapeError {
            detail: "a PEPS needs at least one row".to_string(),
        });
    }
    let (chain, _) = crate::mps::worst_case_construction(n, d, p, delta)?;
    let last_norm = chain.site(n - 1)?.frobenius_norm();
    let mut sites = Vec::with_capacity(m * n);
    for i in 0..m {
        for j in 0..n {
            let mut site = chain.site(j)?.clone();
            if j == n - 1 && i + 1 < m {
                site = site.scaled(1.0 / last_norm);
            }
            // Insert unit vertical legs; size-one legs leave the data as is.
            let mut leg_list: Legs = Vec::new();
            if i > 0 {
                leg_list.push(("u".to_string(), 1));
            }
            if i + 1 < m {
                leg_list.push(("d".to_string(), 1));
            }
            for (id, dim) in site.legs() {
                leg_list.push((id.clone(), *dim));
            }
            sites.push(DenseTensor::new(leg_list, site.data().to_vec())?);
        }
    }
    Peps::new(m, n, sites)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mps::{canonicalize, random_mps, state};
    use crate::network::is_canonical;
    use crate::spectral::spectral_norm_default;
    use crate::tensor::{legs, matricize, random_tensor, Dist};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn uni() -> Dist {
        Dist::Uniform { lo: -1.0, hi: 1.0 }
    }

    fn random_peps(m: usize, n: usize, bond: usize, p: usize, seed: u64) -> Peps {
        let mut sites = Vec::new();
        for i in 0..m {
            for j in 0..n {
                let mut leg_list: Legs = Vec::new();
                if i > 0 {
                    leg_list.push(("u".to_string(), bond));
                }
                if i + 1 < m {
                    leg_list.push(("d".to_string(), bond));
                }
                if j > 0 {
                    leg_list.push(("l".to_string(), bond));
                }
                if j + 1 < n {
                    leg_list.push(("r".to_string(), bond));
                }
                leg_list.push(("p".to_string(), p));
                sites.push(random_tensor(leg_list, uni(), seed + (i * n + j) as u64).unwrap());
            }
        }
        Peps::new(m, n, sites).unwrap()
    }

    #[test]
    fn single_row_grid_is_the_chain() {
        let m = random_mps(4, 3, 2, 5, uni()).unwrap();
        let mut sites = Vec::new();
        for j in 0..4 {
            sites.push(m.site(j).unwrap().clone());
        }
        let p = Peps::new(1, 4, sites).unwrap();
        let col = columns_to_mps(&p).unwrap();
        assert!(crate::mps::state_diff_rel(&m, &col).unwrap() < 1e-12);
        assert_eq!(col.bond_dims(), m.bond_dims());
    }

    #[test]
    fn column_reduction_preserves_the_state() {
        let p = random_peps(2, 2, 2, 2, 9);
        let col = columns_to_mps(&p).unwrap();
        let direct = contract_network_with_cap(&to_network(&p).unwrap(), DEFAULT_CAP).unwrap();
        let via = state(&col).unwrap();
        // Physical ids sort column-major, so both contractions share one
        // flat layout.
        assert_eq!(direct.len(), via.len());
        let mut dev = 0.0_f64;
        for (a, b) in direct.data().iter().zip(via.data()) {
            dev = dev.max((a - b).abs());
        }
        assert!(dev < 1e-10 * direct.frobenius_norm());
        let p = random_peps(2, 3, 2, 2, 10);
        let col = columns_to_mps(&p).unwrap();
        let direct = contract_network_with_cap(&to_network(&p).unwrap(), DEFAULT_CAP).unwrap();
        let via = state(&col).unwrap();
        let mut dev = 0.0_f64;
        for (a, b) in direct.data().iter().zip(via.data()) {
            dev = dev.max((a - b).abs());
        }
        assert!(dev < 1e-10 * direct.frobenius_norm());
    }

    #[test]
    fn fused_site_norms_match_column_norms() {
        let p = random_peps(3, 2, 2, 2, 11);
        let tn = to_network(&p).unwrap();
        let col = columns_to_mps(&p).unwrap();
        for j in 0..2 {
            let t = column_tensor(&p, &tn, j, DEFAULT_CAP).unwrap();
            let fused = col.site(j).unwrap();
            assert!(
                (t.frobenius_norm() - fused.frobenius_norm()).abs() < 1e-12 * t.frobenius_norm()
            );
        }
    }

    #[test]
    fn product_column_fuses_to_rank_one() {
        // Unit vertical bonds make each column a Kronecker product of its
        // sites, so the fused site's bond-matricization has rank one per
        // bond configuration.
        let p = stacked_canonical_peps(2, 3, 2, 2, 0.0).unwrap();
        let col = columns_to_mps(&p).unwrap();
        let site = col.site(0).unwrap();
        let mat = matricize(site, &["p"], &["r"]).unwrap();
        // Rows of the stacked first column are identical chains, so the
        // fused matrix is an isometry onto a D^2-dimensional subspace.
        for a in 0..mat.cols() {
            for b in 0..mat.cols() {
                let mut dot = 0.0;
                for k in 0..mat.rows() {
                    dot += mat.at(k, a) * mat.at(k, b);
                }
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn general_bound_zero_budgets() {
        let p = random_peps(2, 2, 2, 2, 12);
        assert_eq!(peps_bound_general(&p, 0.0, 0.0).unwrap(), 0.0);
        assert!(matches!(
            peps_bound_general(&p, -1.0, 0.0),
            Err(Error::InvalidPerturbationBudget { .. })
        ));
    }

    #[test]
    fn general_bound_single_row_reduces_to_mps_terms() {
        let p = random_peps(1, 4, 3, 2, 13);
        let chain = columns_to_mps(&p).unwrap();
        let e1 = 1e-3;
        let e2 = 2e-3;
        let got = peps_bound_general(&p, e1, e2).unwrap();
        let norms = block_norms(&chain).unwrap();
        let columnwise = all_site_bound_general(&chain, e1).unwrap();
        let last = chain.site(3).unwrap().frobenius_norm();
        let expect = columnwise + e2 * norms.right_going[2] * last / norms.frob;
        assert!((got - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn general_bound_factors_match_dense_oracle() {
        let p = random_peps(2, 3, 2, 2, 14);
        let tn = to_network(&p).unwrap();
        let col = columns_to_mps(&p).unwrap();
        let norms = block_norms(&col).unwrap();
        // Left blocks: contract columns 0..=j and matricize physical legs
        // against the cut horizontal bonds.
        for j in 0..2usize {
            let vset: BTreeSet<String> = (0..2)
                .flat_map(|i| (0..=j).map(move |c| grid_vertex_id(i, c)))
                .collect();
            let sub = sub_network(&tn, &vset).unwrap();
            let t = contract_network_with_cap(&sub, DEFAULT_CAP).unwrap();
            let phys: Vec<String> = (0..=j)
                .flat_map(|c| (0..2).map(move |i| phys_id(i, c)))
                .collect();
            let rows: Vec<&str> = phys.iter().map(|s| s.as_str()).collect();
            let cuts: Vec<String> = (0..2).map(|i| h_edge_id(i, j)).collect();
            let cols: Vec<&str> = cuts.iter().map(|s| s.as_str()).collect();
            let mat = matricize(&t, &rows, &cols).unwrap();
            let dense = spectral_norm_default(&mat).unwrap();
            assert!(
                (norms.right_going[j] - dense).abs() < 1e-8 * dense,
                "column block {j}: {} vs {dense}",
                norms.right_going[j]
            );
        }
    }

    #[test]
    fn canonical_bound_on_stacked_grid() {
        let p = stacked_canonical_peps(2, 2, 2, 2, 1e-6).unwrap();
        let tn = to_network(&p).unwrap();
        assert!(is_canonical(&tn, &grid_vertex_id(1, 1), 1e-8).unwrap());
        let e = 1e-3;
        let cb = peps_bound_canonical(&p, e, e).unwrap();
        assert!(cb.exact_sum <= cb.simple * (1.0 + 1e-10));
        // Fused columns have bond D^m = 4, the stacked vertical chain has
        // unit bonds, so simple = e (1 + (n-1) sqrt(4)) + e (1 + (m-1) sqrt(1)).
        let expect_simple = e * (1.0 + 2.0) + e * (1.0 + 1.0);
        assert!((cb.simple - expect_simple).abs() < 1e-12);
        // The construction makes the exact sum approach the simple form.
        assert!((cb.exact_sum - cb.simple).abs() < 1e-4 * cb.simple);
        // A random grid is rejected by the canonical branch.
        let bad = random_peps(2, 2, 2, 2, 15);
        assert!(matches!(
            peps_bound_canonical(&bad, e, e),
            Err(Error::NotCanonical { .. })
        ));
    }

    #[test]
    fn canonical_bound_single_row_collapses_to_chain_bounds() {
        let chain = canonicalize(&random_mps(4, 3, 2, 16, uni()).unwrap(), 3).unwrap();
        let mut sites = Vec::new();
        for j in 0..4 {
            sites.push(chain.site(j).unwrap().clone());
        }
        let p = Peps::new(1, 4, sites).unwrap();
        let e1 = 1e-3;
        let e2 = 2e-3;
        let cb = peps_bound_canonical(&p, e1, e2).unwrap();
        let chain_cb = all_site_bound_canonical(&chain, e1).unwrap();
        assert!((cb.exact_sum - (chain_cb.exact_sum + e2)).abs() < 1e-12);
        assert!((cb.simple - (chain_cb.simple + e2)).abs() < 1e-12);
    }

    #[test]
    fn unit_bond_grid_gives_budget_counts() {
        let p = stacked_canonical_peps(3, 3, 1, 2, 0.0).unwrap();
        let e1 = 1e-3;
        let e2 = 2e-3;
        let cb = peps_bound_canonical(&p, e1, e2).unwrap();
        assert!((cb.simple - (3.0 * e1 + 3.0 * e2)).abs() < 1e-15);
        assert!((cb.exact_sum - cb.simple).abs() < 1e-10 * cb.simple);
    }

    #[test]
    fn comparison_factor_cases() {
        // Unit bond: (e1 n + e2 m) over (e1 (n-1) + e2 m).
        let f = comparison_factor_peps(2, 3, 1, 1.0, 1.0).unwrap();
        assert!((f - 5.0 / 4.0).abs() < 1e-15);
        // Columns unperturbed: the chain factor on the last column.
        let f = comparison_factor_peps(3, 5, 4, 0.0, 1.0).unwrap();
        assert!((f - (1.0 + 2.0 * 2.0) / 3.0).abs() < 1e-15);
        let f = comparison_factor_peps(2, 3, 4, 1.0, 1.0).unwrap();
        assert!((f - 3.0).abs() < 1e-15);
        assert!(matches!(
            comparison_factor_peps(2, 3, 4, 0.0, 0.0),
            Err(Error::InvalidPerturbationBudget { .. })
        ));
    }

    #[test]
    fn measured_errors_stay_under_the_canonical_bound() {
        let p = stacked_canonical_peps(2, 2, 2, 2, 1e-6).unwrap();
        let col = columns_to_mps(&p).unwrap();
        let base = state(&col).unwrap();
        let base_norm = base.frobenius_norm();
        let e1 = 1e-3;
        let e2 = 1e-3;
        let cb = peps_bound_canonical(&p, e1, e2).unwrap();
        let n = p.cols();
        let mut sup = 0.0_f64;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..500 {
            // Columnwise perturbations on all but the last column.
            let mut sites: Vec<DenseTensor> =
                (0..n).map(|j| col.site(j).unwrap().clone()).collect();
            for site in sites.iter_mut().take(n - 1) {
                let dir = crate::tensor::random_tensor_with(site.legs().to_vec(), uni(), &mut rng)
                    .unwrap();
                let scale = e1 * site.frobenius_norm() / dir.frobenius_norm();
                *site = site.add_scaled(&dir, scale).unwrap();
            }
            // Sitewise perturbations inside the last column.
            let mut grid = p.clone();
            for i in 0..p.rows() {
                let site = grid.site(i, n - 1).unwrap().clone();
                let dir = crate::tensor::random_tensor_with(site.legs().to_vec(), uni(), &mut rng)
                    .unwrap();
                let scale = e2 * site.frobenius_norm() / dir.frobenius_norm();
                grid = grid
                    .with_replaced_site(i, n - 1, site.add_scaled(&dir, scale).unwrap())
                    .unwrap();
            }
            let tn = to_network(&grid).unwrap();
            let last = column_tensor(&grid, &tn, n - 1, DEFAULT_CAP).unwrap();
            let groups = vec![
                (
                    "l",
                    (0..p.rows())
                        .map(|i| h_edge_id(i, n - 2))
                        .collect::<Vec<_>>(),
                ),
                (
                    "p",
                    (0..p.rows()).map(|i| phys_id(i, n - 1)).collect::<Vec<_>>(),
                ),
            ];
            sites[n - 1] = fuse_groups(&last, &groups).unwrap();
            let hat = Mps::new(sites, None).unwrap();
            let rel = state(&hat)
                .unwrap()
                .add_scaled(&base, -1.0)
                .unwrap()
                .frobenius_norm()
                / base_norm;
            sup = sup.max(rel);
        }
        let slack = 10.0 * (e1 * e1 + e2 * e2) * cb.exact_sum;
        assert!(
            sup <= cb.exact_sum + slack,
            "measured sup {sup} above exact bound {}",
            cb.exact_sum
        );
        assert!(sup > 0.2 * cb.exact_sum, "random search found only {sup}");
    }

    #[test]
    fn from_network_inverts_the_flattening() {
        let p = random_peps(2, 3, 2, 2, 21);
        let tn = to_network(&p).unwrap();
        assert_eq!(from_network(&tn).unwrap(), p);
        let chain = to_network(&random_peps(1, 2, 2, 2, 22));
        assert!(chain.is_ok());
        // A chain flattened with chain naming is rejected.
        let m = random_mps(3, 2, 2, 23, uni()).unwrap();
        let mtn = crate::mps::to_network(&m).unwrap();
        assert!(matches!(
            from_network(&mtn),
            Err(Error::NetworkInvalid { .. })
        ));
    }

    #[test]
    fn grid_validation() {
        // Mismatched horizontal bond.
        let a = random_tensor(legs(&[("r", 2), ("p", 2)]), uni(), 1).unwrap();
        let b = random_tensor(legs(&[("l", 3), ("p", 2)]), uni(), 2).unwrap();
        assert!(matches!(
            Peps::new(1, 2, vec![a, b]),
            Err(Error::DimensionError { .. })
        ));
        // Wrong leg count.
        let a = random_tensor(legs(&[("p", 2)]), uni(), 3).unwrap();
        let b = random_tensor(legs(&[("l", 2), ("p", 2)]), uni(), 4).unwrap();
        assert!(matches!(
            Peps::new(1, 2, vec![a, b]),
            Err(Error::ShapeError { .. })
        ));
    }
}
