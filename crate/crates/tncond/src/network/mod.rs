//! Graph model of a tensor network.
//!
//! A network is a set of named vertices carrying [`DenseTensor`]s, a set of
//! contracted edges joining legs on two distinct vertices, and a set of open
//! legs (the network's output modes). Every vertex leg belongs to exactly one
//! contracted edge or one open leg, and both edge kinds carry globally unique
//! edge ids.
//!
//! Edge ids double as the flattening convention: whenever this crate orders
//! the legs of a contraction result, the rows or columns of an environment
//! matrix, or the entries of a vectorized state, it sorts by edge id. Nothing
//! depends on which total order is used as long as every module uses the same
//! one, and lexicographic edge-id order is the one chosen here.
//!
//! ```text
//!           e1        e2
//!     A ---------- B ---------- C
//!     |            |            |
//!     o1           o2           o3      (open legs)
//! ```
//!
//! The environment of a vertex set H is the contraction of the complement
//! network; matricized with rows over the complement's open legs and columns
//! over the cut edges toward H it forms the block `N`, and the full
//! environment matrix is `N (x) I` with the identity running over H's own
//! open legs.

pub mod json;

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::spectral::{self, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::tensor::{contract_pair, kron, matricize, DenseTensor, Legs, Matricization};

/// Default cap on dense materialization, in entries.
pub const DEFAULT_CAP: usize = 1 << 26;

/// A contracted edge between two distinct vertices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub id: String,
    /// `(vertex-id, leg-id)` endpoint.
    pub a: (String, String),
    pub b: (String, String),
}

/// An open leg: an output mode of the network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpenLeg {
    pub id: String,
    pub vertex: String,
    pub leg: String,
}

/// An immutable, validated tensor network.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorNetwork {
    vertices: Vec<(String, DenseTensor)>,
    contracted_edges: Vec<Edge>,
    open_legs: Vec<OpenLeg>,
}

impl TensorNetwork {
    pub fn new(
        vertices: Vec<(String, DenseTensor)>,
        contracted_edges: Vec<Edge>,
        open_legs: Vec<OpenLeg>,
    ) -> Result<Self> {
        let tn = Self {
            vertices,
            contracted_edges,
            open_legs,
        };
        tn.validate()?;
        Ok(tn)
    }

    fn invalid(detail: impl Into<String>) -> Error {
        Error::NetworkInvalid {
            detail: detail.into(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.vertices.is_empty() {
            return Err(Self::invalid("network has no vertices"));
        }
        let mut vids = BTreeSet::new();
        for (vid, _) in &self.vertices {
            if !vids.insert(vid.clone()) {
                return Err(Self::invalid(format!("duplicate vertex id '{vid}'")));
            }
        }
        let mut eids = BTreeSet::new();
        for e in &self.contracted_edges {
            if !eids.insert(e.id.clone()) {
                return Err(Self::invalid(format!("duplicate edge id '{}'", e.id)));
            }
        }
        for o in &self.open_legs {
            if !eids.insert(o.id.clone()) {
                return Err(Self::invalid(format!("duplicate edge id '{}'", o.id)));
            }
        }
        // Each vertex leg must be referenced exactly once.
        let mut seen: BTreeMap<(String, String), String> = BTreeMap::new();
        let mut reference = |vid: &str, leg: &str, eid: &str| -> Result<()> {
            let t = self
                .vertices
                .iter()
                .find(|(v, _)| v == vid)
                .ok_or_else(|| {
                    Self::invalid(format!("edge '{eid}' references unknown vertex '{vid}'"))
                })?;
            if !t.1.has_leg(leg) {
                return Err(Self::invalid(format!(
                    "edge '{eid}' references unknown leg '{leg}' on vertex '{vid}'"
                )));
            }
            if let Some(prev) = seen.insert((vid.to_string(), leg.to_string()), eid.to_string()) {
                return Err(Self::invalid(format!(
                    "leg '{leg}' on vertex '{vid}' referenced by both '{prev}' and '{eid}'"
                )));
            }
            Ok(())
        };
        for e in &self.contracted_edges {
            if e.a.0 == e.b.0 {
                return Err(Self::invalid(format!(
                    "edge '{}' joins vertex '{}' to itself",
                    e.id, e.a.0
                )));
            }
            reference(&e.a.0, &e.a.1, &e.id)?;
            reference(&e.b.0, &e.b.1, &e.id)?;
        }
        for o in &self.open_legs {
            reference(&o.vertex, &o.leg, &o.id)?;
        }
        for e in &self.contracted_edges {
            let da = self.vertex(&e.a.0)?.leg_dim(&e.a.1)?;
            let db = self.vertex(&e.b.0)?.leg_dim(&e.b.1)?;
            if da != db {
                return Err(Self::invalid(format!(
                    "edge '{}' joins dims {da} and {db}",
                    e.id
                )));
            }
        }
        // Coverage: every leg of every tensor is referenced.
        for (vid, t) in &self.vertices {
            for (leg, _) in t.legs() {
                if !seen.contains_key(&(vid.clone(), leg.clone())) {
                    return Err(Self::invalid(format!(
                        "leg '{leg}' on vertex '{vid}' is neither contracted nor open"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn vertex_ids(&self) -> Vec<&str> {
        self.vertices.iter().map(|(v, _)| v.as_str()).collect()
    }

    pub fn vertices(&self) -> &[(String, DenseTensor)] {
        &self.vertices
    }

    pub fn contracted_edges(&self) -> &[Edge] {
        &self.contracted_edges
    }

    pub fn open_legs(&self) -> &[OpenLeg] {
        &self.open_legs
    }

    pub fn vertex(&self, vid: &str) -> Result<&DenseTensor> {
        self.vertices
            .iter()
            .find(|(v, _)| v == vid)
            .map(|(_, t)| t)
            .ok_or_else(|| Error::VertexNotFound {
                vertex: vid.to_string(),
            })
    }

    /// Replaces one vertex tensor; the replacement must carry the same legs
    /// with the same dims.
    pub fn with_replaced_vertex(&self, vid: &str, tensor: DenseTensor) -> Result<Self> {
        let current = self.vertex(vid)?;
        for (leg, dim) in current.legs() {
            let nd = tensor.leg_dim(leg)?;
            if nd != *dim {
                return Err(Error::DimensionError {
                    a_leg: leg.clone(),
                    a_dim: *dim,
                    b_leg: leg.clone(),
                    b_dim: nd,
                });
            }
        }
        if tensor.order() != current.order() {
            return Err(Error::ShapeError {
                detail: format!(
                    "replacement for '{vid}' has {} legs, expected {}",
                    tensor.order(),
                    current.order()
                ),
            });
        }
        let mut out = self.clone();
        for (v, t) in out.vertices.iter_mut() {
            if v == vid {
                *t = tensor;
                break;
            }
        }
        Ok(out)
    }

    /// Edge id attached to a specific vertex leg.
    pub fn edge_id_for_leg(&self, vid: &str, leg: &str) -> Result<&str> {
        for e in &self.contracted_edges {
            if (e.a.0 == vid && e.a.1 == leg) || (e.b.0 == vid && e.b.1 == leg) {
                return Ok(&e.id);
            }
        }
        for o in &self.open_legs {
            if o.vertex == vid && o.leg == leg {
                return Ok(&o.id);
            }
        }
        Err(Error::LegNotFound {
            leg: format!("{vid}.{leg}"),
        })
    }

    /// The vertex tensor with each leg renamed to the id of the edge or open
    /// leg it participates in. This is the canonical coordinate system used
    /// by contraction and by all environment-matrix plumbing.
    pub fn site_with_edge_legs(&self, vid: &str) -> Result<DenseTensor> {
        let t = self.vertex(vid)?;
        let mut legs: Legs = Vec::with_capacity(t.order());
        for (leg, dim) in t.legs() {
            legs.push((self.edge_id_for_leg(vid, leg)?.to_string(), *dim));
        }
        DenseTensor::new(legs, t.data().to_vec())
    }

    /// Inverse of [`site_with_edge_legs`](Self::site_with_edge_legs): takes a
    /// tensor whose legs are edge ids and renames them back to the vertex's
    /// local leg names, so results can be reported in caller coordinates.
    pub fn site_from_edge_legs(&self, vid: &str, t: &DenseTensor) -> Result<DenseTensor> {
        let site = self.vertex(vid)?;
        let mut by_edge_id: BTreeMap<String, String> = BTreeMap::new();
        for (leg, _) in site.legs() {
            let eid = self.edge_id_for_leg(vid, leg)?.to_string();
            by_edge_id.insert(eid, leg.clone());
        }
        let mut renamed: Legs = Vec::with_capacity(t.order());
        for (eid, dim) in t.legs() {
            let local = by_edge_id.get(eid).ok_or_else(|| Error::LegNotFound {
                leg: format!("{vid}.{eid}"),
            })?;
            renamed.push((local.clone(), *dim));
        }
        DenseTensor::new(renamed, t.data().to_vec())
    }

    /// All open-leg edge ids in sorted order: the global output ordering.
    pub fn open_edge_ids_sorted(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.open_legs.iter().map(|o| o.id.clone()).collect();
        ids.sort();
        ids
    }

    /// Open legs owned by the given vertex set, `(edge-id, dim)` sorted by id.
    pub fn open_legs_of(&self, vset: &BTreeSet<String>) -> Result<Legs> {
        let mut out: Legs = Vec::new();
        for o in &self.open_legs {
            if vset.contains(&o.vertex) {
                let dim = self.vertex(&o.vertex)?.leg_dim(&o.leg)?;
                out.push((o.id.clone(), dim));
            }
        }
        out.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(out)
    }

    /// Contracted edges with exactly one endpoint inside `vset`,
    /// `(edge-id, dim)` sorted by id.
    pub fn cut_edges_of(&self, vset: &BTreeSet<String>) -> Result<Legs> {
        let mut out: Legs = Vec::new();
        for e in &self.contracted_edges {
            let ina = vset.contains(&e.a.0);
            let inb = vset.contains(&e.b.0);
            if ina != inb {
                let dim = self.vertex(&e.a.0)?.leg_dim(&e.a.1)?;
                out.push((e.id.clone(), dim));
            }
        }
        out.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(out)
    }

    /// Total Frobenius norm of the contraction output, bounded by the product
    /// of open dims; used for cap checks.
    fn open_entries(&self) -> u128 {
        let mut total: u128 = 1;
        for o in &self.open_legs {
            let dim = self
                .vertex(&o.vertex)
                .and_then(|t| t.leg_dim(&o.leg))
                .unwrap_or(1);
            total = total.saturating_mul(dim as u128);
        }
        total
    }
}

fn vset_of(ids: &[&str]) -> BTreeSet<String> {
    ids.iter().map(|s| s.to_string()).collect()
}

/// Helper to build a vertex-id set from string slices.
pub fn vertex_set(ids: &[&str]) -> BTreeSet<String> {
    vset_of(ids)
}

struct Component {
    vids: BTreeSet<String>,
    t: DenseTensor,
}

fn shared_leg_ids(a: &DenseTensor, b: &DenseTensor) -> Vec<String> {
    a.legs()
        .iter()
        .filter(|(id, _)| b.has_leg(id))
        .map(|(id, _)| id.clone())
        .collect()
}

fn merged_size(a: &DenseTensor, b: &DenseTensor, shared: &[String]) -> u128 {
    let s: u128 = shared
        .iter()
        .map(|id| a.leg_dim(id).unwrap_or(1) as u128)
        .product();
    (a.len() as u128 / s) * (b.len() as u128 / s)
}

fn merge(a: Component, b: Component, cap: usize) -> Result<Component> {
    let shared = shared_leg_ids(&a.t, &b.t);
    let out_size = merged_size(&a.t, &b.t, &shared);
    if out_size > cap as u128 {
        return Err(Error::TooLargeToMaterialize {
            entries: out_size,
            cap: cap as u128,
        });
    }
    let pairs: Vec<(&str, &str)> = shared.iter().map(|id| (id.as_str(), id.as_str())).collect();
    let t = contract_pair(&a.t, &b.t, &pairs)?;
    let mut vids = a.vids;
    vids.extend(b.vids);
    Ok(Component { vids, t })
}

fn finish(
    mut comps: Vec<Component>,
    choose: impl Fn(&[Component]) -> (usize, usize),
    cap: usize,
) -> Result<DenseTensor> {
    while comps.len() > 1 {
        let (i, j) = choose(&comps);
        debug_assert!(i < j);
        let b = comps.swap_remove(j);
        let a = comps.swap_remove(i);
        comps.push(merge(a, b, cap)?);
    }
    let t = comps.pop().expect("nonempty").t;
    let mut ids = t.leg_ids();
    ids.sort();
    t.permuted(&ids)
}

/// Contracts the whole network to a dense tensor whose legs are the open-leg
/// edge ids in sorted order. Pair order is chosen greedily by smallest
/// resulting intermediate.
pub fn contract_network(tn: &TensorNetwork) -> Result<DenseTensor> {
    contract_network_with_cap(tn, DEFAULT_CAP)
}

pub fn contract_network_with_cap(tn: &TensorNetwork, cap: usize) -> Result<DenseTensor> {
    tn.validate()?;
    if tn.open_entries() > cap as u128 {
        return Err(Error::TooLargeToMaterialize {
            entries: tn.open_entries(),
            cap: cap as u128,
        });
    }
    let comps = tn
        .vertex_ids()
        .iter()
        .map(|vid| {
            Ok(Component {
                vids: vset_of(&[vid]),
                t: tn.site_with_edge_legs(vid)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    finish(
        comps,
        |cs| {
            // Prefer pairs that share an edge; among them pick the smallest
            // output, breaking ties by index for determinism.
            let mut best: Option<(bool, u128, usize, usize)> = None;
            for i in 0..cs.len() {
                for j in (i + 1)..cs.len() {
                    let shared = shared_leg_ids(&cs[i].t, &cs[j].t);
                    let connected = !shared.is_empty();
                    let size = merged_size(&cs[i].t, &cs[j].t, &shared);
                    let cand = (connected, size, i, j);
                    let better = match &best {
                        None => true,
                        Some((bc, bs, _, _)) => {
                            (connected && !bc) || (connected == *bc && size < *bs)
                        }
                    };
                    if better {
                        best = Some(cand);
                    }
                }
            }
            let (_, _, i, j) = best.expect("at least two components");
            (i, j)
        },
        cap,
    )
}

/// Contracts with a pair order driven by a seeded generator; exists so tests
/// can check order invariance. Any pair (connected or not) may be chosen.
pub fn contract_network_seeded_order(
    tn: &TensorNetwork,
    seed: u64,
    cap: usize,
) -> Result<DenseTensor> {
    use rand::Rng;
    use rand::SeedableRng;
    tn.validate()?;
    let comps = tn
        .vertex_ids()
        .iter()
        .map(|vid| {
            Ok(Component {
                vids: vset_of(&[vid]),
                t: tn.site_with_edge_legs(vid)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let rng = std::cell::RefCell::new(rand_chacha::ChaCha8Rng::seed_from_u64(seed));
    finish(
        comps,
        |cs| {
            let mut r = rng.borrow_mut();
            let i = r.gen_range(0..cs.len() - 1);
            let j = r.gen_range(i + 1..cs.len());
            (i, j)
        },
        cap,
    )
}

/// Restriction of the network to `vset`; formerly contracted edges leaving
/// the set become open legs that keep their original edge ids.
pub fn sub_network(tn: &TensorNetwork, vset: &BTreeSet<String>) -> Result<TensorNetwork> {
    for vid in vset {
        tn.vertex(vid)?;
    }
    if vset.is_empty() {
        return Err(Error::NetworkInvalid {
            detail: "sub-network of empty vertex set".to_string(),
        });
    }
    let vertices: Vec<(String, DenseTensor)> = tn
        .vertices
        .iter()
        .filter(|(v, _)| vset.contains(v))
        .cloned()
        .collect();
    let mut edges = Vec::new();
    let mut open = Vec::new();
    for e in &tn.contracted_edges {
        let ina = vset.contains(&e.a.0);
        let inb = vset.contains(&e.b.0);
        match (ina, inb) {
            (true, true) => edges.push(e.clone()),
            (true, false) => open.push(OpenLeg {
                id: e.id.clone(),
                vertex: e.a.0.clone(),
                leg: e.a.1.clone(),
            }),
            (false, true) => open.push(OpenLeg {
                id: e.id.clone(),
                vertex: e.b.0.clone(),
                leg: e.b.1.clone(),
            }),
            (false, false) => {}
        }
    }
    for o in &tn.open_legs {
        if vset.contains(&o.vertex) {
            open.push(o.clone());
        }
    }
    TensorNetwork::new(vertices, edges, open)
}

/// The environment matrix `M = N (x) I` of a vertex set.
#[derive(Debug, Clone)]
pub struct EnvironmentMatrix {
    n_block: Matricization,
    identity_legs: Legs,
}

impl EnvironmentMatrix {
    pub fn n_block(&self) -> &Matricization {
        &self.n_block
    }

    /// `(edge-id, dim)` of the identity factor, sorted by edge id.
    pub fn identity_legs(&self) -> &[(String, usize)] {
        &self.identity_legs
    }

    pub fn identity_dims(&self) -> Vec<usize> {
        self.identity_legs.iter().map(|(_, d)| *d).collect()
    }

    pub fn identity_dim_product(&self) -> usize {
        self.identity_legs.iter().map(|(_, d)| *d).product()
    }

    /// Rows of the full (Kronecker) matrix.
    pub fn rows(&self) -> usize {
        self.n_block.rows() * self.identity_dim_product()
    }

    /// Columns of the full (Kronecker) matrix.
    pub fn cols(&self) -> usize {
        self.n_block.cols() * self.identity_dim_product()
    }

    /// Spectral norm; the identity factor never changes it.
    pub fn spectral_norm(&self, tol: f64, max_iter: usize) -> Result<f64> {
        spectral::spectral_norm(&self.n_block, tol, max_iter)
    }

    pub fn spectral_norm_default(&self) -> Result<f64> {
        self.spectral_norm(DEFAULT_TOL, DEFAULT_MAX_ITER)
    }

    /// Frobenius norm of the full matrix: `|N|_F * sqrt(prod identity dims)`.
    pub fn frobenius_norm(&self) -> f64 {
        self.n_block.frobenius_norm() * (self.identity_dim_product() as f64).sqrt()
    }

    /// Applies the environment matrix to a site-space tensor whose legs are
    /// the cut edge ids plus the set's own open-leg ids. The result carries
    /// the full network's open legs.
    pub fn apply(&self, site: &DenseTensor) -> Result<DenseTensor> {
        let col_ids: Vec<&str> = self
            .n_block
            .col_legs()
            .iter()
            .map(|(id, _)| id.as_str())
            .collect();
        let id_ids: Vec<&str> = self
            .identity_legs
            .iter()
            .map(|(id, _)| id.as_str())
            .collect();
        let m = {
            let mut order = col_ids.clone();
            order.extend(id_ids.iter().copied());
            site.permuted(&order)?
        };
        let idim: usize = self.identity_dim_product();
        let data = crate::tensor::matmul(
            self.n_block.data(),
            self.n_block.rows(),
            self.n_block.cols(),
            m.data(),
            idim,
        );
        let mut legs: Legs = self.n_block.row_legs().to_vec();
        legs.extend(self.identity_legs.iter().cloned());
        DenseTensor::new(legs, data)
    }

    /// Applies the transpose, mapping a full-output tensor back to site space.
    pub fn apply_transpose(&self, out: &DenseTensor) -> Result<DenseTensor> {
        let row_ids: Vec<&str> = self
            .n_block
            .row_legs()
            .iter()
            .map(|(id, _)| id.as_str())
            .collect();
        let id_ids: Vec<&str> = self
            .identity_legs
            .iter()
            .map(|(id, _)| id.as_str())
            .collect();
        let m = {
            let mut order = row_ids.clone();
            order.extend(id_ids.iter().copied());
            out.permuted(&order)?
        };
        let idim: usize = self.identity_dim_product();
        let nt = self.n_block.transposed();
        let data = crate::tensor::matmul(nt.data(), nt.rows(), nt.cols(), m.data(), idim);
        let mut legs: Legs = self.n_block.col_legs().to_vec();
        legs.extend(self.identity_legs.iter().cloned());
        DenseTensor::new(legs, data)
    }

    /// Gram matrix `M^T M = (N^T N) (x) I` without materializing the identity
    /// factor: returns just `N^T N`.
    pub fn gram_n(&self) -> Result<Matricization> {
        // Both sides of N^T N carry the cut-edge ids; prefix the left copy
        // so the product is a valid matricization.
        let nt = self.n_block.transposed();
        let rows: Legs = nt
            .row_legs()
            .iter()
            .map(|(id, d)| (format!("gram~{id}"), *d))
            .collect();
        let renamed = Matricization::from_parts(rows, nt.col_legs().to_vec(), nt.data().to_vec())?;
        renamed.matmul(&self.n_block)
    }

    /// Dense Kronecker materialization, for tests and small systems only.
    pub fn materialize(&self) -> Result<Matricization> {
        let idim = self.identity_dim_product();
        let mut eye = Matricization::identity(idim);
        // Rename to avoid leg-id collisions with the N block.
        eye = Matricization::from_parts(
            crate::tensor::legs(&[("env~idr", idim)]),
            crate::tensor::legs(&[("env~idc", idim)]),
            eye.data().to_vec(),
        )?;
        kron(&self.n_block, &eye)
    }
}

/// Environment matrix of `vset` inside `tn`: contracts the complement
/// network and matricizes it with rows over the complement's open legs and
/// columns over the cut edges toward `vset`, both in sorted edge-id order.
pub fn environment_matrix(
    tn: &TensorNetwork,
    vset: &BTreeSet<String>,
) -> Result<EnvironmentMatrix> {
    environment_matrix_with_cap(tn, vset, DEFAULT_CAP)
}

pub fn environment_matrix_with_cap(
    tn: &TensorNetwork,
    vset: &BTreeSet<String>,
    cap: usize,
) -> Result<EnvironmentMatrix> {
    for vid in vset {
        tn.vertex(vid)?;
    }
    let all: BTreeSet<String> = tn.vertex_ids().iter().map(|s| s.to_string()).collect();
    if vset.is_empty() || *vset == all {
        return Err(Error::PartitionError {
            detail: "environment requires a proper nonempty vertex subset".to_string(),
        });
    }
    let complement: BTreeSet<String> = all.difference(vset).cloned().collect();
    let env_net = sub_network(tn, &complement)?;
    let env_tensor = contract_network_with_cap(&env_net, cap)?;
    let row_legs = tn.open_legs_of(&complement)?;
    let col_legs = tn.cut_edges_of(vset)?;
    let rows: Vec<&str> = row_legs.iter().map(|(id, _)| id.as_str()).collect();
    let cols: Vec<&str> = col_legs.iter().map(|(id, _)| id.as_str()).collect();
    let n_block = matricize(&env_tensor, &rows, &cols)?;
    let identity_legs = tn.open_legs_of(vset)?;
    Ok(EnvironmentMatrix {
        n_block,
        identity_legs,
    })
}

/// True when the two networks share vertex ids, contracted edges, and open
/// legs. Edge endpoint order and listing order are ignored; tensor values
/// are not compared.
pub fn same_topology(a: &TensorNetwork, b: &TensorNetwork) -> bool {
    type EdgeKey = (String, (String, String), (String, String));
    let vids = |t: &TensorNetwork| -> BTreeSet<String> {
        t.vertex_ids().into_iter().map(str::to_string).collect()
    };
    let edges = |t: &TensorNetwork| -> BTreeSet<EdgeKey> {
        t.contracted_edges()
            .iter()
            .map(|e| {
                let mut ep = [e.a.clone(), e.b.clone()];
                ep.sort();
                (e.id.clone(), ep[0].clone(), ep[1].clone())
            })
            .collect()
    };
    let opens = |t: &TensorNetwork| -> BTreeSet<(String, String, String)> {
        t.open_legs()
            .iter()
            .map(|o| (o.id.clone(), o.vertex.clone(), o.leg.clone()))
            .collect()
    };
    vids(a) == vids(b) && edges(a) == edges(b) && opens(a) == opens(b)
}

/// Outcome of the matrix-vector identity check, with a deviation diagnostic.
#[derive(Debug, Clone, Copy)]
pub struct MatvecCheck {
    pub passed: bool,
    /// `|lhs - rhs|_F / |lhs|_F` (absolute deviation if the state is zero).
    pub rel_deviation: f64,
}

/// Verifies that contracting the whole network equals applying the
/// environment matrix of `vset` to the contracted sub-network.
pub fn verify_matvec_identity(
    tn: &TensorNetwork,
    vset: &BTreeSet<String>,
    tol: f64,
) -> Result<MatvecCheck> {
    verify_matvec_identity_with_cap(tn, vset, tol, DEFAULT_CAP)
}

pub fn verify_matvec_identity_with_cap(
    tn: &TensorNetwork,
    vset: &BTreeSet<String>,
    tol: f64,
    cap: usize,
) -> Result<MatvecCheck> {
    let full = contract_network_with_cap(tn, cap)?;
    let sub = contract_network_with_cap(&sub_network(tn, vset)?, cap)?;
    let env = environment_matrix_with_cap(tn, vset, cap)?;
    let rhs = env.apply(&sub)?;
    let diff = full.add_scaled(&rhs, -1.0)?;
    let denom = full.frobenius_norm();
    let rel = if denom > 0.0 {
        diff.frobenius_norm() / denom
    } else {
        diff.frobenius_norm()
    };
    Ok(MatvecCheck {
        passed: rel <= tol,
        rel_deviation: rel,
    })
}

/// True iff the environment matrix of `center` is an isometry: its Gram
/// `N^T N` equals the identity entrywise within `tol`. The Kronecker factor
/// is never materialized; the identity block contributes exactly.
pub fn is_canonical(tn: &TensorNetwork, center: &str, tol: f64) -> Result<bool> {
    is_canonical_with_cap(tn, center, tol, DEFAULT_CAP)
}

pub fn is_canonical_with_cap(
    tn: &TensorNetwork,
    center: &str,
    tol: f64,
    cap: usize,
) -> Result<bool> {
    tn.vertex(center)?;
    if tn.n_vertices() == 1 {
        // Trivial environment: a 1x1 identity.
        return Ok(true);
    }
    let mut vset = BTreeSet::new();
    vset.insert(center.to_string());
    let env = environment_matrix_with_cap(tn, &vset, cap)?;
    let g = env.gram_n()?;
    let n = g.rows();
    let mut max_dev = 0.0_f64;
    for i in 0..n {
        for j in 0..n {
            let expect = if i == j { 1.0 } else { 0.0 };
            max_dev = max_dev.max((g.at(i, j) - expect).abs());
        }
    }
    Ok(max_dev <= tol)
}
