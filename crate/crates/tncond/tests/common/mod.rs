//! Shared fixtures for the integration suites: an independent
//! finite-difference oracle for derivative norms, small random network
//! generators, and a record type for measured-error-versus-bound audits.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tncond::network::{contract_network, Edge, OpenLeg, TensorNetwork};
use tncond::tensor::{legs, random_tensor_with, DenseTensor, Dist};
use tncond::Result;

/// One measured perturbation outcome next to the bound that must dominate
/// it. `measured` and `bound` are in the same units (both relative or both
/// absolute); `eps` is the perturbation scale driving the quadratic slack.
pub struct ErrorRecord {
    pub label: String,
    pub measured: f64,
    pub bound: f64,
    pub eps: f64,
}

impl ErrorRecord {
    pub fn new(label: impl Into<String>, measured: f64, bound: f64, eps: f64) -> Self {
        Self {
            label: label.into(),
            measured,
            bound,
            eps,
        }
    }
}

/// Finite-difference directional quotient
/// `|T(sites with v := v + h*dir) - T(sites)|_F / (h |dir|_F)`,
/// computed purely from contractions of modified networks.
pub fn fd_quotient(
    tn: &TensorNetwork,
    base_out: &DenseTensor,
    vid: &str,
    dir: &DenseTensor,
    h: f64,
) -> Result<f64> {
    let site = tn.vertex(vid)?;
    let moved = tn.with_replaced_vertex(vid, site.add_scaled(dir, h)?)?;
    let out = contract_network(&moved)?;
    let diff = out.add_scaled(base_out, -1.0)?.frobenius_norm();
    Ok(diff / (h * dir.frobenius_norm()))
}

/// Largest singular value of the finite-difference Jacobian of the
/// contraction with respect to one site, together with the attaining
/// input direction. The Jacobian is assembled column by column from
/// coordinate finite differences, so this shares no code with the
/// environment-based machinery it is checked against.
pub fn fd_jacobian_top(
    tn: &TensorNetwork,
    base_out: &DenseTensor,
    vid: &str,
    h: f64,
) -> Result<(f64, DenseTensor)> {
    let site = tn.vertex(vid)?;
    let in_len = site.data().len();
    let out_len = base_out.data().len();
    let mut jac = DMatrix::<f64>::zeros(out_len, in_len);
    for k in 0..in_len {
        let mut e = DenseTensor::zeros(site.legs().to_vec())?;
        e.data_mut()[k] = 1.0;
        let moved = tn.with_replaced_vertex(vid, site.add_scaled(&e, h)?)?;
        let out = contract_network(&moved)?;
        for (r, (y, y0)) in out.data().iter().zip(base_out.data()).enumerate() {
            jac[(r, k)] = (y - y0) / h;
        }
    }
    let svd = jac.svd(false, true);
    let sigma = svd.singular_values[0];
    let vt = svd.v_t.expect("right singular vectors requested");
    let top: Vec<f64> = (0..in_len).map(|k| vt[(0, k)]).collect();
    Ok((sigma, DenseTensor::new(site.legs().to_vec(), top)?))
}

/// Random connected network with 2 to 4 vertices, contracted and open leg
/// dimensions in 2..=4, and at most a few open legs.
pub fn random_small_network(seed: u64) -> TensorNetwork {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nv = rng.gen_range(2..=4usize);
    // Per-vertex leg lists are grown while edges are decided.
    let mut vertex_legs: Vec<Vec<(String, usize)>> = vec![Vec::new(); nv];
    let mut edges = Vec::new();
    let add_edge = |rng: &mut ChaCha8Rng,
                    vertex_legs: &mut Vec<Vec<(String, usize)>>,
                    edges: &mut Vec<Edge>,
                    i: usize,
                    j: usize| {
        let id = format!("e{}", edges.len());
        let dim = rng.gen_range(2..=4usize);
        let leg_i = format!("{id}a");
        let leg_j = format!("{id}b");
        vertex_legs[i].push((leg_i.clone(), dim));
        vertex_legs[j].push((leg_j.clone(), dim));
        edges.push(Edge {
            id,
            a: (format!("v{i}"), leg_i),
            b: (format!("v{j}"), leg_j),
        });
    };
    for i in 1..nv {
        let parent = rng.gen_range(0..i);
        add_edge(&mut rng, &mut vertex_legs, &mut edges, parent, i);
    }
    if nv >= 3 && rng.gen_bool(0.5) {
        let i = rng.gen_range(0..nv);
        let mut j = rng.gen_range(0..nv);
        while j == i {
            j = rng.gen_range(0..nv);
        }
        add_edge(&mut rng, &mut vertex_legs, &mut edges, i.min(j), i.max(j));
    }
    let mut opens = Vec::new();
    for (i, leg_list) in vertex_legs.iter_mut().enumerate() {
        for _ in 0..rng.gen_range(0..=1usize) {
            let id = format!("o{}", opens.len());
            let dim = rng.gen_range(2..=4usize);
            leg_list.push((id.clone(), dim));
            opens.push(OpenLeg {
                id: id.clone(),
                vertex: format!("v{i}"),
                leg: id,
            });
        }
    }
    let mut vertices = Vec::new();
    for (i, leg_list) in vertex_legs.into_iter().enumerate() {
        let spec: Vec<(&str, usize)> = leg_list.iter().map(|(n, d)| (n.as_str(), *d)).collect();
        let t = random_tensor_with(legs(&spec), Dist::Uniform { lo: -1.0, hi: 1.0 }, &mut rng)
            .expect("random site");
        vertices.push((format!("v{i}"), t));
    }
    TensorNetwork::new(vertices, edges, opens).expect("generated network is valid")
}

/// Scalar-output ring: `nv` vertices in a cycle, every leg contracted.
/// With `nv == 2` the two vertices share a double bond.
pub fn scalar_ring_network(nv: usize, d: usize, seed: u64) -> TensorNetwork {
    assert!(nv >= 2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vertex_legs: Vec<Vec<(String, usize)>> = vec![Vec::new(); nv];
    let mut edges = Vec::new();
    for i in 0..nv {
        let j = (i + 1) % nv;
        let id = format!("e{i}");
        let leg_i = format!("{id}a");
        let leg_j = format!("{id}b");
        vertex_legs[i].push((leg_i.clone(), d));
        vertex_legs[j].push((leg_j.clone(), d));
        edges.push(Edge {
            id,
            a: (format!("v{i}"), leg_i),
            b: (format!("v{j}"), leg_j),
        });
    }
    let mut vertices = Vec::new();
    for (i, leg_list) in vertex_legs.into_iter().enumerate() {
        let spec: Vec<(&str, usize)> = leg_list.iter().map(|(n, d)| (n.as_str(), *d)).collect();
        let t = random_tensor_with(legs(&spec), Dist::Uniform { lo: -1.0, hi: 1.0 }, &mut rng)
            .expect("random site");
        vertices.push((format!("v{i}"), t));
    }
    TensorNetwork::new(vertices, edges, vec![]).expect("ring network is valid")
}
