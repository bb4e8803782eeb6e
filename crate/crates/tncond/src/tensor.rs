//! Dense multiway arrays with named legs.
//!
//! A [`DenseTensor`] stores a flat `f64` buffer in row-major order over an
//! ordered list of `(leg-id, dim)` pairs. Leg ids are opaque strings; every
//! higher layer (networks, chains, grids) identifies indices by leg id rather
//! than by position, so permutations are explicit and cheap to audit.
//!
//! A [`Matricization`] is a tensor reshaped as a matrix: an ordered split of
//! the legs into row legs and column legs, flattened row-major on each side.
//! All matrix conventions in this crate reduce to this one rule.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Entry distributions for random tensors.
///
/// `CenteredUniform { sigma }` draws uniformly from `[-sigma*sqrt(3), sigma*sqrt(3)]`,
/// which has mean zero and variance exactly `sigma^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dist {
    Uniform { lo: f64, hi: f64 },
    CenteredUniform { sigma: f64 },
}

impl Dist {
    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            Dist::Uniform { lo, hi } => rng.gen_range(lo..=hi),
            Dist::CenteredUniform { sigma } => {
                let half = sigma * 3.0_f64.sqrt();
                rng.gen_range(-half..=half)
            }
        }
    }
}

/// An ordered `(leg-id, dim)` list.
pub type Legs = Vec<(String, usize)>;

/// Convenience constructor for leg lists in tests and builders.
pub fn legs(spec: &[(&str, usize)]) -> Legs {
    spec.iter().map(|(id, d)| (id.to_string(), *d)).collect()
}

/// Dense real tensor with named legs and row-major data.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    legs: Legs,
    data: Vec<f64>,
}

impl Serialize for DenseTensor {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("DenseTensor", 2)?;
        st.serialize_field("legs", &self.legs)?;
        st.serialize_field("data", &self.data)?;
        st.end()
    }
}

impl<'de> Deserialize<'de> for DenseTensor {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            legs: Legs,
            data: Vec<f64>,
        }
        let raw = Raw::deserialize(d)?;
        DenseTensor::new(raw.legs, raw.data).map_err(serde::de::Error::custom)
    }
}

impl DenseTensor {
    /// Builds a tensor, validating that leg ids are distinct, dims are
    /// positive, and the buffer length matches the dim product.
    pub fn new(legs: Legs, data: Vec<f64>) -> Result<Self> {
        let mut len: usize = 1;
        for (i, (id, d)) in legs.iter().enumerate() {
            if *d == 0 {
                return Err(Error::ShapeError {
                    detail: format!("leg '{id}' has zero dimension"),
                });
            }
            if legs[..i].iter().any(|(other, _)| other == id) {
                return Err(Error::ShapeError {
                    detail: format!("duplicate leg id '{id}'"),
                });
            }
            len = len.checked_mul(*d).ok_or(Error::TooLargeToMaterialize {
                entries: u128::MAX,
                cap: u128::MAX,
            })?;
        }
        if data.len() != len {
            return Err(Error::ShapeError {
                detail: format!("data length {} != dim product {len}", data.len()),
            });
        }
        Ok(Self { legs, data })
    }

    /// Order-0 tensor holding a single value.
    pub fn scalar(value: f64) -> Self {
        Self {
            legs: Vec::new(),
            data: vec![value],
        }
    }

    pub fn zeros(legs: Legs) -> Result<Self> {
        let len = legs.iter().map(|(_, d)| *d).product();
        Self::new(legs, vec![0.0; len])
    }

    pub fn legs(&self) -> &[(String, usize)] {
        &self.legs
    }

    pub fn leg_ids(&self) -> Vec<&str> {
        self.legs.iter().map(|(id, _)| id.as_str()).collect()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.legs.iter().map(|(_, d)| *d).collect()
    }

    pub fn order(&self) -> usize {
        self.legs.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn has_leg(&self, id: &str) -> bool {
        self.legs.iter().any(|(l, _)| l == id)
    }

    pub fn leg_pos(&self, id: &str) -> Option<usize> {
        self.legs.iter().position(|(l, _)| l == id)
    }

    pub fn leg_dim(&self, id: &str) -> Result<usize> {
        self.leg_pos(id)
            .map(|p| self.legs[p].1)
            .ok_or_else(|| Error::LegNotFound {
                leg: id.to_string(),
            })
    }

    pub fn rename_leg(&mut self, old: &str, new: &str) -> Result<()> {
        if old != new && self.has_leg(new) {
            return Err(Error::ShapeError {
                detail: format!("rename would duplicate leg id '{new}'"),
            });
        }
        let p = self.leg_pos(old).ok_or_else(|| Error::LegNotFound {
            leg: old.to_string(),
        })?;
        self.legs[p].0 = new.to_string();
        Ok(())
    }

    /// Entry at a full multi-index in the tensor's own leg order.
    pub fn entry(&self, idx: &[usize]) -> f64 {
        debug_assert_eq!(idx.len(), self.legs.len());
        let mut flat = 0usize;
        for (i, &x) in idx.iter().enumerate() {
            flat = flat * self.legs[i].1 + x;
        }
        self.data[flat]
    }

    /// Row-major strides for the current leg order.
    fn strides(&self) -> Vec<usize> {
        let mut s = vec![1usize; self.legs.len()];
        for i in (0..self.legs.len().saturating_sub(1)).rev() {
            s[i] = s[i + 1] * self.legs[i + 1].1;
        }
        s
    }

    /// Reorders legs to `order` (a permutation of the current leg ids),
    /// producing a fresh row-major buffer.
    pub fn permuted(&self, order: &[&str]) -> Result<Self> {
        if order.len() != self.legs.len() {
            return Err(Error::PartitionError {
                detail: format!(
                    "permutation lists {} legs, tensor has {}",
                    order.len(),
                    self.legs.len()
                ),
            });
        }
        let mut perm = Vec::with_capacity(order.len());
        for id in order {
            let p = self.leg_pos(id).ok_or_else(|| Error::LegNotFound {
                leg: id.to_string(),
            })?;
            if perm.contains(&p) {
                return Err(Error::PartitionError {
                    detail: format!("leg '{id}' listed twice"),
                });
            }
            perm.push(p);
        }
        Ok(self.permuted_by_positions(&perm))
    }

    fn permuted_by_positions(&self, perm: &[usize]) -> Self {
        if perm.iter().enumerate().all(|(i, &p)| i == p) {
            return self.clone();
        }
        let old_strides = self.strides();
        let new_legs: Legs = perm.iter().map(|&p| self.legs[p].clone()).collect();
        let new_dims: Vec<usize> = new_legs.iter().map(|(_, d)| *d).collect();
        let stride_for_slot: Vec<usize> = perm.iter().map(|&p| old_strides[p]).collect();
        let k = perm.len();
        let mut out = vec![0.0; self.data.len()];
        let mut idx = vec![0usize; k];
        let mut off = 0usize;
        for slot in out.iter_mut() {
            *slot = self.data[off];
            for ax in (0..k).rev() {
                idx[ax] += 1;
                off += stride_for_slot[ax];
                if idx[ax] < new_dims[ax] {
                    break;
                }
                idx[ax] = 0;
                off -= new_dims[ax] * stride_for_slot[ax];
            }
        }
        Self {
            legs: new_legs,
            data: out,
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            legs: self.legs.clone(),
            data: self.data.iter().map(|x| alpha * x).collect(),
        }
    }

    /// Checks that `other` carries the same leg set (any order) with equal
    /// dims, and returns it permuted to `self`'s leg order.
    fn aligned_to_self(&self, other: &DenseTensor) -> Result<DenseTensor> {
        if other.legs.len() != self.legs.len() {
            return Err(Error::ShapeError {
                detail: format!(
                    "leg count mismatch: {} vs {}",
                    self.legs.len(),
                    other.legs.len()
                ),
            });
        }
        for (id, d) in &self.legs {
            let od = other.leg_dim(id)?;
            if od != *d {
                return Err(Error::DimensionError {
                    a_leg: id.clone(),
                    a_dim: *d,
                    b_leg: id.clone(),
                    b_dim: od,
                });
            }
        }
        let order: Vec<&str> = self.leg_ids();
        other.permuted(&order)
    }

    /// `self + alpha * other`, matching legs by id.
    pub fn add_scaled(&self, other: &DenseTensor, alpha: f64) -> Result<Self> {
        let o = self.aligned_to_self(other)?;
        let data = self
            .data
            .iter()
            .zip(o.data.iter())
            .map(|(a, b)| a + alpha * b)
            .collect();
        Ok(Self {
            legs: self.legs.clone(),
            data,
        })
    }

    /// Frobenius inner product, matching legs by id.
    pub fn dot(&self, other: &DenseTensor) -> Result<f64> {
        let o = self.aligned_to_self(other)?;
        Ok(self
            .data
            .iter()
            .zip(o.data.iter())
            .map(|(a, b)| a * b)
            .sum())
    }

    /// Max absolute entrywise difference, matching legs by id.
    pub fn max_abs_diff(&self, other: &DenseTensor) -> Result<f64> {
        let o = self.aligned_to_self(other)?;
        Ok(self
            .data
            .iter()
            .zip(o.data.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

/// Standard deterministic tensor with entries drawn from `dist`.
pub fn random_tensor(legs: Legs, dist: Dist, seed: u64) -> Result<DenseTensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_tensor_with(legs, dist, &mut rng)
}

/// Like [`random_tensor`] but drawing from a caller-managed generator, so a
/// single stream can fill several tensors reproducibly.
pub fn random_tensor_with<R: Rng>(legs: Legs, dist: Dist, rng: &mut R) -> Result<DenseTensor> {
    let len: usize = legs.iter().map(|(_, d)| *d).product();
    let data = (0..len).map(|_| dist.sample(rng)).collect();
    DenseTensor::new(legs, data)
}

/// Row-major `(m x k) . (k x n)` product.
pub(crate) fn matmul(a: &[f64], m: usize, k: usize, b: &[f64], n: usize) -> Vec<f64> {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (kk, &av) in arow.iter().enumerate() {
            if av != 0.0 {
                let brow = &b[kk * n..(kk + 1) * n];
                for (o, &bv) in orow.iter_mut().zip(brow) {
                    *o += av * bv;
                }
            }
        }
    }
    out
}

/// Contracts one shared-leg group between two tensors.
///
/// `pairs` lists `(leg in a, leg in b)`; paired legs are summed jointly.
/// Output legs are the unpaired legs of `a` in order, then those of `b`.
pub fn contract_pair(
    a: &DenseTensor,
    b: &DenseTensor,
    pairs: &[(&str, &str)],
) -> Result<DenseTensor> {
    let mut a_paired = Vec::with_capacity(pairs.len());
    let mut b_paired = Vec::with_capacity(pairs.len());
    for (la, lb) in pairs {
        let da = a.leg_dim(la)?;
        let db = b.leg_dim(lb)?;
        if da != db {
            return Err(Error::DimensionError {
                a_leg: la.to_string(),
                a_dim: da,
                b_leg: lb.to_string(),
                b_dim: db,
            });
        }
        if a_paired.contains(la) || b_paired.contains(lb) {
            return Err(Error::PartitionError {
                detail: format!("leg pair ('{la}', '{lb}') repeats a leg"),
            });
        }
        a_paired.push(la);
        b_paired.push(lb);
    }
    let a_free: Vec<&str> = a
        .legs()
        .iter()
        .map(|(id, _)| id.as_str())
        .filter(|id| !a_paired.contains(id))
        .collect();
    let b_free: Vec<&str> = b
        .legs()
        .iter()
        .map(|(id, _)| id.as_str())
        .filter(|id| !b_paired.contains(id))
        .collect();

    // a -> (free x paired), b -> (paired x free), multiply.
    let mut a_order: Vec<&str> = a_free.clone();
    a_order.extend(a_paired.iter().copied());
    let mut b_order: Vec<&str> = b_paired.to_vec();
    b_order.extend(b_free.iter().copied());
    let ap = a.permuted(&a_order)?;
    let bp = b.permuted(&b_order)?;

    let shared: usize = pairs
        .iter()
        .map(|(la, _)| a.leg_dim(la).expect("checked above"))
        .product();
    let m = ap.len() / shared;
    let n = bp.len() / shared;
    let data = matmul(ap.data(), m, shared, bp.data(), n);

    let mut out_legs: Legs = Vec::with_capacity(a_free.len() + b_free.len());
    for id in &a_free {
        out_legs.push((id.to_string(), a.leg_dim(id)?));
    }
    for id in &b_free {
        out_legs.push((id.to_string(), b.leg_dim(id)?));
    }
    DenseTensor::new(out_legs, data)
}

/// A tensor flattened to a matrix over an ordered row/column leg split.
#[derive(Debug, Clone, PartialEq)]
pub struct Matricization {
    row_legs: Legs,
    col_legs: Legs,
    data: Vec<f64>,
}

impl Matricization {
    /// Builds a matricization from explicit parts; leg ids must be distinct
    /// across both sides and the buffer must be `rows * cols` long.
    pub fn from_parts(row_legs: Legs, col_legs: Legs, data: Vec<f64>) -> Result<Self> {
        let mut all = row_legs.clone();
        all.extend(col_legs.iter().cloned());
        // Constructor of DenseTensor performs the shared validation.
        let t = DenseTensor::new(all, data)?;
        let data = t.into_data();
        Ok(Self {
            row_legs,
            col_legs,
            data,
        })
    }

    pub fn identity(dim: usize) -> Self {
        let mut data = vec![0.0; dim * dim];
        for i in 0..dim {
            data[i * dim + i] = 1.0;
        }
        Self {
            row_legs: vec![("id_row".to_string(), dim)],
            col_legs: vec![("id_col".to_string(), dim)],
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.row_legs.iter().map(|(_, d)| *d).product()
    }

    pub fn cols(&self) -> usize {
        self.col_legs.iter().map(|(_, d)| *d).product()
    }

    pub fn row_legs(&self) -> &[(String, usize)] {
        &self.row_legs
    }

    pub fn col_legs(&self) -> &[(String, usize)] {
        &self.col_legs
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols() + j]
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Matrix-vector product `M v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let c = self.cols();
        debug_assert_eq!(v.len(), c);
        self.data
            .chunks_exact(c)
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Matrix-vector product `M^T v`.
    pub fn apply_transpose(&self, v: &[f64]) -> Vec<f64> {
        let (r, c) = (self.rows(), self.cols());
        debug_assert_eq!(v.len(), r);
        let mut out = vec![0.0; c];
        for (i, &vi) in v.iter().enumerate() {
            if vi != 0.0 {
                let row = &self.data[i * c..(i + 1) * c];
                for (o, &a) in out.iter_mut().zip(row) {
                    *o += vi * a;
                }
            }
        }
        out
    }

    /// Dense `(self) . (other)` matrix product.
    pub fn matmul(&self, other: &Matricization) -> Result<Matricization> {
        if self.cols() != other.rows() {
            return Err(Error::ShapeError {
                detail: format!(
                    "matmul shape mismatch: {}x{} . {}x{}",
                    self.rows(),
                    self.cols(),
                    other.rows(),
                    other.cols()
                ),
            });
        }
        let data = matmul(
            &self.data,
            self.rows(),
            self.cols(),
            &other.data,
            other.cols(),
        );
        Matricization::from_parts(self.row_legs.clone(), other.col_legs.clone(), data)
    }

    pub fn transposed(&self) -> Matricization {
        let (r, c) = (self.rows(), self.cols());
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = self.data[i * c + j];
            }
        }
        Matricization {
            row_legs: self.col_legs.clone(),
            col_legs: self.row_legs.clone(),
            data,
        }
    }

    /// Recovers the tensor whose legs are `row_legs` followed by `col_legs`.
    /// Exact inverse of [`matricize`] up to leg order.
    pub fn de_matricize(&self) -> DenseTensor {
        let mut all = self.row_legs.clone();
        all.extend(self.col_legs.iter().cloned());
        DenseTensor::new(all, self.data.clone()).expect("matricization parts are validated")
    }
}

/// Reshapes `t` into a matrix over the given ordered leg split.
pub fn matricize(t: &DenseTensor, row_legs: &[&str], col_legs: &[&str]) -> Result<Matricization> {
    if row_legs.len() + col_legs.len() != t.order() {
        return Err(Error::PartitionError {
            detail: format!(
                "row+col lists {} legs, tensor has {}",
                row_legs.len() + col_legs.len(),
                t.order()
            ),
        });
    }
    let mut order: Vec<&str> = row_legs.to_vec();
    order.extend(col_legs.iter().copied());
    // permuted() rejects duplicates and unknown legs, which together with the
    // length check above makes row/col an exact partition.
    let p = t.permuted(&order).map_err(|e| match e {
        Error::LegNotFound { leg } => Error::PartitionError {
            detail: format!("leg '{leg}' not on tensor"),
        },
        Error::PartitionError { detail } => Error::PartitionError { detail },
        other => other,
    })?;
    let rl: Legs = row_legs
        .iter()
        .map(|id| (id.to_string(), t.leg_dim(id).expect("validated")))
        .collect();
    let cl: Legs = col_legs
        .iter()
        .map(|id| (id.to_string(), t.leg_dim(id).expect("validated")))
        .collect();
    Ok(Matricization {
        row_legs: rl,
        col_legs: cl,
        data: p.into_data(),
    })
}

/// Kronecker product with row-major block layout:
/// `out[(ia*rb + ib), (ja*cb + jb)] = a[ia,ja] * b[ib,jb]`.
pub fn kron(a: &Matricization, b: &Matricization) -> Result<Matricization> {
    let (ra, ca, rb, cb) = (a.rows(), a.cols(), b.rows(), b.cols());
    let entries = (ra as u128) * (ca as u128) * (rb as u128) * (cb as u128);
    if entries > crate::network::DEFAULT_CAP as u128 {
        return Err(Error::TooLargeToMaterialize {
            entries,
            cap: crate::network::DEFAULT_CAP as u128,
        });
    }
    let mut row_legs = a.row_legs.clone();
    for (id, d) in &b.row_legs {
        if row_legs.iter().any(|(x, _)| x == id) {
            return Err(Error::ShapeError {
                detail: format!("kron row leg collision on '{id}'"),
            });
        }
        row_legs.push((id.clone(), *d));
    }
    let mut col_legs = a.col_legs.clone();
    for (id, d) in &b.col_legs {
        if col_legs.iter().any(|(x, _)| x == id) {
            return Err(Error::ShapeError {
                detail: format!("kron col leg collision on '{id}'"),
            });
        }
        col_legs.push((id.clone(), *d));
    }
    let mut data = vec![0.0; ra * rb * ca * cb];
    let out_cols = ca * cb;
    for ia in 0..ra {
        for ja in 0..ca {
            let av = a.at(ia, ja);
            if av == 0.0 {
                continue;
            }
            for ib in 0..rb {
                let orow = (ia * rb + ib) * out_cols + ja * cb;
                let brow = &b.data[ib * cb..(ib + 1) * cb];
                for (jb, &bv) in brow.iter().enumerate() {
                    data[orow + jb] = av * bv;
                }
            }
        }
    }
    Matricization::from_parts(row_legs, col_legs, data)
}
