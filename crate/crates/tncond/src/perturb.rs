//! Sitewise perturbations and exact error measurement.
//!
//! A [`PerturbationSet`] assigns each perturbed vertex a tensor of the same
//! shape as the site. The two sampled models mirror the two analyses in
//! higher modules: norm-budgeted perturbations (`|d_i|_F <= eps * |T_i|_F`
//! per site, optionally saturated) and entrywise perturbations of fixed
//! variance. Errors are always measured exactly, by contracting the
//! perturbed and unperturbed networks and differencing.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{contract_network_with_cap, TensorNetwork, DEFAULT_CAP};
use crate::tensor::{random_tensor_with, DenseTensor, Dist};

/// How a perturbation set was scaled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationModel {
    /// Per-site Frobenius budget relative to the site norm.
    EpsRelative { eps: f64 },
    /// I.i.d. entries of variance `sigma^2` on every site.
    Variance { sigma: f64 },
    /// Caller-supplied tensors with no scaling contract.
    Explicit,
}

/// A sitewise perturbation: one delta tensor per perturbed vertex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSet {
    entries: Vec<(String, DenseTensor)>,
    model: PerturbationModel,
    /// Declares that site deltas are functionally tied to each other.
    /// Such sets are rejected by the worst-case solver, which assumes
    /// independently chosen site perturbations.
    #[serde(default)]
    dependent: bool,
}

impl PerturbationSet {
    pub fn explicit(entries: Vec<(String, DenseTensor)>) -> Self {
        Self {
            entries,
            model: PerturbationModel::Explicit,
            dependent: false,
        }
    }

    pub fn from_parts(entries: Vec<(String, DenseTensor)>, model: PerturbationModel) -> Self {
        Self {
            entries,
            model,
            dependent: false,
        }
    }

    /// All-zero perturbation over every vertex of `tn`.
    pub fn zero(tn: &TensorNetwork) -> Self {
        let entries = tn
            .vertices()
            .iter()
            .map(|(vid, t)| {
                (
                    vid.clone(),
                    DenseTensor::zeros(t.legs().to_vec()).expect("site legs are valid"),
                )
            })
            .collect();
        Self {
            entries,
            model: PerturbationModel::Explicit,
            dependent: false,
        }
    }

    pub fn declare_dependent(mut self) -> Self {
        self.dependent = true;
        self
    }

    pub fn is_dependent(&self) -> bool {
        self.dependent
    }

    pub fn model(&self) -> PerturbationModel {
        self.model
    }

    pub fn entries(&self) -> &[(String, DenseTensor)] {
        &self.entries
    }

    pub fn get(&self, vid: &str) -> Option<&DenseTensor> {
        self.entries.iter().find(|(v, _)| v == vid).map(|(_, t)| t)
    }

    /// Uniformly rescales every site delta by `t`.
    pub fn scaled(&self, t: f64) -> Self {
        let entries = self
            .entries
            .iter()
            .map(|(v, d)| (v.clone(), d.scaled(t)))
            .collect();
        let model = match self.model {
            PerturbationModel::EpsRelative { eps } => {
                PerturbationModel::EpsRelative { eps: eps * t.abs() }
            }
            PerturbationModel::Variance { sigma } => PerturbationModel::Variance {
                sigma: sigma * t.abs(),
            },
            PerturbationModel::Explicit => PerturbationModel::Explicit,
        };
        Self {
            entries,
            model,
            dependent: self.dependent,
        }
    }

    /// Frobenius norm of each site delta, in entry order.
    pub fn site_budgets(&self) -> Vec<(String, f64)> {
        self.entries
            .iter()
            .map(|(v, d)| (v.clone(), d.frobenius_norm()))
            .collect()
    }

    /// Checks that every entry matches the shape of its target site.
    pub fn validate_shapes_against(&self, tn: &TensorNetwork) -> Result<()> {
        for (vid, d) in &self.entries {
            let site = tn.vertex(vid)?;
            for (leg, dim) in site.legs() {
                let dd = d.leg_dim(leg)?;
                if dd != *dim {
                    return Err(Error::DimensionError {
                        a_leg: leg.clone(),
                        a_dim: *dim,
                        b_leg: leg.clone(),
                        b_dim: dd,
                    });
                }
            }
            if d.order() != site.order() {
                return Err(Error::ShapeError {
                    detail: format!("perturbation for '{vid}' has wrong leg count"),
                });
            }
        }
        Ok(())
    }

    /// Full validation against the originating network: shapes, plus the
    /// per-site budget inequality for the eps-relative model.
    pub fn validate_against(&self, tn: &TensorNetwork) -> Result<()> {
        self.validate_shapes_against(tn)?;
        if let PerturbationModel::EpsRelative { eps } = self.model {
            for (vid, d) in &self.entries {
                let site = tn.vertex(vid)?;
                let budget = eps * site.frobenius_norm();
                if d.frobenius_norm() > budget * (1.0 + 1e-12) + f64::MIN_POSITIVE {
                    return Err(Error::InvalidPerturbationBudget {
                        detail: format!(
                            "site '{vid}' delta norm {} exceeds eps budget {budget}",
                            d.frobenius_norm()
                        ),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("perturbation serialization cannot fail")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Draws one random direction per site and scales it into the eps-relative
/// ball: to the boundary when `saturate` is set, otherwise to a uniformly
/// random radius. Per-site streams are split from `seed` so the set does not
/// depend on evaluation order.
pub fn sample_eps_perturbation(
    tn: &TensorNetwork,
    eps: f64,
    seed: u64,
    saturate: bool,
) -> Result<PerturbationSet> {
    if eps < 0.0 {
        return Err(Error::InvalidPerturbationBudget {
            detail: format!("negative eps {eps}"),
        });
    }
    let mut entries = Vec::with_capacity(tn.n_vertices());
    for (idx, (vid, site)) in tn.vertices().iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(idx as u64);
        let dir = random_tensor_with(
            site.legs().to_vec(),
            Dist::Uniform { lo: -1.0, hi: 1.0 },
            &mut rng,
        )?;
        let nd = dir.frobenius_norm();
        let radius = if saturate {
            eps * site.frobenius_norm()
        } else {
            eps * site.frobenius_norm() * rng.gen_range(0.0..=1.0)
        };
        let delta = if nd > 0.0 {
            dir.scaled(radius / nd)
        } else {
            dir
        };
        entries.push((vid.clone(), delta));
    }
    Ok(PerturbationSet {
        entries,
        model: PerturbationModel::EpsRelative { eps },
        dependent: false,
    })
}

/// I.i.d. centered entries of variance `sigma^2` on every site.
pub fn sample_variance_perturbation(
    tn: &TensorNetwork,
    sigma: f64,
    seed: u64,
) -> Result<PerturbationSet> {
    if sigma < 0.0 {
        return Err(Error::InvalidPerturbationBudget {
            detail: format!("negative sigma {sigma}"),
        });
    }
    let mut entries = Vec::with_capacity(tn.n_vertices());
    for (idx, (vid, site)) in tn.vertices().iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(idx as u64);
        let delta = random_tensor_with(
            site.legs().to_vec(),
            Dist::CenteredUniform { sigma },
            &mut rng,
        )?;
        entries.push((vid.clone(), delta));
    }
    Ok(PerturbationSet {
        entries,
        model: PerturbationModel::Variance { sigma },
        dependent: false,
    })
}

/// Returns the perturbed network `T + d`, leaving the original untouched.
/// Only shapes are checked here, so sets can be un-applied by negation.
pub fn apply(tn: &TensorNetwork, pset: &PerturbationSet) -> Result<TensorNetwork> {
    pset.validate_shapes_against(tn)?;
    let mut out = tn.clone();
    for (vid, delta) in &pset.entries {
        let site = out.vertex(vid)?;
        let perturbed = site.add_scaled(delta, 1.0)?;
        out = out.with_replaced_vertex(vid, perturbed)?;
    }
    Ok(out)
}

/// Exact absolute and relative contraction error of the perturbation.
pub fn measure_error(tn: &TensorNetwork, pset: &PerturbationSet) -> Result<(f64, f64)> {
    measure_error_with_cap(tn, pset, DEFAULT_CAP)
}

pub fn measure_error_with_cap(
    tn: &TensorNetwork,
    pset: &PerturbationSet,
    cap: usize,
) -> Result<(f64, f64)> {
    let base = contract_network_with_cap(tn, cap)?;
    let hat = contract_network_with_cap(&apply(tn, pset)?, cap)?;
    let abs = hat.add_scaled(&base, -1.0)?.frobenius_norm();
    let norm = base.frobenius_norm();
    let rel = if norm > 0.0 {
        abs / norm
    } else if abs == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok((abs, rel))
}
