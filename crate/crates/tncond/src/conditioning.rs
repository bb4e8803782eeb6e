//! Condition numbers, worst-case perturbation bounds with an exact
//! block-coordinate solver, and average-case error predictions.
//!
//! All quantities are driven by the single-vertex environment matrices
//! `M_i`: the linear maps taking one site tensor to the full contraction
//! with every other site held fixed. The absolute condition number is the
//! largest spectral norm among them; the worst-case first-order error over
//! sitewise budgets `|a_i|_F = eps_i` is maximized by alternating block
//! updates `a_i <- eps_i * M_i^T r / |M_i^T r|`, which increases the
//! objective monotonically and lands on a KKT point whose multipliers
//! reproduce the objective through `sqrt(sum mu_i eps_i^2)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{
    contract_network_with_cap, environment_matrix_with_cap, EnvironmentMatrix, TensorNetwork,
    DEFAULT_CAP,
};
use crate::perturb::PerturbationSet;
use crate::tensor::{random_tensor_with, DenseTensor, Dist};

/// Root seed for the solver's deterministic restarts.
const SOLVER_SEED: u64 = 0x77c5_7a7e;
/// Restart 0 starts from the sitewise-parallel direction; the rest are random.
const SOLVER_RESTARTS: u64 = 5;

/// Absolute and relative condition numbers of a network's contraction map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionNumbers {
    /// `max_i |M_i|_2`: worst first-order amplification of a unit-norm
    /// single-site perturbation.
    pub kappa_abs: f64,
    /// `(sum_i |T_i|_F / |T|_F) * kappa_abs`.
    pub kappa_rel: f64,
    /// Vertex attaining the maximal environment norm.
    pub site_norm_argmax: String,
}

/// Everything the worst-case solver learned about a network and budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstCaseReport {
    /// `sum_i eps_i |M_i|_2`: always an upper bound on the first-order error.
    pub bound: f64,
    /// Best stationary value of `|sum_i M_i a_i|` over the budget sphere.
    pub solved_value: f64,
    /// `(vertex, |M_i|_2)` in network vertex order.
    pub per_site_norms: Vec<(String, f64)>,
    /// KKT multipliers at the returned point; `sqrt(sum mu_i eps_i^2)`
    /// equals `solved_value` up to rounding.
    pub multipliers: Vec<(String, f64)>,
    /// The maximizing sitewise perturbation, in vertex-local leg names.
    pub argmax_perturbation: PerturbationSet,
    /// Sites whose gradient vanished during the winning restart; their
    /// blocks were frozen at a seeded random direction.
    pub frozen_sites: Vec<String>,
}

/// Variance convention for [`average_case_error`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AverageCaseMode {
    /// Sites carry mean-square relative perturbations of size `eps`; the
    /// prediction is evaluated on the entrywise-normalized network.
    EpsRelative(f64),
    /// Every entry of every site is perturbed with variance `sigma^2`.
    UniformVariance(f64),
}

/// Spectral norms of all single-vertex environments, in vertex order.
fn site_env_spectral_norms(tn: &TensorNetwork, cap: usize) -> Result<Vec<(String, f64)>> {
    if tn.n_vertices() == 1 {
        // The contraction map of a lone vertex is the identity.
        return Ok(vec![(tn.vertex_ids()[0].to_string(), 1.0)]);
    }
    tn.vertices()
        .iter()
        .map(|(vid, _)| {
            let vset = std::iter::once(vid.clone()).collect();
            let env = environment_matrix_with_cap(tn, &vset, cap)?;
            Ok((vid.clone(), env.spectral_norm_default()?))
        })
        .collect()
}

pub fn condition_numbers(tn: &TensorNetwork) -> Result<ConditionNumbers> {
    condition_numbers_with_cap(tn, DEFAULT_CAP)
}

pub fn condition_numbers_with_cap(tn: &TensorNetwork, cap: usize) -> Result<ConditionNumbers> {
    let norms = site_env_spectral_norms(tn, cap)?;
    let (site_norm_argmax, kappa_abs) = norms
        .iter()
        .cloned()
        .reduce(|best, cur| if cur.1 > best.1 { cur } else { best })
        .expect("validated networks are nonempty");
    let site_norm_sum: f64 = tn.vertices().iter().map(|(_, t)| t.frobenius_norm()).sum();
    let state_norm = contract_network_with_cap(tn, cap)?.frobenius_norm();
    Ok(ConditionNumbers {
        kappa_abs,
        kappa_rel: site_norm_sum / state_norm * kappa_abs,
        site_norm_argmax,
    })
}

fn check_eps(tn: &TensorNetwork, eps: &[f64]) -> Result<()> {
    if eps.len() != tn.n_vertices() {
        return Err(Error::InvalidPerturbationBudget {
            detail: format!(
                "{} budgets supplied for {} vertices",
                eps.len(),
                tn.n_vertices()
            ),
        });
    }
    if let Some(bad) = eps.iter().find(|e| !e.is_finite() || **e < 0.0) {
        return Err(Error::InvalidPerturbationBudget {
            detail: format!("budget {bad} is not a finite nonnegative number"),
        });
    }
    Ok(())
}

/// First-order worst-case error bound `sum_i eps_i |M_i|_2` for sitewise
/// Frobenius budgets `eps` given in network vertex order.
pub fn worst_case_bound(tn: &TensorNetwork, eps: &[f64]) -> Result<f64> {
    worst_case_bound_with_cap(tn, eps, DEFAULT_CAP)
}

pub fn worst_case_bound_with_cap(tn: &TensorNetwork, eps: &[f64], cap: usize) -> Result<f64> {
    check_eps(tn, eps)?;
    let norms = site_env_spectral_norms(tn, cap)?;
    Ok(norms.iter().zip(eps).map(|((_, n), e)| e * n).sum())
}

/// One restart's working state: per-site direction tensors in edge-leg
/// coordinates, all on the budget sphere.
struct Iterate {
    a: Vec<Option<DenseTensor>>,
    frozen: Vec<bool>,
}

fn combined_image(envs: &[EnvironmentMatrix], iterate: &Iterate) -> Result<Option<DenseTensor>> {
    let mut acc: Option<DenseTensor> = None;
    for (env, a) in envs.iter().zip(&iterate.a) {
        let Some(a) = a else { continue };
        let term = env.apply(a)?;
        acc = Some(match acc {
            None => term,
            Some(sum) => sum.add_scaled(&term, 1.0)?,
        });
    }
    Ok(acc)
}

fn random_direction(site: &DenseTensor, rng: &mut ChaCha8Rng, radius: f64) -> Result<DenseTensor> {
    loop {
        let d = random_tensor_with(
            site.legs().to_vec(),
            Dist::Uniform { lo: -1.0, hi: 1.0 },
            rng,
        )?;
        let n = d.frobenius_norm();
        if n > 1e-3 {
            return Ok(d.scaled(radius / n));
        }
    }
}

/// Maximizes the first-order error `|sum_i M_i a_i|` over `|a_i|_F = eps_i`
/// by alternating block maximization with seeded restarts. The returned
/// report carries the bound, the best stationary value, KKT multipliers,
/// and the maximizing perturbation in vertex-local coordinates.
pub fn worst_case_solve(
    tn: &TensorNetwork,
    eps: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<WorstCaseReport> {
    worst_case_solve_with_cap(tn, eps, tol, max_iter, DEFAULT_CAP)
}

pub fn worst_case_solve_with_cap(
    tn: &TensorNetwork,
    eps: &[f64],
    tol: f64,
    max_iter: usize,
    cap: usize,
) -> Result<WorstCaseReport> {
    check_eps(tn, eps)?;
    if tn.n_vertices() == 1 {
        return solve_single_vertex(tn, eps[0]);
    }
    let vids: Vec<String> = tn.vertex_ids().iter().map(|s| s.to_string()).collect();
    let sites: Vec<DenseTensor> = vids
        .iter()
        .map(|v| tn.site_with_edge_legs(v))
        .collect::<Result<Vec<_>>>()?;
    let envs: Vec<EnvironmentMatrix> = vids
        .iter()
        .map(|v| {
            let vset = std::iter::once(v.clone()).collect();
            environment_matrix_with_cap(tn, &vset, cap)
        })
        .collect::<Result<Vec<_>>>()?;
    let per_site_norms: Vec<(String, f64)> = vids
        .iter()
        .zip(&envs)
        .map(|(v, env)| Ok((v.clone(), env.spectral_norm_default()?)))
        .collect::<Result<Vec<_>>>()?;
    let bound: f64 = per_site_norms
        .iter()
        .zip(eps)
        .map(|((_, n), e)| e * n)
        .sum();

    if eps.iter().all(|e| *e == 0.0) || bound == 0.0 {
        let zero = PerturbationSet::zero(tn);
        return Ok(WorstCaseReport {
            bound,
            solved_value: 0.0,
            per_site_norms,
            multipliers: vids.iter().map(|v| (v.clone(), 0.0)).collect(),
            argmax_perturbation: zero,
            frozen_sites: Vec::new(),
        });
    }

    let mut best: Option<(f64, Iterate)> = None;
    let mut converged_any = false;
    let mut last_iters = 0usize;
    for restart in 0..SOLVER_RESTARTS {
        let mut rng = ChaCha8Rng::seed_from_u64(SOLVER_SEED);
        rng.set_stream(restart);
        let mut it = Iterate {
            a: Vec::with_capacity(sites.len()),
            frozen: vec![false; sites.len()],
        };
        for (site, &e) in sites.iter().zip(eps) {
            if e == 0.0 {
                it.a.push(None);
                continue;
            }
            let n = site.frobenius_norm();
            let dir = if restart == 0 && n > 0.0 {
                site.scaled(e / n)
            } else {
                random_direction(site, &mut rng, e)?
            };
            it.a.push(Some(dir));
        }

        let mut value = combined_image(&envs, &it)?
            .map(|s| s.frobenius_norm())
            .unwrap_or(0.0);
        let mut converged = false;
        for iter in 0..max_iter {
            last_iters = iter + 1;
            let image = combined_image(&envs, &it)?;
            let Some(image) = image else { break };
            for i in 0..sites.len() {
                if eps[i] == 0.0 || it.frozen[i] {
                    continue;
                }
                let h = envs[i].apply_transpose(&image)?;
                let hn = h.frobenius_norm();
                if hn <= 1e-300 || !hn.is_finite() {
                    it.a[i] = Some(random_direction(&sites[i], &mut rng, eps[i])?);
                    it.frozen[i] = true;
                } else {
                    it.a[i] = Some(h.scaled(eps[i] / hn));
                }
            }
            let new_value = combined_image(&envs, &it)?
                .map(|s| s.frobenius_norm())
                .unwrap_or(0.0);
            let change = (new_value - value).abs();
            value = new_value;
            if change <= tol * value.max(f64::MIN_POSITIVE) {
                converged = true;
                break;
            }
        }
        converged_any |= converged;
        let better = match &best {
            None => true,
            Some((bv, _)) => value > *bv,
        };
        if better {
            best = Some((value, it));
        }
    }

    let (value, it) = best.expect("at least one restart ran");
    if !converged_any {
        return Err(Error::ConvergenceError {
            best: value,
            iters: last_iters,
        });
    }

    // KKT multipliers at the returned point: with h_i = M_i^T (M_T delta),
    // mu_i = <h_i, a_i> / eps_i^2, so sum mu_i eps_i^2 telescopes to
    // |M_T delta|^2 exactly.
    let image = combined_image(&envs, &it)?;
    let mut multipliers = Vec::with_capacity(vids.len());
    for i in 0..vids.len() {
        let mu = match (&it.a[i], &image) {
            (Some(a), Some(s)) if eps[i] > 0.0 => {
                let h = envs[i].apply_transpose(s)?;
                h.dot(a)? / (eps[i] * eps[i])
            }
            _ => 0.0,
        };
        multipliers.push((vids[i].clone(), mu));
    }

    let mut entries = Vec::with_capacity(vids.len());
    for (i, vid) in vids.iter().enumerate() {
        let delta_edge = match &it.a[i] {
            Some(a) => a.clone(),
            None => DenseTensor::zeros(sites[i].legs().to_vec())?,
        };
        entries.push((vid.clone(), tn.site_from_edge_legs(vid, &delta_edge)?));
    }
    let frozen_sites = vids
        .iter()
        .zip(&it.frozen)
        .filter(|(_, f)| **f)
        .map(|(v, _)| v.clone())
        .collect();

    Ok(WorstCaseReport {
        bound,
        solved_value: value,
        per_site_norms,
        multipliers,
        argmax_perturbation: PerturbationSet::explicit(entries),
        frozen_sites,
    })
}

/// A lone vertex contracts to itself, so the environment is the identity:
/// every unit direction is maximizing and the optimum equals the budget.
fn solve_single_vertex(tn: &TensorNetwork, eps: f64) -> Result<WorstCaseReport> {
    let vid = tn.vertex_ids()[0].to_string();
    let site = tn.vertex(&vid)?;
    let n = site.frobenius_norm();
    let delta = if eps == 0.0 {
        DenseTensor::zeros(site.legs().to_vec())?
    } else if n > 0.0 {
        site.scaled(eps / n)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(SOLVER_SEED);
        random_direction(site, &mut rng, eps)?
    };
    let mu = if eps == 0.0 { 0.0 } else { 1.0 };
    Ok(WorstCaseReport {
        bound: eps,
        solved_value: eps,
        per_site_norms: vec![(vid.clone(), 1.0)],
        multipliers: vec![(vid.clone(), mu)],
        argmax_perturbation: PerturbationSet::explicit(vec![(vid, delta)]),
        frozen_sites: Vec::new(),
    })
}

/// Rescales every site to `sqrt(N_j) T_j / |T_j|_F`, giving each entry unit
/// root-mean-square size. Contraction changes only by the product of the
/// scale factors.
pub fn entrywise_normalize(tn: &TensorNetwork) -> Result<TensorNetwork> {
    let mut out = tn.clone();
    for (vid, t) in tn.vertices() {
        let n = t.frobenius_norm();
        if n == 0.0 {
            return Err(Error::DegenerateSite {
                vertex: vid.clone(),
                detail: "zero Frobenius norm cannot be entrywise normalized".to_string(),
            });
        }
        let scale = (t.len() as f64).sqrt() / n;
        out = out.with_replaced_vertex(vid, t.scaled(scale))?;
    }
    Ok(out)
}

/// Predicted mean-square relative contraction error under independent
/// entrywise perturbations, to leading order.
pub fn average_case_error(tn: &TensorNetwork, mode: AverageCaseMode) -> Result<f64> {
    average_case_error_with_cap(tn, mode, DEFAULT_CAP)
}

pub fn average_case_error_with_cap(
    tn: &TensorNetwork,
    mode: AverageCaseMode,
    cap: usize,
) -> Result<f64> {
    match mode {
        AverageCaseMode::UniformVariance(sigma) => {
            let m_frob_sq = total_env_frobenius_sq(tn, cap)?;
            let state = contract_network_with_cap(tn, cap)?.frobenius_norm();
            Ok(sigma * sigma * m_frob_sq / (state * state))
        }
        AverageCaseMode::EpsRelative(eps) => {
            let bar = entrywise_normalize(tn)?;
            let m_frob_sq = total_env_frobenius_sq(&bar, cap)?;
            let state = contract_network_with_cap(&bar, cap)?.frobenius_norm();
            Ok(eps * eps * m_frob_sq / (state * state))
        }
    }
}

/// `|M_T|_F^2 = sum_i |M_i|_F^2` over single-vertex environments.
fn total_env_frobenius_sq(tn: &TensorNetwork, cap: usize) -> Result<f64> {
    if tn.n_vertices() == 1 {
        // Identity environment: squared Frobenius norm is the entry count.
        return Ok(tn.vertices()[0].1.len() as f64);
    }
    let mut total = 0.0;
    for vid in tn.vertex_ids() {
        let vset = std::iter::once(vid.to_string()).collect();
        let env = environment_matrix_with_cap(tn, &vset, cap)?;
        let f = env.frobenius_norm();
        total += f * f;
    }
    Ok(total)
}
