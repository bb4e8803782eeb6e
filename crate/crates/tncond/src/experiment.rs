//! Seeded randomized studies with CSV and SVG reporting.
//!
//! Studies:
//! - `center-perturb` / `center-perturb-uncapped`: per sampled chain, the
//!   analytic ratio of the general-form single-site bound at the canonical
//!   center to the canonical value (which is the budget itself). The ratio
//!   is budget-free. The uncapped variant removes the bond cap and places
//!   the center at the second site.
//! - `all-site` / `all-site-uncapped`: per sampled chain, the largest
//!   ratio of measured relative errors between the general and canonical
//!   forms over saturated sitewise perturbation pairs drawn with shared
//!   directions.
//! - `average-case`: triangle network; Monte-Carlo mean of the squared
//!   relative error against the closed-form prediction.
//! - `truncation`: achieved truncation error over the budget sum `n eps`.
//! - `energy-quadratic`: Rayleigh-quotient error of a perturbed extremal
//!   eigenvector; checks the quadratic bound and the log-log slope. Rows
//!   encode the perturbation size `t = 10^-D` in the `D` column.
//!
//! Every study is deterministic for a fixed config: per-sample seeds are
//! split from the root seed by position, so parallel execution cannot
//! change the output, and CSV emission is byte-stable.

use crate::conditioning::{average_case_error, AverageCaseMode};
use crate::error::{Error, Result};
use crate::mps::{
    bond_envelope, canonicalize, random_mps, single_site_bound, state_norm, to_network,
    truncate_all_with_canonicalization, Mps,
};
use crate::network::{Edge, TensorNetwork};
use crate::perturb::{measure_error, sample_eps_perturbation, sample_variance_perturbation};
use crate::tensor::{legs, random_tensor, Dist};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

/// Which study to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Study {
    CenterPerturb,
    CenterPerturbUncapped,
    AllSite,
    AllSiteUncapped,
    AverageCase,
    Truncation,
    EnergyQuadratic,
}

impl Study {
    pub const ALL: [Study; 7] = [
        Study::CenterPerturb,
        Study::CenterPerturbUncapped,
        Study::AllSite,
        Study::AllSiteUncapped,
        Study::AverageCase,
        Study::Truncation,
        Study::EnergyQuadratic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Study::CenterPerturb => "center-perturb",
            Study::CenterPerturbUncapped => "center-perturb-uncapped",
            Study::AllSite => "all-site",
            Study::AllSiteUncapped => "all-site-uncapped",
            Study::AverageCase => "average-case",
            Study::Truncation => "truncation",
            Study::EnergyQuadratic => "energy-quadratic",
        }
    }
}

impl fmt::Display for Study {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Study {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Study::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown study '{s}'")))
    }
}

/// Full description of one study run. Identical configs produce
/// byte-identical CSV output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub study: Study,
    /// Site counts (for `energy-quadratic`: the matrix dimension).
    pub n_list: Vec<usize>,
    /// Bond-dimension caps; ignored by the uncapped studies.
    pub d_list: Vec<usize>,
    pub phys_dim: usize,
    pub samples: usize,
    pub perturbations_per_sample: usize,
    pub eps: f64,
    pub sigma: f64,
    pub seed: u64,
    #[serde(default)]
    pub out_csv: Option<String>,
    #[serde(default)]
    pub out_svg: Option<String>,
}

impl ExperimentConfig {
    /// Desk-scale defaults for each study.
    pub fn defaults(study: Study, seed: u64) -> Self {
        let base = Self {
            study,
            n_list: Vec::new(),
            d_list: Vec::new(),
            phys_dim: 2,
            samples: 1,
            perturbations_per_sample: 1,
            eps: 1e-4,
            sigma: 1e-3,
            seed,
            out_csv: None,
            out_svg: None,
        };
        match study {
            Study::CenterPerturb => Self {
                n_list: vec![16],
                d_list: vec![8, 16, 32],
                samples: 50,
                ..base
            },
            Study::CenterPerturbUncapped => Self {
                n_list: vec![8, 12],
                samples: 50,
                ..base
            },
            Study::AllSite => Self {
                n_list: vec![8, 12],
                d_list: vec![4, 8],
                samples: 30,
                perturbations_per_sample: 100,
                ..base
            },
            Study::AllSiteUncapped => Self {
                n_list: vec![8, 12],
                samples: 30,
                perturbations_per_sample: 100,
                ..base
            },
            Study::AverageCase => Self {
                n_list: vec![3],
                d_list: vec![2, 4, 8, 16],
                samples: 2000,
                ..base
            },
            Study::Truncation => Self {
                n_list: vec![8],
                d_list: vec![16],
                samples: 20,
                ..base
            },
            Study::EnergyQuadratic => Self {
                n_list: vec![32],
                samples: 10_000,
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |detail: String| Err(Error::ShapeError { detail });
        if self.samples == 0 {
            return bad("samples must be at least 1".to_string());
        }
        if self.phys_dim == 0 {
            return bad("physical dimension must be positive".to_string());
        }
        if self.n_list.is_empty() || self.n_list.iter().any(|&n| n < 2) {
            return bad("site counts must be listed and at least 2".to_string());
        }
        if !(self.eps.is_finite() && self.eps >= 0.0 && self.sigma.is_finite() && self.sigma >= 0.0)
        {
            return bad(format!(
                "eps {} and sigma {} must be finite and nonnegative",
                self.eps, self.sigma
            ));
        }
        let needs_bonds = matches!(
            self.study,
            Study::CenterPerturb | Study::AllSite | Study::AverageCase | Study::Truncation
        );
        if needs_bonds && (self.d_list.is_empty() || self.d_list.contains(&0)) {
            return bad("bond dimensions must be listed and positive".to_string());
        }
        if matches!(self.study, Study::AllSite | Study::AllSiteUncapped)
            && self.perturbations_per_sample == 0
        {
            return bad("perturbations per sample must be at least 1".to_string());
        }
        if self.study == Study::EnergyQuadratic && self.n_list.iter().any(|&n| n > 64) {
            return bad("energy study matrix dimension is limited to 64".to_string());
        }
        Ok(())
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// One output row: a named statistic for a `(N, D)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub n: usize,
    pub d: usize,
    pub stat: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyResult {
    pub study: String,
    pub rows: Vec<StudyRow>,
}

/// Statistic names emitted for every sampled cell, in emission order.
pub const SUMMARY_STATS: [&str; 5] = ["mean", "q2.5", "q10", "q90", "q97.5"];

/// Deterministic seed splitting: position-keyed mix of the root seed,
/// finished with the splitmix64 avalanche.
pub fn split_seed(root: u64, a: u64, b: u64, c: u64) -> u64 {
    let mut z = root
        ^ a.wrapping_mul(0x9e37_79b9_7f4a_7c15)
        ^ b.wrapping_mul(0xbf58_476d_1ce4_e5b9)
        ^ c.wrapping_mul(0x94d0_49bb_1331_11eb);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Tag identifying a `(n, D)` cell inside [`split_seed`] derivations, so
/// any sampled instance can be regenerated from the config seed alone.
pub fn cell_tag(n: usize, d: usize) -> u64 {
    ((n as u64) << 24) | d as u64
}

/// Linear-interpolation quantile on sorted data (the convention most
/// statistics packages default to).
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    if lo + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    sorted[lo] + (h - lo as f64) * (sorted[lo + 1] - sorted[lo])
}

struct Collected {
    values: Vec<f64>,
    dropped: usize,
}

/// Evaluates `samples` independent cases in parallel. Non-convergence
/// drops the sample (counted); any other error aborts the study.
fn collect_samples<F>(samples: usize, f: F) -> Result<Collected>
where
    F: Fn(usize) -> Result<f64> + Sync + Send,
{
    let results: Vec<Result<f64>> = (0..samples).into_par_iter().map(f).collect();
    let mut values = Vec::with_capacity(samples);
    let mut dropped = 0usize;
    for r in results {
        match r {
            Ok(v) => values.push(v),
            Err(Error::ConvergenceError { .. }) => dropped += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(Collected { values, dropped })
}

/// Mean, the four quantiles, and the dropped count for one cell.
fn summarize_cell(n: usize, d: usize, collected: &Collected) -> Vec<StudyRow> {
    let mut sorted = collected.values.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite statistics"));
    let mean = if sorted.is_empty() {
        f64::NAN
    } else {
        sorted.iter().sum::<f64>() / sorted.len() as f64
    };
    let stats = [
        ("mean", mean),
        ("q2.5", quantile_sorted(&sorted, 0.025)),
        ("q10", quantile_sorted(&sorted, 0.10)),
        ("q90", quantile_sorted(&sorted, 0.90)),
        ("q97.5", quantile_sorted(&sorted, 0.975)),
    ];
    let mut rows: Vec<StudyRow> = stats
        .into_iter()
        .map(|(stat, value)| StudyRow {
            n,
            d,
            stat: stat.to_string(),
            value,
        })
        .collect();
    rows.push(StudyRow {
        n,
        d,
        stat: "dropped".to_string(),
        value: collected.dropped as f64,
    });
    rows
}

fn uni() -> Dist {
    Dist::Uniform { lo: -1.0, hi: 1.0 }
}

/// Rescales every site uniformly so the represented state has unit norm.
pub fn normalize_state(m: &Mps) -> Result<Mps> {
    let norm = state_norm(m);
    if !(norm.is_finite() && norm > 0.0) {
        return Err(Error::DegenerateSite {
            vertex: "state".to_string(),
            detail: format!("state norm {norm} cannot be scaled to 1"),
        });
    }
    let f = (1.0 / norm).powf(1.0 / m.n_sites() as f64);
    let sites = m.sites().iter().map(|s| s.scaled(f)).collect();
    Mps::new(sites, None)
}

/// Largest bond the physical dimension allows for an uncapped chain.
fn max_envelope_bond(n: usize, p: usize) -> usize {
    (0..n.saturating_sub(1))
        .map(|j| bond_envelope(n, usize::MAX, p, j))
        .max()
        .unwrap_or(1)
}

/// Three pairwise-connected sites with entries uniform on `[0, 1]` and a
/// scalar output.
pub fn triangle_network(d: usize, seed: u64) -> Result<TensorNetwork> {
    let a = random_tensor(
        legs(&[("ab", d), ("ca", d)]),
        Dist::Uniform { lo: 0.0, hi: 1.0 },
        seed,
    )?;
    let b = random_tensor(
        legs(&[("ab", d), ("bc", d)]),
        Dist::Uniform { lo: 0.0, hi: 1.0 },
        seed ^ 0x55aa,
    )?;
    let c = random_tensor(
        legs(&[("bc", d), ("ca", d)]),
        Dist::Uniform { lo: 0.0, hi: 1.0 },
        seed ^ 0xaa55,
    )?;
    let v = |s: &str| s.to_string();
    TensorNetwork::new(
        vec![(v("A"), a), (v("B"), b), (v("C"), c)],
        vec![
            Edge {
                id: v("ab"),
                a: (v("A"), v("ab")),
                b: (v("B"), v("ab")),
            },
            Edge {
                id: v("bc"),
                a: (v("B"), v("bc")),
                b: (v("C"), v("bc")),
            },
            Edge {
                id: v("ca"),
                a: (v("C"), v("ca")),
                b: (v("A"), v("ca")),
            },
        ],
        vec![],
    )
}

/// Runs the configured study.
pub fn run(cfg: &ExperimentConfig) -> Result<StudyResult> {
    cfg.validate()?;
    match cfg.study {
        Study::CenterPerturb => run_center_perturb(cfg, false),
        Study::CenterPerturbUncapped => run_center_perturb(cfg, true),
        Study::AllSite => run_all_site(cfg, false),
        Study::AllSiteUncapped => run_all_site(cfg, true),
        Study::AverageCase => run_average_case(cfg),
        Study::Truncation => run_truncation(cfg),
        Study::EnergyQuadratic => run_energy_quadratic(cfg),
    }
}

/// Cells for chain studies: `(bond cap for sampling, reported bond)`.
fn bond_cells(cfg: &ExperimentConfig, n: usize, uncapped: bool) -> Vec<(usize, usize)> {
    if uncapped {
        vec![(usize::MAX, max_envelope_bond(n, cfg.phys_dim))]
    } else {
        cfg.d_list.iter().map(|&d| (d, d)).collect()
    }
}

fn run_center_perturb(cfg: &ExperimentConfig, uncapped: bool) -> Result<StudyResult> {
    let mut rows = Vec::new();
    for &n in &cfg.n_list {
        for (cap, reported) in bond_cells(cfg, n, uncapped) {
            let c = if uncapped { 1 } else { n / 2 };
            let collected = collect_samples(cfg.samples, |k| {
                let seed = split_seed(cfg.seed, cell_tag(n, reported), k as u64, 0);
                let m = normalize_state(&random_mps(n, cap, cfg.phys_dim, seed, uni())?)?;
                let canon = canonicalize(&m, c)?;
                // The canonical value of the single-site bound at its
                // center is the budget itself; with a unit budget the
                // ratio is just the general-form bound.
                let e_c = single_site_bound(&canon, c, 1.0)?;
                let e_g = single_site_bound(&m, c, 1.0)?;
                Ok(e_g / e_c)
            })?;
            rows.extend(summarize_cell(n, reported, &collected));
        }
    }
    Ok(StudyResult {
        study: cfg.study.name().to_string(),
        rows,
    })
}

fn run_all_site(cfg: &ExperimentConfig, uncapped: bool) -> Result<StudyResult> {
    let mut rows = Vec::new();
    for &n in &cfg.n_list {
        for (cap, reported) in bond_cells(cfg, n, uncapped) {
            let collected = collect_samples(cfg.samples, |k| {
                let seed = split_seed(cfg.seed, cell_tag(n, reported), k as u64, 0);
                let g = normalize_state(&random_mps(n, cap, cfg.phys_dim, seed, uni())?)?;
                let canon = canonicalize(&g, n / 2)?;
                let tn_g = to_network(&g)?;
                let tn_c = to_network(&canon)?;
                let mut worst = 0.0_f64;
                for j in 0..cfg.perturbations_per_sample {
                    // Shared seed: identical directions, scaled to each
                    // form's own site norms.
                    let pseed = split_seed(cfg.seed, cell_tag(n, reported), k as u64, 1 + j as u64);
                    let pg = sample_eps_perturbation(&tn_g, cfg.eps, pseed, true)?;
                    let pc = sample_eps_perturbation(&tn_c, cfg.eps, pseed, true)?;
                    let (_, rg) = measure_error(&tn_g, &pg)?;
                    let (_, rc) = measure_error(&tn_c, &pc)?;
                    worst = worst.max(rg / rc);
                }
                Ok(worst)
            })?;
            rows.extend(summarize_cell(n, reported, &collected));
        }
    }
    Ok(StudyResult {
        study: cfg.study.name().to_string(),
        rows,
    })
}

fn run_average_case(cfg: &ExperimentConfig) -> Result<StudyResult> {
    let mut rows = Vec::new();
    for &d in &cfg.d_list {
        let tn = triangle_network(d, split_seed(cfg.seed, d as u64, 0, 0))?;
        let theory = average_case_error(&tn, AverageCaseMode::UniformVariance(cfg.sigma))?;
        let collected = collect_samples(cfg.samples, |k| {
            let pseed = split_seed(cfg.seed, d as u64, 1, k as u64);
            let pset = sample_variance_perturbation(&tn, cfg.sigma, pseed)?;
            let (_, rel) = measure_error(&tn, &pset)?;
            Ok(rel * rel)
        })?;
        rows.extend(summarize_cell(3, d, &collected));
        rows.push(StudyRow {
            n: 3,
            d,
            stat: "theory".to_string(),
            value: theory,
        });
    }
    Ok(StudyResult {
        study: cfg.study.name().to_string(),
        rows,
    })
}

fn run_truncation(cfg: &ExperimentConfig) -> Result<StudyResult> {
    let mut rows = Vec::new();
    for &n in &cfg.n_list {
        for &d in &cfg.d_list {
            let collected = collect_samples(cfg.samples, |k| {
                let seed = split_seed(cfg.seed, cell_tag(n, d), k as u64, 0);
                let m = random_mps(n, d, cfg.phys_dim, seed, uni())?;
                let budgets = vec![cfg.eps; n];
                let (_, err) = truncate_all_with_canonicalization(&m, &budgets)?;
                // Achieved error over the budget sum; raw error when the
                // budget is zero (both should then vanish).
                let denom = n as f64 * cfg.eps;
                Ok(if denom > 0.0 { err / denom } else { err })
            })?;
            rows.extend(summarize_cell(n, d, &collected));
        }
    }
    Ok(StudyResult {
        study: cfg.study.name().to_string(),
        rows,
    })
}

/// Perturbation sizes probed by the energy study; row `D` stores the
/// negative decimal exponent.
pub const ENERGY_SCALES: [f64; 3] = [1e-2, 1e-3, 1e-4];

fn run_energy_quadratic(cfg: &ExperimentConfig) -> Result<StudyResult> {
    let dim = cfg.n_list[0];
    let mut rng = ChaCha8Rng::seed_from_u64(split_seed(cfg.seed, 0, 0, 0));
    let a = DMatrix::from_fn(dim, dim, |_, _| rng.gen_range(-1.0..=1.0_f64));
    let h = (&a + a.transpose()) * 0.5;
    let eig = h.clone().symmetric_eigen();
    let mut lo = 0usize;
    let mut hnorm = 0.0_f64;
    for (i, &ev) in eig.eigenvalues.iter().enumerate() {
        hnorm = hnorm.max(ev.abs());
        if ev < eig.eigenvalues[lo] {
            lo = i;
        }
    }
    let energy = eig.eigenvalues[lo];
    let x = eig.eigenvectors.column(lo).clone_owned();

    let mut rows = Vec::new();
    let mut violations = 0usize;
    let mut fit_points = Vec::new();
    for (ti, &t) in ENERGY_SCALES.iter().enumerate() {
        let trials: Vec<(f64, bool)> = (0..cfg.samples)
            .into_par_iter()
            .map(|k| {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(split_seed(cfg.seed, 7, ti as u64, k as u64));
                let mut delta = DVector::from_fn(dim, |_, _| rng.gen_range(-1.0..=1.0_f64));
                delta *= t / delta.norm();
                let xhat = &x + &delta;
                let xhat = &xhat / xhat.norm();
                let ehat = (xhat.transpose() * &h * &xhat)[(0, 0)];
                let err = (ehat - energy).abs();
                let ok = err <= t * t * (energy.abs() + hnorm) * (1.0 + 1e-12);
                (err, ok)
            })
            .collect();
        violations += trials.iter().filter(|(_, ok)| !ok).count();
        let collected = Collected {
            values: trials.iter().map(|(e, _)| *e).collect(),
            dropped: 0,
        };
        let cell = summarize_cell(dim, ti + 2, &collected);
        let mean = cell[0].value;
        fit_points.push((t.ln(), mean.ln()));
        rows.extend(cell);
    }
    rows.push(StudyRow {
        n: dim,
        d: 0,
        stat: "slope".to_string(),
        value: least_squares_slope(&fit_points),
    });
    rows.push(StudyRow {
        n: dim,
        d: 0,
        stat: "bound_violations".to_string(),
        value: violations as f64,
    });
    Ok(StudyResult {
        study: cfg.study.name().to_string(),
        rows,
    })
}

fn least_squares_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|(x, _)| x).sum::<f64>() / n;
    let my = points.iter().map(|(_, y)| y).sum::<f64>() / n;
    let num: f64 = points.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = points.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    num / den
}

const CSV_HEADER: [&str; 5] = ["study", "N", "D", "stat", "value"];

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(format!("csv: {e}"))
}

/// Serializes the result to the `study,N,D,stat,value` schema. Values use
/// the shortest round-trip decimal form, so identical results are
/// byte-identical.
pub fn csv_string(res: &StudyResult) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for row in &res.rows {
        w.write_record([
            res.study.as_str(),
            &row.n.to_string(),
            &row.d.to_string(),
            &row.stat,
            &row.value.to_string(),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Parse(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse(format!("csv utf8: {e}")))
}

pub fn emit_csv(res: &StudyResult, path: &Path) -> Result<()> {
    let s = csv_string(res)?;
    std::fs::write(path, s).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn parse_csv_str(s: &str) -> Result<StudyResult> {
    let mut r = csv::Reader::from_reader(s.as_bytes());
    let headers = r.headers().map_err(csv_err)?.clone();
    if headers.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(Error::Parse(format!("unexpected csv header '{headers:?}'")));
    }
    let mut study = String::new();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        if rec.len() != 5 {
            return Err(Error::Parse(format!("csv row with {} fields", rec.len())));
        }
        if study.is_empty() {
            study = rec[0].to_string();
        }
        let parse_usize = |s: &str| {
            s.parse::<usize>()
                .map_err(|e| Error::Parse(format!("csv field '{s}': {e}")))
        };
        let value = rec[4]
            .parse::<f64>()
            .map_err(|e| Error::Parse(format!("csv field '{}': {e}", &rec[4])))?;
        rows.push(StudyRow {
            n: parse_usize(&rec[1])?,
            d: parse_usize(&rec[2])?,
            stat: rec[3].to_string(),
            value,
        });
    }
    Ok(StudyResult { study, rows })
}

pub fn read_csv(path: &Path) -> Result<StudyResult> {
    let s =
        std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_csv_str(&s)
}

const SVG_PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b", "#e377c2",
];

/// One line chart: x is the bond dimension (log2-spaced when all values
/// allow it), one series per site count, whiskers for the middle 80% and
/// 95% of samples.
pub fn svg_string(res: &StudyResult) -> String {
    let (w, h) = (720.0, 480.0);
    let (ml, mr, mt, mb) = (80.0, 150.0, 50.0, 60.0);
    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" \
         viewBox=\"0 0 {w} {h}\">\n"
    ));
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    out.push_str(&format!(
        "<text x=\"{}\" y=\"28\" font-size=\"18\" text-anchor=\"middle\" \
         font-family=\"sans-serif\">{}</text>\n",
        w / 2.0,
        res.study
    ));

    // Collect complete cells: every summary stat present and finite.
    let mut cells: BTreeMap<(usize, usize), BTreeMap<String, f64>> = BTreeMap::new();
    for row in &res.rows {
        if SUMMARY_STATS.contains(&row.stat.as_str()) && row.value.is_finite() {
            cells
                .entry((row.n, row.d))
                .or_default()
                .insert(row.stat.clone(), row.value);
        }
    }
    let mut series: BTreeMap<usize, Vec<(usize, [f64; 5])>> = BTreeMap::new();
    for ((n, d), stats) in &cells {
        if stats.len() == SUMMARY_STATS.len() {
            let v = [
                stats["mean"],
                stats["q2.5"],
                stats["q10"],
                stats["q90"],
                stats["q97.5"],
            ];
            series.entry(*n).or_default().push((*d, v));
        }
    }
    if series.is_empty() {
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"14\" text-anchor=\"middle\" \
             font-family=\"sans-serif\">no data</text>\n</svg>\n",
            w / 2.0,
            h / 2.0
        ));
        return out;
    }

    let log_x = series
        .values()
        .flat_map(|pts| pts.iter())
        .all(|(d, _)| *d >= 1);
    let xf = |d: usize| {
        if log_x {
            (d as f64).log2()
        } else {
            d as f64
        }
    };
    let mut x0 = f64::INFINITY;
    let mut x1 = f64::NEG_INFINITY;
    let mut y0 = f64::INFINITY;
    let mut y1 = f64::NEG_INFINITY;
    for pts in series.values() {
        for (d, v) in pts {
            x0 = x0.min(xf(*d));
            x1 = x1.max(xf(*d));
            y0 = y0.min(v[1]);
            y1 = y1.max(v[4]);
        }
    }
    if x1 - x0 < 1e-12 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 - y0 < 1e-12 {
        y0 -= 1.0;
        y1 += 1.0;
    }
    let pad = 0.05 * (y1 - y0);
    y0 -= pad;
    y1 += pad;
    let px = |x: f64| ml + (x - x0) / (x1 - x0) * (w - ml - mr);
    let py = |y: f64| h - mb - (y - y0) / (y1 - y0) * (h - mt - mb);

    // Axes and ticks.
    out.push_str(&format!(
        "<line x1=\"{ml}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        h - mb,
        w - mr,
        h - mb
    ));
    out.push_str(&format!(
        "<line x1=\"{ml}\" y1=\"{mt}\" x2=\"{ml}\" y2=\"{}\" stroke=\"black\"/>\n",
        h - mb
    ));
    for i in 0..5 {
        let y = y0 + (y1 - y0) * i as f64 / 4.0;
        out.push_str(&format!(
            "<line x1=\"{ml}\" y1=\"{:.2}\" x2=\"{}\" y2=\"{:.2}\" stroke=\"#dddddd\"/>\n",
            py(y),
            w - mr,
            py(y)
        ));
        out.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"end\" \
             font-family=\"sans-serif\">{:.4}</text>\n",
            ml - 6.0,
            py(y) + 4.0,
            y
        ));
    }
    let mut xticks: Vec<usize> = series
        .values()
        .flat_map(|pts| pts.iter().map(|(d, _)| *d))
        .collect();
    xticks.sort_unstable();
    xticks.dedup();
    for d in &xticks {
        out.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"middle\" \
             font-family=\"sans-serif\">{d}</text>\n",
            px(xf(*d)),
            h - mb + 18.0
        ));
    }
    out.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\" text-anchor=\"middle\" \
         font-family=\"sans-serif\">D</text>\n",
        (ml + w - mr) / 2.0,
        h - 14.0
    ));

    for (si, (n, pts)) in series.iter().enumerate() {
        let color = SVG_PALETTE[si % SVG_PALETTE.len()];
        let mut pts = pts.clone();
        pts.sort_by_key(|(d, _)| *d);
        for (d, v) in &pts {
            let x = px(xf(*d));
            // 95% whisker, then the wider 80% band.
            out.push_str(&format!(
                "<line x1=\"{x:.2}\" y1=\"{:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" \
                 stroke=\"{color}\" stroke-width=\"1\" opacity=\"0.45\"/>\n",
                py(v[1]),
                py(v[4])
            ));
            out.push_str(&format!(
                "<line x1=\"{x:.2}\" y1=\"{:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" \
                 stroke=\"{color}\" stroke-width=\"3\" opacity=\"0.5\"/>\n",
                py(v[2]),
                py(v[3])
            ));
        }
        let path: Vec<String> = pts
            .iter()
            .map(|(d, v)| format!("{:.2},{:.2}", px(xf(*d)), py(v[0])))
            .collect();
        out.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            path.join(" ")
        ));
        for (d, v) in &pts {
            out.push_str(&format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2.5\" fill=\"{color}\"/>\n",
                px(xf(*d)),
                py(v[0])
            ));
        }
        out.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\" fill=\"{color}\" \
             font-family=\"sans-serif\">N={n}</text>\n",
            w - mr + 12.0,
            mt + 18.0 * si as f64 + 12.0
        ));
    }
    out.push_str("</svg>\n");
    out
}

pub fn emit_svg(res: &StudyResult, path: &Path) -> Result<()> {
    std::fs::write(path, svg_string(res)).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(study: Study) -> ExperimentConfig {
        ExperimentConfig::defaults(study, 42)
    }

    #[test]
    fn quantiles_match_hand_values() {
        let data: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert!((quantile_sorted(&data, 0.25) - 2.25).abs() < 1e-12);
        assert!((quantile_sorted(&data, 0.0) - 0.0).abs() < 1e-12);
        assert!((quantile_sorted(&data, 1.0) - 9.0).abs() < 1e-12);
        assert!((quantile_sorted(&[1.0, 2.0, 3.0, 4.0], 0.5) - 2.5).abs() < 1e-12);
    }

    #[test]
    fn summary_rows_are_ordered() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let values: Vec<f64> = (0..257).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let rows = summarize_cell(4, 2, &Collected { values, dropped: 0 });
        let get = |stat: &str| rows.iter().find(|r| r.stat == stat).unwrap().value;
        assert!(get("q2.5") <= get("q10"));
        assert!(get("q10") <= get("q90"));
        assert!(get("q90") <= get("q97.5"));
        assert!(get("mean") >= get("q2.5") && get("mean") <= get("q97.5"));
        assert_eq!(get("dropped"), 0.0);
    }

    #[test]
    fn split_seed_is_stable_and_spreads() {
        assert_eq!(split_seed(1, 2, 3, 4), split_seed(1, 2, 3, 4));
        let mut seen = std::collections::BTreeSet::new();
        for a in 0..8u64 {
            for b in 0..8u64 {
                for c in 0..8u64 {
                    seen.insert(split_seed(9, a, b, c));
                }
            }
        }
        assert_eq!(seen.len(), 512);
    }

    #[test]
    fn config_json_round_trip_and_validation() {
        let cfg = tiny(Study::AllSite);
        let s = cfg.to_json_string().unwrap();
        let back = ExperimentConfig::from_json_str(&s).unwrap();
        assert_eq!(cfg, back);
        let mut bad = cfg.clone();
        bad.samples = 0;
        assert!(bad.validate().is_err());
        let mut bad = cfg.clone();
        bad.d_list = vec![0];
        assert!(bad.validate().is_err());
        assert!(ExperimentConfig::from_json_str("{\"study\":\"all-site\"}").is_err());
    }

    #[test]
    fn study_names_parse_back() {
        for st in Study::ALL {
            assert_eq!(st.name().parse::<Study>().unwrap(), st);
        }
        assert!("mystery".parse::<Study>().is_err());
    }

    #[test]
    fn center_perturb_product_chains_give_ratio_one() {
        let mut cfg = tiny(Study::CenterPerturb);
        cfg.n_list = vec![5];
        cfg.d_list = vec![1];
        cfg.samples = 6;
        let res = run(&cfg).unwrap();
        for row in res.rows.iter().filter(|r| r.stat != "dropped") {
            assert!(
                (row.value - 1.0).abs() < 1e-9,
                "{}: {}",
                row.stat,
                row.value
            );
        }
    }

    #[test]
    fn center_perturb_ratio_is_at_least_one() {
        let mut cfg = tiny(Study::CenterPerturb);
        cfg.n_list = vec![6];
        cfg.d_list = vec![2, 4];
        cfg.samples = 8;
        let res = run(&cfg).unwrap();
        // Complete summary per cell, no drops, and the contraction
        // inequality keeps every ratio at 1 or above.
        assert_eq!(res.rows.len(), 2 * (SUMMARY_STATS.len() + 1));
        for row in &res.rows {
            if row.stat == "dropped" {
                assert_eq!(row.value, 0.0);
            } else {
                assert!(row.value >= 1.0 - 1e-12);
            }
        }
    }

    #[test]
    fn uncapped_center_study_reports_envelope_bond() {
        let mut cfg = tiny(Study::CenterPerturbUncapped);
        cfg.n_list = vec![6];
        cfg.samples = 4;
        let res = run(&cfg).unwrap();
        // p = 2, six sites: the widest bond the envelope allows is 8.
        assert!(res.rows.iter().all(|r| r.d == 8));
        assert!(res
            .rows
            .iter()
            .all(|r| r.stat == "dropped" || r.value >= 1.0 - 1e-12));
    }

    #[test]
    fn all_site_unit_bond_ratios_stay_at_one() {
        let mut cfg = tiny(Study::AllSite);
        cfg.n_list = vec![4];
        cfg.d_list = vec![1];
        cfg.samples = 3;
        cfg.perturbations_per_sample = 8;
        let res = run(&cfg).unwrap();
        let mean = res.rows.iter().find(|r| r.stat == "mean").unwrap().value;
        // Product chains in both forms: scale-invariant errors coincide.
        assert!((mean - 1.0).abs() < 1e-6, "mean {mean}");
    }

    #[test]
    fn all_site_small_run_is_deterministic() {
        let mut cfg = tiny(Study::AllSite);
        cfg.n_list = vec![4];
        cfg.d_list = vec![2];
        cfg.samples = 3;
        cfg.perturbations_per_sample = 5;
        let a = csv_string(&run(&cfg).unwrap()).unwrap();
        let b = csv_string(&run(&cfg).unwrap()).unwrap();
        assert_eq!(a, b);
        assert!(a.starts_with("study,N,D,stat,value\n"));
    }

    #[test]
    fn average_case_zero_sigma_and_small_run() {
        let mut cfg = tiny(Study::AverageCase);
        cfg.d_list = vec![2];
        cfg.samples = 3;
        cfg.sigma = 0.0;
        let res = run(&cfg).unwrap();
        for row in &res.rows {
            assert_eq!(row.value, 0.0, "{}", row.stat);
        }
        cfg.sigma = 1e-3;
        cfg.samples = 200;
        let res = run(&cfg).unwrap();
        let mean = res.rows.iter().find(|r| r.stat == "mean").unwrap().value;
        let theory = res.rows.iter().find(|r| r.stat == "theory").unwrap().value;
        assert!(theory > 0.0);
        assert!(
            (mean - theory).abs() < 0.25 * theory,
            "mc {mean} vs theory {theory}"
        );
    }

    #[test]
    fn truncation_study_ratio_is_bounded() {
        let mut cfg = tiny(Study::Truncation);
        cfg.n_list = vec![6];
        cfg.d_list = vec![4];
        cfg.samples = 5;
        let res = run(&cfg).unwrap();
        let mean = res.rows.iter().find(|r| r.stat == "mean").unwrap().value;
        assert!(mean <= 1.0 + 100.0 * cfg.eps);
        cfg.eps = 0.0;
        let res = run(&cfg).unwrap();
        for row in res.rows.iter().filter(|r| r.stat == "mean") {
            // Zero budget leaves only refactorization roundoff.
            assert!(row.value < 1e-12, "residual {}", row.value);
        }
    }

    #[test]
    fn energy_quadratic_slope_and_bound() {
        let mut cfg = tiny(Study::EnergyQuadratic);
        cfg.n_list = vec![16];
        cfg.samples = 400;
        let res = run(&cfg).unwrap();
        let slope = res.rows.iter().find(|r| r.stat == "slope").unwrap().value;
        assert!((slope - 2.0).abs() < 0.1, "slope {slope}");
        let viol = res
            .rows
            .iter()
            .find(|r| r.stat == "bound_violations")
            .unwrap()
            .value;
        assert_eq!(viol, 0.0);
    }

    #[test]
    fn energy_error_vanishes_for_parallel_perturbations() {
        // A perturbation along the eigenvector itself renormalizes away.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dim = 8;
        let a = DMatrix::from_fn(dim, dim, |_, _| rng.gen_range(-1.0..=1.0_f64));
        let h = (&a + a.transpose()) * 0.5;
        let eig = h.clone().symmetric_eigen();
        let x = eig.eigenvectors.column(0).clone_owned();
        let e = eig.eigenvalues[0];
        let xhat = &x * (1.0 + 1e-3);
        let xhat = &xhat / xhat.norm();
        let ehat = (xhat.transpose() * &h * &xhat)[(0, 0)];
        assert!((ehat - e).abs() < 1e-12 * e.abs().max(1.0));
    }

    #[test]
    fn csv_round_trip_and_empty_result() {
        let res = StudyResult {
            study: "all-site".to_string(),
            rows: vec![
                StudyRow {
                    n: 8,
                    d: 4,
                    stat: "mean".to_string(),
                    value: 1.25e-3,
                },
                StudyRow {
                    n: 8,
                    d: 4,
                    stat: "q97.5".to_string(),
                    value: 0.1 + 0.2,
                },
            ],
        };
        let s = csv_string(&res).unwrap();
        assert_eq!(parse_csv_str(&s).unwrap(), res);
        let empty = StudyResult {
            study: "x".to_string(),
            rows: vec![],
        };
        assert_eq!(csv_string(&empty).unwrap(), "study,N,D,stat,value\n");
        assert!(parse_csv_str("a,b\n1,2\n").is_err());
    }

    #[test]
    fn svg_output_is_well_formed_xml() {
        let mut cfg = tiny(Study::CenterPerturb);
        cfg.n_list = vec![4, 6];
        cfg.d_list = vec![2, 4];
        cfg.samples = 5;
        let res = run(&cfg).unwrap();
        let svg = svg_string(&res);
        let doc = roxmltree::Document::parse(&svg).unwrap();
        assert_eq!(doc.root_element().tag_name().name(), "svg");
        assert!(svg.contains("polyline"));
        let empty = svg_string(&StudyResult {
            study: "x".to_string(),
            rows: vec![],
        });
        roxmltree::Document::parse(&empty).unwrap();
        assert!(empty.contains("no data"));
    }

    #[test]
    fn normalize_state_gives_unit_norm() {
        let m = random_mps(5, 3, 2, 77, uni()).unwrap();
        let nm = normalize_state(&m).unwrap();
        assert!((state_norm(&nm) - 1.0).abs() < 1e-9);
    }
}
