//! Command-line surface over the tncond library.
//!
//! Single-value results print as JSON; studies print CSV (or SVG with
//! `--format svg`). Networks are read from the JSON format of
//! `tncond::network::json`; chain and grid commands expect the naming
//! conventions of `tncond::mps::to_network` and `tncond::peps::to_network`.
//!
//! Exit codes: 0 on success, 2 on validation or input errors, 3 when an
//! iterative solve fails to converge.

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use tncond::conditioning::{condition_numbers_with_cap, worst_case_solve_with_cap};
use tncond::error::{Error, Result};
use tncond::experiment::{self, csv_string, svg_string, ExperimentConfig, Study};
use tncond::mps;
use tncond::network::json::{load_network, network_to_json};
use tncond::network::{
    contract_network_with_cap, is_canonical_with_cap, verify_matvec_identity_with_cap,
    TensorNetwork, DEFAULT_CAP,
};
use tncond::peps;

const DEFAULT_CANONICAL_TOL: f64 = 1e-8;
const DEFAULT_MATVEC_TOL: f64 = 1e-10;
const DEFAULT_SOLVE_TOL: f64 = 1e-10;

#[derive(Parser)]
#[command(
    name = "tncond",
    version,
    about = "Conditioning and perturbation-error bounds for dense tensor networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    global: Global,
}

#[derive(Args)]
struct Global {
    /// Root seed; required by randomized commands (`experiment`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Numerical tolerance for iterative solvers and structure checks.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Cap on dense intermediate entries during contraction.
    #[arg(long, global = true)]
    cap: Option<usize>,
    /// Output file; standard output when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Output format; JSON for single values, CSV/SVG for studies.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
    Svg,
}

#[derive(Subcommand)]
enum Command {
    /// Contract a network file into a dense tensor.
    Contract {
        /// Network JSON file.
        net: PathBuf,
    },
    /// Absolute and relative condition numbers of a network.
    Cond {
        /// Network JSON file.
        net: PathBuf,
    },
    /// Worst-case first-order error bounds.
    #[command(subcommand)]
    Bound(BoundCmd),
    /// Maximize the first-order error over sitewise budgets.
    SolveWorst {
        /// Network JSON file.
        net: PathBuf,
        /// Per-site budgets in the file's vertex order; a single value is
        /// used for every site.
        #[arg(long, value_delimiter = ',', required = true)]
        eps: Vec<f64>,
        /// Iteration limit per restart.
        #[arg(long, default_value_t = 500)]
        max_iter: usize,
    },
    /// Gauge a chain network into canonical form around a center site.
    Canonicalize {
        /// Chain network JSON file.
        net: PathBuf,
        /// Center site index.
        #[arg(long)]
        center: usize,
    },
    /// Structure checks.
    #[command(subcommand)]
    Verify(VerifyCmd),
    /// Run a seeded randomized study.
    Experiment {
        /// One of: center-perturb, center-perturb-uncapped, all-site,
        /// all-site-uncapped, average-case, truncation, energy-quadratic.
        study: String,
        /// Config JSON file; when given, flags other than --seed/--out
        /// are ignored.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Site counts (matrix dimension for energy-quadratic).
        #[arg(long = "N", value_delimiter = ',')]
        n: Option<Vec<usize>>,
        /// Bond dimensions.
        #[arg(long = "D", value_delimiter = ',')]
        d: Option<Vec<usize>>,
        /// Physical dimension.
        #[arg(long)]
        p: Option<usize>,
        /// Number of sampled instances per cell.
        #[arg(long)]
        samples: Option<usize>,
        /// Perturbations drawn per sample (all-site studies).
        #[arg(long)]
        perturbations: Option<usize>,
        /// Sitewise relative budget.
        #[arg(long)]
        eps: Option<f64>,
        /// Entrywise standard deviation (average-case).
        #[arg(long)]
        sigma: Option<f64>,
    },
}

#[derive(Subcommand)]
enum BoundCmd {
    /// All-site bound for a general (ungauged) chain network.
    General {
        /// Chain network JSON file.
        net: PathBuf,
        /// Sitewise relative budget.
        #[arg(long)]
        eps: f64,
    },
    /// Exact-sum and simple all-site bounds for a canonical chain.
    Canonical {
        /// Chain network JSON file.
        net: PathBuf,
        /// Sitewise relative budget.
        #[arg(long)]
        eps: f64,
        /// Canonical center site; verified before use.
        #[arg(long)]
        center: usize,
    },
    /// Bound for perturbing a single chain site.
    SingleSite {
        /// Chain network JSON file.
        net: PathBuf,
        /// Relative budget at the site.
        #[arg(long)]
        eps: f64,
        /// Perturbed site index.
        #[arg(long)]
        site: usize,
        /// Canonical center, if the chain is gauged; verified before use.
        #[arg(long)]
        center: Option<usize>,
    },
    /// Columnwise mixed-budget bound for a grid network.
    Peps {
        /// Grid network JSON file.
        net: PathBuf,
        /// Columnwise relative budget.
        #[arg(long)]
        eps1: f64,
        /// Sitewise budget inside the last column.
        #[arg(long)]
        eps2: f64,
        /// Use the corner-canonical form of the bound (verified).
        #[arg(long)]
        canonical: bool,
    },
}

#[derive(Subcommand)]
enum VerifyCmd {
    /// Check that the environment of a vertex is an isometry.
    Canonical {
        /// Network JSON file.
        net: PathBuf,
        /// Center vertex id.
        #[arg(long)]
        center: String,
    },
    /// Check the environment matrix-vector identity for a vertex subset.
    Matvec {
        /// Network JSON file.
        net: PathBuf,
        /// Vertex ids forming the subset.
        #[arg(long, value_delimiter = ',', required = true)]
        vertices: Vec<String>,
    },
}

fn main() -> ExitCode {
    init_threads();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::ConvergenceError { .. } => 3,
        _ => 2,
    }
}

/// `TNCOND_THREADS` caps worker parallelism; default is the machine's.
fn init_threads() {
    if let Some(n) = std::env::var("TNCOND_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
    {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
}

fn validation(detail: impl Into<String>) -> Error {
    Error::ShapeError {
        detail: detail.into(),
    }
}

fn write_out(global: &Global, text: &str) -> Result<()> {
    match &global.out {
        Some(path) => {
            std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Single-value commands emit JSON only.
fn require_json(global: &Global) -> Result<()> {
    match global.format {
        None | Some(Format::Json) => Ok(()),
        Some(f) => Err(validation(format!("this command prints json, not {f:?}",))),
    }
}

fn write_json(global: &Global, value: &serde_json::Value) -> Result<()> {
    require_json(global)?;
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| Error::Parse(format!("json: {e}")))?;
    text.push('\n');
    write_out(global, &text)
}

fn chain_from_file(path: &Path, center: Option<usize>) -> Result<(TensorNetwork, mps::Mps)> {
    let tn = load_network(path)?;
    let m = mps::from_network(&tn, center)?;
    Ok((tn, m))
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    let cap = g.cap.unwrap_or(DEFAULT_CAP);
    match cli.command {
        Command::Contract { net } => {
            require_json(g)?;
            let tn = load_network(&net)?;
            let t = contract_network_with_cap(&tn, cap)?;
            let value = serde_json::to_value(&t).map_err(|e| Error::Parse(format!("json: {e}")))?;
            write_json(g, &value)
        }
        Command::Cond { net } => {
            let tn = load_network(&net)?;
            let c = condition_numbers_with_cap(&tn, cap)?;
            let value = serde_json::to_value(&c).map_err(|e| Error::Parse(format!("json: {e}")))?;
            write_json(g, &value)
        }
        Command::Bound(cmd) => run_bound(g, cmd),
        Command::SolveWorst { net, eps, max_iter } => {
            let tn = load_network(&net)?;
            let budgets = broadcast_budgets(&tn, &eps)?;
            let tol = g.tol.unwrap_or(DEFAULT_SOLVE_TOL);
            let report = worst_case_solve_with_cap(&tn, &budgets, tol, max_iter, cap)?;
            let value =
                serde_json::to_value(&report).map_err(|e| Error::Parse(format!("json: {e}")))?;
            write_json(g, &value)
        }
        Command::Canonicalize { net, center } => {
            require_json(g)?;
            let (_, m) = chain_from_file(&net, None)?;
            let canon = mps::canonicalize(&m, center)?;
            let out = mps::to_network(&canon)?;
            write_out(g, &network_to_json(&out))
        }
        Command::Verify(cmd) => run_verify(g, cap, cmd),
        Command::Experiment {
            study,
            config,
            n,
            d,
            p,
            samples,
            perturbations,
            eps,
            sigma,
        } => {
            let study: Study = study.parse()?;
            let mut cfg = match &config {
                Some(path) => {
                    let text = std::fs::read_to_string(path)
                        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
                    let cfg = ExperimentConfig::from_json_str(&text)?;
                    if cfg.study != study {
                        return Err(validation(format!(
                            "config file is for study '{}', not '{study}'",
                            cfg.study
                        )));
                    }
                    cfg
                }
                None => {
                    let seed = g
                        .seed
                        .ok_or_else(|| validation("--seed is required for experiment runs"))?;
                    let mut cfg = ExperimentConfig::defaults(study, seed);
                    if let Some(n) = n {
                        cfg.n_list = n;
                    }
                    if let Some(d) = d {
                        cfg.d_list = d;
                    }
                    if let Some(p) = p {
                        cfg.phys_dim = p;
                    }
                    if let Some(s) = samples {
                        cfg.samples = s;
                    }
                    if let Some(k) = perturbations {
                        cfg.perturbations_per_sample = k;
                    }
                    if let Some(e) = eps {
                        cfg.eps = e;
                    }
                    if let Some(s) = sigma {
                        cfg.sigma = s;
                    }
                    cfg
                }
            };
            if let Some(seed) = g.seed {
                cfg.seed = seed;
            }
            cfg.validate()?;
            let res = experiment::run(&cfg)?;
            match g.format.unwrap_or(Format::Csv) {
                Format::Csv => write_out(g, &csv_string(&res)?),
                Format::Svg => write_out(g, &svg_string(&res)),
                Format::Json => Err(validation("experiment emits csv or svg, not json")),
            }
        }
    }
}

/// One budget per vertex in the file's listing order; a single value is
/// broadcast to every site.
fn broadcast_budgets(tn: &TensorNetwork, eps: &[f64]) -> Result<Vec<f64>> {
    if eps.len() == 1 {
        return Ok(vec![eps[0]; tn.n_vertices()]);
    }
    if eps.len() != tn.n_vertices() {
        return Err(validation(format!(
            "{} budgets given for {} sites",
            eps.len(),
            tn.n_vertices()
        )));
    }
    Ok(eps.to_vec())
}

fn run_bound(g: &Global, cmd: BoundCmd) -> Result<()> {
    match cmd {
        BoundCmd::General { net, eps } => {
            let (_, m) = chain_from_file(&net, None)?;
            let bound = mps::all_site_bound_general(&m, eps)?;
            write_json(g, &serde_json::json!({ "bound": bound }))
        }
        BoundCmd::Canonical { net, eps, center } => {
            let (_, m) = chain_from_file(&net, Some(center))?;
            let cb = mps::all_site_bound_canonical(&m, eps)?;
            write_json(
                g,
                &serde_json::json!({ "exact_sum": cb.exact_sum, "simple": cb.simple }),
            )
        }
        BoundCmd::SingleSite {
            net,
            eps,
            site,
            center,
        } => {
            let (_, m) = chain_from_file(&net, center)?;
            let bound = mps::single_site_bound(&m, site, eps)?;
            write_json(g, &serde_json::json!({ "bound": bound }))
        }
        BoundCmd::Peps {
            net,
            eps1,
            eps2,
            canonical,
        } => {
            let tn = load_network(&net)?;
            let p = peps::from_network(&tn)?;
            if canonical {
                let cb = peps::peps_bound_canonical(&p, eps1, eps2)?;
                write_json(
                    g,
                    &serde_json::json!({ "exact_sum": cb.exact_sum, "simple": cb.simple }),
                )
            } else {
                let bound = peps::peps_bound_general(&p, eps1, eps2)?;
                write_json(g, &serde_json::json!({ "bound": bound }))
            }
        }
    }
}

fn run_verify(g: &Global, cap: usize, cmd: VerifyCmd) -> Result<()> {
    match cmd {
        VerifyCmd::Canonical { net, center } => {
            let tn = load_network(&net)?;
            let tol = g.tol.unwrap_or(DEFAULT_CANONICAL_TOL);
            let ok = is_canonical_with_cap(&tn, &center, tol, cap)?;
            write_json(g, &serde_json::json!({ "canonical": ok }))
        }
        VerifyCmd::Matvec { net, vertices } => {
            let tn = load_network(&net)?;
            let vset: BTreeSet<String> = vertices.into_iter().collect();
            let tol = g.tol.unwrap_or(DEFAULT_MATVEC_TOL);
            let check = verify_matvec_identity_with_cap(&tn, &vset, tol, cap)?;
            write_json(
                g,
                &serde_json::json!({
                    "passed": check.passed,
                    "rel_deviation": check.rel_deviation,
                }),
            )
        }
    }
}
