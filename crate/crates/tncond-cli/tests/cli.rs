//! End-to-end tests that drive the compiled `tncond` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use tncond::experiment::triangle_network;
use tncond::mps::{self, random_mps};
use tncond::network::json::{load_network, save_network};
use tncond::tensor::Dist;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tncond"))
}

fn run_ok(args: &[&str]) -> String {
    let out = bin().args(args).output().expect("binary runs");
    assert!(
        out.status.success(),
        "command {:?} failed: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("utf8 stdout")
}

fn run_fail(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("binary runs");
    assert!(
        !out.status.success(),
        "command {:?} unexpectedly passed",
        args
    );
    out
}

fn chain_file(dir: &Path, name: &str, n: usize, d: usize, seed: u64) -> PathBuf {
    let m = random_mps(n, d, 2, seed, Dist::Uniform { lo: -1.0, hi: 1.0 }).unwrap();
    let tn = mps::to_network(&m).unwrap();
    let path = dir.join(name);
    save_network(&tn, &path).unwrap();
    path
}

#[test]
fn help_lists_every_command_and_flag() {
    let text = run_ok(&["--help"]);
    for cmd in [
        "contract",
        "cond",
        "bound",
        "solve-worst",
        "canonicalize",
        "verify",
        "experiment",
    ] {
        assert!(text.contains(cmd), "--help is missing `{cmd}`");
    }
    for flag in ["--seed", "--tol", "--cap", "--out", "--format"] {
        assert!(text.contains(flag), "--help is missing `{flag}`");
    }
    let bound = run_ok(&["bound", "--help"]);
    for sub in ["general", "canonical", "single-site", "peps"] {
        assert!(bound.contains(sub), "bound --help is missing `{sub}`");
    }
    let verify = run_ok(&["verify", "--help"]);
    assert!(verify.contains("canonical") && verify.contains("matvec"));
}

#[test]
fn cond_matches_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let tn = triangle_network(3, 11).unwrap();
    let path = dir.path().join("tri.json");
    save_network(&tn, &path).unwrap();

    let text = run_ok(&["cond", path.to_str().unwrap()]);
    let got: serde_json::Value = serde_json::from_str(&text).unwrap();
    let want = tncond::conditioning::condition_numbers(&tn).unwrap();
    let abs = got["kappa_abs"].as_f64().unwrap();
    let rel = got["kappa_rel"].as_f64().unwrap();
    assert!((abs - want.kappa_abs).abs() <= 1e-12 * want.kappa_abs);
    assert!((rel - want.kappa_rel).abs() <= 1e-12 * want.kappa_rel);
}

#[test]
fn contract_reports_missing_files_on_one_line() {
    let out = run_fail(&["contract", "no-such-network.json"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.starts_with("error: "), "stderr was {err:?}");
    assert!(err.contains("no-such-network.json"));
    assert_eq!(err.trim_end().lines().count(), 1, "stderr was {err:?}");
}

#[test]
fn contract_agrees_with_direct_contraction() {
    let dir = tempfile::tempdir().unwrap();
    let path = chain_file(dir.path(), "chain.json", 3, 2, 5);
    let tn = load_network(&path).unwrap();
    let want = tncond::network::contract_network(&tn).unwrap();

    let text = run_ok(&["contract", path.to_str().unwrap()]);
    let got: tncond::tensor::DenseTensor = serde_json::from_str(&text).unwrap();
    assert_eq!(got.legs(), want.legs());
    for (a, b) in got.data().iter().zip(want.data().iter()) {
        assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
    }
}

#[test]
fn canonicalize_then_verify_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = chain_file(dir.path(), "chain.json", 4, 3, 9);
    let canon_path = dir.path().join("canon.json");

    run_ok(&[
        "canonicalize",
        path.to_str().unwrap(),
        "--center",
        "2",
        "--out",
        canon_path.to_str().unwrap(),
    ]);
    let text = run_ok(&[
        "verify",
        "canonical",
        canon_path.to_str().unwrap(),
        "--center",
        "s002",
    ]);
    let got: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(got["canonical"], serde_json::Value::Bool(true));

    // The canonical chain still contracts to the same state.
    let before = tncond::network::contract_network(&load_network(&path).unwrap()).unwrap();
    let after = tncond::network::contract_network(&load_network(&canon_path).unwrap()).unwrap();
    let diff: f64 = before
        .data()
        .iter()
        .zip(after.data().iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    assert!(diff <= 1e-10, "states differ by {diff}");
}

#[test]
fn bound_commands_match_library_values() {
    let dir = tempfile::tempdir().unwrap();
    let path = chain_file(dir.path(), "chain.json", 4, 3, 13);
    let m = mps::from_network(&load_network(&path).unwrap(), None).unwrap();
    let canon = mps::canonicalize(&m, 2).unwrap();
    let canon_path = dir.path().join("canon.json");
    save_network(&mps::to_network(&canon).unwrap(), &canon_path).unwrap();

    let text = run_ok(&["bound", "general", path.to_str().unwrap(), "--eps", "1e-4"]);
    let got: serde_json::Value = serde_json::from_str(&text).unwrap();
    let want = mps::all_site_bound_general(&m, 1e-4).unwrap();
    assert!((got["bound"].as_f64().unwrap() - want).abs() <= 1e-12 * want);

    let text = run_ok(&[
        "bound",
        "canonical",
        canon_path.to_str().unwrap(),
        "--eps",
        "1e-4",
        "--center",
        "2",
    ]);
    let got: serde_json::Value = serde_json::from_str(&text).unwrap();
    let want = mps::all_site_bound_canonical(&canon, 1e-4).unwrap();
    assert!((got["exact_sum"].as_f64().unwrap() - want.exact_sum).abs() <= 1e-12 * want.exact_sum);
    assert!((got["simple"].as_f64().unwrap() - want.simple).abs() <= 1e-12 * want.simple);

    let text = run_ok(&[
        "bound",
        "single-site",
        canon_path.to_str().unwrap(),
        "--eps",
        "1e-4",
        "--site",
        "2",
        "--center",
        "2",
    ]);
    let got: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert!((got["bound"].as_f64().unwrap() - 1e-4).abs() <= 1e-16);

    // Claiming the wrong center is a validation error, not a wrong answer.
    let out = run_fail(&[
        "bound",
        "canonical",
        canon_path.to_str().unwrap(),
        "--eps",
        "1e-4",
        "--center",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn solve_worst_reaches_its_own_bound_on_scalar_networks() {
    let dir = tempfile::tempdir().unwrap();
    let tn = triangle_network(2, 21).unwrap();
    let path = dir.path().join("tri.json");
    save_network(&tn, &path).unwrap();

    let text = run_ok(&[
        "solve-worst",
        path.to_str().unwrap(),
        "--eps",
        "1e-5",
        "--seed",
        "3",
    ]);
    let got: serde_json::Value = serde_json::from_str(&text).unwrap();
    let bound = got["bound"].as_f64().unwrap();
    let solved = got["solved_value"].as_f64().unwrap();
    assert!(bound > 0.0);
    assert!(
        (solved - bound).abs() <= 1e-6 * bound,
        "solved {solved} vs bound {bound}"
    );

    // A budget list must either be scalar or match the site count.
    let out = run_fail(&["solve-worst", path.to_str().unwrap(), "--eps", "1e-5,1e-5"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_matvec_passes_on_a_vertex_subset() {
    let dir = tempfile::tempdir().unwrap();
    let path = chain_file(dir.path(), "chain.json", 3, 2, 17);
    let text = run_ok(&[
        "verify",
        "matvec",
        path.to_str().unwrap(),
        "--vertices",
        "s000,s001",
    ]);
    let got: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(got["passed"], serde_json::Value::Bool(true));
    assert!(got["rel_deviation"].as_f64().unwrap() <= 1e-10);
}

#[test]
fn experiment_runs_are_reproducible_files() {
    let dir = tempfile::tempdir().unwrap();
    let out1 = dir.path().join("a.csv");
    let out2 = dir.path().join("b.csv");
    let args = |out: &Path| {
        vec![
            "experiment".to_string(),
            "average-case".to_string(),
            "--D".to_string(),
            "2".to_string(),
            "--samples".to_string(),
            "5".to_string(),
            "--seed".to_string(),
            "7".to_string(),
            "--out".to_string(),
            out.to_str().unwrap().to_string(),
        ]
    };
    let out = bin().args(args(&out1)).output().unwrap();
    assert!(out.status.success());
    let out = bin().args(args(&out2)).output().unwrap();
    assert!(out.status.success());

    let a = std::fs::read(&out1).unwrap();
    let b = std::fs::read(&out2).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, b, "reruns must be byte-identical");
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("study,N,D,stat,value\n"));
}

#[test]
fn experiment_svg_output_parses_as_xml() {
    let text = run_ok(&[
        "experiment",
        "average-case",
        "--D",
        "2,4",
        "--samples",
        "4",
        "--seed",
        "7",
        "--format",
        "svg",
    ]);
    let doc = roxmltree::Document::parse(&text).expect("well-formed svg");
    assert_eq!(doc.root_element().tag_name().name(), "svg");
}

#[test]
fn experiment_validation_failures_exit_2() {
    // Randomized runs refuse to pick a seed silently.
    let out = run_fail(&["experiment", "average-case", "--D", "2", "--samples", "5"]);
    assert_eq!(out.status.code(), Some(2));

    // Unknown study names are rejected.
    let out = run_fail(&["experiment", "no-such-study", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(2));

    // Single values have no svg rendering; studies have no json rendering.
    let dir = tempfile::tempdir().unwrap();
    let path = chain_file(dir.path(), "chain.json", 3, 2, 23);
    let out = run_fail(&["cond", path.to_str().unwrap(), "--format", "svg"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run_fail(&[
        "experiment",
        "average-case",
        "--D",
        "2",
        "--samples",
        "2",
        "--seed",
        "1",
        "--format",
        "json",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn experiment_config_file_drives_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg =
        tncond::experiment::ExperimentConfig::defaults(tncond::experiment::Study::AverageCase, 7);
    cfg.d_list = vec![2];
    cfg.samples = 5;
    let cfg_path = dir.path().join("cfg.json");
    std::fs::write(&cfg_path, cfg.to_json_string().unwrap()).unwrap();

    let from_cfg = run_ok(&[
        "experiment",
        "average-case",
        "--config",
        cfg_path.to_str().unwrap(),
    ]);
    let from_flags = run_ok(&[
        "experiment",
        "average-case",
        "--D",
        "2",
        "--samples",
        "5",
        "--seed",
        "7",
    ]);
    assert_eq!(from_cfg, from_flags);

    // The positional study must agree with the config file.
    let out = run_fail(&[
        "experiment",
        "truncation",
        "--config",
        cfg_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_flags_are_usage_errors() {
    let out = run_fail(&["cond", "x.json", "--frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}
