use nonlinear_response::cli::run_cli;
use std::fs;
use std::path::{Path, PathBuf};

const SMALL: &str = r#"{
  "model": {"kind": "xxz", "parameters": {"N": 4, "Δ": 0.7, "h_e": 0.2}, "boundary": "open"},
  "channels": [{"pump": {"kind": "local_pauli", "sites": [1], "axis": "X"}}],
  "observables": [{"kind": "single_site", "site": 2, "axis": "X"}],
  "protocol": {"kind": "response", "orders": [1, 2, 3]},
  "evolver": {"kind": "exact"},
  "t_grid": {"t_min": 0.0, "t_max": 4.0, "n_points": 17},
  "sampling": {"total_shots": 3000},
  "seed": 5
}"#;

fn cli(args: &[&str]) -> i32 {
    run_cli(std::iter::once("nlresponse").chain(args.iter().copied()))
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_writes_outputs_and_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.json", SMALL);
    let out = dir.path().join("out");
    assert_eq!(cli(&["run", "--config", s(&cfg), "--out", s(&out)]), 0);
    for f in ["response.csv", "response_noisy.csv", "metadata.json", "config.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["seed"], 5);
    let csv = fs::read_to_string(out.join("response.csv")).unwrap();
    assert!(!csv.contains('\r'));
    assert_eq!(csv.lines().count(), 18);
}

#[test]
fn seeded_runs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.json", SMALL);
    let read = |out: &Path| fs::read(out.join("response_noisy.csv")).unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    assert_eq!(cli(&["run", "--config", s(&cfg), "--out", s(&a), "--threads", "1"]), 0);
    assert_eq!(cli(&["run", "--config", s(&cfg), "--out", s(&b), "--threads", "3"]), 0);
    assert_eq!(cli(&["run", "--config", s(&cfg), "--out", s(&c), "--seed", "6"]), 0);
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
}

#[test]
fn verify_passes_and_detects_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.json", SMALL);
    let out = dir.path().join("v");
    assert_eq!(cli(&["verify", "--config", s(&cfg), "--out", s(&out)]), 0);
    assert!(out.join("verify.csv").exists());
    assert_eq!(cli(&["verify", "--config", s(&cfg), "--out", s(&out), "--corrupt-coefficients", "1e-3"]), 3);
}

#[test]
fn verify_refuses_oversized_systems() {
    let dir = tempfile::tempdir().unwrap();
    let big = SMALL.replace("\"N\": 4", "\"N\": 13");
    let cfg = write_config(dir.path(), "big.json", &big);
    let out = dir.path().join("v");
    assert_eq!(cli(&["verify", "--config", s(&cfg), "--out", s(&out)]), 4);
    let err: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("error.json")).unwrap()).unwrap();
    assert!(err.is_object());
}

#[test]
fn malformed_configs_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let bad_key = write_config(dir.path(), "k.json", &SMALL.replace("\"seed\"", "\"sede\""));
    assert_eq!(cli(&["run", "--config", s(&bad_key), "--out", s(&out)]), 2);
    let bad_json = write_config(dir.path(), "j.json", "{ not json");
    assert_eq!(cli(&["run", "--config", s(&bad_json), "--out", s(&out)]), 2);
    assert_eq!(cli(&["frobnicate"]), 2);
}

#[test]
fn gaps_and_spectra_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.json", SMALL);
    let gaps = dir.path().join("g");
    assert_eq!(cli(&["gaps", "--config", s(&cfg), "--out", s(&gaps), "--max-order", "4"]), 0);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(gaps.join("gaps.json")).unwrap()).unwrap();
    assert!(report.as_array().is_some_and(|r| !r.is_empty()));

    let run = dir.path().join("r");
    assert_eq!(cli(&["run", "--config", s(&cfg), "--out", s(&run)]), 0);
    let spec = dir.path().join("s");
    assert_eq!(cli(&["spectra", "--input", s(&run.join("response.csv")), "--out", s(&spec), "--window", "hann"]), 0);
    let text = fs::read_to_string(spec.join("spectrum.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 17 / 2 + 1);
}

#[test]
fn bundled_figure_configs_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../figures");
    let mut seen = 0;
    for entry in fs::read_dir(&root).unwrap().chain(fs::read_dir(root.join("golden")).unwrap()) {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            nonlinear_response::cli::load_config(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            seen += 1;
        }
    }
    assert!(seen >= 12);
}
