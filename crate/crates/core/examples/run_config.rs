//! Runs an experiment config through the library entry point and prints the tables it
//! wrote. Defaults to a small response config; pass a path to run another.

use nonlinear_response::cli::{read_csv, run_experiment, ExperimentConfig};

const SMALL: &str = r#"{
  "model": {"kind": "xxz", "parameters": {"N": 4, "Δ": 1.0, "h_e": 0.3}},
  "channels": [{"pump": {"kind": "local_pauli", "sites": [1]}}],
  "observables": [{"kind": "single_site", "site": 2, "axis": "X"}, {"kind": "spin_current", "i": 1, "j": 2}],
  "protocol": {"kind": "response", "orders": [0, 1, 2, 3]},
  "t_grid": {"t_min": 0.0, "t_max": 4.0, "n_points": 9}
}"#;

fn main() -> nonlinear_response::Result<()> {
    let cfg = match std::env::args().nth(1) {
        Some(path) => nonlinear_response::cli::load_config(path.as_ref())?,
        None => ExperimentConfig::from_json(SMALL)?,
    };
    let out = std::env::temp_dir().join("nlresponse-example");
    let report = run_experiment(&cfg, &out)?;
    println!("wrote {:?} to {}", report.outputs, out.display());
    let table = read_csv(&out.join(&report.outputs[0]))?;
    println!("{}", table.header.join(" | "));
    for row in table.rows.iter().take(5) {
        println!("{}", row.iter().map(|v| format!("{v:+.4e}")).collect::<Vec<_>>().join(" | "));
    }
    Ok(())
}
