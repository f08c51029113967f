//! Command-line driver.
//!
//! Experiments are described by a JSON file. `run` executes its protocol and writes CSV
//! tables plus `config.json` (the resolved config) and `metadata.json`. `verify` compares
//! shift-rule orders with the nested-commutator oracle and finite differences, `gaps`
//! prints the shift-rule ledger of each pump channel and `spectra` transforms an existing
//! time-series CSV.
//!
//! Exit codes: 0 success, 2 configuration error, 3 verification failure, 4 resource cap.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::analysis::{
    contrast_ratio, driven_entropy, entropy_expansion, pca_slope, symmetric_grid, PumpProbe, StringOperator, TwoDos, TwoDosMethod,
};
use crate::error::{Error, Result};
use crate::evolution::{Channel, Dynamics, Evolver, Propagator, PulseSchedule, TimeGrid};
use crate::gpsr::{
    channel_gap_set, configurations, equal_amplitude_order, factorial, kick_gap_set, response_decomposition, responses, GridMode,
    MultiIndex, ShiftRule, GAP_TOL,
};
use crate::models::{
    build_pump, correlation, ground_state, magnetization, spin_current, two_site_magnetization, ModelKind, ModelSpec, PumpSpec,
    ToricLattice,
};
use crate::operators::{dense_cap, Axis, OperatorSum, PauliString, StateVector, DENSE_CAP_SITES};
use crate::oracle::{finite_difference_derivative, pulse_summed_response};
use crate::sampling::{allocate_shots, noisy_response, substream, AllocationMode};
use crate::spectra::{bin_width, diagonal_offdiagonal_weight, envelope_fit, spectrum_1d, spectrum_2d, Window, ENVELOPE_FLOOR};

pub const ENV_OUT_DIR: &str = "NLR_OUT_DIR";
pub const ENV_THREADS: &str = "NLR_THREADS";
const DEFAULT_OUT_DIR: &str = "results";
const TIME_HEADER: &str = "t (1/J)";

#[derive(Debug, Parser)]
#[command(name = "nlresponse", version, about = "Nonlinear response of pulse-driven spin systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the protocol of an experiment config.
    Run(RunArgs),
    /// Compare shift-rule orders with the commutator and finite-difference oracles.
    Verify(VerifyArgs),
    /// Print gap sets, shifts and coefficients of every pump channel.
    Gaps(GapsArgs),
    /// Fourier-transform the columns of a time-series CSV.
    Spectra(SpectraArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, env = ENV_OUT_DIR)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, env = ENV_THREADS)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, default_value_t = 1e-8)]
    pub tolerance: f64,
    #[arg(long, hide = true)]
    pub corrupt_coefficients: Option<f64>,
}

#[derive(Debug, Args)]
pub struct GapsArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, env = ENV_OUT_DIR)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub max_order: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WindowArg {
    None,
    Hann,
}

#[derive(Debug, Args)]
pub struct SpectraArgs {
    /// CSV whose first column is time.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, env = ENV_OUT_DIR)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = WindowArg::None)]
    pub window: WindowArg,
    /// Divide out a fitted exponential envelope before transforming.
    #[arg(long)]
    pub envelope: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    pub pump: PumpSpec,
    #[serde(default = "default_times")]
    pub times: Vec<f64>,
}

fn default_times() -> Vec<f64> {
    vec![0.0]
}

/// Named observable constructors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObservableSpec {
    /// `Z_i + Z_j`.
    TwoSiteMagnetization {
        i: usize,
        j: usize,
    },
    SpinCurrent {
        i: usize,
        j: usize,
        #[serde(default = "axis_z")]
        component: Axis,
    },
    SingleSite {
        site: usize,
        #[serde(default = "axis_x")]
        axis: Axis,
    },
    /// `−(1/N)Σσ^α_j`.
    Magnetization {
        #[serde(default = "axis_x")]
        axis: Axis,
    },
    /// Product `σ^α_i σ^β_j ⋯`; two- and four-point correlators.
    #[serde(alias = "four_point")]
    Correlation {
        factors: Vec<(usize, Axis)>,
    },
    PauliString {
        string: String,
    },
    /// Real combination of Pauli strings.
    Custom {
        terms: Vec<(f64, String)>,
    },
}

fn axis_x() -> Axis {
    Axis::X
}

fn axis_z() -> Axis {
    Axis::Z
}

fn axis_name(a: Axis) -> &'static str {
    match a {
        Axis::X => "x",
        Axis::Y => "y",
        Axis::Z => "z",
    }
}

impl ObservableSpec {
    pub fn build(&self, n: usize) -> Result<OperatorSum> {
        match self {
            ObservableSpec::TwoSiteMagnetization { i, j } => two_site_magnetization(n, *i, *j),
            ObservableSpec::SpinCurrent { i, j, component } => spin_current(n, *i, *j, *component),
            ObservableSpec::SingleSite { site, axis } => correlation(n, &[(*site, *axis)]),
            ObservableSpec::Magnetization { axis } => magnetization(n, *axis),
            ObservableSpec::Correlation { factors } => correlation(n, factors),
            ObservableSpec::PauliString { string } => OperatorSum::from_terms(n, [(1.0, string.parse::<PauliString>()?)]),
            ObservableSpec::Custom { terms } => {
                OperatorSum::from_terms(n, terms.iter().map(|(c, s)| Ok((*c, s.parse::<PauliString>()?))).collect::<Result<Vec<_>>>()?)
            }
        }
    }

    /// Column label.
    pub fn label(&self) -> String {
        match self {
            ObservableSpec::TwoSiteMagnetization { i, j } => format!("Z{i}+Z{j}"),
            ObservableSpec::SpinCurrent { i, j, component } => format!("J{}_{i}_{j}", axis_name(*component)),
            ObservableSpec::SingleSite { site, axis } => format!("{}{site}", axis_name(*axis).to_uppercase()),
            ObservableSpec::Magnetization { axis } => format!("M{}", axis_name(*axis)),
            ObservableSpec::Correlation { factors } => {
                let s: String = factors.iter().map(|(i, a)| format!("{}{i}", axis_name(*a).to_uppercase())).collect();
                format!("C_{s}")
            }
            ObservableSpec::PauliString { string } => string.replace(' ', ""),
            ObservableSpec::Custom { terms } => {
                terms.iter().map(|(c, s)| format!("{c}{}", s.replace(' ', ""))).collect::<Vec<_>>().join("+")
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialState {
    #[default]
    Ground,
    Basis {
        index: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ShiftSettings {
    #[serde(default)]
    pub mode: GridMode,
    /// Explicit shift grid applied to every channel.
    #[serde(default)]
    pub shifts: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingSpec {
    pub total_shots: u64,
    #[serde(default)]
    pub allocation: AllocationMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterSweep {
    pub parameter: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PumpProbeSpec {
    /// Pump generator: sum of the listed strings.
    pub pump: Vec<StringOperator>,
    pub probe1: StringOperator,
    pub probe2: StringOperator,
    #[serde(default = "default_pp_eta")]
    pub eta: f64,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    #[serde(default = "default_pp_order")]
    pub max_order: usize,
    #[serde(default = "default_pp_grid")]
    pub t1: TimeGrid,
    #[serde(default = "default_pp_grid")]
    pub t2: TimeGrid,
    #[serde(default = "default_floor")]
    pub floor: f64,
    #[serde(default = "default_bins")]
    pub histogram_bins: usize,
}

fn default_pp_eta() -> f64 {
    0.1
}
fn default_kappa() -> f64 {
    std::f64::consts::FRAC_PI_2
}
fn default_pp_order() -> usize {
    5
}
fn default_pp_grid() -> TimeGrid {
    TimeGrid { t_min: 0.0, t_max: 5.0, n_points: 21 }
}
fn default_floor() -> f64 {
    crate::analysis::CONTRAST_FLOOR
}
fn default_bins() -> usize {
    40
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default = "default_sweep_parameter")]
    pub parameter: String,
    #[serde(default = "default_sweep_values")]
    pub values: Vec<f64>,
    #[serde(default = "default_sweep_orders")]
    pub orders: [usize; 2],
    pub pump_probe: PumpProbeSpec,
}

fn default_sweep_parameter() -> String {
    "g".into()
}
fn default_sweep_values() -> Vec<f64> {
    (0..21).map(|k| -1.0 + 0.1 * k as f64).collect()
}
fn default_sweep_orders() -> [usize; 2] {
    [3, 5]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoDosSpec {
    #[serde(default = "default_detection")]
    pub detection: ObservableSpec,
    #[serde(default = "default_2dos_pump")]
    pub pump: PumpSpec,
    #[serde(default)]
    pub t2: f64,
    #[serde(default = "default_2dos_grid")]
    pub t1: TimeGrid,
    #[serde(default = "default_2dos_grid")]
    pub t3: TimeGrid,
    #[serde(default)]
    pub method: TwoDosMethod,
    #[serde(default)]
    pub window: Window,
    /// Diagonal band half-width in frequency bins.
    #[serde(default = "default_band")]
    pub band_bins: f64,
}

fn default_detection() -> ObservableSpec {
    ObservableSpec::Custom { terms: vec![(1.0, "X0".into()), (1.0, "X1".into())] }
}
fn default_2dos_pump() -> PumpSpec {
    PumpSpec::CosineProfile { m: None, k: Some(0.0), axis: Axis::X }
}
fn default_2dos_grid() -> TimeGrid {
    TimeGrid { t_min: 0.0, t_max: 40.0, n_points: 41 }
}
fn default_band() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntropySpec {
    /// Sites `0..block` are kept; defaults to half the system.
    #[serde(default)]
    pub block: Option<usize>,
    #[serde(default = "default_entropy_eta")]
    pub eta: f64,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(default = "default_entropy_order")]
    pub max_order: usize,
    #[serde(default)]
    pub sweep: Option<ParameterSweep>,
}

fn default_entropy_eta() -> f64 {
    0.02
}
fn default_grid_points() -> usize {
    9
}
fn default_entropy_order() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Protocol {
    /// Equal-amplitude orders `χ^(m)` summed over channel splits, plus optional explicit
    /// multi-indices.
    Response {
        #[serde(default = "default_orders")]
        orders: Vec<usize>,
        #[serde(default)]
        multi_indices: Vec<Vec<usize>>,
    },
    /// Orders `A^(0..max_order)` and truncation residual at each `η`.
    Decomposition {
        etas: Vec<f64>,
        max_order: usize,
    },
    PumpProbe(PumpProbeSpec),
    #[serde(rename = "2dos")]
    TwoDos(TwoDosSpec),
    Entropy(EntropySpec),
    Sweep(SweepSpec),
}

fn default_orders() -> Vec<usize> {
    vec![1]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    #[serde(default)]
    pub channels: Vec<ChannelSpec>,
    #[serde(default)]
    pub observables: Vec<ObservableSpec>,
    pub protocol: Protocol,
    #[serde(default)]
    pub evolver: Evolver,
    #[serde(default = "default_t_grid")]
    pub t_grid: TimeGrid,
    #[serde(default)]
    pub shifts: ShiftSettings,
    #[serde(default)]
    pub sampling: Option<SamplingSpec>,
    #[serde(default)]
    pub initial_state: InitialState,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

fn default_t_grid() -> TimeGrid {
    TimeGrid { t_min: 0.0, t_max: 5.0, n_points: 51 }
}

fn finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("\"{name}\" must be finite")))
    }
}

fn config_err(e: Error) -> Error {
    match e {
        Error::Invalid(m) => Error::Config(m),
        other => other,
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate().map_err(config_err)?;
        self.evolver.validate().map_err(config_err)?;
        self.t_grid.validate().map_err(config_err)?;
        let n = self.model.n_sites()?;
        for (a, ch) in self.channels.iter().enumerate() {
            build_pump(&ch.pump, n).map_err(config_err)?;
            if ch.times.is_empty() {
                return Err(Error::Config(format!("channel {a} has no pulse times")));
            }
            ch.times.iter().try_for_each(|t| finite("times", *t))?;
        }
        for o in &self.observables {
            o.build(n).map_err(config_err)?;
        }
        if let Some(s) = &self.shifts.shifts {
            s.iter().try_for_each(|v| finite("shifts", *v))?;
        }
        if let InitialState::Basis { index } = self.initial_state {
            if n < usize::BITS as usize && index >> n != 0 {
                return Err(Error::Config(format!("basis index {index} exceeds 2^{n}")));
            }
        }
        let needs_channels = || {
            if self.channels.is_empty() {
                Err(Error::Config("protocol needs at least one pump channel".into()))
            } else {
                Ok(())
            }
        };
        let needs_observables = || {
            if self.observables.is_empty() {
                Err(Error::Config("protocol needs at least one observable".into()))
            } else {
                Ok(())
            }
        };
        match &self.protocol {
            Protocol::Response { multi_indices, .. } => {
                needs_channels()?;
                needs_observables()?;
                if multi_indices.iter().any(|b| b.len() != self.channels.len()) {
                    return Err(Error::Config("every multi-index needs one entry per channel".into()));
                }
            }
            Protocol::Decomposition { etas, .. } => {
                needs_observables()?;
                if self.channels.len() != 1 {
                    return Err(Error::Config("decomposition needs exactly one pump channel".into()));
                }
                etas.iter().try_for_each(|e| finite("etas", *e))?;
            }
            Protocol::PumpProbe(pp) => self.validate_pump_probe(pp)?,
            Protocol::Sweep(s) => {
                self.validate_pump_probe(&s.pump_probe)?;
                s.values.iter().try_for_each(|v| finite("values", *v))?;
                self.model.with_parameter(&s.parameter, 0.5).validate().map_err(config_err)?;
            }
            Protocol::TwoDos(s) => {
                s.detection.build(n).map_err(config_err)?;
                build_pump(&s.pump, n).map_err(config_err)?;
                s.t1.validate().map_err(config_err)?;
                s.t3.validate().map_err(config_err)?;
                finite("t2", s.t2)?;
                if s.t2 < 0.0 {
                    return Err(Error::Config("\"t2\" must be non-negative".into()));
                }
            }
            Protocol::Entropy(e) => {
                if self.channels.len() != 1 {
                    return Err(Error::Config("entropy needs exactly one pump channel".into()));
                }
                finite("eta", e.eta)?;
                if let Some(d) = e.block {
                    if d == 0 || d >= n {
                        return Err(Error::Config(format!("\"block\" must lie in 1..{n}")));
                    }
                }
                if let Some(sw) = &e.sweep {
                    self.model.with_parameter(&sw.parameter, 0.5).validate().map_err(config_err)?;
                }
            }
        }
        Ok(())
    }

    fn validate_pump_probe(&self, pp: &PumpProbeSpec) -> Result<()> {
        let lattice = toric_lattice(&self.model)?;
        if pp.pump.is_empty() {
            return Err(Error::Config("pump-probe needs at least one pump string".into()));
        }
        for s in pp.pump.iter().chain([&pp.probe1, &pp.probe2]) {
            s.pauli(&lattice).map_err(config_err)?;
        }
        pp.t1.validate().map_err(config_err)?;
        pp.t2.validate().map_err(config_err)?;
        finite("eta", pp.eta)?;
        finite("kappa", pp.kappa)
    }

    /// Largest response order the protocol asks for.
    pub fn max_order(&self) -> usize {
        match &self.protocol {
            Protocol::Response { orders, multi_indices } => {
                orders.iter().copied().chain(multi_indices.iter().map(|b| b.iter().sum())).max().unwrap_or(1)
            }
            Protocol::Decomposition { max_order, .. } => *max_order,
            Protocol::PumpProbe(pp) => pp.max_order,
            Protocol::Sweep(s) => s.pump_probe.max_order,
            Protocol::TwoDos(_) => 1,
            Protocol::Entropy(e) => e.max_order,
        }
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    ExperimentConfig::from_json(&text).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn toric_lattice(model: &ModelSpec) -> Result<ToricLattice> {
    if model.kind != ModelKind::ToricCode {
        return Err(Error::Config("pump-probe protocols need a toric_code model".into()));
    }
    ToricLattice::new(model.param("L_x")? as usize, model.param("L_y")? as usize).map_err(config_err)
}

fn initial_state(h0: &OperatorSum, init: InitialState) -> Result<StateVector> {
    match init {
        InitialState::Ground => ground_state(h0),
        InitialState::Basis { index } => {
            dense_cap(h0.n_sites())?;
            Ok(StateVector::basis(h0.n_sites(), index))
        }
    }
}

/// Free propagator and initial state of a model.
pub fn prepare(model: &ModelSpec, evolver: Evolver, init: InitialState) -> Result<(Propagator, StateVector)> {
    let h0 = model.build()?;
    let psi0 = initial_state(&h0, init)?;
    Ok((Propagator::new(&h0, evolver)?, psi0))
}

/// Driven dynamics of the configured channels.
pub fn build_dynamics(cfg: &ExperimentConfig) -> Result<Dynamics> {
    dynamics_for(cfg, &cfg.model)
}

fn dynamics_for(cfg: &ExperimentConfig, model: &ModelSpec) -> Result<Dynamics> {
    let (propagator, psi0) = prepare(model, cfg.evolver, cfg.initial_state)?;
    let n = psi0.n_sites();
    let channels = cfg
        .channels
        .iter()
        .map(|c| Ok(Channel { generator: build_pump(&c.pump, n)?, times: c.times.clone() }))
        .collect::<Result<Vec<_>>>()?;
    Dynamics::with_propagator(propagator, PulseSchedule::new(channels)?, psi0)
}

/// Shift rules of every channel, honouring the configured grid.
pub fn build_rules(dynamics: &Dynamics, settings: &ShiftSettings, max_order: usize) -> Result<Vec<ShiftRule>> {
    dynamics
        .schedule()
        .channels()
        .iter()
        .enumerate()
        .map(|(a, ch)| {
            let gaps = channel_gap_set(&kick_gap_set(dynamics.kick_generator(a), GAP_TOL), ch.times.len());
            match (settings.mode, &settings.shifts) {
                (GridMode::Full, None) => ShiftRule::new(gaps, max_order),
                (GridMode::Full, Some(s)) => ShiftRule::with_shifts(gaps, s.clone(), max_order),
                (GridMode::OddSymmetric, _) => ShiftRule::odd_symmetric(gaps, max_order),
            }
        })
        .collect()
}

/// Header plus rows of numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(header: Vec<String>) -> Self {
        Table { header, rows: Vec::new() }
    }

    pub fn from_columns(header: Vec<String>, columns: &[Vec<f64>]) -> Self {
        let n = columns.first().map_or(0, Vec::len);
        Table { header, rows: (0..n).map(|k| columns.iter().map(|c| c[k]).collect()).collect() }
    }

    pub fn column(&self, i: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[i]).collect()
    }
}

pub fn format_number(v: f64) -> String {
    format!("{v:.17e}")
}

pub fn write_csv(path: &Path, table: &Table) -> Result<()> {
    let io = |e: csv::Error| Error::Io(format!("{}: {e}", path.display()));
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path).map_err(io)?;
    w.write_record(&table.header).map_err(io)?;
    for row in &table.rows {
        w.write_record(row.iter().map(|v| format_number(*v))).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Table> {
    let io = |e: csv::Error| Error::Config(format!("{}: {e}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(io)?;
    let header = r.headers().map_err(io)?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(io)?;
        let row = rec
            .iter()
            .map(|f| f.trim().parse::<f64>().map_err(|e| Error::Config(format!("{}: {e} in \"{f}\"", path.display()))))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(Table { header, rows })
}

fn write_json(path: &Path, v: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(v).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

/// Files written by a run and protocol-specific summary data for the metadata.
#[derive(Debug, Clone, Default)]
pub struct RunReport {
    pub outputs: Vec<String>,
    pub summary: Value,
}

struct Sink<'a> {
    dir: &'a Path,
    outputs: Vec<String>,
}

impl Sink<'_> {
    fn csv(&mut self, name: &str, table: &Table) -> Result<()> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        write_csv(&path, table)?;
        self.outputs.push(name.to_string());
        Ok(())
    }
}

/// Runs the configured protocol and writes its tables into `out`.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<RunReport> {
    fs::create_dir_all(out)?;
    let mut sink = Sink { dir: out, outputs: Vec::new() };
    let summary = match &cfg.protocol {
        Protocol::Response { orders, multi_indices } => run_response(cfg, orders, multi_indices, &mut sink)?,
        Protocol::Decomposition { etas, max_order } => run_decomposition(cfg, etas, *max_order, &mut sink)?,
        Protocol::PumpProbe(pp) => run_pump_probe(cfg, pp, &mut sink)?,
        Protocol::Sweep(s) => run_sweep(cfg, s, &mut sink)?,
        Protocol::TwoDos(s) => run_2dos(cfg, s, &mut sink)?,
        Protocol::Entropy(e) => run_entropy(cfg, e, &mut sink)?,
    };
    Ok(RunReport { outputs: sink.outputs, summary })
}

fn beta_label(beta: &[usize]) -> String {
    beta.iter().map(|b| b.to_string()).collect::<Vec<_>>().join("-")
}

fn run_response(cfg: &ExperimentConfig, orders: &[usize], multi: &[Vec<usize>], sink: &mut Sink) -> Result<Value> {
    let dynamics = build_dynamics(cfg)?;
    let rules = build_rules(&dynamics, &cfg.shifts, cfg.max_order())?;
    let times = cfg.t_grid.points();
    let n = dynamics.initial_state().n_sites();
    let betas: Vec<MultiIndex> = multi.iter().map(|b| MultiIndex::new(b.clone())).collect::<Result<_>>()?;
    let mut header = vec![TIME_HEADER.to_string()];
    let mut columns = vec![times.clone()];
    let mut noisy_header = header.clone();
    let mut noisy_columns = columns.clone();
    let mut configs = Vec::new();
    for (oi, obs) in cfg.observables.iter().enumerate() {
        let a = obs.build(n)?;
        let label = obs.label();
        for &m in orders {
            header.push(format!("chi{m}_{label}"));
            columns.push(equal_amplitude_order(&dynamics, &rules, &a, &times, m)?);
            if let Some(s) = &cfg.sampling {
                let (v, e) = noisy_order(&dynamics, &rules, &a, &times, m, s, stream_seed(cfg.seed, oi, m))?;
                noisy_header.push(format!("chi{m}_{label}"));
                noisy_header.push(format!("stderr{m}_{label}"));
                noisy_columns.push(v);
                noisy_columns.push(e);
            }
        }
        for s in responses(&dynamics, &rules, &a, &times, &betas)? {
            header.push(format!("chi[{}]_{label}", beta_label(s.beta.beta())));
            configs.push(json!({"beta": s.beta.beta(), "configurations": s.configurations}));
            columns.push(s.values);
        }
    }
    sink.csv("response.csv", &Table::from_columns(header, &columns))?;
    if cfg.sampling.is_some() {
        sink.csv("response_noisy.csv", &Table::from_columns(noisy_header, &noisy_columns))?;
    }
    let shifts: Vec<&[f64]> = rules.iter().map(|r| r.shifts()).collect();
    Ok(json!({"shifts": shifts, "multi_indices": configs}))
}

fn stream_seed(seed: u64, observable: usize, order: usize) -> u64 {
    substream(seed, ((observable as u64) << 16) | order as u64).next_u64()
}

/// Shot-noise estimate of an equal-amplitude order and its standard error.
fn noisy_order(
    dynamics: &Dynamics,
    rules: &[ShiftRule],
    a: &OperatorSum,
    times: &[f64],
    m: usize,
    spec: &SamplingSpec,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let betas = MultiIndex::all_of_order(rules.len(), m);
    let per_beta = (spec.total_shots / betas.len() as u64).max(1);
    let mut value = vec![0.0; times.len()];
    let mut var = vec![0.0; times.len()];
    for (b, beta) in betas.iter().enumerate() {
        let weights: Vec<f64> = configurations(rules, beta)?.iter().map(|c| c.weight).collect();
        let plan = allocate_shots(&weights, None, per_beta, spec.allocation)?;
        let r = noisy_response(dynamics, rules, a, times, beta, &plan.shots, substream(seed, b as u64).next_u64())?;
        for k in 0..times.len() {
            value[k] += r.series.values[k];
            var[k] += r.std_error[k] * r.std_error[k];
        }
    }
    Ok((value, var.into_iter().map(f64::sqrt).collect()))
}

fn run_decomposition(cfg: &ExperimentConfig, etas: &[f64], max_order: usize, sink: &mut Sink) -> Result<Value> {
    let dynamics = build_dynamics(cfg)?;
    let rule = build_rules(&dynamics, &cfg.shifts, max_order)?.remove(0);
    let times = cfg.t_grid.points();
    let n = dynamics.initial_state().n_sites();
    let ops: Vec<(String, OperatorSum)> = cfg.observables.iter().map(|o| Ok((o.label(), o.build(n)?))).collect::<Result<_>>()?;
    let mut summary_header = vec!["eta".to_string()];
    summary_header.extend(ops.iter().map(|(l, _)| format!("max_abs_diff_{l}")));
    let mut summary = Table::new(summary_header);
    for &eta in etas {
        let prefix = if etas.len() > 1 { format!("eta_{eta}/") } else { String::new() };
        let decs =
            ops.iter().map(|(_, a)| response_decomposition(&dynamics, &rule, a, &times, eta, max_order)).collect::<Result<Vec<_>>>()?;
        let header = |what: &str| -> Vec<String> {
            std::iter::once(TIME_HEADER.to_string()).chain(ops.iter().map(|(l, _)| format!("{what}_{l}"))).collect()
        };
        let table = |what: &str, pick: &dyn Fn(&crate::gpsr::Decomposition) -> Vec<f64>| {
            let mut cols = vec![times.clone()];
            cols.extend(decs.iter().map(pick));
            Table::from_columns(header(what), &cols)
        };
        for k in 0..=max_order {
            sink.csv(&format!("{prefix}A{k}.csv"), &table(&format!("A{k}"), &|d| d.orders[k].clone()))?;
        }
        sink.csv(&format!("{prefix}diff.csv"), &table("diff", &|d| d.diff.clone()))?;
        sink.csv(&format!("{prefix}signal.csv"), &table("signal", &|d| d.signal.clone()))?;
        let mut row = vec![eta];
        row.extend(decs.iter().map(|d| d.diff.iter().fold(0.0f64, |m, v| m.max(v.abs()))));
        summary.rows.push(row);
    }
    sink.csv("diff_summary.csv", &summary)?;
    Ok(json!({"shifts": rule.shifts(), "gaps": rule.gaps().gaps()}))
}

fn pump_probe_system(cfg: &ExperimentConfig, model: &ModelSpec, pp: &PumpProbeSpec) -> Result<(PumpProbe, ShiftRule)> {
    let lattice = toric_lattice(model)?;
    let (propagator, psi0) = prepare(model, cfg.evolver, cfg.initial_state)?;
    let system = PumpProbe {
        propagator,
        pump: pp.pump.iter().try_fold(OperatorSum::zero(lattice.n_qubits()), |acc, s| acc.plus(&s.operator(&lattice)?))?,
        probe1: pp.probe1.operator(&lattice)?,
        probe2: pp.probe2.operator(&lattice)?,
        psi0,
    };
    let rule = ShiftRule::for_generator(&system.pump, GridMode::Full, pp.max_order)?;
    Ok((system, rule))
}

struct PumpProbeCell {
    t1: f64,
    t2: f64,
    orders: Vec<Complex64>,
    contrast: Option<Complex64>,
}

fn pump_probe_cells(system: &PumpProbe, rule: &ShiftRule, pp: &PumpProbeSpec) -> Result<Vec<PumpProbeCell>> {
    let (g1, g2) = (pp.t1.points(), pp.t2.points());
    let grid: Vec<(f64, f64)> = g1.iter().flat_map(|&a| g2.iter().map(move |&b| (a, b))).collect();
    grid.par_iter()
        .map(|&(t1, t2)| {
            let orders = system.orders(rule, t1, t2, pp.eta, pp.max_order)?;
            let c0 = system.correlator(t1, t2, 0.0)?;
            let ck = system.correlator(t1, t2, pp.kappa)?;
            Ok(PumpProbeCell { t1, t2, orders, contrast: contrast_ratio(ck, c0, pp.floor) })
        })
        .collect()
}

fn histogram(values: &[f64], bins: usize) -> Table {
    let mut t = Table::new(vec!["bin_low".into(), "bin_high".into(), "count".into()]);
    if values.is_empty() || bins == 0 {
        return t;
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if hi - lo < 1e-12 { (lo - 0.5, hi + 0.5) } else { (lo, hi) };
    let w = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for v in values {
        counts[(((v - lo) / w) as usize).min(bins - 1)] += 1;
    }
    t.rows = counts.iter().enumerate().map(|(k, c)| vec![lo + k as f64 * w, lo + (k + 1) as f64 * w, *c as f64]).collect();
    t
}

fn run_pump_probe(cfg: &ExperimentConfig, pp: &PumpProbeSpec, sink: &mut Sink) -> Result<Value> {
    let (system, rule) = pump_probe_system(cfg, &cfg.model, pp)?;
    let cells = pump_probe_cells(&system, &rule, pp)?;
    let mut header = vec!["t1 (1/J)".to_string(), "t2 (1/J)".to_string()];
    for n in 0..=pp.max_order {
        header.push(format!("re_C{n}"));
        header.push(format!("im_C{n}"));
    }
    let mut corr = Table::new(header);
    let mut contrast = Table::new(["t1 (1/J)", "t2 (1/J)", "re_R", "im_R", "excluded"].map(String::from).to_vec());
    let mut kept = Vec::new();
    for c in &cells {
        let mut row = vec![c.t1, c.t2];
        row.extend(c.orders.iter().flat_map(|z| [z.re, z.im]));
        corr.rows.push(row);
        match c.contrast {
            Some(r) => {
                contrast.rows.push(vec![c.t1, c.t2, r.re, r.im, 0.0]);
                kept.push(r);
            }
            None => contrast.rows.push(vec![c.t1, c.t2, f64::NAN, f64::NAN, 1.0]),
        }
    }
    sink.csv("correlator.csv", &corr)?;
    sink.csv("contrast.csv", &contrast)?;
    let re: Vec<f64> = kept.iter().map(|r| r.re).collect();
    let im: Vec<f64> = kept.iter().map(|r| r.im).collect();
    sink.csv("contrast_histogram_re.csv", &histogram(&re, pp.histogram_bins))?;
    sink.csv("contrast_histogram_im.csv", &histogram(&im, pp.histogram_bins))?;
    let mean = if kept.is_empty() { Complex64::new(f64::NAN, f64::NAN) } else { kept.iter().sum::<Complex64>() / kept.len() as f64 };
    Ok(json!({
        "cells": cells.len(),
        "excluded_near_zero_denominator": cells.len() - kept.len(),
        "mean_contrast": [mean.re, mean.im],
        "shifts": rule.shifts(),
    }))
}

fn run_sweep(cfg: &ExperimentConfig, s: &SweepSpec, sink: &mut Sink) -> Result<Value> {
    let [a, b] = s.orders;
    if a.max(b) > s.pump_probe.max_order {
        return Err(Error::Config(format!("sweep orders {a}, {b} exceed max_order {}", s.pump_probe.max_order)));
    }
    let mut table = Table::new(vec![s.parameter.clone(), format!("s{a}{b}"), "vertical".into(), "valid".into()]);
    let mut cloud_header = vec![s.parameter.clone(), "t1 (1/J)".into(), "t2 (1/J)".into()];
    cloud_header.extend([format!("re_C{a}"), format!("re_C{b}")]);
    let mut clouds = Table::new(cloud_header);
    for &v in &s.values {
        let model = cfg.model.with_parameter(&s.parameter, v);
        let (system, rule) = pump_probe_system(cfg, &model, &s.pump_probe)?;
        let cells = pump_probe_cells(&system, &rule, &s.pump_probe)?;
        let pts: Vec<(f64, f64)> = cells.iter().map(|c| (c.orders[a].re, c.orders[b].re)).collect();
        for (c, p) in cells.iter().zip(&pts) {
            clouds.rows.push(vec![v, c.t1, c.t2, p.0, p.1]);
        }
        table.rows.push(match pca_slope(&pts) {
            Ok(sl) => vec![v, sl.slope, f64::from(u8::from(sl.vertical)), 1.0],
            Err(_) => vec![v, f64::NAN, 0.0, 0.0],
        });
    }
    sink.csv(&format!("s{a}{b}_vs_{}.csv", s.parameter), &table)?;
    sink.csv("clouds.csv", &clouds)?;
    Ok(json!({"points": s.values.len()}))
}

fn run_2dos(cfg: &ExperimentConfig, s: &TwoDosSpec, sink: &mut Sink) -> Result<Value> {
    let (propagator, psi0) = prepare(&cfg.model, cfg.evolver, cfg.initial_state)?;
    let n = psi0.n_sites();
    let system = TwoDos { propagator, detection: s.detection.build(n)?, pump: build_pump(&s.pump, n)?, psi0 };
    let (t1, t3) = (s.t1.points(), s.t3.points());
    let signal = system.signal(s.t2, &t1, &t3, s.method)?;
    let mut st = Table::new(vec!["t1 (1/J)".into(), "t3 (1/J)".into(), "S3".into()]);
    for (i, a) in t1.iter().enumerate() {
        for (j, b) in t3.iter().enumerate() {
            st.rows.push(vec![*a, *b, signal[(i, j)]]);
        }
    }
    sink.csv("signal_2d.csv", &st)?;
    let spec = spectrum_2d(&t1, &t3, &signal, s.window)?;
    let mut sp = Table::new(["omega1 (J; angular)", "omega3 (J; angular)", "abs", "re", "im"].map(String::from).to_vec());
    for (i, w1) in spec.w1.iter().enumerate() {
        for (j, w3) in spec.w3.iter().enumerate() {
            let z = spec.amplitudes[(i, j)];
            sp.rows.push(vec![*w1, *w3, z.norm(), z.re, z.im]);
        }
    }
    sink.csv("spectrum_2d.csv", &sp)?;
    let (diag, off) = diagonal_offdiagonal_weight(&spec, s.band_bins * bin_width(&spec))?;
    let total = diag + off;
    Ok(json!({"p_diagonal": diag, "p_off_diagonal": off, "off_fraction": if total > 0.0 { off / total } else { 0.0 }}))
}

fn run_entropy(cfg: &ExperimentConfig, e: &EntropySpec, sink: &mut Sink) -> Result<Value> {
    let values: Vec<Option<f64>> = match &e.sweep {
        Some(sw) => sw.values.iter().map(|v| Some(*v)).collect(),
        None => vec![None],
    };
    let times = cfg.t_grid.points();
    let grid = symmetric_grid(e.eta, e.grid_points);
    let mut header = Vec::new();
    if let Some(sw) = &e.sweep {
        header.push(sw.parameter.clone());
    }
    header.push(TIME_HEADER.into());
    header.push("S_unpumped".into());
    header.extend((0..=e.max_order).map(|k| format!("S{k}")));
    header.push("condition".into());
    let mut table = Table::new(header);
    let mut block = 0;
    for v in values {
        let model = match (&e.sweep, v) {
            (Some(sw), Some(v)) => cfg.model.with_parameter(&sw.parameter, v),
            _ => cfg.model.clone(),
        };
        let dynamics = dynamics_for(cfg, &model)?;
        let d = e.block.unwrap_or(dynamics.initial_state().n_sites() / 2);
        block = d;
        for &t in &times {
            let x = entropy_expansion(&dynamics, &grid, t, d, e.max_order, e.eta)?;
            let mut row: Vec<f64> = v.into_iter().collect();
            row.push(t);
            row.push(driven_entropy(&dynamics, &[0.0], t, d)?);
            row.extend(&x.orders);
            row.push(x.condition);
            table.rows.push(row);
        }
    }
    sink.csv("entropy.csv", &table)?;
    Ok(json!({"block": block, "eta_grid": grid}))
}

/// One row of the verification report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyRow {
    pub observable: String,
    pub order: usize,
    pub gpsr_vs_oracle: f64,
    pub gpsr_vs_finite_difference: f64,
    pub oracle_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub tolerance: f64,
    pub rows: Vec<VerifyRow>,
    pub passed: bool,
}

const FD_STEP: f64 = 0.1;

/// Compares equal-amplitude shift-rule orders `1..=max_order` with the pulse-summed
/// commutator oracle (gated by `tolerance`) and with Richardson finite differences
/// (reported only).
pub fn verify_experiment(cfg: &ExperimentConfig, tolerance: f64, corrupt: Option<f64>) -> Result<VerifyReport> {
    let n = cfg.model.n_sites()?;
    if n > DENSE_CAP_SITES {
        return Err(Error::OracleUnavailable(format!("{n} sites exceed the oracle cap of {DENSE_CAP_SITES}")));
    }
    if cfg.channels.is_empty() || cfg.observables.is_empty() {
        return Err(Error::Config("verification needs pump channels and observables".into()));
    }
    let dynamics = build_dynamics(cfg)?;
    let max_order = cfg.max_order().max(1);
    let mut rules = build_rules(&dynamics, &cfg.shifts, max_order)?;
    if let Some(eps) = corrupt {
        rules = rules.iter().map(|r| r.corrupted(eps)).collect();
    }
    let orders: Vec<usize> = match &cfg.protocol {
        Protocol::Response { orders, .. } if orders.iter().any(|m| *m > 0) => orders.iter().copied().filter(|m| *m > 0).collect(),
        _ => (1..=max_order).collect(),
    };
    let times = cfg.t_grid.points();
    let l = dynamics.n_channels();
    let mut rows = Vec::new();
    for obs in &cfg.observables {
        let a = obs.build(n)?;
        for &m in &orders {
            let gpsr = equal_amplitude_order(&dynamics, &rules, &a, &times, m)?;
            let betas = MultiIndex::all_of_order(l, m);
            let checks: Vec<(f64, f64)> = times
                .par_iter()
                .map(|&t| {
                    let oracle = betas.iter().map(|b| pulse_summed_response(&dynamics, &a, t, b)).sum::<Result<f64>>()?;
                    let f = |eta: f64| dynamics.signal(&vec![eta; l], &a, t).unwrap_or(f64::NAN);
                    let fd = if m <= 7 { finite_difference_derivative(f, m, FD_STEP)?.richardson / factorial(m) } else { f64::NAN };
                    Ok((oracle, fd))
                })
                .collect::<Result<_>>()?;
            let dev = |pick: fn(&(f64, f64)) -> f64| gpsr.iter().zip(&checks).map(|(g, c)| (g - pick(c)).abs()).fold(0.0f64, f64::max);
            rows.push(VerifyRow {
                observable: obs.label(),
                order: m,
                gpsr_vs_oracle: dev(|c| c.0),
                gpsr_vs_finite_difference: dev(|c| c.1),
                oracle_scale: checks.iter().map(|c| c.0.abs()).fold(0.0f64, f64::max),
            });
        }
    }
    let passed = rows.iter().all(|r| r.gpsr_vs_oracle < tolerance);
    Ok(VerifyReport { tolerance, rows, passed })
}

/// Shift-rule ledger of one channel.
#[derive(Debug, Clone, Serialize)]
pub struct GapReport {
    pub channel: usize,
    pub generator: String,
    pub pulses: usize,
    pub gaps: Vec<f64>,
    pub unit: Option<f64>,
    pub shifts: Vec<f64>,
    pub coefficients: Vec<crate::gpsr::Coefficients>,
}

pub fn gap_reports(cfg: &ExperimentConfig, max_order: usize) -> Result<Vec<GapReport>> {
    let n = cfg.model.n_sites()?;
    let channels = cfg
        .channels
        .iter()
        .map(|c| Ok(Channel { generator: build_pump(&c.pump, n)?, times: c.times.clone() }))
        .collect::<Result<Vec<_>>>()?;
    let dynamics = Dynamics::with_propagator(
        Propagator::new(&OperatorSum::zero(n), Evolver::Exact)?,
        PulseSchedule::new(channels)?,
        StateVector::basis(n, 0),
    )?;
    let rules = build_rules(&dynamics, &cfg.shifts, max_order)?;
    Ok(rules
        .iter()
        .enumerate()
        .map(|(a, r)| GapReport {
            channel: a,
            generator: cfg.channels[a].pump_label(n),
            pulses: cfg.channels[a].times.len(),
            gaps: r.gaps().gaps().to_vec(),
            unit: r.gaps().unit(),
            shifts: r.shifts().to_vec(),
            coefficients: (0..=max_order).filter_map(|k| r.coefficients(k).ok().cloned()).collect(),
        })
        .collect())
}

impl ChannelSpec {
    fn pump_label(&self, n: usize) -> String {
        build_pump(&self.pump, n).map(|b| b.to_string()).unwrap_or_default()
    }
}

/// Spectrum of every value column of a time-series table.
pub fn spectra_table(input: &Table, window: Window, envelope: bool) -> Result<(Table, Value)> {
    if input.header.len() < 2 {
        return Err(Error::Config("time-series CSV needs a time column and at least one value column".into()));
    }
    let times = input.column(0);
    let mut header = vec!["omega (J; angular)".to_string()];
    let mut columns = Vec::new();
    let mut fits = serde_json::Map::new();
    for (c, name) in input.header.iter().enumerate().skip(1) {
        let mut values = input.column(c);
        if envelope {
            let (fit, corrected) = envelope_fit(&times, &values, ENVELOPE_FLOOR)?;
            fits.insert(name.clone(), serde_json::to_value(fit).map_err(|e| Error::Io(e.to_string()))?);
            values = corrected;
        }
        let s = spectrum_1d(&times, &values, window)?;
        if columns.is_empty() {
            columns.push(s.frequencies.clone());
        }
        header.extend([format!("abs_{name}"), format!("re_{name}"), format!("im_{name}")]);
        columns.push(s.magnitudes());
        columns.push(s.amplitudes.iter().map(|z| z.re).collect());
        columns.push(s.amplitudes.iter().map(|z| z.im).collect());
    }
    Ok((Table::from_columns(header, &columns), Value::Object(fits)))
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Verification(_) => 3,
        Error::DenseCap { .. } | Error::OracleUnavailable(_) => 4,
        Error::Io(_) => 1,
        _ => 2,
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::SiteMismatch { .. } => "site_mismatch",
        Error::DenseCap { .. } => "resource_cap",
        Error::NotHermitian { .. } => "not_hermitian",
        Error::IllConditioned { .. } => "ill_conditioned",
        Error::Inconsistent { .. } => "inconsistent",
        Error::OracleUnavailable(_) => "oracle_unavailable",
        Error::Invalid(_) => "invalid_input",
        Error::Config(_) => "config",
        Error::Verification(_) => "verification",
        Error::Io(_) => "io",
    }
}

/// Structured record printed to stderr (and written as `error.json`) on failure.
pub fn error_record(e: &Error) -> Value {
    json!({"error": error_kind(e), "message": e.to_string(), "exit_code": exit_code(e)})
}

fn resolve_out(flag: Option<&PathBuf>, cfg: Option<&ExperimentConfig>) -> PathBuf {
    flag.cloned().or_else(|| cfg.and_then(|c| c.output.clone())).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match threads {
        Some(n) => {
            rayon::ThreadPoolBuilder::new().num_threads(n).build().map_err(|e| Error::Config(format!("thread pool: {e}")))?.install(f)
        }
        None => f(),
    }
}

fn metadata(
    command: &str,
    cfg: Option<&ExperimentConfig>,
    threads: Option<usize>,
    start: Instant,
    outputs: &[String],
    summary: Value,
) -> Value {
    json!({
        "engine": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "config": cfg,
        "seed": cfg.map(|c| c.seed),
        "threads": threads.unwrap_or_else(rayon::current_num_threads),
        "wall_time_s": start.elapsed().as_secs_f64(),
        "outputs": outputs,
        "summary": summary,
    })
}

fn load_with_seed(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = load_config(&args.config)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn cmd_run(args: &RunArgs) -> Result<PathBuf> {
    let start = Instant::now();
    let cfg = load_with_seed(args)?;
    let out = resolve_out(args.out.as_ref(), Some(&cfg));
    fs::create_dir_all(&out)?;
    write_json(&out.join("config.json"), &cfg)?;
    let report = with_threads(args.threads, || run_experiment(&cfg, &out))?;
    write_json(&out.join("metadata.json"), &metadata("run", Some(&cfg), args.threads, start, &report.outputs, report.summary))?;
    Ok(out)
}

fn cmd_verify(args: &VerifyArgs) -> Result<PathBuf> {
    let start = Instant::now();
    let cfg = load_with_seed(&args.run)?;
    let out = resolve_out(args.run.out.as_ref(), Some(&cfg));
    fs::create_dir_all(&out)?;
    let report = with_threads(args.run.threads, || verify_experiment(&cfg, args.tolerance, args.corrupt_coefficients))?;
    println!("{:<24} {:>5} {:>14} {:>14} {:>14}", "observable", "order", "gpsr-oracle", "gpsr-fd", "|oracle|max");
    let mut table = Table::new(["order", "gpsr_vs_oracle", "gpsr_vs_finite_difference", "oracle_scale"].map(String::from).to_vec());
    for r in &report.rows {
        println!(
            "{:<24} {:>5} {:>14.3e} {:>14.3e} {:>14.3e}",
            r.observable, r.order, r.gpsr_vs_oracle, r.gpsr_vs_finite_difference, r.oracle_scale
        );
        table.rows.push(vec![r.order as f64, r.gpsr_vs_oracle, r.gpsr_vs_finite_difference, r.oracle_scale]);
    }
    write_json(&out.join("config.json"), &cfg)?;
    write_csv(&out.join("verify.csv"), &table)?;
    let summary = serde_json::to_value(&report).map_err(|e| Error::Io(e.to_string()))?;
    write_json(&out.join("metadata.json"), &metadata("verify", Some(&cfg), args.run.threads, start, &["verify.csv".into()], summary))?;
    if report.passed {
        Ok(out)
    } else {
        let worst = report.rows.iter().map(|r| r.gpsr_vs_oracle).fold(0.0f64, f64::max);
        Err(Error::Verification(format!("max deviation {worst:e} exceeds tolerance {:e}", args.tolerance)))
    }
}

fn cmd_gaps(args: &GapsArgs) -> Result<Option<PathBuf>> {
    let cfg = load_config(&args.config)?;
    if cfg.channels.is_empty() {
        return Err(Error::Config("config has no pump channels".into()));
    }
    let reports = gap_reports(&cfg, args.max_order.unwrap_or_else(|| cfg.max_order()))?;
    for r in &reports {
        println!("channel {} ({} pulse(s)): {}", r.channel, r.pulses, r.generator);
        println!("  gaps   {:?}", r.gaps);
        println!("  unit   {:?}", r.unit);
        println!("  shifts {:?}", r.shifts);
        for c in &r.coefficients {
            println!("  order {}: c = {:?}  |c|1 = {:.6}  |c|2 = {:.6}  cond = {:.3e}", c.order, c.values, c.norm1, c.norm2, c.condition);
        }
    }
    match &args.out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            write_json(&dir.join("gaps.json"), &reports)?;
            Ok(Some(dir.clone()))
        }
        None => Ok(None),
    }
}

fn cmd_spectra(args: &SpectraArgs) -> Result<PathBuf> {
    let start = Instant::now();
    let input = read_csv(&args.input)?;
    let window = match args.window {
        WindowArg::None => Window::None,
        WindowArg::Hann => Window::Hann,
    };
    let (table, fits) = spectra_table(&input, window, args.envelope)?;
    let out = resolve_out(args.out.as_ref(), None);
    fs::create_dir_all(&out)?;
    write_csv(&out.join("spectrum.csv"), &table)?;
    let summary = json!({"input": args.input, "window": window, "envelope": fits});
    write_json(&out.join("metadata.json"), &metadata("spectra", None, None, start, &["spectrum.csv".into()], summary))?;
    Ok(out)
}

fn report_error(e: &Error, out: Option<&Path>) -> i32 {
    let record = error_record(e);
    eprintln!("{record}");
    if let Some(dir) = out.filter(|d| d.is_dir()) {
        let _ = write_json(&dir.join("error.json"), &record);
    }
    exit_code(e)
}

/// Parses arguments, runs the subcommand and returns the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let (result, out) = match &cli.command {
        Command::Run(a) => (cmd_run(a).map(|_| ()), a.out.clone()),
        Command::Verify(a) => (cmd_verify(a).map(|_| ()), a.run.out.clone()),
        Command::Gaps(a) => (cmd_gaps(a).map(|_| ()), a.out.clone()),
        Command::Spectra(a) => (cmd_spectra(a).map(|_| ()), a.out.clone()),
    };
    match result {
        Ok(()) => 0,
        Err(e) => report_error(&e, out.as_deref()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> &'static str {
        r#"{
            "model": {"kind": "xxz", "parameters": {"N": 4, "Δ": 0.5, "h_e": 0.2}},
            "channels": [{"pump": {"kind": "local_pauli", "sites": [1]}}],
            "observables": [{"kind": "single_site", "site": 2, "axis": "Z"}],
            "protocol": {"kind": "response", "orders": [0, 1, 2]}
        }"#
    }

    #[test]
    fn defaults_are_filled() {
        let cfg = ExperimentConfig::from_json(minimal()).unwrap();
        assert_eq!(cfg.evolver, Evolver::Exact);
        assert_eq!(cfg.t_grid.n_points, 51);
        assert_eq!(cfg.channels[0].times, vec![0.0]);
        assert_eq!(cfg.max_order(), 2);
    }

    #[test]
    fn resolved_config_round_trips() {
        let cfg = ExperimentConfig::from_json(minimal()).unwrap();
        let again = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.to_json(), again.to_json());
    }

    #[test]
    fn schema_errors_name_the_field() {
        let missing = minimal().replace(r#", "Δ": 0.5"#, "");
        match ExperimentConfig::from_json(&missing) {
            Err(Error::Config(m)) => assert!(m.contains("Δ"), "{m}"),
            other => panic!("{other:?}"),
        }
        let unknown = minimal().replace(r#""seed""#, "x").replace(r#""protocol""#, r#""colour": 1, "protocol""#);
        match ExperimentConfig::from_json(&unknown) {
            Err(Error::Config(m)) => assert!(m.contains("colour") && m.contains("line"), "{m}"),
            other => panic!("{other:?}"),
        }
        let bad_protocol = minimal().replace(r#""orders""#, r#""order""#);
        assert!(matches!(ExperimentConfig::from_json(&bad_protocol), Err(Error::Config(_))));
        let pp = r#"{"model": {"kind": "toric_code", "parameters": {"L_x": 2, "L_y": 2, "J_A": 1, "J_B": 1}},
            "protocol": {"kind": "pump_probe", "pump": [{"edges": [[0, "X"]]}], "probe1": {"edges": [[0, "Z"]]},
            "probe2": {"edges": [[1, "Z"]]}, "extra": 1}}"#;
        assert!(matches!(ExperimentConfig::from_json(pp), Err(Error::Config(_))));
        assert!(ExperimentConfig::from_json(&pp.replace(r#", "extra": 1"#, "")).is_ok());
        let infinite = minimal().replace("0.2", "1e400");
        assert!(ExperimentConfig::from_json(&infinite).is_err());
    }

    #[test]
    fn observable_labels_and_builds() {
        let specs = [
            ObservableSpec::TwoSiteMagnetization { i: 3, j: 4 },
            ObservableSpec::SpinCurrent { i: 3, j: 4, component: Axis::Z },
            ObservableSpec::Correlation { factors: vec![(0, Axis::X), (1, Axis::X)] },
            ObservableSpec::Custom { terms: vec![(1.0, "X0".into()), (-0.5, "Y1 Z2".into())] },
        ];
        let labels: Vec<String> = specs.iter().map(ObservableSpec::label).collect();
        assert_eq!(labels[..3], ["Z3+Z4", "Jz_3_4", "C_X0X1"]);
        for s in &specs {
            s.build(6).unwrap();
        }
        assert!(ObservableSpec::SingleSite { site: 7, axis: Axis::X }.build(6).is_err());
    }

    #[test]
    fn csv_format_is_full_precision() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let t = Table::from_columns(vec!["a".into(), "b, c".into()], &[vec![0.1, -2.0], vec![1e-300, 3.0]]);
        write_csv(&p, &t).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(!text.contains('\r'));
        assert!(text.starts_with("a,\"b, c\"\n1.00000000000000006e-1,"));
        let back = read_csv(&p).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(exit_code(&Error::Verification("x".into())), 3);
        assert_eq!(exit_code(&Error::DenseCap { sites: 13, cap: 12 }), 4);
        assert_eq!(exit_code(&Error::OracleUnavailable("x".into())), 4);
    }

    #[test]
    fn histogram_counts_everything() {
        let h = histogram(&[-2.0, -2.0, -1.0, 0.0, 0.5], 4);
        assert_eq!(h.column(2).iter().sum::<f64>(), 5.0);
        assert_eq!(h.rows[0][2], 2.0);
    }
}
