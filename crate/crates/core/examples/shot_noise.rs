//! Shot-noise model of a first-order response: empirical variance over seeded
//! repetitions against the uniform and optimal allocation bounds.

use nonlinear_response::evolution::{Dynamics, Evolver, PulseSchedule};
use nonlinear_response::gpsr::{configurations, default_rules, reconstruct_response, MultiIndex};
use nonlinear_response::models::{build_pump, build_xxz, correlation, ground_state, Boundary, PumpSpec};
use nonlinear_response::operators::Axis;
use nonlinear_response::sampling::{allocate_shots, channel_norms, noisy_response, variance_bound, AllocationMode};

fn main() -> nonlinear_response::Result<()> {
    let n = 4;
    let h = build_xxz(n, 1.0, 0.3, Boundary::Open)?;
    let b = build_pump(&PumpSpec::local(1, Axis::X), n)?;
    let dynamics = Dynamics::new(&h, PulseSchedule::single(b, 0.0)?, Evolver::Exact, ground_state(&h)?)?;
    let rules = default_rules(&dynamics, 1)?;
    let beta = MultiIndex::single(1)?;
    let a = correlation(n, &[(2, Axis::X)])?;
    let times = [0.5, 1.5, 3.0];
    let total = 3 * 8192;
    let exact = reconstruct_response(&dynamics, &rules, &a, &times, &beta)?;
    let weights: Vec<f64> = configurations(&rules, &beta)?.iter().map(|c| c.weight).collect();
    let norms = channel_norms(&rules, &beta)?;

    for mode in [AllocationMode::Uniform, AllocationMode::Optimal] {
        let plan = allocate_shots(&weights, None, total, mode)?;
        let reps = 200;
        let mut sq = vec![0.0; times.len()];
        for r in 0..reps {
            let est = noisy_response(&dynamics, &rules, &a, &times, &beta, &plan.shots, r)?;
            for (k, v) in est.series.values.iter().enumerate() {
                sq[k] += (v - exact.values[k]).powi(2) / reps as f64;
            }
        }
        println!("{mode:?}: shots {:?}, bound {:.3e}", plan.shots, variance_bound(&norms, total, mode));
        for (k, t) in times.iter().enumerate() {
            println!("  t = {t}: empirical variance {:.3e}", sq[k]);
        }
    }
    Ok(())
}
