//! Stepwise signal subtraction against the exact shift-rule orders.
//!
//! Subtraction from three odd pump strengths carries a truncation bias that the shift
//! rule does not have.

use nonlinear_response::evolution::{Dynamics, Evolver, PulseSchedule};
use nonlinear_response::gpsr::{default_rules, reconstruct_response, MultiIndex};
use nonlinear_response::models::{build_pump, build_xxz, correlation, ground_state, Boundary, PumpSpec};
use nonlinear_response::operators::Axis;
use nonlinear_response::oracle::{stepwise_subtraction, StepwiseMode};

fn main() -> nonlinear_response::Result<()> {
    // Synthetic odd quintic: recovered exactly.
    let (c1, c3, c5) = (0.7, -1.3, 2.1);
    let g = |s: f64| 0.25 + c1 * s + c3 * s.powi(3) + c5 * s.powi(5);
    let s = [0.1, 0.2, 0.3];
    let fit = stepwise_subtraction(s, [g(0.0), g(s[0]), g(s[1]), g(s[2])], StepwiseMode::Exact)?;
    println!("quintic: A1 = {:.12} A3 = {:.12} A5 = {:.12}", fit.a1, fit.a3, fit.a5);

    let n = 4;
    let h = build_xxz(n, 0.8, 0.2, Boundary::Open)?;
    let b = build_pump(&PumpSpec::local(1, Axis::X), n)?;
    let dynamics = Dynamics::new(&h, PulseSchedule::single(b, 0.0)?, Evolver::Exact, ground_state(&h)?)?;
    let rules = default_rules(&dynamics, 5)?;
    let a = correlation(n, &[(2, Axis::Z), (3, Axis::X)])?;
    let a = a.plus(&correlation(n, &[(1, Axis::Y)])?)?;
    let t = 1.3;
    let exact: Vec<f64> = [1, 3, 5]
        .iter()
        .map(|&m| Ok(reconstruct_response(&dynamics, &rules, &a, &[t], &MultiIndex::single(m)?)?.values[0]))
        .collect::<nonlinear_response::Result<_>>()?;
    let sig = |e: f64| dynamics.signal(&[e], &a, t);
    let fit = stepwise_subtraction(s, [sig(0.0)?, sig(s[0])?, sig(s[1])?, sig(s[2])?], StepwiseMode::Exact)?;
    let sub = [fit.a1, fit.a3, fit.a5];
    for (k, m) in [1, 3, 5].iter().enumerate() {
        println!("order {m}: shift rule {:+.6e}  stepwise {:+.6e}", exact[k], sub[k]);
    }
    Ok(())
}
