//! Order-by-order decomposition `⟨A(t)⟩_η ≈ Σ_n A^n(t)` and its truncation residual for
//! increasing pump strength.

use nonlinear_response::evolution::{Dynamics, Evolver, PulseSchedule, TimeGrid};
use nonlinear_response::gpsr::{default_rules, response_decomposition};
use nonlinear_response::models::{build_pump, build_xxz, correlation, ground_state, Boundary, PumpSpec};
use nonlinear_response::operators::Axis;

fn main() -> nonlinear_response::Result<()> {
    let n = 8;
    let h = build_xxz(n, 0.4, 0.0, Boundary::Open)?;
    let b = build_pump(&PumpSpec::cosine(0), n)?;
    let dynamics = Dynamics::new(&h, PulseSchedule::single(b, 0.0)?, Evolver::Exact, ground_state(&h)?)?;
    let rule = default_rules(&dynamics, 7)?.remove(0);
    println!("{} shifts", rule.len());
    let a = correlation(n, &[(n / 2, Axis::X)])?;
    let times = TimeGrid::new(0.0, 5.0, 26)?.points();
    for eta in [0.05, 0.2, 0.5] {
        let d = response_decomposition(&dynamics, &rule, &a, &times, eta, 7)?;
        let max_diff = d.diff.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let sizes: Vec<String> = d.orders.iter().map(|o| format!("{:.1e}", o.iter().fold(0.0f64, |m, v| m.max(v.abs())))).collect();
        println!("eta = {eta:<4}  max|A^n| = [{}]  max|diff| = {max_diff:.3e}", sizes.join(", "));
    }
    Ok(())
}
