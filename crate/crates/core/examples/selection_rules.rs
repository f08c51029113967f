//! Parity selection rules under the cosine pump: odd orders of `Mˣ` survive while even
//! orders vanish, and the opposite holds for `Cˣˣ` and the spin current `Jᶻ`.

use nonlinear_response::evolution::{Dynamics, Evolver, PulseSchedule, TimeGrid};
use nonlinear_response::gpsr::{default_rules, responses, MultiIndex};
use nonlinear_response::models::{build_pump, build_xxz, correlation, ground_state, magnetization, spin_current, Boundary, PumpSpec};
use nonlinear_response::operators::Axis;

fn main() -> nonlinear_response::Result<()> {
    let n = 6;
    let h = build_xxz(n, 0.5, 0.75, Boundary::Open)?;
    let b = build_pump(&PumpSpec::cosine(1), n)?;
    let dynamics = Dynamics::new(&h, PulseSchedule::single(b, 0.0)?, Evolver::Exact, ground_state(&h)?)?;
    let rules = default_rules(&dynamics, 5)?;
    let times = TimeGrid::new(0.0, 5.0, 21)?.points();
    let betas: Vec<MultiIndex> = (1..=5).map(MultiIndex::single).collect::<Result<_, _>>()?;
    let observables = [
        ("M^x", magnetization(n, Axis::X)?),
        ("C^xx_23", correlation(n, &[(2, Axis::X), (3, Axis::X)])?),
        ("J^z_23", spin_current(n, 2, 3, Axis::Z)?),
    ];
    println!("{:<8} {}", "", (1..=5).map(|m| format!("{:>11}", format!("max|χ{m}|"))).collect::<String>());
    for (name, a) in &observables {
        let series = responses(&dynamics, &rules, a, &times, &betas)?;
        let row: String = series.iter().map(|s| format!("{:>11.2e}", s.values.iter().fold(0.0f64, |m, v| m.max(v.abs())))).collect();
        println!("{name:<8} {row}");
    }
    Ok(())
}
