//! Two identical pumps `B = X₃` at `t = 0` and `t = 1`, each with its own amplitude;
//! fifth-order response of `X₃` summed over all channel splits.

use nonlinear_response::evolution::{Channel, Dynamics, Evolver, PulseSchedule, TimeGrid};
use nonlinear_response::gpsr::{default_rules, equal_amplitude_order, responses, MultiIndex};
use nonlinear_response::models::{build_pump, build_xxz, correlation, ground_state, Boundary, PumpSpec};
use nonlinear_response::operators::Axis;

fn main() -> nonlinear_response::Result<()> {
    let n = 8;
    let h = build_xxz(n, 0.0, 0.75, Boundary::Open)?;
    let b = build_pump(&PumpSpec::local(3, Axis::X), n)?;
    let schedule =
        PulseSchedule::new(vec![Channel { generator: b.clone(), times: vec![0.0] }, Channel { generator: b, times: vec![1.0] }])?;
    let dynamics = Dynamics::new(&h, schedule, Evolver::Exact, ground_state(&h)?)?;
    let rules = default_rules(&dynamics, 5)?;
    let a = correlation(n, &[(3, Axis::X)])?;
    let times = TimeGrid::new(0.0, 5.0, 21)?.points();

    let betas = MultiIndex::all_of_order(2, 5);
    let parts = responses(&dynamics, &rules, &a, &times, &betas)?;
    let total = equal_amplitude_order(&dynamics, &rules, &a, &times, 5)?;
    print!("{:>6}", "t");
    for p in &parts {
        print!(" {:>12}", format!("{:?}", p.beta.beta()));
    }
    println!(" {:>12}", "chi5");
    for (k, t) in times.iter().enumerate() {
        print!("{t:>6.2}");
        for p in &parts {
            print!(" {:>12.3e}", p.values[k]);
        }
        println!(" {:>12.3e}", total[k]);
    }
    Ok(())
}
