//! Fourth-order response of the two-site magnetization and the spin current in an XXZ
//! chain kicked by `B = X₃`, checked against the nested-commutator oracle.
//!
//! Run with `--release`; pass a chain length as the first argument (default 8).

use nonlinear_response::evolution::{Dynamics, Evolver, PulseSchedule, TimeGrid};
use nonlinear_response::gpsr::{default_rules, reconstruct_response, MultiIndex};
use nonlinear_response::models::{build_pump, build_xxz, ground_state, spin_current, two_site_magnetization, Boundary, PumpSpec};
use nonlinear_response::operators::Axis;
use nonlinear_response::oracle::pulse_summed_response;

fn main() -> nonlinear_response::Result<()> {
    let n: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(8);
    let h = build_xxz(n, 0.0, 0.75, Boundary::Open)?;
    let psi0 = ground_state(&h)?;
    let b = build_pump(&PumpSpec::local(3, Axis::X), n)?;
    let dynamics = Dynamics::new(&h, PulseSchedule::single(b, 0.0)?, Evolver::Trotter1 { n_steps: 10 }, psi0)?;
    let rules = default_rules(&dynamics, 4)?;
    println!("shifts: {:?}", rules[0].shifts());

    let times = TimeGrid::new(0.0, 5.0, 11)?.points();
    let beta = MultiIndex::single(4)?;
    for (name, a) in [("Z3+Z4", two_site_magnetization(n, 3, 4)?), ("J^z_34", spin_current(n, 3, 4, Axis::Z)?)] {
        let chi = reconstruct_response(&dynamics, &rules, &a, &times, &beta)?;
        println!("\nchi4 of {name}");
        println!("{:>6} {:>16} {:>16}", "t", "shift rule", "oracle");
        for (t, v) in times.iter().zip(&chi.values) {
            let o = pulse_summed_response(&dynamics, &a, *t, &beta)?;
            println!("{t:>6.2} {v:>16.10} {o:>16.10}");
        }
    }
    Ok(())
}
