//! Half-chain entanglement entropy of a kicked XXZ ring and its expansion in the pump
//! amplitude, for a gapless and a gapped anisotropy.

use nonlinear_response::analysis::{entanglement_entropy, entropy_expansion, symmetric_grid};
use nonlinear_response::evolution::{Dynamics, Evolver, PulseSchedule};
use nonlinear_response::models::{build_pump, build_xxz, ground_state, Boundary, PumpSpec};

fn main() -> nonlinear_response::Result<()> {
    let n = 8;
    let d = n / 2;
    let eta = 0.02;
    let grid = symmetric_grid(eta, 9);
    for delta in [0.4, 10.0] {
        let h = build_xxz(n, delta, 0.0, Boundary::Periodic)?;
        let psi0 = ground_state(&h)?;
        println!("Δ = {delta}: S_d(ground) = {:.6}", entanglement_entropy(&psi0, d)?);
        let b = build_pump(&PumpSpec::cosine(1), n)?;
        let dynamics = Dynamics::new(&h, PulseSchedule::single(b, 0.0)?, Evolver::Exact, psi0)?;
        for t in [0.5, 1.0, 2.0] {
            let x = entropy_expansion(&dynamics, &grid, t, d, 4, eta)?;
            let terms: Vec<String> = x.orders.iter().map(|v| format!("{v:+.3e}")).collect();
            println!("  t = {t}: S^(0..4) = [{}]  cond = {:.1}", terms.join(", "), x.condition);
        }
    }
    Ok(())
}
