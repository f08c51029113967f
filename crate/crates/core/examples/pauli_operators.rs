//! Pauli strings, operator sums and state vectors.
//!
//! Builds a small XXZ chain, diagonalises it and measures a few observables in the
//! ground state.

use nonlinear_response::models::{build_xxz, ground_state, spin_current, two_site_magnetization, Boundary};
use nonlinear_response::operators::{eigendecompose, expectation, PauliString};

fn main() -> nonlinear_response::Result<()> {
    let p: PauliString = "X0 Y2 Z3".parse()?;
    let q: PauliString = "Z0 X3".parse()?;
    let (phase, r) = p.mul(&q);
    println!("({p})({q}) = {phase} {r}   commute: {}", p.commutes_with(&q));

    let h = build_xxz(6, 0.5, 0.2, Boundary::Open)?;
    println!("H has {} terms on {} sites", h.len(), h.n_sites());

    let eig = eigendecompose(&h)?;
    let e = eig.values();
    println!("lowest energies: {:.6} {:.6} {:.6}", e[0], e[1], e[2]);
    println!("block sizes: {:?}", eig.block_sizes());

    let psi = ground_state(&h)?;
    println!("<H>      = {:.6}", expectation(&h, &psi)?);
    println!("<Z2+Z3>  = {:.6}", expectation(&two_site_magnetization(6, 2, 3)?, &psi)?);
    let j = spin_current(6, 2, 3, nonlinear_response::operators::Axis::Z)?;
    println!("<J^z_23> = {:.2e}", expectation(&j, &psi)?);
    Ok(())
}
