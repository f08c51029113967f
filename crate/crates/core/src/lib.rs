//! Nonlinear response functions of pulse-driven spin systems.
//!
//! A δ-kick `e^{-iηB}` applied to a state and followed by free evolution makes every
//! observable a trigonometric polynomial in `η`. The [`gpsr`] module samples that signal
//! at a few shifted pump amplitudes and combines the samples into exact derivatives, which
//! are the multi-time response functions `χ^(β)(t)`. [`oracle`] evaluates the same
//! quantities as nested commutators for cross-checking.
//!
//! ```no_run
//! use nonlinear_response::evolution::{Dynamics, Evolver, PulseSchedule};
//! use nonlinear_response::gpsr::{default_rules, reconstruct_response, MultiIndex};
//! use nonlinear_response::models::{build_pump, build_xxz, correlation, ground_state, Boundary, PumpSpec};
//! use nonlinear_response::operators::Axis;
//!
//! # fn main() -> nonlinear_response::Result<()> {
//! let h = build_xxz(6, 0.5, 0.75, Boundary::Open)?;
//! let b = build_pump(&PumpSpec::local(2, Axis::X), 6)?;
//! let dynamics = Dynamics::new(&h, PulseSchedule::single(b, 0.0)?, Evolver::Exact, ground_state(&h)?)?;
//! let rules = default_rules(&dynamics, 3)?;
//! let a = correlation(6, &[(2, Axis::X)])?;
//! let chi3 = reconstruct_response(&dynamics, &rules, &a, &[0.5, 1.0, 1.5], &MultiIndex::single(3)?)?;
//! println!("{:?}", chi3.values);
//! # Ok(())
//! # }
//! ```

pub mod analysis;
pub mod cli;
pub mod error;
pub mod evolution;
pub mod gpsr;
pub mod models;
pub mod operators;
pub mod oracle;
pub mod sampling;
pub mod spectra;

pub use error::{Error, Result};
