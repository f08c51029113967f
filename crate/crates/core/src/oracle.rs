//! Reference evaluations used to cross-check shift-rule reconstructions.
//!
//! * [`nested_commutator_response`]: `i^m⟨ad_{B_m(t_m)}⋯ad_{B_1(t_1)} A(t)⟩` in the
//!   Heisenberg picture, evaluated matrix-free by expanding the nested commutator into
//!   `2^m` operator products.
//! * [`finite_difference_derivative`]: central stencils with Richardson extrapolation.
//! * [`stepwise_subtraction`]: odd-order extraction from three amplitudes.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::evolution::{Dynamics, Evolver, Propagator, TimedOperator};
use crate::gpsr::{factorial, MultiIndex};
use crate::operators::{apply_operator, check_sites, dense_cap, OperatorSum, StateVector};

const IMAG_TOL: f64 = 1e-8;

fn i_pow(m: usize) -> Complex64 {
    Complex64::new(0.0, 1.0).powu(m as u32)
}

fn time_ordered(t: f64, sequence: &[TimedOperator<'_>]) -> bool {
    let mut prev = t;
    for s in sequence {
        if s.time > prev {
            return false;
        }
        prev = s.time;
    }
    true
}

fn finish(z: Complex64) -> Result<f64> {
    if z.im.abs() > IMAG_TOL * z.re.abs().max(1.0) {
        return Err(Error::NotHermitian { imag: z.im });
    }
    Ok(z.re)
}

/// `i^m⟨ψ|ad_{X_m}⋯ad_{X_1}Y|ψ⟩` for Heisenberg operators supplied by `heis`.
fn kernel<F>(heis: F, a: &OperatorSum, t: f64, sequence: &[TimedOperator<'_>], psi: &StateVector) -> Result<f64>
where
    F: Fn(&OperatorSum, f64, &StateVector) -> Result<StateVector>,
{
    if !time_ordered(t, sequence) {
        return Ok(0.0);
    }
    let m = sequence.len();
    let full = (1usize << m) - 1;
    let mut v: Vec<StateVector> = Vec::with_capacity(1 << m);
    v.push(psi.clone());
    for mask in 1..=full {
        let low = mask.trailing_zeros() as usize;
        let next = heis(sequence[low].op, sequence[low].time, &v[mask & (mask - 1)])?;
        v.push(next);
    }
    let mut z = Complex64::new(0.0, 0.0);
    for rest in 0..=full {
        let y = heis(a, t, &v[rest])?;
        let s = full ^ rest;
        let sign = if (m - s.count_ones() as usize).is_multiple_of(2) { 1.0 } else { -1.0 };
        z += sign * v[s].inner(&y);
    }
    finish(i_pow(m) * z)
}

/// Nested-commutator kernel in the frame of `dynamics`.
///
/// `sequence[0]` is `B_1(t_1)`, the innermost commutator; times must satisfy
/// `t ≥ t_1 ≥ … ≥ t_m`, otherwise the result is exactly 0. Heisenberg operators use the
/// same free-evolution segments as the driven signal, so a Trotterised `dynamics` gives
/// the response of the Trotter circuit.
pub fn nested_commutator_in(dynamics: &Dynamics, a: &OperatorSum, t: f64, sequence: &[TimedOperator<'_>]) -> Result<f64> {
    for s in sequence {
        check_sites(a.n_sites(), s.op.n_sites())?;
    }
    kernel(|op, tau, v| dynamics.heisenberg_apply(op, tau, v), a, t, sequence, dynamics.initial_state())
}

/// `i^m⟨ψ₀|ad_{B_m(t_m)}⋯ad_{B_1(t_1)} A(t)|ψ₀⟩` under exact evolution by `H₀`.
pub fn nested_commutator_response(
    h0: &OperatorSum,
    a: &OperatorSum,
    sequence: &[TimedOperator<'_>],
    t: f64,
    psi0: &StateVector,
) -> Result<f64> {
    check_sites(h0.n_sites(), psi0.n_sites())?;
    check_sites(h0.n_sites(), a.n_sites())?;
    for s in sequence {
        check_sites(h0.n_sites(), s.op.n_sites())?;
    }
    if !time_ordered(t, sequence) {
        return Ok(0.0);
    }
    let p = Propagator::new(h0, Evolver::Exact)?;
    let heis = |op: &OperatorSum, tau: f64, v: &StateVector| -> Result<StateVector> {
        let w = p.forward(v, tau);
        Ok(p.backward(&apply_operator(op, &w)?, tau))
    };
    kernel(heis, a, t, sequence, psi0)
}

/// Same kernel from dense Heisenberg matrices and explicit commutators.
pub fn nested_commutator_dense(
    h0: &OperatorSum,
    a: &OperatorSum,
    sequence: &[TimedOperator<'_>],
    t: f64,
    psi0: &StateVector,
) -> Result<f64> {
    dense_cap(h0.n_sites())?;
    check_sites(h0.n_sites(), psi0.n_sites())?;
    if !time_ordered(t, sequence) {
        return Ok(0.0);
    }
    let p = Propagator::new(h0, Evolver::Exact)?;
    let eig = p.eigensystem().unwrap();
    let heis = |op: &OperatorSum, tau: f64| -> Result<DMatrix<Complex64>> {
        let u = eig.dense_function(|l| Complex64::new(0.0, -l * tau).exp());
        Ok(u.adjoint() * op.to_dense()? * u)
    };
    let mut acc = heis(a, t)?;
    for s in sequence {
        let x = heis(s.op, s.time)?;
        acc = &x * &acc - &acc * &x;
    }
    let psi = DVector::from_column_slice(psi0.amplitudes());
    let z = psi.dotc(&(acc * &psi));
    finish(i_pow(sequence.len()) * z)
}

fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 0 {
        return if total == 0 { vec![vec![]] } else { vec![] };
    }
    if parts == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for k in (0..=total).rev() {
        for mut rest in compositions(total - k, parts - 1) {
            rest.insert(0, k);
            out.push(rest);
        }
    }
    out
}

/// Pulse-summed response `χ^(β)(t)` of a multi-pulse schedule.
///
/// Each channel's `β_a` insertions are distributed over its pulses with multiplicities
/// `k_p`, weighted by `Π 1/k_p!`; the matching product of shifted signals is what a
/// shift-rule reconstruction returns.
pub fn pulse_summed_response(dynamics: &Dynamics, a: &OperatorSum, t: f64, beta: &MultiIndex) -> Result<f64> {
    let channels = dynamics.schedule().channels();
    if beta.beta().len() != channels.len() {
        return Err(invalid(format!("{} channels for multi-index of length {}", channels.len(), beta.beta().len())));
    }
    let per_channel: Vec<Vec<Vec<usize>>> = channels.iter().zip(beta.beta()).map(|(c, &b)| compositions(b, c.times.len())).collect();
    let mut choice = vec![0usize; channels.len()];
    let mut total = 0.0;
    loop {
        let mut weight = 1.0;
        let mut seq: Vec<TimedOperator<'_>> = Vec::new();
        for (ai, ch) in channels.iter().enumerate() {
            let ks = &per_channel[ai][choice[ai]];
            for (p, &k) in ks.iter().enumerate() {
                weight /= factorial(k);
                for _ in 0..k {
                    seq.push(TimedOperator { op: &ch.generator, time: ch.times[p] });
                }
            }
        }
        seq.sort_by(|x, y| y.time.partial_cmp(&x.time).unwrap());
        total += weight * nested_commutator_in(dynamics, a, t, &seq)?;
        let mut ai = 0;
        loop {
            if ai == choice.len() {
                return Ok(total);
            }
            choice[ai] += 1;
            if choice[ai] < per_channel[ai].len() {
                break;
            }
            choice[ai] = 0;
            ai += 1;
        }
    }
}

/// Central finite-difference estimate and its Richardson extrapolation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiniteDifference {
    pub value: f64,
    pub richardson: f64,
}

/// Weights `w_j`, `j = −p..p`, with `Σ_j w_j f(jh) / h^m ≈ f^(m)(0)`.
pub fn central_weights(m: usize) -> Vec<f64> {
    let p = m.div_ceil(2).max(1);
    let n = 2 * p + 1;
    let v = DMatrix::from_fn(n, n, |k, j| (j as f64 - p as f64).powi(k as i32));
    let mut rhs = DVector::zeros(n);
    rhs[m] = factorial(m);
    v.lu().solve(&rhs).expect("Vandermonde system on distinct nodes").iter().copied().collect()
}

pub fn finite_difference_derivative(f: impl Fn(f64) -> f64, m: usize, h: f64) -> Result<FiniteDifference> {
    if m > 7 {
        return Err(invalid("finite differences are provided up to order 7"));
    }
    if h.is_nan() || h <= 0.0 {
        return Err(invalid("finite-difference step must be positive"));
    }
    if m == 0 {
        let v = f(0.0);
        return Ok(FiniteDifference { value: v, richardson: v });
    }
    let w = central_weights(m);
    let p = (w.len() / 2) as f64;
    let d = |h: f64| -> f64 { w.iter().enumerate().map(|(j, wj)| wj * f((j as f64 - p) * h)).sum::<f64>() / h.powi(m as i32) };
    let coarse = d(h);
    let fine = d(h / 2.0);
    Ok(FiniteDifference { value: coarse, richardson: (4.0 * fine - coarse) / 3.0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StepwiseMode {
    /// Back-substitution that removes every lower-order leak for an odd quintic.
    #[default]
    Exact,
    /// Combinations applied to raw signals as printed, with the quintic normalisation
    /// `s₃⁵ − s₃s₁⁴ − (s₃³/s₂³)(s₂⁵ − s₂s₁⁴)`.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stepwise {
    pub a1: f64,
    pub a3: f64,
    pub a5: f64,
    pub tilde3: f64,
    pub tilde5: f64,
}

/// `(A¹, A³, A⁵)` from `G(0), G(s₁), G(s₂), G(s₃)` under `G ≈ A⁰ + ηA¹ + η³A³ + η⁵A⁵`.
pub fn stepwise_subtraction(s: [f64; 3], g: [f64; 4], mode: StepwiseMode) -> Result<Stepwise> {
    let [s1, s2, s3] = s;
    if !(0.0 < s1 && s1 < s2 && s2 < s3) {
        return Err(invalid("stepwise subtraction needs 0 < s₁ < s₂ < s₃"));
    }
    let a32 = s2.powi(3) - s2 * s1 * s1;
    let a52 = s2.powi(5) - s2 * s1.powi(4);
    let a33 = s3.powi(3) - s3 * s1 * s1;
    let a53 = s3.powi(5) - s3 * s1.powi(4);
    let out = match mode {
        StepwiseMode::Literal => {
            let tilde3 = g[2] - s2 / s1 * g[1];
            let r = s3.powi(3) / s2.powi(3);
            let tilde5 = g[3] - s3 / s1 * g[1] - r * tilde3;
            let norm5 = a53 - r * a52;
            check_norm(a32)?;
            check_norm(norm5)?;
            Stepwise { a1: (g[1] - g[0]) / s1, a3: tilde3 / a32, a5: tilde5 / norm5, tilde3, tilde5 }
        }
        StepwiseMode::Exact => {
            let d = [g[1] - g[0], g[2] - g[0], g[3] - g[0]];
            let tilde3 = d[1] - s2 / s1 * d[0];
            let tilde3b = d[2] - s3 / s1 * d[0];
            check_norm(a32)?;
            let tilde5 = tilde3b - a33 / a32 * tilde3;
            let norm5 = a53 - a33 * a52 / a32;
            check_norm(norm5)?;
            let a5 = tilde5 / norm5;
            let a3 = (tilde3 - a52 * a5) / a32;
            let a1 = (d[0] - s1.powi(3) * a3 - s1.powi(5) * a5) / s1;
            Stepwise { a1, a3, a5, tilde3, tilde5 }
        }
    };
    Ok(out)
}

fn check_norm(x: f64) -> Result<()> {
    if x.abs() < 1e-300 || !x.is_finite() {
        return Err(invalid("degenerate shift choice: vanishing normalisation"));
    }
    Ok(())
}
