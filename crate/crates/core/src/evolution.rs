//! Free propagation, δ-pulse kicks and the driven signal `⟨A(t)⟩_η`.
//!
//! The state `|ψ₀⟩` is taken at time 0. A schedule of kicks is applied in time order,
//! interleaved with free evolution; a kick scheduled exactly at the measurement time
//! is applied before measuring.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::operators::{
    apply_operator, apply_pauli_rotation, check_sites, dense_cap, eigendecompose, expectation, Eigensystem, OperatorSum, PauliString,
    StateVector,
};

/// Propagation scheme for `e^{−iH₀t}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Evolver {
    /// Phase evolution in the eigenbasis of `H₀`.
    #[default]
    Exact,
    /// First-order Trotter product with `n_steps` steps per free-evolution segment.
    Trotter1 { n_steps: usize },
}

impl Evolver {
    pub fn validate(&self) -> Result<()> {
        match self {
            Evolver::Trotter1 { n_steps: 0 } => Err(invalid("trotter1 requires n_steps ≥ 1")),
            _ => Ok(()),
        }
    }
}

/// Uniform grid with both endpoints included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    pub t_min: f64,
    pub t_max: f64,
    pub n_points: usize,
}

impl TimeGrid {
    pub fn new(t_min: f64, t_max: f64, n_points: usize) -> Result<Self> {
        let g = TimeGrid { t_min, t_max, n_points };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.t_min.is_finite() || !self.t_max.is_finite() || self.n_points == 0 {
            return Err(invalid("time grid needs finite bounds and at least one point"));
        }
        if self.n_points > 1 && self.t_max <= self.t_min {
            return Err(invalid("time grid needs t_max > t_min"));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        if self.n_points < 2 {
            0.0
        } else {
            (self.t_max - self.t_min) / (self.n_points - 1) as f64
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n_points).map(|k| self.t_min + k as f64 * self.dt()).collect()
    }
}

/// Applies `e^{−iH₀t}` and its adjoint with a fixed scheme.
#[derive(Debug, Clone)]
pub struct Propagator {
    h0: OperatorSum,
    evolver: Evolver,
    eigen: Option<Arc<Eigensystem>>,
}

impl Propagator {
    pub fn new(h0: &OperatorSum, evolver: Evolver) -> Result<Self> {
        evolver.validate()?;
        let eigen = match evolver {
            Evolver::Exact => Some(Arc::new(eigendecompose(h0)?)),
            Evolver::Trotter1 { .. } => None,
        };
        Ok(Propagator { h0: h0.clone(), evolver, eigen })
    }

    pub fn hamiltonian(&self) -> &OperatorSum {
        &self.h0
    }

    pub fn evolver(&self) -> Evolver {
        self.evolver
    }

    pub fn eigensystem(&self) -> Option<&Eigensystem> {
        self.eigen.as_deref()
    }

    /// One free-evolution segment of length `dt`.
    pub fn forward(&self, state: &StateVector, dt: f64) -> StateVector {
        if dt == 0.0 {
            return state.clone();
        }
        match self.evolver {
            Evolver::Exact => self.eigen.as_ref().unwrap().apply_function(state, |l| Complex64::new(0.0, -l * dt).exp()),
            Evolver::Trotter1 { n_steps } => {
                let tau = dt / n_steps as f64;
                let mut psi = state.clone();
                for _ in 0..n_steps {
                    for t in self.h0.terms() {
                        apply_pauli_rotation(&t.string, t.coefficient * tau, &mut psi);
                    }
                }
                psi
            }
        }
    }

    /// Adjoint of [`Propagator::forward`] for the same segment length.
    pub fn backward(&self, state: &StateVector, dt: f64) -> StateVector {
        if dt == 0.0 {
            return state.clone();
        }
        match self.evolver {
            Evolver::Exact => self.forward(state, -dt),
            Evolver::Trotter1 { n_steps } => {
                let tau = dt / n_steps as f64;
                let mut psi = state.clone();
                for _ in 0..n_steps {
                    for t in self.h0.terms().iter().rev() {
                        apply_pauli_rotation(&t.string, -t.coefficient * tau, &mut psi);
                    }
                }
                psi
            }
        }
    }
}

/// `e^{−iH₀t}|ψ⟩`.
pub fn evolve(h0: &OperatorSum, state: &StateVector, t: f64, evolver: Evolver) -> Result<StateVector> {
    check_sites(h0.n_sites(), state.n_sites())?;
    if !t.is_finite() {
        return Err(invalid("evolution time must be finite"));
    }
    Ok(Propagator::new(h0, evolver)?.forward(state, t))
}

#[derive(Debug, Clone)]
enum Factor {
    Rotation(PauliString, f64),
    Dense { sites: Vec<usize>, eigen: Eigensystem },
}

/// Pump generator split into commuting factors with disjoint supports.
///
/// Each factor is diagonalised on its own support only, so kicks by `Σ_i f_i X_i`
/// on a large register cost one single-qubit rotation per site.
#[derive(Debug, Clone)]
pub struct KickGenerator {
    generator: OperatorSum,
    factors: Vec<Factor>,
}

impl KickGenerator {
    pub fn new(b: &OperatorSum) -> Result<Self> {
        let mut factors = Vec::new();
        for (sites, op) in b.support_clusters() {
            if op.len() == 1 {
                let t = op.terms()[0];
                let factor: Vec<_> = t.string.factors().into_iter().map(|(s, a)| (sites[s], a)).collect();
                factors.push(Factor::Rotation(PauliString::from_factors(&factor)?, t.coefficient));
            } else {
                dense_cap(sites.len())?;
                factors.push(Factor::Dense { sites, eigen: eigendecompose(&op)? });
            }
        }
        Ok(KickGenerator { generator: b.clone(), factors })
    }

    pub fn generator(&self) -> &OperatorSum {
        &self.generator
    }

    /// Distinct eigenvalues of each disjoint-support factor, ascending.
    pub fn factor_spectra(&self, tol: f64) -> Vec<Vec<f64>> {
        self.factors
            .iter()
            .map(|f| match f {
                Factor::Rotation(_, c) => vec![-c.abs(), c.abs()],
                Factor::Dense { eigen, .. } => dedup_sorted(eigen.values(), tol),
            })
            .collect()
    }

    /// Distinct eigenvalues of the generator (identity part excluded), merged at `tol`.
    pub fn spectrum(&self, tol: f64) -> Vec<f64> {
        sumset(&self.factor_spectra(tol), tol)
    }

    /// `e^{−iηB}|ψ⟩`.
    pub fn apply(&self, eta: f64, state: &mut StateVector) {
        if eta == 0.0 {
            return;
        }
        for f in &self.factors {
            match f {
                Factor::Rotation(p, c) => apply_pauli_rotation(p, eta * c, state),
                Factor::Dense { sites, eigen } => {
                    let u = eigen.dense_function(|l| Complex64::new(0.0, -eta * l).exp());
                    apply_local_unitary(&u, sites, state);
                }
            }
        }
    }
}

/// All sums `x₁ + x₂ + …` with one element from each set, sorted and merged at `tol`.
pub fn sumset(sets: &[Vec<f64>], tol: f64) -> Vec<f64> {
    let mut acc = vec![0.0];
    for local in sets {
        let mut next: Vec<f64> = acc.iter().flat_map(|a| local.iter().map(move |l| a + l)).collect();
        next.sort_by(|a, b| a.partial_cmp(b).unwrap());
        acc = dedup_sorted(next, tol);
    }
    acc
}

pub(crate) fn dedup_sorted(v: Vec<f64>, tol: f64) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::with_capacity(v.len());
    for x in v {
        match out.last() {
            Some(&last) if (x - last).abs() <= tol => {}
            _ => out.push(x),
        }
    }
    out
}

fn apply_local_unitary(u: &DMatrix<Complex64>, sites: &[usize], state: &mut StateVector) {
    let r = sites.len();
    let local_dim = 1usize << r;
    let mask: usize = sites.iter().map(|s| 1usize << s).sum();
    let offsets: Vec<usize> = (0..local_dim).map(|l| (0..r).filter(|k| l >> k & 1 == 1).map(|k| 1usize << sites[k]).sum()).collect();
    let psi = state.amplitudes_mut();
    let mut buf = vec![Complex64::new(0.0, 0.0); local_dim];
    for base in 0..psi.len() {
        if base & mask != 0 {
            continue;
        }
        for (l, off) in offsets.iter().enumerate() {
            buf[l] = psi[base | off];
        }
        for (row, off) in offsets.iter().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for (col, b) in buf.iter().enumerate() {
                acc += u[(row, col)] * b;
            }
            psi[base | off] = acc;
        }
    }
}

/// `e^{−iηB}|ψ⟩`.
pub fn apply_kick(b: &OperatorSum, eta: f64, state: &StateVector) -> Result<StateVector> {
    check_sites(b.n_sites(), state.n_sites())?;
    let mut out = state.clone();
    KickGenerator::new(b)?.apply(eta, &mut out);
    Ok(out)
}

/// One drive channel: generator `B_a` kicked at the listed times with a shared amplitude `η_a`.
#[derive(Debug, Clone)]
pub struct Channel {
    pub generator: OperatorSum,
    pub times: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time: f64,
    pub channel: usize,
}

#[derive(Debug, Clone)]
pub struct PulseSchedule {
    channels: Vec<Channel>,
    events: Vec<Event>,
}

impl PulseSchedule {
    pub fn new(channels: Vec<Channel>) -> Result<Self> {
        if channels.is_empty() {
            return Err(invalid("pulse schedule needs at least one channel"));
        }
        let n = channels[0].generator.n_sites();
        let mut events = Vec::new();
        for (a, ch) in channels.iter().enumerate() {
            check_sites(n, ch.generator.n_sites())?;
            if ch.times.is_empty() {
                return Err(invalid(format!("channel {a} has no pulse times")));
            }
            for w in ch.times.windows(2) {
                if w[1] <= w[0] {
                    return Err(invalid(format!("pulse times of channel {a} must be strictly ascending")));
                }
            }
            for &t in &ch.times {
                if !t.is_finite() || t < 0.0 {
                    return Err(invalid(format!("pulse time {t} must be finite and ≥ 0")));
                }
                events.push(Event { time: t, channel: a });
            }
        }
        events.sort_by(|x, y| x.time.partial_cmp(&y.time).unwrap().then(x.channel.cmp(&y.channel)));
        for w in events.windows(2) {
            if w[0].time == w[1].time {
                let (a, b) = (&channels[w[0].channel].generator, &channels[w[1].channel].generator);
                if !a.commutes_with(b) {
                    return Err(invalid(format!(
                        "channels {} and {} kick simultaneously at t={} but do not commute",
                        w[0].channel, w[1].channel, w[0].time
                    )));
                }
            }
        }
        Ok(PulseSchedule { channels, events })
    }

    /// One channel pulsed once at `time`.
    pub fn single(generator: OperatorSum, time: f64) -> Result<Self> {
        Self::new(vec![Channel { generator, times: vec![time] }])
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn n_sites(&self) -> usize {
        self.channels[0].generator.n_sites()
    }

    /// Kicks in time order (ties broken by channel index).
    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn last_time(&self) -> f64 {
        self.events.last().map(|e| e.time).unwrap_or(0.0)
    }
}

/// Prepared driven system: propagator, kick generators, schedule and `|ψ₀⟩`.
#[derive(Debug, Clone)]
pub struct Dynamics {
    propagator: Propagator,
    schedule: PulseSchedule,
    kicks: Vec<KickGenerator>,
    psi0: StateVector,
}

impl Dynamics {
    pub fn new(h0: &OperatorSum, schedule: PulseSchedule, evolver: Evolver, psi0: StateVector) -> Result<Self> {
        Self::with_propagator(Propagator::new(h0, evolver)?, schedule, psi0)
    }

    /// Reuses an existing propagator (and its eigendecomposition).
    pub fn with_propagator(propagator: Propagator, schedule: PulseSchedule, psi0: StateVector) -> Result<Self> {
        check_sites(propagator.hamiltonian().n_sites(), schedule.n_sites())?;
        check_sites(propagator.hamiltonian().n_sites(), psi0.n_sites())?;
        let kicks = schedule.channels().iter().map(|c| KickGenerator::new(&c.generator)).collect::<Result<_>>()?;
        Ok(Dynamics { propagator, schedule, kicks, psi0 })
    }

    pub fn propagator(&self) -> &Propagator {
        &self.propagator
    }

    pub fn schedule(&self) -> &PulseSchedule {
        &self.schedule
    }

    pub fn kick_generator(&self, channel: usize) -> &KickGenerator {
        &self.kicks[channel]
    }

    pub fn initial_state(&self) -> &StateVector {
        &self.psi0
    }

    pub fn n_channels(&self) -> usize {
        self.kicks.len()
    }

    /// Driven state at time `t` for channel amplitudes `etas`.
    pub fn state(&self, etas: &[f64], t: f64) -> Result<StateVector> {
        if etas.len() != self.kicks.len() {
            return Err(invalid(format!("expected {} amplitudes, got {}", self.kicks.len(), etas.len())));
        }
        if !t.is_finite() || t < 0.0 {
            return Err(invalid(format!("measurement time {t} must be finite and ≥ 0")));
        }
        let mut psi = self.psi0.clone();
        let mut cur = 0.0;
        for ev in self.schedule.events() {
            if ev.time > t {
                break;
            }
            psi = self.propagator.forward(&psi, ev.time - cur);
            cur = ev.time;
            self.kicks[ev.channel].apply(etas[ev.channel], &mut psi);
        }
        Ok(self.propagator.forward(&psi, t - cur))
    }

    pub fn signal(&self, etas: &[f64], a: &OperatorSum, t: f64) -> Result<f64> {
        expectation(a, &self.state(etas, t)?)
    }

    /// Free-evolution breakpoints in `(0, τ)`: every scheduled kick time.
    fn segments(&self, tau: f64) -> Vec<f64> {
        let mut cuts: Vec<f64> = self.schedule.events().iter().map(|e| e.time).filter(|&s| s > 0.0 && s < tau).collect();
        cuts.dedup();
        let mut lens = Vec::with_capacity(cuts.len() + 1);
        let mut cur = 0.0;
        for c in cuts {
            lens.push(c - cur);
            cur = c;
        }
        lens.push(tau - cur);
        lens
    }

    /// `W(τ)|ψ⟩`, the undriven propagator composed from the same segments the driven signal uses.
    pub fn free_forward(&self, state: &StateVector, tau: f64) -> StateVector {
        let mut psi = state.clone();
        for dt in self.segments(tau) {
            psi = self.propagator.forward(&psi, dt);
        }
        psi
    }

    /// `W(τ)†|ψ⟩`.
    pub fn free_backward(&self, state: &StateVector, tau: f64) -> StateVector {
        let mut psi = state.clone();
        for dt in self.segments(tau).into_iter().rev() {
            psi = self.propagator.backward(&psi, dt);
        }
        psi
    }

    /// `X(τ)|v⟩ = W(τ)† X W(τ)|v⟩`.
    pub fn heisenberg_apply(&self, op: &OperatorSum, tau: f64, v: &StateVector) -> Result<StateVector> {
        let w = self.free_forward(v, tau);
        let xw = apply_operator(op, &w)?;
        Ok(self.free_backward(&xw, tau))
    }
}

/// `⟨A(t)⟩_η` over a grid of times, evaluated in parallel.
pub fn driven_signal(
    h0: &OperatorSum,
    schedule: &PulseSchedule,
    etas: &[f64],
    a: &OperatorSum,
    t_grid: &[f64],
    evolver: Evolver,
    psi0: &StateVector,
) -> Result<Vec<f64>> {
    let last = t_grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if schedule.last_time() > last {
        return Err(Error::Invalid(format!("pulse at t={} lies after the last grid time {last}", schedule.last_time())));
    }
    let dynamics = Dynamics::new(h0, schedule.clone(), evolver, psi0.clone())?;
    t_grid.par_iter().map(|&t| dynamics.signal(etas, a, t)).collect()
}

/// Operator stamped with a Heisenberg time.
#[derive(Debug, Clone, Copy)]
pub struct TimedOperator<'a> {
    pub op: &'a OperatorSum,
    pub time: f64,
}

/// `⟨ψ|O₁(t₁)O₂(t₂)⋯O_k(t_k)|ψ⟩` with `O(t) = e^{iH₀t} O e^{−iH₀t}`.
pub fn timed_matrix_element(propagator: &Propagator, product: &[TimedOperator<'_>], state: &StateVector) -> Result<Complex64> {
    let mut v = state.clone();
    for f in product.iter().rev() {
        let w = propagator.forward(&v, f.time);
        let xw = apply_operator(f.op, &w)?;
        v = propagator.backward(&xw, f.time);
    }
    Ok(state.inner(&v))
}
