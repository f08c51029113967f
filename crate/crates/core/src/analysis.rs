//! Higher-level diagnostics built on the response engine: entanglement entropy and its
//! pump expansion, toric-code pump–probe correlators, principal-axis slopes and the
//! third-order 2D spectroscopy signal.

use nalgebra::{DMatrix, DVector, Matrix2};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::evolution::{apply_kick, timed_matrix_element, Channel, Dynamics, Propagator, PulseSchedule, TimedOperator};
use crate::gpsr::{factorial, reconstruct_response, MultiIndex, ShiftRule};
use crate::models::ToricLattice;
use crate::operators::{partial_trace, Axis, OperatorSum, PauliString, StateVector};
use crate::oracle::nested_commutator_in;

const EIGEN_FLOOR: f64 = 1e-14;

/// Von Neumann entropy (natural log) of sites `0..d`.
pub fn entanglement_entropy(state: &StateVector, d: usize) -> Result<f64> {
    let n = state.n_sites();
    if d == 0 || d >= n {
        return Err(invalid(format!("block size {d} must lie in 1..{n}")));
    }
    let rho = partial_trace(state, 0, d)?;
    let eig = rho.symmetric_eigenvalues();
    Ok(eig.iter().filter(|&&p| p > EIGEN_FLOOR).map(|&p| -p * p.ln()).sum())
}

/// Least-squares polynomial `y ≈ Σ_n c_n x^n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolynomialFit {
    pub coefficients: Vec<f64>,
    pub condition: f64,
    pub residual: f64,
}

pub const FIT_CONDITION_THRESHOLD: f64 = 1e8;

pub fn polynomial_fit(x: &[f64], y: &[f64], degree: usize) -> Result<PolynomialFit> {
    if x.len() != y.len() || x.len() < degree + 1 {
        return Err(invalid(format!("degree-{degree} fit needs at least {} samples", degree + 1)));
    }
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let v = DMatrix::from_fn(x.len(), degree + 1, |i, k| (x[i] / scale).powi(k as i32));
    let svd = v.clone().svd(true, true);
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 { svd.singular_values.max() / smin } else { f64::INFINITY };
    if condition > FIT_CONDITION_THRESHOLD {
        return Err(Error::IllConditioned { condition, threshold: FIT_CONDITION_THRESHOLD });
    }
    let b = DVector::from_column_slice(y);
    let c = svd.solve(&b, 0.0).map_err(|e| invalid(e.to_string()))?;
    let residual = (&v * &c - &b).norm() / (x.len() as f64).sqrt();
    let coefficients = c.iter().enumerate().map(|(k, ck)| ck / scale.powi(k as i32)).collect();
    Ok(PolynomialFit { coefficients, condition, residual })
}

/// Order-by-order split of `S_d(η)` at a fixed time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyExpansion {
    /// Entropy at each grid amplitude.
    pub samples: Vec<f64>,
    /// `c_n` with `S(η) ≈ Σ c_n η^n`.
    pub coefficients: Vec<f64>,
    /// `S^(n) = c_n η_eval^n`.
    pub orders: Vec<f64>,
    pub condition: f64,
}

/// Entropy of sites `0..d` in the driven state.
pub fn driven_entropy(dynamics: &Dynamics, etas: &[f64], t: f64, d: usize) -> Result<f64> {
    entanglement_entropy(&dynamics.state(etas, t)?, d)
}

/// Polynomial fit of `S_d(η, t)` over a symmetric grid of single-channel amplitudes.
pub fn entropy_expansion(
    dynamics: &Dynamics,
    eta_grid: &[f64],
    t: f64,
    d: usize,
    max_order: usize,
    eta_eval: f64,
) -> Result<EntropyExpansion> {
    if dynamics.n_channels() != 1 {
        return Err(invalid("entropy expansion needs a single-channel schedule"));
    }
    let samples: Vec<f64> = eta_grid.par_iter().map(|&e| driven_entropy(dynamics, &[e], t, d)).collect::<Result<_>>()?;
    let fit = polynomial_fit(eta_grid, &samples, max_order)?;
    let orders = fit.coefficients.iter().enumerate().map(|(n, c)| c * eta_eval.powi(n as i32)).collect();
    Ok(EntropyExpansion { samples, coefficients: fit.coefficients, orders, condition: fit.condition })
}

/// Symmetric grid of `points` amplitudes on `[−η, η]`.
pub fn symmetric_grid(eta: f64, points: usize) -> Vec<f64> {
    if points < 2 {
        return vec![0.0];
    }
    (0..points).map(|k| -eta + 2.0 * eta * k as f64 / (points - 1) as f64).collect()
}

/// Pauli string on toric-lattice edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StringOperator {
    pub edges: Vec<(usize, Axis)>,
    #[serde(default)]
    pub label: String,
}

impl StringOperator {
    pub fn new(edges: Vec<(usize, Axis)>, label: impl Into<String>) -> Self {
        StringOperator { edges, label: label.into() }
    }

    /// Same axis on every listed edge.
    pub fn uniform(edges: &[usize], axis: Axis, label: impl Into<String>) -> Self {
        Self::new(edges.iter().map(|&e| (e, axis)).collect(), label)
    }

    pub fn pauli(&self, lattice: &ToricLattice) -> Result<PauliString> {
        if self.edges.is_empty() {
            return Err(invalid("string operator needs at least one edge"));
        }
        if let Some((e, _)) = self.edges.iter().find(|(e, _)| *e >= lattice.n_qubits()) {
            return Err(invalid(format!("edge {e} outside a lattice of {} edges", lattice.n_qubits())));
        }
        PauliString::from_factors(&self.edges)
    }

    pub fn operator(&self, lattice: &ToricLattice) -> Result<OperatorSum> {
        OperatorSum::from_terms(lattice.n_qubits(), [(1.0, self.pauli(lattice)?)])
    }
}

/// `C(t₁, t₂; η) = ⟨ψ₀|e^{iηB} A₂(t₁+t₂) A₁(t₁) e^{−iηB}|ψ₀⟩`.
#[derive(Debug, Clone)]
pub struct PumpProbe {
    pub propagator: Propagator,
    pub pump: OperatorSum,
    pub probe1: OperatorSum,
    pub probe2: OperatorSum,
    pub psi0: StateVector,
}

impl PumpProbe {
    pub fn correlator(&self, t1: f64, t2: f64, eta: f64) -> Result<Complex64> {
        let phi = apply_kick(&self.pump, eta, &self.psi0)?;
        let product = [TimedOperator { op: &self.probe2, time: t1 + t2 }, TimedOperator { op: &self.probe1, time: t1 }];
        timed_matrix_element(&self.propagator, &product, &phi)
    }

    /// `C^(n) = (η^n/n!) ∂ⁿC/∂ηⁿ|₀` for `n = 0..=max_order`.
    pub fn orders(&self, rule: &ShiftRule, t1: f64, t2: f64, eta: f64, max_order: usize) -> Result<Vec<Complex64>> {
        correlator_order_expansion(|s| self.correlator(t1, t2, s), rule, eta, max_order)
    }

    /// `C(κ)/C(0) − 1`, or `None` when `|C(0)|` is below `floor`.
    pub fn contrast(&self, t1: f64, t2: f64, kappa: f64, floor: f64) -> Result<Option<Complex64>> {
        Ok(contrast_ratio(self.correlator(t1, t2, kappa)?, self.correlator(t1, t2, 0.0)?, floor))
    }
}

/// Shift-rule expansion of a complex, band-limited function of the pump amplitude.
pub fn correlator_order_expansion(
    sampler: impl Fn(f64) -> Result<Complex64>,
    rule: &ShiftRule,
    eta: f64,
    max_order: usize,
) -> Result<Vec<Complex64>> {
    let samples: Vec<Complex64> = rule.shifts().iter().map(|&s| sampler(s)).collect::<Result<_>>()?;
    (0..=max_order)
        .map(|n| {
            let c = rule.coefficients(n)?;
            let d: Complex64 = c.values.iter().zip(&samples).map(|(w, z)| z * *w).sum();
            Ok(d * (eta.powi(n as i32) / factorial(n)))
        })
        .collect()
}

pub const CONTRAST_FLOOR: f64 = 1e-10;

pub fn contrast_ratio(c_kappa: Complex64, c_zero: Complex64, floor: f64) -> Option<Complex64> {
    if c_zero.norm() <= floor {
        None
    } else {
        Some(c_kappa / c_zero - 1.0)
    }
}

/// Labelled point cloud, e.g. `(Re C^(3), Re C^(5))` over a time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud2D {
    pub points: Vec<(f64, f64)>,
    pub labels: (String, String),
}

/// Principal-axis slope; `vertical` marks an infinite slope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PcaSlope {
    pub slope: f64,
    pub vertical: bool,
}

/// Slope of the leading principal axis, oriented with positive x-component.
pub fn pca_slope(points: &[(f64, f64)]) -> Result<PcaSlope> {
    if points.len() < 2 || points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(invalid("PCA slope needs at least two finite points"));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
    for (x, y) in points {
        a += (x - mx) * (x - mx);
        b += (x - mx) * (y - my);
        c += (y - my) * (y - my);
    }
    let cov = Matrix2::new(a, b, b, c) / n;
    let split = ((cov[(0, 0)] - cov[(1, 1)]).powi(2) / 4.0 + cov[(0, 1)].powi(2)).sqrt();
    let trace = cov[(0, 0)] + cov[(1, 1)];
    if trace == 0.0 {
        return Err(invalid("all points coincide"));
    }
    if split <= 1e-12 * trace {
        return Err(invalid("isotropic cloud has no principal axis"));
    }
    let theta = 0.5 * (2.0 * cov[(0, 1)]).atan2(cov[(0, 0)] - cov[(1, 1)]);
    if theta.cos().abs() < 1e-15 {
        return Ok(PcaSlope { slope: f64::INFINITY.copysign(theta), vertical: true });
    }
    Ok(PcaSlope { slope: theta.tan(), vertical: false })
}

/// Third-order 2D signal `S^(3)(t₁, t₃)` for pulses at `0, t₁, t₁+t₂` and detection at
/// `t₁+t₂+t₃`.
///
/// `S^(3) = Im⟨[[[A(T), B(t₁+t₂)], B(t₁)], B(0)]⟩`, which is the real response
/// `i³⟨[[[A(T), B(t₁+t₂)], B(t₁)], B(0)]⟩`.
#[derive(Debug, Clone)]
pub struct TwoDos {
    pub propagator: Propagator,
    pub detection: OperatorSum,
    pub pump: OperatorSum,
    pub psi0: StateVector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TwoDosMethod {
    #[default]
    Gpsr,
    Oracle,
}

impl TwoDos {
    fn dynamics(&self, t1: f64, t2: f64) -> Result<Dynamics> {
        let ch = |t: f64| Channel { generator: self.pump.clone(), times: vec![t] };
        let sched = PulseSchedule::new(vec![ch(0.0), ch(t1), ch(t1 + t2)])?;
        Dynamics::with_propagator(self.propagator.clone(), sched, self.psi0.clone())
    }

    /// One cell via the nested-commutator oracle.
    pub fn oracle_point(&self, t1: f64, t2: f64, t3: f64) -> Result<f64> {
        let d = self.dynamics(t1, t2)?;
        let b = &self.pump;
        let seq = [TimedOperator { op: b, time: t1 + t2 }, TimedOperator { op: b, time: t1 }, TimedOperator { op: b, time: 0.0 }];
        Ok(-nested_commutator_in(&d, &self.detection, t1 + t2 + t3, &seq)?)
    }

    /// One cell via three-channel shift rules with `β = (1, 1, 1)`.
    pub fn gpsr_point(&self, rule: &ShiftRule, t1: f64, t2: f64, t3: f64) -> Result<f64> {
        let d = self.dynamics(t1, t2)?;
        let rules = vec![rule.clone(), rule.clone(), rule.clone()];
        let beta = MultiIndex::new(vec![1, 1, 1])?;
        let s = reconstruct_response(&d, &rules, &self.detection, &[t1 + t2 + t3], &beta)?;
        Ok(-s.values[0])
    }

    /// `S^(3)` on a `t₁ × t₃` grid; rows follow `t₁`.
    pub fn signal(&self, t2: f64, t1_grid: &[f64], t3_grid: &[f64], method: TwoDosMethod) -> Result<DMatrix<f64>> {
        let rule = ShiftRule::for_generator(&self.pump, crate::gpsr::GridMode::Full, 1)?;
        let cells: Vec<(usize, usize)> = (0..t1_grid.len()).flat_map(|i| (0..t3_grid.len()).map(move |j| (i, j))).collect();
        let vals: Vec<f64> = cells
            .par_iter()
            .map(|&(i, j)| match method {
                TwoDosMethod::Oracle => self.oracle_point(t1_grid[i], t2, t3_grid[j]),
                TwoDosMethod::Gpsr => self.gpsr_point(&rule, t1_grid[i], t2, t3_grid[j]),
            })
            .collect::<Result<_>>()?;
        Ok(DMatrix::from_row_slice(t1_grid.len(), t3_grid.len(), &vals))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::Evolver;
    use crate::gpsr::GapSet;
    use crate::models::{build_spin_boson, build_tls_dimer, build_toric_code, build_xxz, ground_state, Boundary};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::{LN_2, PI};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn entropy_examples() {
        let prod = StateVector::basis(3, 5);
        assert_abs_diff_eq!(entanglement_entropy(&prod, 1).unwrap(), 0.0, epsilon = 1e-12);
        let bell = StateVector::from_amplitudes(2, vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]).unwrap();
        assert_abs_diff_eq!(entanglement_entropy(&bell, 1).unwrap(), LN_2, epsilon = 1e-12);
        let mut ghz = vec![c(0.0, 0.0); 16];
        ghz[0] = c(1.0, 0.0);
        ghz[15] = c(1.0, 0.0);
        let ghz = StateVector::from_amplitudes(4, ghz).unwrap();
        assert_abs_diff_eq!(entanglement_entropy(&ghz, 2).unwrap(), LN_2, epsilon = 1e-12);
        assert!(entanglement_entropy(&ghz, 0).is_err());
        assert!(entanglement_entropy(&ghz, 4).is_err());
    }

    proptest! {
        #[test]
        fn entropy_is_symmetric_under_cut(amps in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 32), d in 1usize..5) {
            let psi = StateVector::from_amplitudes(5, amps.iter().map(|(a, b)| c(*a, *b)).collect()).unwrap();
            let s_left = entanglement_entropy(&psi, d).unwrap();
            let rho = crate::operators::partial_trace(&psi, d, 5 - d).unwrap();
            let s_right: f64 = rho.symmetric_eigenvalues().iter().filter(|&&p| p > EIGEN_FLOOR).map(|&p| -p * p.ln()).sum();
            prop_assert!((s_left - s_right).abs() < 1e-10);
        }

        #[test]
        fn pca_invariances(pts in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 3..30), k in 0.1f64..10.0, dx in -5.0f64..5.0, dy in -5.0f64..5.0) {
            if let Ok(s) = pca_slope(&pts) {
                let scaled: Vec<(f64, f64)> = pts.iter().map(|(x, y)| (k * x + dx, k * y + dy)).collect();
                let s2 = pca_slope(&scaled).unwrap();
                if !s.vertical {
                    prop_assert!((s.slope - s2.slope).abs() < 1e-9 * (1.0 + s.slope.abs()));
                }
            }
        }
    }

    #[test]
    fn polynomial_fit_recovers_quadratic() {
        let x = symmetric_grid(0.02, 9);
        let y: Vec<f64> = x.iter().map(|e| 0.3 + 1.7 * e * e).collect();
        let fit = polynomial_fit(&x, &y, 4).unwrap();
        assert_abs_diff_eq!(fit.coefficients[0], 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.coefficients[2], 1.7, epsilon = 1e-6);
        assert!(fit.coefficients[1].abs() < 1e-8);
        assert!(polynomial_fit(&[0.0, 0.0, 0.0], &[1.0, 1.0, 1.0], 2).is_err());
    }

    #[test]
    fn entropy_expansion_zero_pump_and_parity() {
        let h = build_xxz(4, 0.5, 0.0, Boundary::Open).unwrap();
        let psi = ground_state(&h).unwrap();
        let zero = Dynamics::new(&h, PulseSchedule::single(OperatorSum::zero(4), 0.0).unwrap(), Evolver::Exact, psi.clone()).unwrap();
        let grid = symmetric_grid(0.05, 9);
        let e = entropy_expansion(&zero, &grid, 1.0, 2, 4, 0.05).unwrap();
        assert!(e.orders[1..].iter().all(|v| v.abs() < 1e-10));
        let b = OperatorSum::from_terms(4, (0..4).map(|i| (1.0, PauliString::single(i, Axis::X)))).unwrap();
        let d = Dynamics::new(&h, PulseSchedule::single(b, 0.0).unwrap(), Evolver::Exact, psi).unwrap();
        let e = entropy_expansion(&d, &grid, 1.0, 2, 4, 0.05).unwrap();
        assert!(e.orders[1].abs() < 1e-9, "{:?}", e.orders);
    }

    #[test]
    fn pca_examples() {
        let line: Vec<(f64, f64)> = (0..5).map(|k| (k as f64, 2.0 * k as f64)).collect();
        assert_abs_diff_eq!(pca_slope(&line).unwrap().slope, 2.0, epsilon = 1e-12);
        let line: Vec<(f64, f64)> = (0..5).map(|k| (k as f64, 3.0 - k as f64)).collect();
        assert_abs_diff_eq!(pca_slope(&line).unwrap().slope, -1.0, epsilon = 1e-12);
        let vertical = [(1.0, 0.0), (1.0, 2.0), (1.0, 5.0)];
        assert!(pca_slope(&vertical).unwrap().vertical);
        let iso = [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)];
        assert!(pca_slope(&iso).is_err());
        let mut rng = crate::sampling::substream(1, 0);
        use rand_distr::{Distribution, StandardNormal};
        let pts: Vec<(f64, f64)> = (0..20000)
            .map(|_| {
                let u: f64 = StandardNormal.sample(&mut rng);
                let v: f64 = StandardNormal.sample(&mut rng);
                (1.5f64.sqrt() * u + 0.5f64.sqrt() * v, 1.5f64.sqrt() * u - 0.5f64.sqrt() * v)
            })
            .collect();
        assert!((pca_slope(&pts).unwrap().slope - 1.0).abs() < 0.05);
    }

    #[test]
    fn contrast_examples() {
        let z = c(0.3, -0.7);
        assert_eq!(contrast_ratio(z, z, CONTRAST_FLOOR), Some(c(0.0, 0.0)));
        assert_eq!(contrast_ratio(-z, z, CONTRAST_FLOOR), Some(c(-2.0, 0.0)));
        let r = contrast_ratio(c(0.0, 1.0) * z, z, CONTRAST_FLOOR).unwrap();
        assert_abs_diff_eq!((r - c(-1.0, 1.0)).norm(), 0.0, epsilon = 1e-15);
        assert_eq!(contrast_ratio(z, c(0.0, 0.0), CONTRAST_FLOOR), None);
    }

    #[test]
    fn order_expansion_examples() {
        let rule = ShiftRule::new(GapSet::from_spectrum(&[-1.0, 1.0], 1e-9), 3).unwrap();
        let c0 = c(0.4, 0.1);
        let flat = correlator_order_expansion(|_| Ok(c0), &rule, 0.3, 3).unwrap();
        assert!(flat[1..].iter().all(|z| z.norm() < 1e-12));
        let phase = correlator_order_expansion(|e| Ok(c(0.0, 2.0 * e).exp() * c0), &rule, 0.3, 3).unwrap();
        assert_abs_diff_eq!((phase[1] - c(0.0, 2.0 * 0.3) * c0).norm(), 0.0, epsilon = 1e-12);
    }

    fn toric() -> (ToricLattice, PumpProbe) {
        let lat = ToricLattice::new(2, 2).unwrap();
        let h = build_toric_code(2, 2, 1.0, 1.0).unwrap();
        let psi = ground_state(&h).unwrap();
        let p = lat.plaquette_edges(0, 0);
        let g1 = StringOperator::uniform(&p[..2], Axis::Z, "γ1").operator(&lat).unwrap();
        let g2 = StringOperator::uniform(&p[2..], Axis::Z, "γ2").operator(&lat).unwrap();
        let pp = PumpProbe {
            propagator: Propagator::new(&h, Evolver::Exact).unwrap(),
            pump: OperatorSum::zero(8),
            probe1: g1,
            probe2: g2,
            psi0: psi,
        };
        (lat, pp)
    }

    #[test]
    fn toric_contrast_values() {
        let (lat, mut pp) = toric();
        let p = lat.plaquette_edges(0, 0);
        let c0 = pp.correlator(0.0, 0.0, 0.0).unwrap();
        assert_abs_diff_eq!(c0.norm(), 1.0, epsilon = 1e-12);
        pp.pump = StringOperator::uniform(&[p[0]], Axis::X, "pump").operator(&lat).unwrap();
        for (t1, t2) in [(0.0, 0.0), (0.3, 1.1), (2.0, 0.7)] {
            let r = pp.contrast(t1, t2, PI / 2.0, CONTRAST_FLOOR).unwrap().unwrap();
            assert_abs_diff_eq!((r - c(-2.0, 0.0)).norm(), 0.0, epsilon = 1e-10);
        }
        let outside = (0..8).find(|e| !p.contains(e)).unwrap();
        pp.pump = StringOperator::uniform(&[outside], Axis::X, "pump").operator(&lat).unwrap();
        let r = pp.contrast(0.4, 0.9, PI / 2.0, CONTRAST_FLOOR).unwrap().unwrap();
        assert_abs_diff_eq!(r.norm(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn string_operator_validation() {
        let lat = ToricLattice::new(2, 2).unwrap();
        assert!(StringOperator::uniform(&[9], Axis::Z, "").pauli(&lat).is_err());
        assert!(StringOperator::new(vec![], "").pauli(&lat).is_err());
    }

    fn two_dos(h: &OperatorSum, pump: OperatorSum, detection: OperatorSum) -> TwoDos {
        TwoDos { propagator: Propagator::new(h, Evolver::Exact).unwrap(), detection, pump, psi0: ground_state(h).unwrap() }
    }

    fn x_sum(n: usize, sites: &[usize]) -> OperatorSum {
        OperatorSum::from_terms(n, sites.iter().map(|&i| (1.0, PauliString::single(i, Axis::X)))).unwrap()
    }

    #[test]
    fn two_dos_paths_agree() {
        let t: Vec<f64> = (0..4).map(|k| 0.7 * k as f64).collect();
        let dimer = build_tls_dimer(0.5, 1.0, 0.8);
        let sb = build_spin_boson(0.5, 1.0, 0.8, 0.3);
        for (h, n) in [(dimer, 2), (sb, 3)] {
            let sys = two_dos(&h, x_sum(n, &[0, 1]), x_sum(n, &[0, 1]));
            let g = sys.signal(0.4, &t, &t, TwoDosMethod::Gpsr).unwrap();
            let o = sys.signal(0.4, &t, &t, TwoDosMethod::Oracle).unwrap();
            assert!((g - &o).amax() < 1e-8);
            assert!(o.amax() > 1e-3);
        }
    }

    #[test]
    fn two_dos_commuting_pump_is_silent() {
        let h = build_tls_dimer(0.5, 1.0, 0.0);
        let z = OperatorSum::from_terms(2, [(1.0, "Z0".parse().unwrap()), (1.0, "Z1".parse().unwrap())]).unwrap();
        let sys = two_dos(&h, z.clone(), z);
        let t = [0.0, 0.5, 1.0];
        let s = sys.signal(0.0, &t, &t, TwoDosMethod::Oracle).unwrap();
        assert!(s.amax() < 1e-14);
    }
}
