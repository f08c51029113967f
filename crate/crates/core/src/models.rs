//! Hamiltonians, pump generators, observables and initial states.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::operators::{apply_operator, dense_cap, eigendecompose, Axis, OperatorSum, PauliString, StateVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Xxz,
    ToricCode,
    TlsDimer,
    SpinBoson,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    #[default]
    Open,
    Periodic,
}

/// Canonical parameter names with the aliases accepted in config files.
const PARAMETERS: &[(&str, &[&str])] = &[
    ("N", &["N", "n"]),
    ("Δ", &["Δ", "delta", "Delta"]),
    ("h_e", &["h_e", "he"]),
    ("J_A", &["J_A", "ja"]),
    ("J_B", &["J_B", "jb", "g"]),
    ("ω₀", &["ω₀", "ω0", "omega0", "omega_0"]),
    ("ω₁", &["ω₁", "ω1", "omega1", "omega_1"]),
    ("ω_b", &["ω_b", "omega_b"]),
    ("J", &["J"]),
    ("g", &["g"]),
    ("L_x", &["L_x", "lx"]),
    ("L_y", &["L_y", "ly"]),
];

/// Model kind plus named real parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub parameters: BTreeMap<String, f64>,
    #[serde(default)]
    pub boundary: Boundary,
}

impl ModelSpec {
    /// Looks up a parameter by canonical name or any alias.
    pub fn param(&self, canonical: &str) -> Result<f64> {
        let aliases = PARAMETERS.iter().find(|(c, _)| *c == canonical).map(|(_, a)| *a).unwrap_or(&[]);
        let found = std::iter::once(canonical).chain(aliases.iter().copied()).find_map(|k| self.parameters.get(k).copied());
        match found {
            Some(v) if v.is_finite() => Ok(v),
            Some(_) => Err(Error::Config(format!("parameter \"{canonical}\" must be finite"))),
            None => Err(Error::Config(format!("parameter \"{canonical}\" is required for model kind {:?}", self.kind))),
        }
    }

    fn count(&self, canonical: &str) -> Result<usize> {
        let v = self.param(canonical)?;
        if v < 1.0 || v.fract() != 0.0 {
            return Err(Error::Config(format!("parameter \"{canonical}\" must be a positive integer")));
        }
        Ok(v as usize)
    }

    /// Copy with `name` (or any of its aliases) set to `value`.
    pub fn with_parameter(&self, name: &str, value: f64) -> ModelSpec {
        let mut out = self.clone();
        for (_, aliases) in PARAMETERS.iter().filter(|(_, a)| a.contains(&name)) {
            for a in aliases.iter() {
                out.parameters.remove(*a);
            }
        }
        out.parameters.insert(name.to_string(), value);
        out
    }

    /// Number of qubits of the model.
    pub fn n_sites(&self) -> Result<usize> {
        match self.kind {
            ModelKind::Xxz => self.count("N"),
            ModelKind::ToricCode => Ok(2 * self.count("L_x")? * self.count("L_y")?),
            ModelKind::TlsDimer => Ok(2),
            ModelKind::SpinBoson => Ok(3),
        }
    }

    /// Checks that every parameter is recognised and the required ones are present.
    pub fn validate(&self) -> Result<()> {
        for key in self.parameters.keys() {
            if !PARAMETERS.iter().any(|(_, a)| a.contains(&key.as_str())) {
                return Err(Error::Config(format!("unknown model parameter \"{key}\"")));
            }
        }
        self.build().map(|_| ())
    }

    pub fn build(&self) -> Result<OperatorSum> {
        match self.kind {
            ModelKind::Xxz => {
                let n = self.count("N")?;
                build_xxz(n, self.param("Δ")?, self.param("h_e")?, self.boundary)
            }
            ModelKind::ToricCode => build_toric_code(self.count("L_x")?, self.count("L_y")?, self.param("J_A")?, self.param("J_B")?),
            ModelKind::TlsDimer => Ok(build_tls_dimer(self.param("ω₀")?, self.param("ω₁")?, self.param("J")?)),
            ModelKind::SpinBoson => Ok(build_spin_boson(self.param("ω₀")?, self.param("ω₁")?, self.param("ω_b")?, self.param("g")?)),
        }
    }
}

/// `H = ¼Σ(X_iX_j + Y_iY_j + ΔZ_iZ_j) − (h_e/2)ΣZ_i`.
///
/// Terms are ordered bond by bond (XX, YY, ZZ) from left to right, then the fields.
pub fn build_xxz(n: usize, delta: f64, h_e: f64, boundary: Boundary) -> Result<OperatorSum> {
    if n < 2 {
        return Err(invalid("XXZ chain needs at least two sites"));
    }
    let mut h = OperatorSum::zero(n);
    let mut bonds: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
    if boundary == Boundary::Periodic && n > 2 {
        bonds.push((n - 1, 0));
    }
    for (i, j) in bonds {
        for (axis, c) in [(Axis::X, 0.25), (Axis::Y, 0.25), (Axis::Z, 0.25 * delta)] {
            h.add_term(c, PauliString::from_factors(&[(i, axis), (j, axis)])?);
        }
    }
    for i in 0..n {
        h.add_term(-0.5 * h_e, PauliString::single(i, Axis::Z));
    }
    Ok(h)
}

/// Edge-qubit layout of an `L_x × L_y` torus.
///
/// Row `y` holds the horizontal edges `h(x, y)` followed by the vertical edges `v(x, y)`;
/// `h(x, y)` joins vertices `(x, y)` and `(x+1, y)`, `v(x, y)` joins `(x, y)` and `(x, y+1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ToricLattice {
    pub lx: usize,
    pub ly: usize,
}

impl ToricLattice {
    pub fn new(lx: usize, ly: usize) -> Result<Self> {
        if lx < 2 || ly < 2 {
            return Err(invalid("toric lattice needs L_x, L_y ≥ 2"));
        }
        Ok(ToricLattice { lx, ly })
    }

    pub fn n_qubits(&self) -> usize {
        2 * self.lx * self.ly
    }

    pub fn h_edge(&self, x: usize, y: usize) -> usize {
        let (x, y) = (x % self.lx, y % self.ly);
        2 * self.lx * y + x
    }

    pub fn v_edge(&self, x: usize, y: usize) -> usize {
        let (x, y) = (x % self.lx, y % self.ly);
        2 * self.lx * y + self.lx + x
    }

    /// Four edges meeting at vertex `(x, y)`.
    pub fn star_edges(&self, x: usize, y: usize) -> [usize; 4] {
        let xm = (x + self.lx - 1) % self.lx;
        let ym = (y + self.ly - 1) % self.ly;
        [self.h_edge(x, y), self.h_edge(xm, y), self.v_edge(x, y), self.v_edge(x, ym)]
    }

    /// Four edges bounding the plaquette with lower-left corner `(x, y)`.
    pub fn plaquette_edges(&self, x: usize, y: usize) -> [usize; 4] {
        [self.h_edge(x, y), self.h_edge(x, y + 1), self.v_edge(x, y), self.v_edge(x + 1, y)]
    }

    pub fn star(&self, x: usize, y: usize) -> PauliString {
        let f: Vec<(usize, Axis)> = self.star_edges(x, y).iter().map(|&e| (e, Axis::X)).collect();
        PauliString::from_factors(&f).expect("star edges are distinct")
    }

    pub fn plaquette(&self, x: usize, y: usize) -> PauliString {
        let f: Vec<(usize, Axis)> = self.plaquette_edges(x, y).iter().map(|&e| (e, Axis::Z)).collect();
        PauliString::from_factors(&f).expect("plaquette edges are distinct")
    }

    pub fn stars(&self) -> Vec<PauliString> {
        (0..self.ly).flat_map(|y| (0..self.lx).map(move |x| (x, y))).map(|(x, y)| self.star(x, y)).collect()
    }

    pub fn plaquettes(&self) -> Vec<PauliString> {
        (0..self.ly).flat_map(|y| (0..self.lx).map(move |x| (x, y))).map(|(x, y)| self.plaquette(x, y)).collect()
    }
}

/// `H = −J_A Σ_v A_v − J_B Σ_p B_p`, stars first.
pub fn build_toric_code(lx: usize, ly: usize, j_a: f64, j_b: f64) -> Result<OperatorSum> {
    let lat = ToricLattice::new(lx, ly)?;
    dense_cap(lat.n_qubits())?;
    let mut h = OperatorSum::zero(lat.n_qubits());
    for s in lat.stars() {
        h.add_term(-j_a, s);
    }
    for p in lat.plaquettes() {
        h.add_term(-j_b, p);
    }
    Ok(h)
}

/// `H = (ω₀/2)Z₀ + (ω₁/2)Z₁ + J(X₀X₁ + Y₀Y₁ + Z₀Z₁)`.
pub fn build_tls_dimer(omega0: f64, omega1: f64, j: f64) -> OperatorSum {
    let mut h = OperatorSum::zero(2);
    h.add_term(0.5 * omega0, PauliString::single(0, Axis::Z));
    h.add_term(0.5 * omega1, PauliString::single(1, Axis::Z));
    for axis in [Axis::X, Axis::Y, Axis::Z] {
        h.add_term(j, PauliString::from_factors(&[(0, axis), (1, axis)]).unwrap());
    }
    h
}

/// Two TLSs (sites 0, 1) sharing a two-level mode (site 2).
///
/// `H = (ω₀/2)Z₀ + (ω₁/2)Z₁ + (ω_b/2)Z_b + g(Z₀X_b + Z₁X_b)`.
pub fn build_spin_boson(omega0: f64, omega1: f64, omega_b: f64, g: f64) -> OperatorSum {
    let mut h = OperatorSum::zero(3);
    h.add_term(0.5 * omega0, PauliString::single(0, Axis::Z));
    h.add_term(0.5 * omega1, PauliString::single(1, Axis::Z));
    h.add_term(0.5 * omega_b, PauliString::single(2, Axis::Z));
    h.add_term(g, PauliString::from_factors(&[(0, Axis::Z), (2, Axis::X)]).unwrap());
    h.add_term(g, PauliString::from_factors(&[(1, Axis::Z), (2, Axis::X)]).unwrap());
    h
}

fn default_axis() -> Axis {
    Axis::X
}

/// Pump generator description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PumpSpec {
    /// `Σ_{i ∈ sites} σ^axis_i`.
    LocalPauli {
        sites: Vec<usize>,
        #[serde(default = "default_axis")]
        axis: Axis,
    },
    /// `Σ_i cos(k i) σ^axis_i` with `k = 2πm/N`, or an explicit wavevector `k`.
    CosineProfile {
        #[serde(default)]
        m: Option<i64>,
        #[serde(default)]
        k: Option<f64>,
        #[serde(default = "default_axis")]
        axis: Axis,
    },
    /// `Σ_i f_i σ^axis_i` with explicit weights.
    Profile {
        weights: Vec<f64>,
        #[serde(default = "default_axis")]
        axis: Axis,
    },
    /// A single Pauli string such as `"X0 Z1 Z2"`.
    PauliString { string: String },
}

impl PumpSpec {
    pub fn local(site: usize, axis: Axis) -> Self {
        PumpSpec::LocalPauli { sites: vec![site], axis }
    }

    pub fn cosine(m: i64) -> Self {
        PumpSpec::CosineProfile { m: Some(m), k: None, axis: Axis::X }
    }

    /// Site weights `f_i` for profile-type pumps.
    pub fn weights(&self, n: usize) -> Result<Vec<f64>> {
        match self {
            PumpSpec::LocalPauli { sites, .. } => {
                let mut w = vec![0.0; n];
                for &s in sites {
                    if s >= n {
                        return Err(invalid(format!("pump site {s} outside {n} sites")));
                    }
                    w[s] += 1.0;
                }
                Ok(w)
            }
            PumpSpec::CosineProfile { m, k, .. } => match (m, k) {
                (Some(m), None) => Ok((0..n).map(|i| (2.0 * PI * (m * i as i64) as f64 / n as f64).cos()).collect()),
                (None, Some(k)) => Ok((0..n).map(|i| (k * i as f64).cos()).collect()),
                _ => Err(Error::Config("cosine_profile needs exactly one of \"m\" or \"k\"".into())),
            },
            PumpSpec::Profile { weights, .. } => {
                if weights.len() != n || weights.iter().any(|w| !w.is_finite()) {
                    return Err(Error::Config(format!("profile needs {n} finite weights")));
                }
                Ok(weights.clone())
            }
            PumpSpec::PauliString { .. } => Err(invalid("Pauli-string pumps have no site profile")),
        }
    }
}

pub fn build_pump(spec: &PumpSpec, n: usize) -> Result<OperatorSum> {
    match spec {
        PumpSpec::PauliString { string } => {
            let p: PauliString = string.parse()?;
            OperatorSum::from_terms(n, [(1.0, p)])
        }
        PumpSpec::LocalPauli { axis, .. } | PumpSpec::CosineProfile { axis, .. } | PumpSpec::Profile { axis, .. } => {
            let w = spec.weights(n)?;
            OperatorSum::from_terms(n, w.iter().enumerate().map(|(i, &f)| (f, PauliString::single(i, *axis))))
        }
    }
}

/// Ground state of `h`.
///
/// Commuting Pauli Hamiltonians (stabilizer models) use projection of the first basis
/// state with nonzero overlap onto the energy-minimising joint eigenspace; `|0…0⟩`
/// is tried first. Other models use the lowest eigenvector with the tie-break of
/// [`crate::operators::Eigensystem::lowest`]. The global phase is fixed by
/// [`StateVector::canonical_phase`].
pub fn ground_state(h: &OperatorSum) -> Result<StateVector> {
    dense_cap(h.n_sites())?;
    if h.terms_commute() {
        if let Some(psi) = stabilizer_ground_state(h)? {
            return Ok(psi);
        }
    }
    Ok(eigendecompose(h)?.lowest().canonical_phase())
}

fn stabilizer_ground_state(h: &OperatorSum) -> Result<Option<StateVector>> {
    let n = h.n_sites();
    let targets: Vec<(OperatorSum, f64)> = h
        .terms()
        .iter()
        .filter(|t| !t.string.is_identity())
        .map(|t| {
            let p = OperatorSum::from_terms(n, [(1.0, t.string)]).unwrap();
            (p, -t.coefficient.signum())
        })
        .collect();
    let diag: Vec<(u64, f64)> = h
        .terms()
        .iter()
        .filter(|t| t.string.x_mask() == 0 && !t.string.is_identity())
        .map(|t| (t.string.z_mask(), -t.coefficient.signum()))
        .collect();
    for b in 0..h.dim() {
        let ok = diag.iter().all(|&(z, s)| {
            let ev = if ((b as u64) & z).count_ones().is_multiple_of(2) { 1.0 } else { -1.0 };
            ev == s
        });
        if !ok {
            continue;
        }
        let mut psi = StateVector::basis(n, b);
        for (p, s) in &targets {
            let pp = apply_operator(p, &psi)?;
            psi = psi.combine(Complex64::new(0.5, 0.0), &pp, Complex64::new(0.5 * s, 0.0));
        }
        if psi.norm() > 1e-6 {
            return Ok(Some(StateVector::from_amplitudes(n, psi.into_amplitudes())?.canonical_phase()));
        }
    }
    Ok(None)
}

/// `Z_i + Z_j`.
pub fn two_site_magnetization(n: usize, i: usize, j: usize) -> Result<OperatorSum> {
    OperatorSum::from_terms(n, [(1.0, PauliString::single(i, Axis::Z)), (1.0, PauliString::single(j, Axis::Z))])
}

/// Spin current on bond `(i, j)` for the given component.
///
/// `J^x = Y_iZ_j − Z_iY_j`, `J^y = Z_iX_j − X_iZ_j`, `J^z = X_iY_j − Y_iX_j`.
pub fn spin_current(n: usize, i: usize, j: usize, component: Axis) -> Result<OperatorSum> {
    let (a, b) = match component {
        Axis::X => (Axis::Y, Axis::Z),
        Axis::Y => (Axis::Z, Axis::X),
        Axis::Z => (Axis::X, Axis::Y),
    };
    OperatorSum::from_terms(
        n,
        [(1.0, PauliString::from_factors(&[(i, a), (j, b)])?), (-1.0, PauliString::from_factors(&[(i, b), (j, a)])?)],
    )
}

/// `M^α = −(1/N) Σ_j σ^α_j`.
pub fn magnetization(n: usize, axis: Axis) -> Result<OperatorSum> {
    OperatorSum::from_terms(n, (0..n).map(|j| (-1.0 / n as f64, PauliString::single(j, axis))))
}

/// `σ^α_i σ^β_j ⋯` for distinct sites.
pub fn correlation(n: usize, factors: &[(usize, Axis)]) -> Result<OperatorSum> {
    OperatorSum::from_terms(n, [(1.0, PauliString::from_factors(factors)?)])
}
