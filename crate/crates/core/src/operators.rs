//! Pauli-string operators, state vectors and dense linear algebra helpers.
//!
//! Site 0 is the least-significant bit of a basis index. Operators are kept in a
//! canonical form: real coefficients on distinct Pauli strings, with duplicates
//! merged and coefficients below [`PRUNE_TOL`] dropped.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Largest register (in sites) for which dense matrices are built.
pub const DENSE_CAP_SITES: usize = 12;

/// Coefficients with smaller magnitude are removed from an [`OperatorSum`].
pub const PRUNE_TOL: f64 = 1e-14;

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    fn bits(self) -> (bool, bool) {
        match self {
            Axis::X => (true, false),
            Axis::Y => (true, true),
            Axis::Z => (false, true),
        }
    }
}

impl FromStr for Axis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "X" | "x" => Ok(Axis::X),
            "Y" | "y" => Ok(Axis::Y),
            "Z" | "z" => Ok(Axis::Z),
            _ => Err(invalid(format!("unknown Pauli axis {s:?}"))),
        }
    }
}

/// A tensor product of single-site Paulis stored as flip (`x`) and phase (`z`) masks.
///
/// A site with both bits set carries `Y`; the string acts as
/// `P|b⟩ = i^{#Y} (−1)^{|b ∧ z|} |b ⊕ x⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct PauliString {
    x: u64,
    z: u64,
}

impl PauliString {
    pub const IDENTITY: PauliString = PauliString { x: 0, z: 0 };

    pub fn single(site: usize, axis: Axis) -> Self {
        Self::from_factors(&[(site, axis)]).expect("single site is always valid")
    }

    pub fn from_factors(factors: &[(usize, Axis)]) -> Result<Self> {
        let mut p = PauliString::IDENTITY;
        for &(site, axis) in factors {
            if site >= 64 {
                return Err(invalid(format!("site {site} out of range")));
            }
            let bit = 1u64 << site;
            if (p.x | p.z) & bit != 0 {
                return Err(invalid(format!("site {site} appears twice in a Pauli string")));
            }
            let (fx, fz) = axis.bits();
            if fx {
                p.x |= bit;
            }
            if fz {
                p.z |= bit;
            }
        }
        Ok(p)
    }

    pub fn x_mask(&self) -> u64 {
        self.x
    }

    pub fn z_mask(&self) -> u64 {
        self.z
    }

    pub fn support(&self) -> u64 {
        self.x | self.z
    }

    pub fn weight(&self) -> u32 {
        self.support().count_ones()
    }

    pub fn is_identity(&self) -> bool {
        self.support() == 0
    }

    fn n_y(&self) -> u32 {
        (self.x & self.z).count_ones()
    }

    /// Site → axis map in ascending site order.
    pub fn factors(&self) -> Vec<(usize, Axis)> {
        let mut out = Vec::new();
        let mut s = self.support();
        while s != 0 {
            let site = s.trailing_zeros() as usize;
            let bit = 1u64 << site;
            let axis = match (self.x & bit != 0, self.z & bit != 0) {
                (true, false) => Axis::X,
                (true, true) => Axis::Y,
                _ => Axis::Z,
            };
            out.push((site, axis));
            s &= s - 1;
        }
        out
    }

    pub fn commutes_with(&self, other: &PauliString) -> bool {
        ((self.x & other.z).count_ones() + (self.z & other.x).count_ones()).is_multiple_of(2)
    }

    /// `self · other = phase · result`.
    pub fn mul(&self, other: &PauliString) -> (Complex64, PauliString) {
        let res = PauliString { x: self.x ^ other.x, z: self.z ^ other.z };
        let power = (self.n_y() + other.n_y() + 2 * (self.z & other.x).count_ones()) as i64 - res.n_y() as i64;
        (i_pow(power), res)
    }

    /// Amplitude picked up by basis state `b` (the image is `b ^ x_mask`).
    #[inline]
    pub fn phase(&self, b: usize) -> Complex64 {
        let sign = if ((b as u64) & self.z).count_ones().is_multiple_of(2) { 1.0 } else { -1.0 };
        i_pow(self.n_y() as i64) * sign
    }

    /// Relabel sites through `map[old] = new`.
    fn remap(&self, map: &[usize]) -> PauliString {
        let mut out = PauliString::IDENTITY;
        for (site, axis) in self.factors() {
            let bit = 1u64 << map[site];
            let (fx, fz) = axis.bits();
            if fx {
                out.x |= bit;
            }
            if fz {
                out.z |= bit;
            }
        }
        out
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_identity() {
            return write!(f, "I");
        }
        let parts: Vec<String> = self.factors().into_iter().map(|(s, a)| format!("{a:?}{s}")).collect();
        write!(f, "{}", parts.join(" "))
    }
}

impl FromStr for PauliString {
    type Err = Error;

    /// Parses strings such as `"X3 Y4"`, `"X3Y4"` or `"I"`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "I" || s.is_empty() {
            return Ok(PauliString::IDENTITY);
        }
        let mut factors = Vec::new();
        let chars: Vec<char> = s.chars().filter(|c| !c.is_whitespace() && *c != '*').collect();
        let mut i = 0;
        while i < chars.len() {
            let axis = Axis::from_str(&chars[i].to_string())?;
            i += 1;
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            if start == i {
                return Err(invalid(format!("missing site index in Pauli string {s:?}")));
            }
            let site: usize = chars[start..i].iter().collect::<String>().parse().unwrap();
            factors.push((site, axis));
        }
        PauliString::from_factors(&factors)
    }
}

fn i_pow(k: i64) -> Complex64 {
    match k.rem_euclid(4) {
        0 => Complex64::new(1.0, 0.0),
        1 => I,
        2 => Complex64::new(-1.0, 0.0),
        _ => -I,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PauliTerm {
    pub coefficient: f64,
    pub string: PauliString,
}

/// Hermitian operator `Σ_j c_j P_j` with real `c_j`.
///
/// Term order is the order of first insertion; Trotter products follow it.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorSum {
    n_sites: usize,
    terms: Vec<PauliTerm>,
}

impl OperatorSum {
    pub fn zero(n_sites: usize) -> Self {
        assert!((1..=63).contains(&n_sites), "register size {n_sites} unsupported");
        OperatorSum { n_sites, terms: Vec::new() }
    }

    pub fn identity(n_sites: usize) -> Self {
        let mut op = Self::zero(n_sites);
        op.add_term(1.0, PauliString::IDENTITY);
        op
    }

    /// `coefficient · P` for a single Pauli on one site.
    pub fn single(n_sites: usize, site: usize, axis: Axis, coefficient: f64) -> Self {
        let mut op = Self::zero(n_sites);
        op.add_term(coefficient, PauliString::single(site, axis));
        op
    }

    pub fn from_terms(n_sites: usize, terms: impl IntoIterator<Item = (f64, PauliString)>) -> Result<Self> {
        let mut op = Self::zero(n_sites);
        for (c, p) in terms {
            if !c.is_finite() {
                return Err(invalid("non-finite coefficient"));
            }
            if p.support() >> n_sites != 0 {
                return Err(invalid(format!("Pauli string {p} exceeds {n_sites} sites")));
            }
            op.add_term(c, p);
        }
        Ok(op)
    }

    /// Adds `c · p`, merging with an existing identical string.
    pub fn add_term(&mut self, c: f64, p: PauliString) {
        assert!(p.support() >> self.n_sites == 0, "Pauli string {p} exceeds register");
        if let Some(t) = self.terms.iter_mut().find(|t| t.string == p) {
            t.coefficient += c;
        } else {
            self.terms.push(PauliTerm { coefficient: c, string: p });
        }
        self.terms.retain(|t| t.coefficient.abs() >= PRUNE_TOL);
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn dim(&self) -> usize {
        1usize << self.n_sites
    }

    pub fn terms(&self) -> &[PauliTerm] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn support(&self) -> u64 {
        self.terms.iter().fold(0, |acc, t| acc | t.string.support())
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = Self::zero(self.n_sites);
        for t in &self.terms {
            out.add_term(s * t.coefficient, t.string);
        }
        out
    }

    pub fn plus(&self, other: &OperatorSum) -> Result<Self> {
        check_sites(self.n_sites, other.n_sites)?;
        let mut out = self.clone();
        for t in &other.terms {
            out.add_term(t.coefficient, t.string);
        }
        Ok(out)
    }

    /// Canonical equality up to term order and `tol` in coefficients.
    pub fn approx_eq(&self, other: &OperatorSum, tol: f64) -> bool {
        if self.n_sites != other.n_sites {
            return false;
        }
        let diff = self.plus(&other.scaled(-1.0)).unwrap();
        diff.terms.iter().all(|t| t.coefficient.abs() <= tol)
    }

    /// Returns `Σ |coefficient|` of `[self, other]` viewed as `i · (Hermitian)`.
    pub fn commutator_norm(&self, other: &OperatorSum) -> f64 {
        let mut acc: HashMap<PauliString, Complex64> = HashMap::new();
        for a in &self.terms {
            for b in &other.terms {
                if !a.string.commutes_with(&b.string) {
                    let (ph, p) = a.string.mul(&b.string);
                    *acc.entry(p).or_default() += 2.0 * a.coefficient * b.coefficient * ph;
                }
            }
        }
        acc.values().map(|c| c.norm()).filter(|c| *c > PRUNE_TOL).sum()
    }

    pub fn commutes_with(&self, other: &OperatorSum) -> bool {
        self.commutator_norm(other) < 1e-12
    }

    /// Every pair of terms commutes.
    pub fn terms_commute(&self) -> bool {
        self.terms.iter().enumerate().all(|(i, a)| self.terms[i + 1..].iter().all(|b| a.string.commutes_with(&b.string)))
    }

    /// Dense matrix; only available up to [`DENSE_CAP_SITES`].
    pub fn to_dense(&self) -> Result<DMatrix<Complex64>> {
        dense_cap(self.n_sites)?;
        let dim = self.dim();
        let mut m = DMatrix::<Complex64>::zeros(dim, dim);
        for t in &self.terms {
            let x = t.string.x as usize;
            for b in 0..dim {
                m[(b ^ x, b)] += t.coefficient * t.string.phase(b);
            }
        }
        Ok(m)
    }

    /// Splits into groups of terms with disjoint supports.
    ///
    /// Each group is returned with its support sites (ascending) and the group operator
    /// relabelled onto those sites. Groups with disjoint supports commute, so
    /// `e^{−iηB}` factorises over them.
    pub fn support_clusters(&self) -> Vec<(Vec<usize>, OperatorSum)> {
        let n = self.n_sites;
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], i: usize) -> usize {
            let mut r = i;
            while p[r] != r {
                r = p[r];
            }
            let mut j = i;
            while p[j] != r {
                let next = p[j];
                p[j] = r;
                j = next;
            }
            r
        }
        for t in &self.terms {
            let sites: Vec<usize> = t.string.factors().iter().map(|f| f.0).collect();
            for w in sites.windows(2) {
                let (a, b) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
        let support = self.support();
        let mut roots: Vec<usize> = Vec::new();
        let mut members: HashMap<usize, Vec<usize>> = HashMap::new();
        for s in 0..n {
            if support & (1 << s) == 0 {
                continue;
            }
            let r = find(&mut parent, s);
            if !members.contains_key(&r) {
                roots.push(r);
            }
            members.entry(r).or_default().push(s);
        }
        roots
            .into_iter()
            .map(|r| {
                let sites = members.remove(&r).unwrap();
                let mut map = vec![usize::MAX; n];
                for (k, &s) in sites.iter().enumerate() {
                    map[s] = k;
                }
                let mut op = OperatorSum::zero(sites.len());
                for t in &self.terms {
                    if t.string.support() != 0 && sites.contains(&(t.string.support().trailing_zeros() as usize)) {
                        op.add_term(t.coefficient, t.string.remap(&map));
                    }
                }
                (sites, op)
            })
            .collect()
    }

    /// Coefficient of the identity string.
    pub fn identity_part(&self) -> f64 {
        self.terms.iter().filter(|t| t.string.is_identity()).map(|t| t.coefficient).sum()
    }
}

impl fmt::Display for OperatorSum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self.terms.iter().map(|t| format!("{:+} {}", t.coefficient, t.string)).collect();
        write!(f, "{}", parts.join(" "))
    }
}

pub(crate) fn check_sites(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::SiteMismatch { expected, found });
    }
    Ok(())
}

pub fn dense_cap(sites: usize) -> Result<()> {
    if sites > DENSE_CAP_SITES {
        return Err(Error::DenseCap { sites, cap: DENSE_CAP_SITES });
    }
    Ok(())
}

/// Pure state on `n_sites` qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_sites: usize,
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    /// Computational basis state `|index⟩`.
    pub fn basis(n_sites: usize, index: usize) -> Self {
        let dim = 1usize << n_sites;
        assert!(index < dim, "basis index {index} out of range");
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); dim];
        amplitudes[index] = Complex64::new(1.0, 0.0);
        StateVector { n_sites, amplitudes }
    }

    /// Normalises the given amplitudes.
    pub fn from_amplitudes(n_sites: usize, amplitudes: Vec<Complex64>) -> Result<Self> {
        let mut s = Self::from_raw(n_sites, amplitudes)?;
        let n = s.norm();
        if n < 1e-300 || !n.is_finite() {
            return Err(invalid("state has zero or non-finite norm"));
        }
        s.scale(Complex64::new(1.0 / n, 0.0));
        Ok(s)
    }

    /// Wraps amplitudes without normalising (results of `apply_operator`).
    pub fn from_raw(n_sites: usize, amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.len() != 1usize << n_sites {
            return Err(invalid(format!("{} amplitudes do not match {} sites", amplitudes.len(), n_sites)));
        }
        Ok(StateVector { n_sites, amplitudes })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, s: Complex64) {
        for a in &mut self.amplitudes {
            *a *= s;
        }
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> Complex64 {
        self.amplitudes.iter().zip(&other.amplitudes).map(|(a, b)| a.conj() * b).sum()
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: Complex64, other: &StateVector, b: Complex64) -> StateVector {
        let amplitudes = self.amplitudes.iter().zip(&other.amplitudes).map(|(x, y)| a * x + b * y).collect();
        StateVector { n_sites: self.n_sites, amplitudes }
    }

    /// Largest elementwise distance.
    pub fn max_diff(&self, other: &StateVector) -> f64 {
        self.amplitudes.iter().zip(&other.amplitudes).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    /// Fixes the global phase: the first amplitude of largest magnitude becomes real positive.
    pub fn canonical_phase(mut self) -> StateVector {
        let mut best = 0;
        let mut best_mag = 0.0;
        for (i, a) in self.amplitudes.iter().enumerate() {
            if a.norm() > best_mag + 1e-9 {
                best = i;
                best_mag = a.norm();
            }
        }
        if best_mag > 0.0 {
            let ph = self.amplitudes[best].conj() / best_mag;
            self.scale(ph);
        }
        self
    }
}

/// `op·|ψ⟩` without forming a matrix.
pub fn apply_operator(op: &OperatorSum, state: &StateVector) -> Result<StateVector> {
    check_sites(op.n_sites, state.n_sites)?;
    let dim = state.dim();
    let psi = &state.amplitudes;
    let mut out = vec![Complex64::new(0.0, 0.0); dim];
    for t in &op.terms {
        let x = t.string.x as usize;
        let z = t.string.z;
        let base = i_pow(t.string.n_y() as i64) * t.coefficient;
        let neg = -base;
        for b in 0..dim {
            let amp = if ((b as u64) & z).count_ones().is_multiple_of(2) { base } else { neg };
            out[b ^ x] += amp * psi[b];
        }
    }
    Ok(StateVector { n_sites: state.n_sites, amplitudes: out })
}

/// `e^{−iθP}|ψ⟩` in place for a single Pauli string.
pub fn apply_pauli_rotation(p: &PauliString, theta: f64, state: &mut StateVector) {
    let (s, c) = theta.sin_cos();
    let x = p.x as usize;
    let z = p.z;
    let psi = &mut state.amplitudes;
    if x == 0 {
        let plus = Complex64::new(c, -s);
        let minus = Complex64::new(c, s);
        for (b, a) in psi.iter_mut().enumerate() {
            *a *= if ((b as u64) & z).count_ones().is_multiple_of(2) { plus } else { minus };
        }
        return;
    }
    let base = i_pow(p.n_y() as i64);
    let mis = Complex64::new(0.0, -s);
    for b in 0..psi.len() {
        let b2 = b ^ x;
        if b2 < b {
            continue;
        }
        let ph_b = if ((b as u64) & z).count_ones().is_multiple_of(2) { base } else { -base };
        let ph_b2 = if ((b2 as u64) & z).count_ones().is_multiple_of(2) { base } else { -base };
        let (u, v) = (psi[b], psi[b2]);
        psi[b] = c * u + mis * ph_b2 * v;
        psi[b2] = c * v + mis * ph_b * u;
    }
}

/// `⟨ψ|op|ψ⟩`, checked to be real.
pub fn expectation(op: &OperatorSum, state: &StateVector) -> Result<f64> {
    let v = expectation_complex(op, state)?;
    if v.im.abs() > 1e-10 {
        return Err(Error::NotHermitian { imag: v.im });
    }
    Ok(v.re)
}

/// Expectation of each Pauli term (not weighted by coefficients).
pub fn term_expectations(op: &OperatorSum, state: &StateVector) -> Result<Vec<f64>> {
    check_sites(op.n_sites, state.n_sites)?;
    Ok(op.terms.iter().map(|t| pauli_expectation(&t.string, state).re).collect())
}

fn pauli_expectation(p: &PauliString, state: &StateVector) -> Complex64 {
    let x = p.x as usize;
    let base = i_pow(p.n_y() as i64);
    let psi = &state.amplitudes;
    let mut acc = Complex64::new(0.0, 0.0);
    for (b, a) in psi.iter().enumerate() {
        let v = psi[b ^ x].conj() * a;
        if ((b as u64) & p.z).count_ones().is_multiple_of(2) {
            acc += v;
        } else {
            acc -= v;
        }
    }
    acc * base
}

fn expectation_complex(op: &OperatorSum, state: &StateVector) -> Result<Complex64> {
    check_sites(op.n_sites, state.n_sites)?;
    Ok(op.terms.iter().map(|t| pauli_expectation(&t.string, state) * t.coefficient).sum())
}

/// `⟨ψ|O_1 O_2 ⋯ O_k|ψ⟩`; the rightmost operator acts first. Empty product gives `⟨ψ|ψ⟩`.
pub fn complex_matrix_element(product: &[&OperatorSum], state: &StateVector) -> Result<Complex64> {
    let mut v = state.clone();
    for op in product.iter().rev() {
        v = apply_operator(op, &v)?;
    }
    Ok(state.inner(&v))
}

#[derive(Debug, Clone)]
enum BlockVectors {
    Real(DMatrix<f64>),
    Complex(DMatrix<Complex64>),
}

#[derive(Debug, Clone)]
struct EigenBlock {
    indices: Vec<usize>,
    values: Vec<f64>,
    vectors: BlockVectors,
}

/// Spectral decomposition stored per invariant block of basis states.
///
/// Blocks are the connected components of the operator's matrix graph, so
/// symmetry sectors (for example fixed total `Z`) are diagonalised separately.
#[derive(Debug, Clone)]
pub struct Eigensystem {
    n_sites: usize,
    blocks: Vec<EigenBlock>,
    order: Vec<(usize, usize)>,
}

/// Full spectral decomposition of `op` (block-diagonal where possible).
pub fn eigendecompose(op: &OperatorSum) -> Result<Eigensystem> {
    dense_cap(op.n_sites)?;
    let dim = op.dim();

    let mut groups: Vec<(usize, Vec<(u64, Complex64)>)> = Vec::new();
    for t in &op.terms {
        let x = t.string.x as usize;
        let entry = (t.string.z, i_pow(t.string.n_y() as i64) * t.coefficient);
        match groups.iter_mut().find(|g| g.0 == x) {
            Some(g) => g.1.push(entry),
            None => groups.push((x, vec![entry])),
        }
    }

    let mut parent: Vec<usize> = (0..dim).collect();
    fn find(p: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while p[r] != r {
            r = p[r];
        }
        let mut j = i;
        while p[j] != r {
            let next = p[j];
            p[j] = r;
            j = next;
        }
        r
    }
    let mut entries: Vec<(usize, usize, Complex64)> = Vec::new();
    for b in 0..dim {
        for (x, terms) in &groups {
            let amp: Complex64 = terms.iter().map(|(z, c)| if ((b as u64) & z).count_ones().is_multiple_of(2) { *c } else { -*c }).sum();
            if amp.norm() < PRUNE_TOL {
                continue;
            }
            let row = b ^ x;
            entries.push((row, b, amp));
            if row != b {
                let (ra, rb) = (find(&mut parent, row), find(&mut parent, b));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
    }

    let mut block_of = vec![usize::MAX; dim];
    let mut local = vec![0usize; dim];
    let mut members: Vec<Vec<usize>> = Vec::new();
    let mut root_block: HashMap<usize, usize> = HashMap::new();
    for b in 0..dim {
        let r = find(&mut parent, b);
        let k = *root_block.entry(r).or_insert_with(|| {
            members.push(Vec::new());
            members.len() - 1
        });
        block_of[b] = k;
        local[b] = members[k].len();
        members[k].push(b);
    }

    let mut mats: Vec<DMatrix<Complex64>> = members.iter().map(|m| DMatrix::zeros(m.len(), m.len())).collect();
    for (row, col, amp) in entries {
        let k = block_of[col];
        mats[k][(local[row], local[col])] += amp;
    }

    let blocks: Vec<EigenBlock> = members.into_iter().zip(mats).map(|(indices, m)| diagonalize_block(indices, m)).collect();

    let mut order: Vec<(usize, usize)> = blocks.iter().enumerate().flat_map(|(k, b)| (0..b.values.len()).map(move |j| (k, j))).collect();
    order.sort_by(|a, b| blocks[a.0].values[a.1].partial_cmp(&blocks[b.0].values[b.1]).unwrap().then(a.cmp(b)));
    Ok(Eigensystem { n_sites: op.n_sites, blocks, order })
}

fn diagonalize_block(indices: Vec<usize>, m: DMatrix<Complex64>) -> EigenBlock {
    let is_real = m.iter().all(|c| c.im.abs() < PRUNE_TOL);
    let n = m.nrows();
    if is_real {
        let re = DMatrix::from_fn(n, n, |i, j| 0.5 * (m[(i, j)].re + m[(j, i)].re));
        let eig = re.symmetric_eigen();
        let perm = ascending(eig.eigenvalues.as_slice());
        let values = perm.iter().map(|&p| eig.eigenvalues[p]).collect();
        let vectors = DMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, perm[j])]);
        EigenBlock { indices, values, vectors: BlockVectors::Real(vectors) }
    } else {
        let h = DMatrix::from_fn(n, n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)].conj()));
        let eig = h.symmetric_eigen();
        let perm = ascending(eig.eigenvalues.as_slice());
        let values = perm.iter().map(|&p| eig.eigenvalues[p]).collect();
        let vectors = DMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, perm[j])]);
        EigenBlock { indices, values, vectors: BlockVectors::Complex(vectors) }
    }
}

fn ascending(v: &[f64]) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..v.len()).collect();
    perm.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap().then(a.cmp(&b)));
    perm
}

impl Eigensystem {
    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn dim(&self) -> usize {
        1usize << self.n_sites
    }

    /// All eigenvalues in ascending order.
    pub fn values(&self) -> Vec<f64> {
        self.order.iter().map(|&(k, j)| self.blocks[k].values[j]).collect()
    }

    /// Sizes of the invariant blocks, in order of their smallest basis index.
    pub fn block_sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.indices.len()).collect()
    }

    /// Eigenvector for position `i` of [`Eigensystem::values`].
    pub fn vector(&self, i: usize) -> StateVector {
        let (k, j) = self.order[i];
        let block = &self.blocks[k];
        let mut amps = vec![Complex64::new(0.0, 0.0); self.dim()];
        for (r, &b) in block.indices.iter().enumerate() {
            amps[b] = match &block.vectors {
                BlockVectors::Real(v) => Complex64::new(v[(r, j)], 0.0),
                BlockVectors::Complex(v) => v[(r, j)],
            };
        }
        StateVector { n_sites: self.n_sites, amplitudes: amps }
    }

    /// Lowest eigenvector under the tie-break: lowest eigenvalue, then the block holding
    /// the smallest basis index, then the solver's first column.
    pub fn lowest(&self) -> StateVector {
        let e0 = self.blocks[self.order[0].0].values[self.order[0].1];
        let tol = 1e-10 * (1.0 + e0.abs());
        let (k, _) = self.blocks.iter().enumerate().find(|(_, b)| b.values[0] <= e0 + tol).unwrap();
        let i = self.order.iter().position(|&(bk, j)| bk == k && j == 0).unwrap();
        self.vector(i)
    }

    /// Columns of the unitary `V`, ordered as [`Eigensystem::values`].
    pub fn dense_vectors(&self) -> DMatrix<Complex64> {
        let dim = self.dim();
        let mut v = DMatrix::<Complex64>::zeros(dim, dim);
        for (col, &(k, j)) in self.order.iter().enumerate() {
            let block = &self.blocks[k];
            for (r, &b) in block.indices.iter().enumerate() {
                v[(b, col)] = match &block.vectors {
                    BlockVectors::Real(m) => Complex64::new(m[(r, j)], 0.0),
                    BlockVectors::Complex(m) => m[(r, j)],
                };
            }
        }
        v
    }

    /// `V diag(f(λ)) V†` as a dense matrix.
    pub fn dense_function(&self, f: impl Fn(f64) -> Complex64) -> DMatrix<Complex64> {
        let v = self.dense_vectors();
        let d: Vec<Complex64> = self.values().into_iter().map(f).collect();
        let vd = DMatrix::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)] * d[j]);
        vd * v.adjoint()
    }

    /// `f(op)|ψ⟩` computed block by block.
    pub fn apply_function(&self, state: &StateVector, f: impl Fn(f64) -> Complex64) -> StateVector {
        let mut out = vec![Complex64::new(0.0, 0.0); self.dim()];
        let psi = state.amplitudes();
        for block in &self.blocks {
            let n = block.indices.len();
            match &block.vectors {
                BlockVectors::Real(v) => {
                    let re = DVector::from_iterator(n, block.indices.iter().map(|&b| psi[b].re));
                    let im = DVector::from_iterator(n, block.indices.iter().map(|&b| psi[b].im));
                    let cr = v.tr_mul(&re);
                    let ci = v.tr_mul(&im);
                    let mut yr = DVector::zeros(n);
                    let mut yi = DVector::zeros(n);
                    for k in 0..n {
                        let z = Complex64::new(cr[k], ci[k]) * f(block.values[k]);
                        yr[k] = z.re;
                        yi[k] = z.im;
                    }
                    let xr = v * yr;
                    let xi = v * yi;
                    for (r, &b) in block.indices.iter().enumerate() {
                        out[b] = Complex64::new(xr[r], xi[r]);
                    }
                }
                BlockVectors::Complex(v) => {
                    let x = DVector::from_iterator(n, block.indices.iter().map(|&b| psi[b]));
                    let mut c = v.ad_mul(&x);
                    for k in 0..n {
                        c[k] *= f(block.values[k]);
                    }
                    let y = v * c;
                    for (r, &b) in block.indices.iter().enumerate() {
                        out[b] = y[r];
                    }
                }
            }
        }
        StateVector { n_sites: self.n_sites, amplitudes: out }
    }
}

/// Reduced density matrix of the sites `start .. start + len`.
pub fn partial_trace(state: &StateVector, start: usize, len: usize) -> Result<DMatrix<Complex64>> {
    let n = state.n_sites;
    if len == 0 || start + len > n {
        return Err(invalid(format!("block {start}..{} outside {n} sites", start + len)));
    }
    let keep_dim = 1usize << len;
    let rest_dim = 1usize << (n - len);
    let low_mask = (1usize << start) - 1;
    let mut m = DMatrix::<Complex64>::zeros(keep_dim, rest_dim);
    for (b, a) in state.amplitudes.iter().enumerate() {
        let i = (b >> start) & (keep_dim - 1);
        let r = (b & low_mask) | ((b >> (start + len)) << start);
        m[(i, r)] = *a;
    }
    Ok(&m * m.adjoint())
}

/// Reduced density matrix of an explicit site list, which must be contiguous.
pub fn partial_trace_sites(state: &StateVector, sites: &[usize]) -> Result<DMatrix<Complex64>> {
    let mut s = sites.to_vec();
    s.sort_unstable();
    s.dedup();
    if s.is_empty() || s.len() != sites.len() || s.windows(2).any(|w| w[1] != w[0] + 1) {
        return Err(invalid(format!("sites {sites:?} do not form a contiguous block")));
    }
    partial_trace(state, s[0], s.len())
}
