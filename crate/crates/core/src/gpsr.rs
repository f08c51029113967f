//! Generalized parameter-shift rules.
//!
//! A driven signal `F(η) = ⟨A(t)⟩_η` is a finite Fourier series whose frequencies are the
//! spectral differences of the pump generator. Sampling `F` at a handful of shifts and
//! taking a fixed linear combination therefore returns any derivative `F^(r)(0)` exactly:
//!
//! ```text
//! Σ_p c_p^(r) e^{iωs_p} = (iω)^r   for every gap ω
//! ```
//!
//! Multi-channel responses use the tensor product of single-channel rules.

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::evolution::{dedup_sorted, sumset, Dynamics, KickGenerator};
use crate::operators::OperatorSum;

pub const GAP_TOL: f64 = 1e-9;
pub const CONDITION_THRESHOLD: f64 = 1e8;
const MAX_UNIT_DENOMINATOR: usize = 64;
const MAX_HARMONIC: f64 = 4096.0;

/// Signed spectral differences of a generator, including 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapSet {
    gaps: Vec<f64>,
    unit: Option<f64>,
    tol: f64,
}

impl GapSet {
    /// Gap set of an explicit list of eigenvalues.
    pub fn from_spectrum(eigenvalues: &[f64], tol: f64) -> Self {
        let mut ev = eigenvalues.to_vec();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let ev = dedup_sorted(ev, tol);
        Self::from_differences(differences(&ev), tol)
    }

    fn from_differences(mut gaps: Vec<f64>, tol: f64) -> Self {
        gaps.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut gaps = dedup_sorted(gaps, tol);
        let n = gaps.len();
        for k in 0..n / 2 {
            let m = 0.5 * (gaps[n - 1 - k] - gaps[k]);
            gaps[k] = -m;
            gaps[n - 1 - k] = m;
        }
        if n % 2 == 1 {
            gaps[n / 2] = 0.0;
        }
        let unit = detect_unit(&gaps, tol);
        GapSet { gaps, unit, tol }
    }

    pub fn gaps(&self) -> &[f64] {
        &self.gaps
    }

    /// Greatest common scale `g` with every gap an integer multiple of `g`.
    pub fn unit(&self) -> Option<f64> {
        self.unit
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn len(&self) -> usize {
        self.gaps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaps.is_empty()
    }

    /// Distinct positive differences.
    pub fn positive(&self) -> Vec<f64> {
        self.gaps.iter().copied().filter(|&w| w > self.tol).collect()
    }

    pub fn max_gap(&self) -> f64 {
        self.gaps.last().copied().unwrap_or(0.0)
    }

    /// Largest harmonic `ω_max / g` of a commensurate set.
    pub fn max_harmonic(&self) -> Option<usize> {
        self.unit.map(|g| (self.max_gap() / g).round() as usize)
    }
}

fn differences(ev: &[f64]) -> Vec<f64> {
    ev.iter().flat_map(|a| ev.iter().map(move |b| a - b)).collect()
}

fn detect_unit(gaps: &[f64], tol: f64) -> Option<f64> {
    let pos: Vec<f64> = gaps.iter().copied().filter(|&w| w > tol).collect();
    let Some(&min) = pos.first() else {
        return Some(1.0);
    };
    let max = *pos.last().unwrap();
    (1..=MAX_UNIT_DENOMINATOR).map(|q| min / q as f64).find(|&g| {
        max / g <= MAX_HARMONIC && pos.iter().all(|w| ((w / g) - (w / g).round()).abs() * g <= 10.0 * tol.max(1e-12) * (1.0 + w))
    })
}

/// `Ω = {λ_s − λ_s'}` for the eigenvalues of `B`, merged at `tol`.
pub fn gap_set(b: &OperatorSum, tol: f64) -> Result<GapSet> {
    let kick = KickGenerator::new(b)?;
    Ok(kick_gap_set(&kick, tol))
}

pub(crate) fn kick_gap_set(kick: &KickGenerator, tol: f64) -> GapSet {
    let factor_gaps: Vec<Vec<f64>> = kick
        .factor_spectra(tol)
        .iter()
        .map(|ev| {
            let mut d = differences(ev);
            d.sort_by(|a, b| a.partial_cmp(b).unwrap());
            dedup_sorted(d, tol)
        })
        .collect();
    GapSet::from_differences(sumset(&factor_gaps, tol), tol)
}

/// Default grid of `m` shifts spanning one period `2π/g`, centred at 0.
///
/// The spacing is `(2π/g)/(m+1)`; for a Pauli generator (`g = 2`, `m = 3`) this gives
/// `{−π/4, 0, π/4}`.
pub fn shift_grid(gaps: &GapSet, m: usize) -> Result<Vec<f64>> {
    if m < gaps.len() {
        return Err(invalid(format!("{m} shifts cannot satisfy {} gap constraints", gaps.len())));
    }
    match gaps.unit() {
        Some(g) => {
            let h = 2.0 * PI / g / (m + 1) as f64;
            let mid = (m - 1) as f64 / 2.0;
            Ok((0..m).map(|p| (p as f64 - mid.floor()) * h).collect())
        }
        None => Ok(chebyshev_grid(gaps, m)),
    }
}

fn chebyshev_grid(gaps: &GapSet, m: usize) -> Vec<f64> {
    let half = PI / gaps.max_gap().max(gaps.tol());
    let mut s: Vec<f64> = (0..m).map(|p| -half * ((2 * p + 1) as f64 * PI / (2 * m) as f64).cos()).collect();
    if m % 2 == 1 {
        s[m / 2] = 0.0;
    }
    s
}

/// Symmetric grid `±(2μ−1)π/(2Rg)`, `μ = 1..R`, for antisymmetric odd-order rules.
pub fn odd_shift_grid(gaps: &GapSet) -> Result<Vec<f64>> {
    let g = gaps.unit().ok_or_else(|| invalid("odd-order grid needs a commensurate gap set"))?;
    let r = gaps.positive().len().max(1);
    let pos: Vec<f64> = (1..=r).map(|mu| (2 * mu - 1) as f64 * PI / (2.0 * r as f64 * g)).collect();
    Ok(pos.iter().rev().map(|s| -s).chain(pos.iter().copied()).collect())
}

/// Coefficients `c^(r)` for one derivative order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    pub order: usize,
    pub values: Vec<f64>,
    pub residual: f64,
    pub condition: f64,
    pub norm1: f64,
    pub norm2: f64,
}

impl Coefficients {
    fn new(order: usize, mut values: Vec<f64>, residual: f64, condition: f64) -> Self {
        let big = values.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        for c in values.iter_mut() {
            if c.abs() < 1e-13 * big {
                *c = 0.0;
            }
        }
        let norm1 = values.iter().map(|c| c.abs()).sum();
        let norm2 = values.iter().map(|c| c * c).sum::<f64>().sqrt();
        Coefficients { order, values, residual, condition, norm1, norm2 }
    }
}

fn rhs(omega: f64, order: usize) -> Complex64 {
    Complex64::new(0.0, omega).powu(order as u32)
}

/// Solves `Σ_p c_p e^{iωs_p} = (iω)^r` over the gap set for real `c`.
///
/// The gap set is symmetric, so only `ω ≥ 0` is imposed, as real and imaginary rows.
/// Over-complete grids return the minimum-norm solution.
pub fn solve_shift_coefficients(gaps: &GapSet, shifts: &[f64], order: usize) -> Result<Coefficients> {
    let m = shifts.len();
    if m == 0 {
        return Err(invalid("empty shift grid"));
    }
    let mut rows: Vec<(f64, bool)> = vec![(0.0, true)];
    for w in gaps.positive() {
        rows.push((w, true));
        rows.push((w, false));
    }
    let a = DMatrix::from_fn(rows.len(), m, |i, p| {
        let (w, re) = rows[i];
        if re {
            (w * shifts[p]).cos()
        } else {
            (w * shifts[p]).sin()
        }
    });
    let b = DVector::from_fn(rows.len(), |i, _| {
        let (w, re) = rows[i];
        let z = rhs(w, order);
        if re {
            z.re
        } else {
            z.im
        }
    });
    let svd = a.clone().svd(true, true);
    let sv = &svd.singular_values;
    let smax = sv.max();
    let smin = if rows.len() > m { 0.0 } else { sv.min() };
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if condition > CONDITION_THRESHOLD {
        return Err(Error::IllConditioned { condition, threshold: CONDITION_THRESHOLD });
    }
    let c = svd.solve(&b, smax * 1e-14).map_err(|e| invalid(e.to_string()))?;
    let values: Vec<f64> = c.iter().copied().collect();
    let residual = gaps
        .gaps()
        .iter()
        .map(|&w| {
            let lhs: Complex64 = values.iter().zip(shifts).map(|(c, s)| c * Complex64::new(0.0, w * s).exp()).sum();
            (lhs - rhs(w, order)).norm()
        })
        .fold(0.0, f64::max);
    let bscale = b.iter().map(|x| x.abs()).fold(1.0, f64::max);
    if residual > 1e-9 * bscale {
        return Err(Error::Inconsistent { residual });
    }
    Ok(Coefficients::new(order, values, residual, condition))
}

/// Antisymmetric odd-order coefficients on [`odd_shift_grid`].
pub fn solve_odd_coefficients(gaps: &GapSet, shifts: &[f64], order: usize) -> Result<Coefficients> {
    if order.is_multiple_of(2) {
        return Err(invalid("antisymmetric rules only give odd derivatives"));
    }
    let m = shifts.len();
    let r = m / 2;
    let pos = gaps.positive();
    if m % 2 == 1 || r < pos.len() {
        return Err(invalid("odd grid must hold one ± pair per positive gap"));
    }
    for p in 0..r {
        if (shifts[p] + shifts[m - 1 - p]).abs() > 1e-12 {
            return Err(invalid("odd grid must be symmetric about 0"));
        }
    }
    let sign = if (order / 2).is_multiple_of(2) { 1.0 } else { -1.0 };
    let s_pos = &shifts[r..];
    let mat = DMatrix::from_fn(pos.len(), r, |i, mu| (pos[i] * s_pos[mu]).sin());
    let b = DVector::from_fn(pos.len(), |i, _| sign * pos[i].powi(order as i32) / 2.0);
    let svd = mat.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if condition > CONDITION_THRESHOLD {
        return Err(Error::IllConditioned { condition, threshold: CONDITION_THRESHOLD });
    }
    let half = svd.solve(&b, smax * 1e-14).map_err(|e| invalid(e.to_string()))?;
    let mut values = vec![0.0; m];
    for mu in 0..r {
        values[r + mu] = half[mu];
        values[r - 1 - mu] = -half[mu];
    }
    let residual = gaps
        .gaps()
        .iter()
        .map(|&w| {
            let lhs: Complex64 = values.iter().zip(shifts).map(|(c, s)| c * Complex64::new(0.0, w * s).exp()).sum();
            (lhs - rhs(w, order)).norm()
        })
        .fold(0.0, f64::max);
    let bscale = gaps.gaps().iter().map(|&w| w.abs().powi(order as i32)).fold(1.0, f64::max);
    if residual > 1e-9 * bscale {
        return Err(Error::Inconsistent { residual });
    }
    Ok(Coefficients::new(order, values, residual, condition))
}

/// `F^(r)(0) ≈ Σ_p c_p F(s_p)`.
pub fn reconstruct_derivative(samples: &[f64], coefficients: &Coefficients) -> Result<f64> {
    if samples.len() != coefficients.values.len() {
        return Err(invalid(format!("{} samples for {} coefficients", samples.len(), coefficients.values.len())));
    }
    Ok(samples.iter().zip(&coefficients.values).map(|(f, c)| f * c).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GridMode {
    /// `M ≥ |Ω|` shifts; every order available.
    #[default]
    Full,
    /// `2|Ω⁺|` symmetric shifts with antisymmetric weights; odd orders only.
    OddSymmetric,
}

/// Shift grid plus coefficients for orders `0..=max_order`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftRule {
    gaps: GapSet,
    shifts: Vec<f64>,
    mode: GridMode,
    coefficients: Vec<Option<Coefficients>>,
}

impl ShiftRule {
    /// Default grid: `2K+1` equispaced shifts for commensurate gaps with largest harmonic
    /// `K`, otherwise `|Ω|` Chebyshev shifts.
    pub fn new(gaps: GapSet, max_order: usize) -> Result<Self> {
        let m = match gaps.max_harmonic() {
            Some(k) => (2 * k + 1).max(gaps.len()),
            None => gaps.len(),
        };
        let shifts = shift_grid(&gaps, m)?;
        Self::with_shifts(gaps, shifts, max_order)
    }

    pub fn with_shifts(gaps: GapSet, shifts: Vec<f64>, max_order: usize) -> Result<Self> {
        let coefficients = (0..=max_order).map(|r| solve_shift_coefficients(&gaps, &shifts, r).map(Some)).collect::<Result<_>>()?;
        Ok(ShiftRule { gaps, shifts, mode: GridMode::Full, coefficients })
    }

    pub fn odd_symmetric(gaps: GapSet, max_order: usize) -> Result<Self> {
        let shifts = odd_shift_grid(&gaps)?;
        let coefficients = (0..=max_order)
            .map(|r| if r % 2 == 1 { solve_odd_coefficients(&gaps, &shifts, r).map(Some) } else { Ok(None) })
            .collect::<Result<_>>()?;
        Ok(ShiftRule { gaps, shifts, mode: GridMode::OddSymmetric, coefficients })
    }

    pub fn for_generator(b: &OperatorSum, mode: GridMode, max_order: usize) -> Result<Self> {
        let gaps = gap_set(b, GAP_TOL)?;
        match mode {
            GridMode::Full => Self::new(gaps, max_order),
            GridMode::OddSymmetric => Self::odd_symmetric(gaps, max_order),
        }
    }

    /// Copy with every coefficient scaled by `1 + offset`; a test hook for verification.
    #[doc(hidden)]
    pub fn corrupted(&self, offset: f64) -> Self {
        let mut out = self.clone();
        for c in out.coefficients.iter_mut().flatten() {
            c.values.iter_mut().for_each(|v| *v *= 1.0 + offset);
        }
        out
    }

    pub fn gaps(&self) -> &GapSet {
        &self.gaps
    }

    pub fn shifts(&self) -> &[f64] {
        &self.shifts
    }

    pub fn len(&self) -> usize {
        self.shifts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shifts.is_empty()
    }

    pub fn mode(&self) -> GridMode {
        self.mode
    }

    pub fn max_order(&self) -> usize {
        self.coefficients.len() - 1
    }

    pub fn coefficients(&self, order: usize) -> Result<&Coefficients> {
        self.coefficients
            .get(order)
            .and_then(|c| c.as_ref())
            .ok_or_else(|| invalid(format!("shift rule has no coefficients for order {order}")))
    }
}

/// Counting vector `β`: how many times each channel's generator enters the response.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MultiIndex(Vec<usize>);

impl MultiIndex {
    pub fn new(beta: Vec<usize>) -> Result<Self> {
        if beta.iter().sum::<usize>() == 0 {
            return Err(invalid("multi-index must have order ≥ 1"));
        }
        Ok(MultiIndex(beta))
    }

    /// Single channel at order `m`.
    pub fn single(m: usize) -> Result<Self> {
        Self::new(vec![m])
    }

    pub fn beta(&self) -> &[usize] {
        &self.0
    }

    pub fn order(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.0.len()).filter(|&a| self.0[a] > 0).collect()
    }

    /// `Πβ_a!`.
    pub fn factorial(&self) -> f64 {
        self.0.iter().map(|&b| factorial(b)).product()
    }

    /// All multi-indices over `channels` channels with total order `m`.
    pub fn all_of_order(channels: usize, m: usize) -> Vec<MultiIndex> {
        fn rec(left: usize, parts: usize, cur: &mut Vec<usize>, out: &mut Vec<MultiIndex>) {
            if parts == 1 {
                cur.push(left);
                out.push(MultiIndex(cur.clone()));
                cur.pop();
                return;
            }
            for b in (0..=left).rev() {
                cur.push(b);
                rec(left - b, parts - 1, cur, out);
                cur.pop();
            }
        }
        let mut out = Vec::new();
        if channels > 0 && m > 0 {
            rec(m, channels, &mut Vec::new(), &mut out);
        }
        out
    }
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Reconstructed response over a time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseSeries {
    pub beta: MultiIndex,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Signal evaluations per time point.
    pub configurations: usize,
}

impl ResponseSeries {
    pub fn order(&self) -> usize {
        self.beta.order()
    }
}

/// One point of the Cartesian shift grid with its combination weight.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    pub etas: Vec<f64>,
    pub weight: f64,
}

/// Shift configurations and weights `Πc_{a,p_a}^{(β_a)} / Πβ_a!`.
pub fn configurations(rules: &[ShiftRule], beta: &MultiIndex) -> Result<Vec<Configuration>> {
    if rules.len() != beta.beta().len() {
        return Err(invalid(format!("{} shift rules for {} channels", rules.len(), beta.beta().len())));
    }
    let mut out = vec![Configuration { etas: vec![], weight: 1.0 / beta.factorial() }];
    for (rule, &b) in rules.iter().zip(beta.beta()) {
        let (points, weights): (Vec<f64>, Vec<f64>) =
            if b == 0 { (vec![0.0], vec![1.0]) } else { (rule.shifts().to_vec(), rule.coefficients(b)?.values.clone()) };
        out = out
            .into_iter()
            .flat_map(|cfg| {
                points.iter().zip(&weights).filter(|(_, w)| **w != 0.0).map(move |(&s, &w)| {
                    let mut etas = cfg.etas.clone();
                    etas.push(s);
                    Configuration { etas, weight: cfg.weight * w }
                })
            })
            .collect();
    }
    Ok(out)
}

fn key(etas: &[f64]) -> Vec<u64> {
    etas.iter().map(|e| e.to_bits()).collect()
}

/// Several responses sharing one memo of driven-signal evaluations per time point.
pub fn responses(
    dynamics: &Dynamics,
    rules: &[ShiftRule],
    a: &OperatorSum,
    t_grid: &[f64],
    betas: &[MultiIndex],
) -> Result<Vec<ResponseSeries>> {
    let configs: Vec<Vec<Configuration>> = betas.iter().map(|b| configurations(rules, b)).collect::<Result<_>>()?;
    let per_t: Vec<Vec<f64>> = t_grid
        .par_iter()
        .map(|&t| {
            let mut memo: HashMap<Vec<u64>, f64> = HashMap::new();
            configs
                .iter()
                .map(|cfgs| {
                    let mut acc = 0.0;
                    for c in cfgs {
                        let k = key(&c.etas);
                        let f = match memo.get(&k) {
                            Some(&f) => f,
                            None => {
                                let f = dynamics.signal(&c.etas, a, t)?;
                                memo.insert(k, f);
                                f
                            }
                        };
                        acc += c.weight * f;
                    }
                    Ok(acc)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    Ok(betas
        .iter()
        .enumerate()
        .map(|(i, b)| ResponseSeries {
            beta: b.clone(),
            times: t_grid.to_vec(),
            values: per_t.iter().map(|v| v[i]).collect(),
            configurations: configs[i].len(),
        })
        .collect())
}

/// Pulse-summed `χ^(β)(t)` reconstructed from shifted driven signals.
pub fn reconstruct_response(
    dynamics: &Dynamics,
    rules: &[ShiftRule],
    a: &OperatorSum,
    t_grid: &[f64],
    beta: &MultiIndex,
) -> Result<ResponseSeries> {
    Ok(responses(dynamics, rules, a, t_grid, std::slice::from_ref(beta))?.remove(0))
}

/// Frequencies of the driven signal in `η_a` for a channel kicked `pulses` times:
/// the `pulses`-fold sumset of the generator's gap set.
pub fn channel_gap_set(gaps: &GapSet, pulses: usize) -> GapSet {
    let sets = vec![gaps.gaps().to_vec(); pulses.max(1)];
    GapSet::from_differences(sumset(&sets, gaps.tol()), gaps.tol())
}

/// Default full-grid rules for every channel of a schedule, valid up to `max_order`.
pub fn default_rules(dynamics: &Dynamics, max_order: usize) -> Result<Vec<ShiftRule>> {
    dynamics
        .schedule()
        .channels()
        .iter()
        .enumerate()
        .map(|(a, ch)| {
            let single = kick_gap_set(dynamics.kick_generator(a), GAP_TOL);
            ShiftRule::new(channel_gap_set(&single, ch.times.len()), max_order)
        })
        .collect()
}

/// Coefficient of `η^m` when every channel is driven with the same amplitude:
/// `Σ_{|β|=m} χ^(β)(t)`.
pub fn equal_amplitude_order(dynamics: &Dynamics, rules: &[ShiftRule], a: &OperatorSum, t_grid: &[f64], m: usize) -> Result<Vec<f64>> {
    let betas = MultiIndex::all_of_order(rules.len(), m);
    let series = responses(dynamics, rules, a, t_grid, &betas)?;
    Ok((0..t_grid.len()).map(|k| series.iter().map(|s| s.values[k]).sum()).collect())
}

/// Order-by-order split `⟨A(t)⟩_η = Σ_n A^n(t) + diff(t)` for one channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub eta: f64,
    pub times: Vec<f64>,
    /// `orders[n][k] = A^n(t_k)`.
    pub orders: Vec<Vec<f64>>,
    pub signal: Vec<f64>,
    pub diff: Vec<f64>,
}

impl Decomposition {
    pub fn partial_sum(&self) -> Vec<f64> {
        (0..self.times.len()).map(|k| self.orders.iter().map(|o| o[k]).sum()).collect()
    }
}

pub fn response_decomposition(
    dynamics: &Dynamics,
    rule: &ShiftRule,
    a: &OperatorSum,
    t_grid: &[f64],
    eta: f64,
    max_order: usize,
) -> Result<Decomposition> {
    if dynamics.n_channels() != 1 {
        return Err(invalid("response decomposition needs a single-channel schedule"));
    }
    let coeffs: Vec<&Coefficients> = (0..=max_order).map(|r| rule.coefficients(r)).collect::<Result<_>>()?;
    let rows: Vec<(Vec<f64>, f64)> = t_grid
        .par_iter()
        .map(|&t| {
            let samples: Vec<f64> = rule.shifts().iter().map(|&s| dynamics.signal(&[s], a, t)).collect::<Result<_>>()?;
            let terms = coeffs
                .iter()
                .enumerate()
                .map(|(n, c)| Ok(eta.powi(n as i32) / factorial(n) * reconstruct_derivative(&samples, c)?))
                .collect::<Result<Vec<f64>>>()?;
            Ok((terms, dynamics.signal(&[eta], a, t)?))
        })
        .collect::<Result<_>>()?;
    let orders: Vec<Vec<f64>> = (0..=max_order).map(|n| rows.iter().map(|r| r.0[n]).collect()).collect();
    let signal: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let diff = rows.iter().map(|(terms, s)| s - terms.iter().sum::<f64>()).collect();
    Ok(Decomposition { eta, times: t_grid.to_vec(), orders, signal, diff })
}
