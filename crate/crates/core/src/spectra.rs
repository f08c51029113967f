//! Fourier analysis of response series.
//!
//! Transforms are one-sided on the angular frequencies `ω_k = 2πk/(n·dt)`, `k = 0..=n/2`,
//! after subtracting the mean. A Hann window is available but off by default.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::gpsr::ResponseSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    #[default]
    None,
    Hann,
}

impl Window {
    fn weights(&self, n: usize) -> Vec<f64> {
        match self {
            Window::None => vec![1.0; n],
            Window::Hann if n < 2 => vec![1.0; n],
            Window::Hann => (0..n).map(|j| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * j as f64 / (n - 1) as f64).cos())).collect(),
        }
    }
}

/// Spacing of a uniform grid.
pub fn uniform_dt(times: &[f64]) -> Result<f64> {
    if times.len() < 2 {
        return Err(invalid("a spectrum needs at least two time points"));
    }
    let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    if dt.is_nan() || dt <= 0.0 {
        return Err(invalid("time grid must be increasing"));
    }
    for (j, t) in times.iter().enumerate() {
        if (t - (times[0] + j as f64 * dt)).abs() > 1e-9 * dt.max(1.0) {
            return Err(invalid("time grid is not uniform"));
        }
    }
    Ok(dt)
}

pub fn angular_frequencies(n: usize, dt: f64) -> Vec<f64> {
    (0..=n / 2).map(|k| 2.0 * std::f64::consts::PI * k as f64 / (n as f64 * dt)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub frequencies: Vec<f64>,
    pub amplitudes: Vec<Complex64>,
    pub n_points: usize,
    pub dt: f64,
}

impl Spectrum {
    pub fn magnitudes(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|z| z.norm()).collect()
    }

    /// Index of the largest magnitude.
    pub fn peak(&self) -> usize {
        let m = self.magnitudes();
        (0..m.len()).fold(0, |best, k| if m[k] > m[best] { k } else { best })
    }

    /// `Σ_k |X_k|²` over the full two-sided transform.
    pub fn two_sided_power(&self) -> f64 {
        let n = self.n_points;
        self.amplitudes
            .iter()
            .enumerate()
            .map(|(k, z)| {
                let mult = if k == 0 || (n.is_multiple_of(2) && k == n / 2) { 1.0 } else { 2.0 };
                mult * z.norm_sqr()
            })
            .sum()
    }
}

fn fft_in_place(buf: &mut [Complex64]) {
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(buf.len()).process(buf);
}

/// One-sided spectrum of a uniformly sampled real series.
pub fn spectrum_1d(times: &[f64], values: &[f64], window: Window) -> Result<Spectrum> {
    if times.len() != values.len() {
        return Err(invalid("times and values differ in length"));
    }
    let dt = uniform_dt(times)?;
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let w = window.weights(n);
    let mut buf: Vec<Complex64> = values.iter().zip(&w).map(|(v, w)| Complex64::new((v - mean) * w, 0.0)).collect();
    fft_in_place(&mut buf);
    buf.truncate(n / 2 + 1);
    Ok(Spectrum { frequencies: angular_frequencies(n, dt), amplitudes: buf, n_points: n, dt })
}

pub fn response_spectrum(series: &ResponseSeries, window: Window) -> Result<Spectrum> {
    spectrum_1d(&series.times, &series.values, window)
}

/// `a(t) = αe^{−γt}` fitted to the extrema of `|x(t)|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeFit {
    pub alpha: f64,
    pub gamma: f64,
    /// RMS deviation of `log|extrema|` from the fitted line.
    pub residual: f64,
    pub extrema: usize,
}

impl EnvelopeFit {
    pub fn envelope(&self, t: f64) -> f64 {
        self.alpha * (-self.gamma * t).exp()
    }
}

pub const ENVELOPE_FLOOR: f64 = 1e-6;

/// Fits the envelope and returns the series divided by it.
pub fn envelope_fit(times: &[f64], values: &[f64], floor: f64) -> Result<(EnvelopeFit, Vec<f64>)> {
    if times.len() != values.len() {
        return Err(invalid("times and values differ in length"));
    }
    let dt = uniform_dt(times)?;
    let y: Vec<f64> = values.iter().map(|v| v.abs()).collect();
    let mut pts: Vec<(f64, f64)> = Vec::new();
    for j in 1..y.len().saturating_sub(1) {
        if y[j] > floor && y[j] >= y[j - 1] && y[j] > y[j + 1] {
            let (a, b, c) = (y[j - 1], y[j], y[j + 1]);
            let den = a - 2.0 * b + c;
            let (delta, peak) = if den < 0.0 {
                let d = 0.5 * (a - c) / den;
                (d, b - 0.25 * (a - c) * d)
            } else {
                (0.0, b)
            };
            pts.push((times[j] + delta * dt, peak));
        }
    }
    if pts.len() < 3 {
        return Err(invalid(format!("envelope fit needs ≥ 3 extrema above {floor:e}, found {}", pts.len())));
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ml = pts.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1.ln() - ml)).sum();
    let slope = sxy / sxx;
    let intercept = ml - slope * mt;
    let alpha = intercept.exp();
    if !alpha.is_finite() || alpha <= 0.0 {
        return Err(invalid("fitted envelope amplitude is not positive"));
    }
    let residual = (pts.iter().map(|p| (p.1.ln() - intercept - slope * p.0).powi(2)).sum::<f64>() / n).sqrt();
    let fit = EnvelopeFit { alpha, gamma: -slope, residual, extrema: pts.len() };
    let corrected = times.iter().zip(values).map(|(t, v)| v / fit.envelope(*t)).collect();
    Ok((fit, corrected))
}

/// One-sided 2D spectrum over `(ω₁, ω₃)`; rows follow the first time axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum2d {
    pub w1: Vec<f64>,
    pub w3: Vec<f64>,
    pub amplitudes: DMatrix<Complex64>,
}

impl Spectrum2d {
    pub fn magnitudes(&self) -> DMatrix<f64> {
        self.amplitudes.map(|z| z.norm())
    }

    pub fn peak(&self) -> (usize, usize) {
        let m = self.magnitudes();
        let mut best = (0, 0);
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                if m[(i, j)] > m[best] {
                    best = (i, j);
                }
            }
        }
        best
    }
}

pub fn spectrum_2d(t1: &[f64], t3: &[f64], s: &DMatrix<f64>, window: Window) -> Result<Spectrum2d> {
    if s.nrows() != t1.len() || s.ncols() != t3.len() {
        return Err(invalid("2D signal shape does not match its time grids"));
    }
    let (d1, d3) = (uniform_dt(t1)?, uniform_dt(t3)?);
    let (n1, n3) = (t1.len(), t3.len());
    let mean = s.mean();
    let (w1, w3) = (window.weights(n1), window.weights(n3));
    let mut a = DMatrix::from_fn(n1, n3, |i, j| Complex64::new((s[(i, j)] - mean) * w1[i] * w3[j], 0.0));
    let mut planner = FftPlanner::new();
    let f3 = planner.plan_fft_forward(n3);
    for i in 0..n1 {
        let mut row: Vec<Complex64> = a.row(i).iter().copied().collect();
        f3.process(&mut row);
        for j in 0..n3 {
            a[(i, j)] = row[j];
        }
    }
    let f1 = planner.plan_fft_forward(n1);
    for j in 0..n3 {
        f1.process(a.column_mut(j).as_mut_slice());
    }
    let amplitudes = a.view((0, 0), (n1 / 2 + 1, n3 / 2 + 1)).into_owned();
    Ok(Spectrum2d { w1: angular_frequencies(n1, d1), w3: angular_frequencies(n3, d3), amplitudes })
}

/// Power within `|ω₁ − ω₃| ≤ band` and outside it.
pub fn diagonal_offdiagonal_weight(spec: &Spectrum2d, band: f64) -> Result<(f64, f64)> {
    if spec.w1.len() != spec.w3.len() || spec.w1.iter().zip(&spec.w3).any(|(a, b)| (a - b).abs() > 1e-9 * a.abs().max(1.0)) {
        return Err(invalid("diagonal weights need a square frequency mesh"));
    }
    let top = spec.w1.last().copied().unwrap_or(0.0);
    if band.is_nan() || band < 0.0 || band > top {
        return Err(invalid(format!("band half-width {band} exceeds the frequency range {top}")));
    }
    let tol = 1e-9 * top.max(1.0);
    let (mut diag, mut total) = (0.0, 0.0);
    for i in 0..spec.w1.len() {
        for j in 0..spec.w3.len() {
            let p = spec.amplitudes[(i, j)].norm_sqr();
            total += p;
            if (spec.w1[i] - spec.w3[j]).abs() <= band + tol {
                diag += p;
            }
        }
    }
    Ok((diag, total - diag))
}

/// One frequency bin of a square mesh.
pub fn bin_width(spec: &Spectrum2d) -> f64 {
    spec.w1.get(1).copied().unwrap_or(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn grid(n: usize, dt: f64) -> Vec<f64> {
        (0..n).map(|j| j as f64 * dt).collect()
    }

    #[test]
    fn constant_series_is_silent() {
        let t = grid(20, 0.1);
        let s = spectrum_1d(&t, &[3.5; 20], Window::None).unwrap();
        assert!(s.magnitudes().iter().all(|m| *m < 1e-12));
    }

    #[test]
    fn on_grid_tone_hits_one_bin() {
        let t = grid(51, 0.1);
        let w0 = 2.0 * PI * 5.0 / (51.0 * 0.1);
        let x: Vec<f64> = t.iter().map(|t| (w0 * t).sin()).collect();
        let s = spectrum_1d(&t, &x, Window::None).unwrap();
        assert_eq!(s.peak(), 5);
        assert_abs_diff_eq!(s.frequencies[5], w0, epsilon = 1e-12);
        for (k, m) in s.magnitudes().iter().enumerate() {
            if k != 5 {
                assert!(*m < 1e-10);
            }
        }
        let y: Vec<f64> = t.iter().map(|t| (w0 * t).sin() + 0.5 * (2.0 * w0 * t).sin()).collect();
        let m = spectrum_1d(&t, &y, Window::None).unwrap().magnitudes();
        assert_abs_diff_eq!(m[5] / m[10], 2.0, epsilon = 1e-10);
    }

    #[test]
    fn rejects_nonuniform_grid() {
        assert!(spectrum_1d(&[0.0, 0.1, 0.3], &[1.0, 2.0, 3.0], Window::None).is_err());
    }

    #[test]
    fn hann_window_tapers_edges() {
        let w = Window::Hann.weights(5);
        assert_abs_diff_eq!(w[0], 0.0);
        assert_abs_diff_eq!(w[2], 1.0);
    }

    proptest! {
        #[test]
        fn parseval(x in prop::collection::vec(-1.0f64..1.0, 2..64), shift in -5.0f64..5.0) {
            let t = grid(x.len(), 0.3);
            let s = spectrum_1d(&t, &x, Window::None).unwrap();
            let mean = x.iter().sum::<f64>() / x.len() as f64;
            let lhs: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
            prop_assert!((lhs - s.two_sided_power() / x.len() as f64).abs() < 1e-9);
            let shifted: Vec<f64> = x.iter().map(|v| v + shift).collect();
            let s2 = spectrum_1d(&t, &shifted, Window::None).unwrap();
            for (a, b) in s.magnitudes().iter().zip(s2.magnitudes()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn envelope_examples() {
        let t = grid(251, 0.02);
        let x: Vec<f64> = t.iter().map(|t| (-0.5 * t).exp() * (5.0 * t).sin()).collect();
        let (fit, corrected) = envelope_fit(&t, &x, ENVELOPE_FLOOR).unwrap();
        assert!((fit.gamma - 0.5).abs() < 0.02, "{fit:?}");
        assert!((fit.alpha - 1.0).abs() < 0.02, "{fit:?}");
        for ((t, c), v) in t.iter().zip(&corrected).zip(&x) {
            assert_abs_diff_eq!(c * fit.envelope(*t), *v, epsilon = 1e-12);
        }
        let y: Vec<f64> = t.iter().map(|t| (5.0 * t).sin()).collect();
        let (fit, _) = envelope_fit(&t, &y, ENVELOPE_FLOOR).unwrap();
        assert!(fit.gamma.abs() < 1e-3);
        let z: Vec<f64> = t.iter().map(|t| (-t).exp()).collect();
        assert!(envelope_fit(&t, &z, ENVELOPE_FLOOR).is_err());
    }

    fn tone(t: &[f64], k: usize) -> Vec<f64> {
        let n = t.len() as f64;
        let dt = t[1] - t[0];
        t.iter().map(|t| (2.0 * PI * k as f64 / (n * dt) * t).sin()).collect()
    }

    #[test]
    fn separable_2d_peaks() {
        let t = grid(24, 0.25);
        let a = tone(&t, 3);
        let b = tone(&t, 5);
        let s = DMatrix::from_fn(24, 24, |i, j| a[i] * a[j]);
        let sp = spectrum_2d(&t, &t, &s, Window::None).unwrap();
        assert_eq!(sp.peak(), (3, 3));
        let s = DMatrix::from_fn(24, 24, |i, j| a[i] * b[j]);
        let sp = spectrum_2d(&t, &t, &s, Window::None).unwrap();
        assert_eq!(sp.peak(), (3, 5));
        let (d, o) = diagonal_offdiagonal_weight(&sp, bin_width(&sp)).unwrap();
        assert!(d < 1e-18 * o.max(1.0));
        let zero = spectrum_2d(&t, &t, &DMatrix::zeros(24, 24), Window::None).unwrap();
        assert!(zero.magnitudes().iter().all(|m| *m == 0.0));
    }

    #[test]
    fn separable_2d_is_outer_product() {
        let t = grid(16, 0.5);
        let a = tone(&t, 2);
        let b: Vec<f64> = tone(&t, 3).iter().zip(tone(&t, 6)).map(|(x, y)| x + 0.3 * y).collect();
        let s = DMatrix::from_fn(16, 16, |i, j| a[i] * b[j]);
        let sp = spectrum_2d(&t, &t, &s, Window::None).unwrap();
        let sa = spectrum_1d(&t, &a, Window::None).unwrap();
        let sb = spectrum_1d(&t, &b, Window::None).unwrap();
        for i in 0..sa.amplitudes.len() {
            for j in 0..sb.amplitudes.len() {
                assert_abs_diff_eq!((sp.amplitudes[(i, j)] - sa.amplitudes[i] * sb.amplitudes[j]).norm(), 0.0, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn diagonal_weights() {
        let w: Vec<f64> = (0..6).map(|k| k as f64).collect();
        let mut amp = DMatrix::zeros(6, 6);
        amp[(2, 2)] = Complex64::new(1.0, 0.0);
        let sp = Spectrum2d { w1: w.clone(), w3: w.clone(), amplitudes: amp.clone() };
        assert_eq!(diagonal_offdiagonal_weight(&sp, 1.0).unwrap(), (1.0, 0.0));
        amp[(1, 4)] = Complex64::new(0.0, 1.0);
        let sp = Spectrum2d { w1: w.clone(), w3: w.clone(), amplitudes: amp };
        let (d, o) = diagonal_offdiagonal_weight(&sp, 1.0).unwrap();
        assert_abs_diff_eq!(d / o, 1.0, epsilon = 1e-10);
        assert!(diagonal_offdiagonal_weight(&sp, 10.0).is_err());
    }
}
