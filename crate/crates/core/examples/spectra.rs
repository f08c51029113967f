//! Spectrum of a damped response: envelope fit, correction and FFT peak location.

use nonlinear_response::spectra::{envelope_fit, spectrum_1d, Window, ENVELOPE_FLOOR};

fn main() -> nonlinear_response::Result<()> {
    let times: Vec<f64> = (0..51).map(|k| 0.1 * k as f64).collect();
    let omega = 2.0 * std::f64::consts::PI * 8.0 / (51.0 * 0.1);
    let signal: Vec<f64> = times.iter().map(|t| 0.8 * (-0.35 * t).exp() * (omega * t).cos()).collect();

    let (fit, corrected) = envelope_fit(&times, &signal, ENVELOPE_FLOOR)?;
    println!("envelope: alpha = {:.4}, gamma = {:.4} from {} extrema", fit.alpha, fit.gamma, fit.extrema);

    for (label, values, window) in
        [("raw", &signal, Window::None), ("corrected", &corrected, Window::None), ("corrected+hann", &corrected, Window::Hann)]
    {
        let s = spectrum_1d(&times, values, window)?;
        let k = s.peak();
        println!("{label:<15} peak at ω = {:.4} (true {omega:.4}), |F| = {:.3}", s.frequencies[k], s.magnitudes()[k]);
    }
    Ok(())
}
