//! Gap sets, shift grids and derivative coefficients for a few pump generators.

use nonlinear_response::gpsr::{gap_set, reconstruct_derivative, GapSet, ShiftRule, GAP_TOL};
use nonlinear_response::models::{build_pump, PumpSpec};
use nonlinear_response::operators::Axis;

fn show(name: &str, rule: &ShiftRule) -> nonlinear_response::Result<()> {
    println!("{name}");
    println!("  gaps   {:?}", rule.gaps().gaps());
    println!("  shifts {:?}", rule.shifts());
    for r in 1..=rule.max_order() {
        if let Ok(c) = rule.coefficients(r) {
            println!("  order {r}: {:?}", c.values);
        }
    }
    Ok(())
}

fn main() -> nonlinear_response::Result<()> {
    // Spectrum {±1/2}: the textbook parameter-shift rule.
    let half = GapSet::from_spectrum(&[-0.5, 0.5], GAP_TOL);
    show("spectrum {±1/2}, odd-symmetric", &ShiftRule::odd_symmetric(half, 1)?)?;

    let x3 = build_pump(&PumpSpec::local(3, Axis::X), 12)?;
    show("B = X3", &ShiftRule::new(gap_set(&x3, GAP_TOL)?, 4)?)?;

    let cosine = build_pump(&PumpSpec::cosine(1), 6)?;
    let rule = ShiftRule::new(gap_set(&cosine, GAP_TOL)?, 3)?;
    show("B = sum cos(2 pi i/6) X_i", &rule)?;

    // Derivatives of a band-limited test signal are exact.
    let f = |s: f64| 0.3 + (2.0 * s).cos() - 0.7 * (3.0 * s).sin() + 0.2 * (8.0 * s).cos();
    let samples: Vec<f64> = rule.shifts().iter().map(|&s| f(s)).collect();
    let d1 = reconstruct_derivative(&samples, rule.coefficients(1)?)?;
    let d2 = reconstruct_derivative(&samples, rule.coefficients(2)?)?;
    println!("f'(0)  = {d1:.12} (exact {:.12})", -0.7 * 3.0);
    println!("f''(0) = {d2:.12} (exact {:.12})", -4.0 - 0.2 * 64.0);
    Ok(())
}
