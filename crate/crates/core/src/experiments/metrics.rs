use crate::error::{Result, RpoError};

/// `2·b·n/(b+n)`, or 0 when either input is 0. Works on any scale
/// (fractions or percentages).
pub fn harmonic_mean(base: f64, novel: f64) -> Result<f64> {
    if !(base >= 0.0 && novel >= 0.0) || !base.is_finite() || !novel.is_finite() {
        return Err(RpoError::config(format!(
            "harmonic mean needs non-negative inputs, got ({base}, {novel})"
        )));
    }
    if base == 0.0 || novel == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * base * novel / (base + novel))
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (`n − 1` denominator); 0 for fewer than two
/// values. Works on deviations from the first element, so a constant
/// sequence gives exactly 0.
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let shift = xs[0];
    let m = xs.iter().map(|x| x - shift).sum::<f64>() / xs.len() as f64;
    let ss: f64 = xs.iter().map(|x| (x - shift - m) * (x - shift - m)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}
