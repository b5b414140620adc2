//! Power-law fits on log-log axes.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerFit {
    /// Exponent `s` in `y ≈ c·xˢ`.
    pub slope: f64,
    /// `ln c`
    pub intercept: f64,
    pub r_squared: f64,
}

impl PowerFit {
    pub fn predict(&self, x: f64) -> f64 {
        (self.intercept + self.slope * x.ln()).exp()
    }
}

/// Least-squares line through `(ln x, ln |y|)`.
pub fn power_law_fit(xs: &[f64], ys: &[f64]) -> Result<PowerFit> {
    if xs.len() != ys.len() {
        return Err(Error::invalid("x and y lengths differ"));
    }
    if xs.len() < 2 {
        return Err(Error::invalid("a power-law fit needs at least two points"));
    }
    let mut lx = Vec::with_capacity(xs.len());
    let mut ly = Vec::with_capacity(xs.len());
    for (&x, &y) in xs.iter().zip(ys) {
        if !(x > 0.0) || !x.is_finite() || !(y.abs() > 0.0) || !y.is_finite() {
            return Err(Error::invalid(format!(
                "log-log fit needs positive finite data, got ({x}, {y})"
            )));
        }
        lx.push(x.ln());
        ly.push(y.abs().ln());
    }
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("all x values coincide"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - sse / syy };
    Ok(PowerFit {
        slope,
        intercept,
        r_squared,
    })
}

/// `n` geometrically spaced points from `from` to `to` inclusive.
pub fn geometric_schedule(from: f64, to: f64, n: usize) -> Result<Vec<f64>> {
    if !(from > 0.0) || !(to > from) || !to.is_finite() {
        return Err(Error::config("scan range must satisfy 0 < from < to"));
    }
    if n < 2 {
        return Ok(vec![from; n]);
    }
    let ratio = (to / from).powf(1.0 / (n - 1) as f64);
    let mut out: Vec<f64> = (0..n).map(|k| from * ratio.powi(k as i32)).collect();
    out[n - 1] = to;
    Ok(out)
}
