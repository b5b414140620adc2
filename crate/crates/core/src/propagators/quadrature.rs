//! Real-axis quadrature with finite pole shifts and η → 0 extrapolation.
//!
//! This is the independent check of the residue engine: it never looks at
//! residues, only at the integrand along the real line.

use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Relative disagreement allowed between the extrapolations that use all
/// η values and all but the largest one.
pub const EXTRAPOLATION_TOL: f64 = 1e-4;

/// Panel boundaries on [-cutoff, cutoff], graded geometrically around each
/// singular point so that every panel is no wider than its distance to the
/// nearest pole (down to `eta / 4`).
pub(crate) fn graded_breakpoints(centers: &[f64], eta: f64, cutoff: f64) -> Vec<f64> {
    let mut pts = vec![-cutoff, cutoff];
    for &c in centers {
        if c.abs() < cutoff {
            pts.push(c);
        }
        let mut h = 0.25 * eta;
        while h < 2.0 * cutoff {
            for x in [c - h, c + h] {
                if x.abs() < cutoff {
                    pts.push(x);
                }
            }
            h *= 2.0;
        }
    }
    pts.sort_by(f64::total_cmp);
    let min_gap = eta / 64.0;
    let mut out: Vec<f64> = Vec::with_capacity(pts.len());
    for x in pts {
        match out.last() {
            Some(&last) if x - last < min_gap => {}
            _ => out.push(x),
        }
    }
    // keep the exact endpoint
    if let Some(last) = out.last_mut() {
        *last = cutoff;
    }
    out
}

/// Integrates a vector-valued complex integrand over the real line.
///
/// `eval(ε, out)` fills `out` with the integrand. Outside `[-cutoff, cutoff]`
/// the integrand is replaced by its leading asymptote `tail[k] / ε^decay`,
/// which is integrated analytically.
#[allow(clippy::too_many_arguments)]
pub(crate) fn line_integral<F>(
    centers: &[f64],
    eta: f64,
    cutoff: f64,
    points: usize,
    len: usize,
    tail: &[f64],
    decay: u32,
    mut eval: F,
) -> Result<Vec<Complex64>>
where
    F: FnMut(f64, &mut [Complex64]),
{
    let degree = NonZeroUsize::new(points)
        .filter(|p| p.get() >= 2)
        .ok_or_else(|| Error::invalid("quadrature_points must be ≥ 2"))?;
    let rule = GaussLegendre::new(degree);
    let nodes = rule.as_node_weight_pairs();
    let breaks = graded_breakpoints(centers, eta, cutoff);

    let mut acc = vec![Complex64::new(0.0, 0.0); len];
    let mut buf = vec![Complex64::new(0.0, 0.0); len];
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        for &(x, wt) in nodes {
            eval(mid + half * x, &mut buf);
            let s = wt * half;
            for (a, v) in acc.iter_mut().zip(&buf) {
                *a += v * s;
            }
        }
    }
    if decay >= 2 {
        // ∫_{|ε|>L} ε^-n dε = (1 + (-1)^n) L^(1-n) / (n-1)
        let parity = if decay.is_multiple_of(2) { 2.0 } else { 0.0 };
        let t = parity * cutoff.powi(1 - decay as i32) / (decay as f64 - 1.0);
        for (a, c) in acc.iter_mut().zip(tail) {
            *a += c * t;
        }
    }
    Ok(acc)
}

/// Neville evaluation at `x = 0` of the interpolating polynomial through
/// `(xs[k], ys[k])`.
pub fn neville_at_zero(xs: &[f64], ys: &[f64]) -> f64 {
    let mut p = ys.to_vec();
    let n = xs.len();
    for m in 1..n {
        for k in 0..(n - m) {
            p[k] = (xs[k + m] * p[k] - xs[k] * p[k + 1]) / (xs[k + m] - xs[k]);
        }
    }
    p[0]
}

/// Extrapolated real and imaginary parts of a family of η-regularized
/// values.
///
/// At real energies the regularized integrals are rational functions of `iη`
/// with real coefficients, so the real part is even in η and the imaginary
/// part odd. The real part is extrapolated in η² and the imaginary part in η.
#[derive(Debug, Clone)]
pub struct Extrapolated {
    pub real: Vec<f64>,
    pub imag: Vec<f64>,
}

pub(crate) fn extrapolate(etas: &[f64], samples: &[Vec<Complex64>]) -> Result<Extrapolated> {
    let len = samples.first().map_or(0, Vec::len);
    let eta2: Vec<f64> = etas.iter().map(|e| e * e).collect();
    let column = |k: usize, f: fn(&Complex64) -> f64| -> Vec<f64> {
        samples.iter().map(|s| f(&s[k])).collect()
    };
    let mut real = Vec::with_capacity(len);
    let mut imag = Vec::with_capacity(len);
    let mut coarse = Vec::with_capacity(len);
    for k in 0..len {
        let re = column(k, |z| z.re);
        let im = column(k, |z| z.im);
        real.push(neville_at_zero(&eta2, &re));
        imag.push(neville_at_zero(etas, &im));
        if etas.len() > 1 {
            coarse.push(neville_at_zero(&eta2[1..], &re[1..]));
        }
    }
    if etas.len() > 1 {
        let scale = real.iter().fold(0.0_f64, |m, x| m.max(x.abs())).max(1e-300);
        let worst = real
            .iter()
            .zip(&coarse)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        if worst > EXTRAPOLATION_TOL * scale {
            return Err(Error::Extrapolation(format!(
                "successive η-extrapolations differ by {worst:.3e} (scale {scale:.3e})"
            )));
        }
    }
    Ok(Extrapolated { real, imag })
}
