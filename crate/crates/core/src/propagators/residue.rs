//! Closed-form evaluation of `i ∫ dε/2π Π_k 1/(ε − p_k)` for real poles
//! carrying an infinitesimal half-plane prescription.
//!
//! Poles that coincide on the same side of the real axis are merged into a
//! higher-order pole and handled through the Taylor coefficients of the
//! remaining factors. Coinciding poles on opposite sides pinch the contour
//! and are rejected.

use crate::error::{Error, Result};
use crate::operators::DENOMINATOR_THRESHOLD;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HalfPlane {
    Upper,
    Lower,
}

impl HalfPlane {
    /// Sign of the imaginary shift: `+1` for upper, `-1` for lower.
    pub fn sign(self) -> f64 {
        match self {
            HalfPlane::Upper => 1.0,
            HalfPlane::Lower => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pole {
    pub at: f64,
    pub half: HalfPlane,
}

/// A simple-pole factor `coeff / (ε − pole)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Factor {
    pub coeff: f64,
    pub pole: Pole,
}

#[derive(Debug, Clone, Copy)]
struct Group {
    at: f64,
    half: HalfPlane,
    order: usize,
}

fn group_poles(poles: &[Pole]) -> Result<Vec<Group>> {
    let mut groups: Vec<Group> = Vec::with_capacity(poles.len());
    for p in poles {
        match groups
            .iter_mut()
            .find(|g| (g.at - p.at).abs() < DENOMINATOR_THRESHOLD)
        {
            Some(g) if g.half == p.half => g.order += 1,
            Some(g) => {
                return Err(Error::degenerate(format!(
                    "poles at {} and {} pinch the real axis from opposite half-planes",
                    g.at, p.at
                )))
            }
            None => groups.push(Group {
                at: p.at,
                half: p.half,
                order: 1,
            }),
        }
    }
    Ok(groups)
}

/// Multiplies `acc` by the truncated series of `(d + t)^(-m)`.
fn mul_inverse_power_series(acc: &mut [f64], d: f64, m: usize) {
    let len = acc.len();
    let mut series = vec![0.0; len];
    series[0] = d.powi(-(m as i32));
    for n in 1..len {
        series[n] = series[n - 1] * (-((m + n - 1) as f64) / (n as f64 * d));
    }
    for k in (0..len).rev() {
        let mut s = 0.0;
        for n in 0..=k {
            s += acc[k - n] * series[n];
        }
        acc[k] = s;
    }
}

fn residue(groups: &[Group], at: usize) -> f64 {
    let g = groups[at];
    let mut acc = vec![0.0; g.order];
    acc[0] = 1.0;
    for (h, other) in groups.iter().enumerate() {
        if h != at {
            mul_inverse_power_series(&mut acc, g.at - other.at, other.order);
        }
    }
    acc[g.order - 1]
}

/// `i ∫ dε/2π Π_k 1/(ε − p_k)` in the limit of vanishing pole shifts.
///
/// Requires at least two poles so the arc at infinity vanishes.
pub fn contour_product(poles: &[Pole]) -> Result<f64> {
    if poles.len() < 2 {
        return Err(Error::invalid(
            "contour integral needs at least two poles to converge",
        ));
    }
    let groups = group_poles(poles)?;
    let weight = |half| -> usize {
        groups
            .iter()
            .filter(|g| g.half == half)
            .map(|g| g.order)
            .sum()
    };
    // close on the side with fewer (counted) poles
    let (side, sign) = if weight(HalfPlane::Upper) <= weight(HalfPlane::Lower) {
        (HalfPlane::Upper, -1.0)
    } else {
        (HalfPlane::Lower, 1.0)
    };
    let mut total = 0.0;
    for (k, g) in groups.iter().enumerate() {
        if g.half == side {
            total += residue(&groups, k);
        }
    }
    Ok(sign * total)
}

/// `i ∫ dε/2π Π_k coeff_k/(ε − p_k)`.
pub fn contour_factors(factors: &[Factor]) -> Result<f64> {
    let prefactor: f64 = factors.iter().map(|f| f.coeff).product();
    if prefactor == 0.0 {
        return Ok(0.0);
    }
    let poles: Vec<Pole> = factors.iter().map(|f| f.pole).collect();
    Ok(prefactor * contour_product(&poles)?)
}
