//! Relative-energy propagator algebra.
//!
//! For a pair `(i, j)` at total energy `E` the two electron propagators are
//!
//! ```text
//! S1_i(ε) = 1 / (E/2 + ε − e_i + iη·sgn e_i)
//! S2_j(ε) = 1 / (E/2 − ε − e_j + iη·sgn e_j)
//! ```
//!
//! and `F⁻¹ = S1·S2`. Every ε-integral here is `i ∫ dε/2π` of a product of
//! such factors, evaluated exactly by residues ([`residue`]) or numerically
//! along the real axis ([`quadrature`]).

pub mod quadrature;
pub mod residue;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{Operator, Sign, SingleParticleSpectrum, TwoParticleBasis};
use residue::{contour_factors, Factor, HalfPlane, Pole};

/// Quadrature and truncation controls.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegrationSettings {
    /// Pole shifts used by the quadrature oracle before η → 0 extrapolation.
    pub eta_sequence: Vec<f64>,
    /// Gauss–Legendre nodes per panel.
    pub quadrature_points: usize,
    /// Integration range is `[-L, L]` with `L = cutoff_factor · max|e|`.
    pub cutoff_factor: f64,
    /// Number of terms `K` kept in the `J` series.
    pub j_order: usize,
}

impl Default for IntegrationSettings {
    fn default() -> Self {
        Self {
            eta_sequence: vec![1e-2, 5e-3, 2.5e-3, 1.25e-3],
            quadrature_points: 16,
            cutoff_factor: 1e4,
            j_order: 2,
        }
    }
}

impl IntegrationSettings {
    pub fn validate(&self) -> Result<()> {
        if self.eta_sequence.is_empty() {
            return Err(Error::config("eta_sequence must not be empty"));
        }
        if self.eta_sequence.iter().any(|&e| !(e > 0.0) || !e.is_finite()) {
            return Err(Error::config("eta_sequence entries must be > 0"));
        }
        for (k, e) in self.eta_sequence.iter().enumerate() {
            if self.eta_sequence[..k].contains(e) {
                return Err(Error::config("eta_sequence entries must be distinct"));
            }
        }
        if self.quadrature_points < 2 {
            return Err(Error::config("quadrature_points must be ≥ 2"));
        }
        if !(self.cutoff_factor >= 100.0) {
            return Err(Error::config("cutoff_factor must be ≥ 100"));
        }
        if self.j_order < 1 {
            return Err(Error::config("j_order must be ≥ 1"));
        }
        Ok(())
    }

    pub fn cutoff(&self, spectrum: &SingleParticleSpectrum) -> f64 {
        self.cutoff_factor * spectrum.max_abs_energy()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Particle {
    First,
    Second,
}

fn half_plane(sign: Sign, particle: Particle) -> HalfPlane {
    match (particle, sign) {
        (Particle::First, Sign::Positive) | (Particle::Second, Sign::Negative) => HalfPlane::Lower,
        _ => HalfPlane::Upper,
    }
}

/// The single-particle propagator factors at one total energy.
#[derive(Debug, Clone)]
pub struct PropagatorTable {
    s1: Vec<Factor>,
    s2: Vec<Factor>,
}

impl PropagatorTable {
    pub fn new(spectrum: &SingleParticleSpectrum, energy: f64) -> Self {
        let half = 0.5 * energy;
        let s1 = spectrum
            .energies()
            .iter()
            .zip(spectrum.signs())
            .map(|(&e, &s)| Factor {
                coeff: 1.0,
                pole: Pole {
                    at: e - half,
                    half: half_plane(s, Particle::First),
                },
            })
            .collect();
        let s2 = spectrum
            .energies()
            .iter()
            .zip(spectrum.signs())
            .map(|(&e, &s)| Factor {
                coeff: -1.0,
                pole: Pole {
                    at: half - e,
                    half: half_plane(s, Particle::Second),
                },
            })
            .collect();
        Self { s1, s2 }
    }

    pub fn s1(&self, i: usize) -> Factor {
        self.s1[i]
    }

    pub fn s2(&self, j: usize) -> Factor {
        self.s2[j]
    }

    /// `[S1_i, S2_j]` for flat pair index `p`.
    pub fn pair(&self, basis: &TwoParticleBasis, p: usize) -> [Factor; 2] {
        let (i, j) = basis.pair(p);
        [self.s1[i], self.s2[j]]
    }

    /// Real parts of every pole, for quadrature grids.
    fn pole_positions(&self) -> Vec<f64> {
        self.s1.iter().chain(&self.s2).map(|f| f.pole.at).collect()
    }
}

/// Diagonal of `S1` (or `S2`) at `(E, ε)` with finite shift `eta`, lifted to
/// the two-particle basis.
pub fn propagator_s(
    spectrum: &SingleParticleSpectrum,
    basis: &TwoParticleBasis,
    energy: f64,
    eps: f64,
    particle: Particle,
    eta: f64,
) -> DVector<Complex64> {
    DVector::from_iterator(
        basis.dim(),
        (0..basis.dim()).map(|p| {
            let (i, j) = basis.pair(p);
            let (sign, re) = match particle {
                Particle::First => (spectrum.sign(i), 0.5 * energy + eps - spectrum.energy(i)),
                Particle::Second => (spectrum.sign(j), 0.5 * energy - eps - spectrum.energy(j)),
            };
            Complex64::new(re, eta * sign.as_f64()).inv()
        }),
    )
}

/// `i ∫ dε/2π F⁻¹` by residues: `±1/(E − e_i − e_j)` on ++ / −− pairs, zero
/// on mixed pairs.
pub fn contour_integral_finv(
    spectrum: &SingleParticleSpectrum,
    basis: &TwoParticleBasis,
    energy: f64,
) -> Result<Operator> {
    let table = PropagatorTable::new(spectrum, energy);
    let diag = (0..basis.dim())
        .map(|p| contour_factors(&table.pair(basis, p)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Operator::from_diagonal(&diag))
}

/// Integral over a chain of pair propagators `F⁻¹_{p0} F⁻¹_{p1} ⋯`.
pub fn path_integral(table: &PropagatorTable, basis: &TwoParticleBasis, path: &[usize]) -> Result<f64> {
    let factors: Vec<Factor> = path.iter().flat_map(|&p| table.pair(basis, p)).collect();
    contour_factors(&factors)
}

/// `X = i ∫ dε/2π F⁻¹ A F⁻¹` for an ε-independent `A`.
pub fn sandwich_integral(
    spectrum: &SingleParticleSpectrum,
    basis: &TwoParticleBasis,
    energy: f64,
    a: &Operator,
) -> Result<Operator> {
    check_dim(a, basis)?;
    let table = PropagatorTable::new(spectrum, energy);
    let dim = basis.dim();
    let rows: Vec<Vec<f64>> = (0..dim)
        .into_par_iter()
        .map(|p| {
            (0..dim)
                .map(|q| {
                    let w = a.matrix()[(p, q)];
                    if w == 0.0 {
                        Ok(0.0)
                    } else {
                        Ok(w * path_integral(&table, basis, &[p, q])?)
                    }
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    Ok(Operator::new(DMatrix::from_fn(dim, dim, |p, q| rows[p][q])))
}

fn check_dim(a: &Operator, basis: &TwoParticleBasis) -> Result<()> {
    if a.dim() != basis.dim() {
        return Err(Error::invalid(format!(
            "operator dimension {} does not match basis dimension {}",
            a.dim(),
            basis.dim()
        )));
    }
    Ok(())
}

/// How the two end propagators of a chain are written.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EndForm {
    /// `F⁻¹ = S1 S2`
    Product,
    /// `S1 + S2`, i.e. `D·F⁻¹`
    Sum,
}

/// Sum over all chains `p0 → p1 → … → pk → q` of
/// `g[p0,p1]⋯g[pk,q] · i∫ (end p0) F⁻¹_{p1}⋯F⁻¹_{pk} (end q)`.
fn chain_term(
    table: &PropagatorTable,
    basis: &TwoParticleBasis,
    g: &DMatrix<f64>,
    k: usize,
    ends: EndForm,
) -> Result<Operator> {
    let dim = basis.dim();
    let rows: Vec<Vec<f64>> = (0..dim)
        .into_par_iter()
        .map(|p0| {
            let mut row = vec![0.0; dim];
            let mut path = vec![p0];
            walk(table, basis, g, k, ends, &mut path, 1.0, &mut row)?;
            Ok(row)
        })
        .collect::<Result<_>>()?;
    Ok(Operator::new(DMatrix::from_fn(dim, dim, |p, q| rows[p][q])))
}

#[allow(clippy::too_many_arguments)]
fn walk(
    table: &PropagatorTable,
    basis: &TwoParticleBasis,
    g: &DMatrix<f64>,
    k: usize,
    ends: EndForm,
    path: &mut Vec<usize>,
    weight: f64,
    row: &mut [f64],
) -> Result<()> {
    let last = *path.last().expect("path starts non-empty");
    let dim = basis.dim();
    for next in 0..dim {
        let w = weight * g[(last, next)];
        if w == 0.0 {
            continue;
        }
        path.push(next);
        if path.len() == k + 2 {
            row[next] += w * chain_value(table, basis, path, ends)?;
        } else {
            walk(table, basis, g, k, ends, path, w, row)?;
        }
        path.pop();
    }
    Ok(())
}

fn chain_value(table: &PropagatorTable, basis: &TwoParticleBasis, path: &[usize], ends: EndForm) -> Result<f64> {
    match ends {
        EndForm::Product => path_integral(table, basis, path),
        EndForm::Sum => {
            let (first, rest) = path.split_first().expect("non-empty");
            let (last, middle) = rest.split_last().expect("length ≥ 2");
            let middle: Vec<Factor> = middle.iter().flat_map(|&p| table.pair(basis, p)).collect();
            let mut total = 0.0;
            for l in table.pair(basis, *first) {
                for r in table.pair(basis, *last) {
                    let mut factors = Vec::with_capacity(middle.len() + 2);
                    factors.push(l);
                    factors.extend_from_slice(&middle);
                    factors.push(r);
                    total += contour_factors(&factors)?;
                }
            }
            Ok(total)
        }
    }
}

/// Terms `i ∫ dε/2π F⁻¹ (g F⁻¹)^k g F⁻¹` for `k = 0..order`.
pub fn j_series(
    spectrum: &SingleParticleSpectrum,
    basis: &TwoParticleBasis,
    energy: f64,
    g_delta: &Operator,
    order: usize,
) -> Result<Vec<Operator>> {
    if order < 1 {
        return Err(Error::invalid("j_series order must be ≥ 1"));
    }
    check_dim(g_delta, basis)?;
    let table = PropagatorTable::new(spectrum, energy);
    (0..order)
        .map(|k| chain_term(&table, basis, g_delta.matrix(), k, EndForm::Product))
        .collect()
}

/// Sum of the [`j_series`] terms: `i ∫ dε/2π F⁻¹ J F⁻¹` truncated at `order`.
pub fn j_sandwich(
    spectrum: &SingleParticleSpectrum,
    basis: &TwoParticleBasis,
    energy: f64,
    g_delta: &Operator,
    order: usize,
) -> Result<Operator> {
    let terms = j_series(spectrum, basis, energy, g_delta, order)?;
    Ok(sum_operators(basis.dim(), terms))
}

/// `Z = i ∫ dε/2π (S1+S2) J (S1+S2)` truncated at `order`, computed from the
/// propagator sums rather than from `F⁻¹` (so `X = D⁻¹ Z D⁻¹`).
pub fn j_sandwich_sum_form(
    spectrum: &SingleParticleSpectrum,
    basis: &TwoParticleBasis,
    energy: f64,
    g_delta: &Operator,
    order: usize,
) -> Result<Operator> {
    if order < 1 {
        return Err(Error::invalid("j_series order must be ≥ 1"));
    }
    check_dim(g_delta, basis)?;
    let table = PropagatorTable::new(spectrum, energy);
    let terms = (0..order)
        .map(|k| chain_term(&table, basis, g_delta.matrix(), k, EndForm::Sum))
        .collect::<Result<Vec<_>>>()?;
    Ok(sum_operators(basis.dim(), terms))
}

fn sum_operators(dim: usize, terms: Vec<Operator>) -> Operator {
    let m = terms
        .into_iter()
        .fold(DMatrix::zeros(dim, dim), |acc, t| acc + t.into_matrix());
    Operator::new(m)
}

/// Outcome of the quadrature oracle after η → 0 extrapolation.
#[derive(Debug, Clone)]
pub struct OracleResult {
    pub value: DMatrix<f64>,
    /// Extrapolated imaginary part; should vanish for real symmetric input.
    pub imag: DMatrix<f64>,
}

impl OracleResult {
    pub fn max_imag(&self) -> f64 {
        self.imag.amax()
    }
}

/// Finite-η pole positions `(s1, s2)` as complex numbers.
fn shifted_poles(spectrum: &SingleParticleSpectrum, energy: f64, eta: f64) -> (Vec<Complex64>, Vec<Complex64>) {
    let half = 0.5 * energy;
    let s1 = spectrum
        .energies()
        .iter()
        .map(|&e| Complex64::new(e - half, -eta * Sign::of(e).as_f64()))
        .collect();
    let s2 = spectrum
        .energies()
        .iter()
        .map(|&e| Complex64::new(half - e, eta * Sign::of(e).as_f64()))
        .collect();
    (s1, s2)
}

/// Finite-η `F⁻¹_p(ε)` for every pair.
fn finv_at(basis: &TwoParticleBasis, s1: &[Complex64], s2: &[Complex64], eps: f64, out: &mut [Complex64]) {
    let n = basis.n_single();
    let e = Complex64::new(eps, 0.0);
    let a: Vec<Complex64> = s1.iter().map(|p| (e - p).inv()).collect();
    let b: Vec<Complex64> = s2.iter().map(|p| -(e - p).inv()).collect();
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = a[i] * b[j];
        }
    }
}

/// Runs `integrand` for every η, multiplies by `i/2π`, then extrapolates.
fn oracle_run<F>(
    spectrum: &SingleParticleSpectrum,
    energy: f64,
    settings: &IntegrationSettings,
    len: usize,
    tail: &[f64],
    decay: u32,
    integrand: F,
) -> Result<quadrature::Extrapolated>
where
    F: Fn(&[Complex64], &[Complex64], f64, &mut [Complex64]) + Sync,
{
    settings.validate()?;
    let centers = PropagatorTable::new(spectrum, energy).pole_positions();
    let cutoff = settings.cutoff(spectrum);
    let samples = settings
        .eta_sequence
        .par_iter()
        .map(|&eta| {
            let (s1, s2) = shifted_poles(spectrum, energy, eta);
            let raw = quadrature::line_integral(
                &centers,
                eta,
                cutoff,
                settings.quadrature_points,
                len,
                tail,
                decay,
                |eps, out| integrand(&s1, &s2, eps, out),
            )?;
            let i_over_2pi = Complex64::new(0.0, 0.5 / std::f64::consts::PI);
            Ok(raw.into_iter().map(|z| z * i_over_2pi).collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    quadrature::extrapolate(&settings.eta_sequence, &samples)
}

/// Quadrature check of [`contour_integral_finv`].
pub fn quadrature_oracle_finv(
    spectrum: &SingleParticleSpectrum,
    basis: &TwoParticleBasis,
    energy: f64,
    settings: &IntegrationSettings,
) -> Result<OracleResult> {
    let dim = basis.dim();
    let tail = vec![-1.0; dim];
    let ex = oracle_run(spectrum, energy, settings, dim, &tail, 2, |s1, s2, eps, out| {
        finv_at(basis, s1, s2, eps, out)
    })?;
    Ok(OracleResult {
        value: DMatrix::from_diagonal(&DVector::from_vec(ex.real)),
        imag: DMatrix::from_diagonal(&DVector::from_vec(ex.imag)),
    })
}

/// Quadrature check of [`sandwich_integral`]: `i ∫ dε/2π S1S2 A S1S2`.
pub fn quadrature_oracle(
    spectrum: &SingleParticleSpectrum,
    basis: &TwoParticleBasis,
    energy: f64,
    a: &Operator,
    settings: &IntegrationSettings,
) -> Result<OracleResult> {
    check_dim(a, basis)?;
    let dim = basis.dim();
    let am = a.matrix();
    let tail: Vec<f64> = (0..dim * dim).map(|k| am[(k / dim, k % dim)]).collect();
    let ex = oracle_run(spectrum, energy, settings, dim * dim, &tail, 4, |s1, s2, eps, out| {
        let mut f = vec![Complex64::new(0.0, 0.0); dim];
        finv_at(basis, s1, s2, eps, &mut f);
        for p in 0..dim {
            for q in 0..dim {
                out[p * dim + q] = f[p] * am[(p, q)] * f[q];
            }
        }
    })?;
    Ok(OracleResult {
        value: DMatrix::from_fn(dim, dim, |p, q| ex.real[p * dim + q]),
        imag: DMatrix::from_fn(dim, dim, |p, q| ex.imag[p * dim + q]),
    })
}

/// Quadrature value of a single chain `i ∫ dε/2π Π_m F⁻¹_{path[m]}`.
/// Returns `(real, imag)` after extrapolation.
pub fn quadrature_path(
    spectrum: &SingleParticleSpectrum,
    basis: &TwoParticleBasis,
    energy: f64,
    path: &[usize],
    settings: &IntegrationSettings,
) -> Result<(f64, f64)> {
    if path.is_empty() {
        return Err(Error::invalid("path must contain at least one pair"));
    }
    let sign = if path.len().is_multiple_of(2) { 1.0 } else { -1.0 };
    let dim = basis.dim();
    let ex = oracle_run(
        spectrum,
        energy,
        settings,
        1,
        &[sign],
        2 * path.len() as u32,
        |s1, s2, eps, out| {
            let mut f = vec![Complex64::new(0.0, 0.0); dim];
            finv_at(basis, s1, s2, eps, &mut f);
            out[0] = path.iter().map(|&p| f[p]).product();
        },
    )?;
    Ok((ex.real[0], ex.imag[0]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_basis, SingleParticleSpectrum};

    fn fixture() -> (SingleParticleSpectrum, TwoParticleBasis) {
        let s = SingleParticleSpectrum::new(&[1.0], &[-1.2]).unwrap();
        let b = build_basis(&s);
        (s, b)
    }

    #[test]
    fn propagator_value() {
        let s = SingleParticleSpectrum::new(&[1.0], &[]).unwrap();
        let b = build_basis(&s);
        let v = propagator_s(&s, &b, 2.1, 0.0, Particle::First, 1e-6);
        assert!((v[0].re - 20.0).abs() < 1e-6);
        assert!(v[0].im.abs() < 1e-6 / 0.0025 * 1.01);
    }

    #[test]
    fn finv_residues() {
        let (s, b) = fixture();
        let g = contour_integral_finv(&s, &b, 2.1).unwrap().diagonal();
        assert!((g[0] - 10.0).abs() < 1e-12);
        assert_eq!(g[1], 0.0);
        assert_eq!(g[2], 0.0);
        assert!((g[3] + 1.0 / 4.5).abs() < 1e-14);
        assert!(matches!(
            contour_integral_finv(&s, &b, 2.0),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn sandwich_double_pole() {
        let s = SingleParticleSpectrum::new(&[1.0], &[]).unwrap();
        let b = build_basis(&s);
        let a = Operator::from_diagonal(&[1.0]);
        let x = sandwich_integral(&s, &b, 2.1, &a).unwrap();
        // 2/(E − 2e)^3
        assert!((x.matrix()[(0, 0)] - 2000.0).abs() < 1e-9);
        let z = sandwich_integral(&s, &b, 2.1, &Operator::zeros(1)).unwrap();
        assert_eq!(z.max_abs(), 0.0);
    }

    #[test]
    fn sandwich_empty_half_plane() {
        // (+,−) with (+,−): S1 poles of positive states and S2 poles of
        // negative states all sit in the lower half-plane
        let (s, b) = fixture();
        let mut a = DMatrix::zeros(4, 4);
        a[(1, 1)] = 1.0;
        let x = sandwich_integral(&s, &b, 2.1, &Operator::new(a)).unwrap();
        assert_eq!(x.matrix()[(1, 1)], 0.0);
    }

    #[test]
    fn j_series_first_term_is_sandwich() {
        let (s, b) = fixture();
        let g = Operator::new(DMatrix::from_fn(4, 4, |i, j| 0.01 * (1 + i + j) as f64));
        let terms = j_series(&s, &b, 2.1, &g, 1).unwrap();
        let x = sandwich_integral(&s, &b, 2.1, &g).unwrap();
        assert!((terms[0].matrix() - x.matrix()).amax() < 1e-15 * x.max_abs());

        let zero = j_series(&s, &b, 2.1, &Operator::zeros(4), 3).unwrap();
        assert_eq!(zero.len(), 3);
        assert!(zero.iter().all(|t| t.max_abs() == 0.0));
        assert!(j_series(&s, &b, 2.1, &g, 0).is_err());
    }

    #[test]
    fn j_series_second_term_single_state() {
        // i∫ (F⁻¹)^3 on one ++ pair = C(4,2)/D^5 = 6 at D = 1
        let s = SingleParticleSpectrum::new(&[1.0], &[]).unwrap();
        let b = build_basis(&s);
        let gamma = 0.3;
        let terms = j_series(&s, &b, 3.0, &Operator::from_diagonal(&[gamma]), 2).unwrap();
        assert!((terms[1].matrix()[(0, 0)] - 6.0 * gamma * gamma).abs() < 1e-12);
    }

    #[test]
    fn sum_form_matches_product_form() {
        let s = SingleParticleSpectrum::new(&[1.0, 1.5], &[-1.2]).unwrap();
        let b = build_basis(&s);
        let dim = b.dim();
        let g = Operator::new(DMatrix::from_fn(dim, dim, |i, j| {
            0.02 * (((i * 7 + j * 7) % 5) as f64 - 2.0)
        }));
        let e = 2.13;
        let x = j_sandwich(&s, &b, e, &g, 2).unwrap();
        let z = j_sandwich_sum_form(&s, &b, e, &g, 2).unwrap();
        let d = crate::operators::energy_denominators(&b, e);
        for p in 0..dim {
            for q in 0..dim {
                let via_z = z.matrix()[(p, q)] / (d[p] * d[q]);
                let direct = x.matrix()[(p, q)];
                assert!(
                    (via_z - direct).abs() < 1e-10 * (1.0 + direct.abs()),
                    "({p},{q}): {via_z} vs {direct}"
                );
            }
        }
    }
}
