//! Model spectra, the two-particle product basis and model interactions.
//!
//! Pairs `(i, j)` are flattened row-major with the first particle index
//! slowest: `flat = i * n + j`. Single-particle states are ordered as the
//! positive energies (input order) followed by the negative energies.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Tolerance used for symmetry checks on assembled matrices.
pub const SYMMETRY_TOL: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sign {
    Positive,
    Negative,
}

impl Sign {
    pub fn of(e: f64) -> Sign {
        if e > 0.0 {
            Sign::Positive
        } else {
            Sign::Negative
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Sign::Positive => 1.0,
            Sign::Negative => -1.0,
        }
    }
}

/// Sign pattern of a two-particle pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SignPattern {
    PlusPlus,
    PlusMinus,
    MinusPlus,
    MinusMinus,
}

impl SignPattern {
    pub fn from_signs(a: Sign, b: Sign) -> Self {
        match (a, b) {
            (Sign::Positive, Sign::Positive) => SignPattern::PlusPlus,
            (Sign::Positive, Sign::Negative) => SignPattern::PlusMinus,
            (Sign::Negative, Sign::Positive) => SignPattern::MinusPlus,
            (Sign::Negative, Sign::Negative) => SignPattern::MinusMinus,
        }
    }

    pub fn is_mixed(self) -> bool {
        matches!(self, SignPattern::PlusMinus | SignPattern::MinusPlus)
    }
}

/// Single-particle model spectrum: a finite stand-in for the Dirac
/// eigenvalues of one electron.
#[derive(Debug, Clone, PartialEq)]
pub struct SingleParticleSpectrum {
    energies: Vec<f64>,
    signs: Vec<Sign>,
}

impl SingleParticleSpectrum {
    /// Positive states first, then negative states, each in input order.
    pub fn new(positive: &[f64], negative: &[f64]) -> Result<Self> {
        if positive.is_empty() {
            return Err(Error::config("positive_energies must not be empty"));
        }
        for &e in positive {
            if !e.is_finite() || e <= 0.0 {
                return Err(Error::config(format!(
                    "positive_energies entry {e} must be finite and > 0"
                )));
            }
        }
        for &e in negative {
            if !e.is_finite() || e >= 0.0 {
                return Err(Error::config(format!(
                    "negative_energies entry {e} must be finite and < 0"
                )));
            }
        }
        let energies: Vec<f64> = positive.iter().chain(negative).copied().collect();
        for (k, &a) in energies.iter().enumerate() {
            if energies[..k].contains(&a) {
                return Err(Error::config(format!("duplicate energy {a}")));
            }
        }
        let signs = energies.iter().map(|&e| Sign::of(e)).collect();
        Ok(Self { energies, signs })
    }

    /// `m + k*delta` / `-m - k*delta` ladder with `count` states per sign.
    pub fn dirac_like(count: usize, mass: f64, spacing: f64) -> Result<Self> {
        let pos: Vec<f64> = (0..count).map(|k| mass + k as f64 * spacing).collect();
        let neg: Vec<f64> = pos.iter().map(|e| -e).collect();
        Self::new(&pos, &neg)
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn energy(&self, i: usize) -> f64 {
        self.energies[i]
    }

    pub fn signs(&self) -> &[Sign] {
        &self.signs
    }

    pub fn sign(&self, i: usize) -> Sign {
        self.signs[i]
    }

    pub fn max_abs_energy(&self) -> f64 {
        self.energies.iter().fold(0.0_f64, |m, e| m.max(e.abs()))
    }
}

/// Tensor-product basis of the two-particle space.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoParticleBasis {
    n: usize,
    pairs: Vec<(usize, usize)>,
    patterns: Vec<SignPattern>,
    pair_energies: Vec<f64>,
}

impl TwoParticleBasis {
    pub fn new(spectrum: &SingleParticleSpectrum) -> Self {
        let n = spectrum.len();
        let mut pairs = Vec::with_capacity(n * n);
        let mut patterns = Vec::with_capacity(n * n);
        let mut pair_energies = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                pairs.push((i, j));
                patterns.push(SignPattern::from_signs(spectrum.sign(i), spectrum.sign(j)));
                pair_energies.push(spectrum.energy(i) + spectrum.energy(j));
            }
        }
        Self {
            n,
            pairs,
            patterns,
            pair_energies,
        }
    }

    pub fn n_single(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.pairs.len()
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.n + j
    }

    pub fn pair(&self, flat: usize) -> (usize, usize) {
        self.pairs[flat]
    }

    pub fn pattern(&self, flat: usize) -> SignPattern {
        self.patterns[flat]
    }

    pub fn patterns(&self) -> &[SignPattern] {
        &self.patterns
    }

    /// `e_i + e_j` for each flat index.
    pub fn pair_energies(&self) -> &[f64] {
        &self.pair_energies
    }

    pub fn indices_with(&self, pattern: SignPattern) -> Vec<usize> {
        (0..self.dim())
            .filter(|&p| self.patterns[p] == pattern)
            .collect()
    }
}

/// Dense real matrix on the two-particle space.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    matrix: DMatrix<f64>,
    hermitian: bool,
}

impl Operator {
    /// Wraps a square matrix; the hermitian flag is detected from the entries.
    pub fn new(matrix: DMatrix<f64>) -> Self {
        assert!(matrix.is_square(), "operator matrix must be square");
        let hermitian = is_symmetric(&matrix, SYMMETRY_TOL);
        Self { matrix, hermitian }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            matrix: DMatrix::zeros(dim, dim),
            hermitian: true,
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: DMatrix::identity(dim, dim),
            hermitian: true,
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        Self {
            matrix: DMatrix::from_diagonal(&DVector::from_column_slice(diag)),
            hermitian: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.matrix.diagonal().iter().copied().collect()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            matrix: &self.matrix * factor,
            hermitian: self.hermitian,
        }
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.matrix * v
    }

    /// `<u| A |v>`
    pub fn sandwich(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        u.dot(&(&self.matrix * v))
    }

    pub fn max_abs(&self) -> f64 {
        self.matrix.amax()
    }
}

pub(crate) fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    let n = m.nrows();
    if n != m.ncols() {
        return false;
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if (m[(i, j)] - m[(j, i)]).abs() > tol {
                return false;
            }
        }
    }
    true
}

/// Base matrix of a model interaction.
#[derive(Debug, Clone, PartialEq)]
pub enum MatrixSpec {
    /// Every entry 1.
    Ones,
    /// Upper triangle uniform in [-1, 1], mirrored; seeded.
    RandomSymmetric,
    /// Explicit row-major entries, must be symmetric.
    Explicit(Vec<Vec<f64>>),
}

impl MatrixSpec {
    pub fn preset_name(&self) -> Option<&'static str> {
        match self {
            MatrixSpec::Ones => Some("ones"),
            MatrixSpec::RandomSymmetric => Some("random-symmetric"),
            MatrixSpec::Explicit(_) => None,
        }
    }

    pub fn from_preset(name: &str) -> Result<Self> {
        match name {
            "ones" => Ok(MatrixSpec::Ones),
            "random-symmetric" => Ok(MatrixSpec::RandomSymmetric),
            other => Err(Error::config(format!(
                "unknown matrix preset '{other}' (expected 'ones' or 'random-symmetric')"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InteractionKind {
    Coulomb,
    Delta,
}

impl InteractionKind {
    fn stream(self) -> u64 {
        match self {
            InteractionKind::Coulomb => 0,
            InteractionKind::Delta => 1,
        }
    }
}

/// Model definition: spectrum plus the two interaction matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub positive_energies: Vec<f64>,
    pub negative_energies: Vec<f64>,
    pub coulomb_scale: f64,
    pub delta_scale: f64,
    pub coulomb_matrix: MatrixSpec,
    pub delta_matrix: MatrixSpec,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            positive_energies: vec![1.0, 1.5],
            negative_energies: vec![-1.0, -1.5],
            coulomb_scale: 0.1,
            delta_scale: 0.05,
            coulomb_matrix: MatrixSpec::Ones,
            delta_matrix: MatrixSpec::Ones,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.coulomb_scale >= 0.0) || !self.coulomb_scale.is_finite() {
            return Err(Error::config("coulomb_scale must be ≥ 0"));
        }
        if !(self.delta_scale >= 0.0) || !self.delta_scale.is_finite() {
            return Err(Error::config("delta_scale must be ≥ 0"));
        }
        SingleParticleSpectrum::new(&self.positive_energies, &self.negative_energies)?;
        Ok(())
    }

    /// Same model with both couplings multiplied by `factor`.
    pub fn with_coupling_factor(&self, factor: f64) -> Self {
        Self {
            coulomb_scale: self.coulomb_scale * factor,
            delta_scale: self.delta_scale * factor,
            ..self.clone()
        }
    }
}

pub fn build_spectrum(config: &ModelConfig) -> Result<SingleParticleSpectrum> {
    SingleParticleSpectrum::new(&config.positive_energies, &config.negative_energies)
}

pub fn build_basis(spectrum: &SingleParticleSpectrum) -> TwoParticleBasis {
    TwoParticleBasis::new(spectrum)
}

/// `scale * M` where `M` is the symmetric base matrix selected for `kind`.
pub fn build_interaction(
    config: &ModelConfig,
    kind: InteractionKind,
    dim: usize,
) -> Result<Operator> {
    let (scale, spec) = match kind {
        InteractionKind::Coulomb => (config.coulomb_scale, &config.coulomb_matrix),
        InteractionKind::Delta => (config.delta_scale, &config.delta_matrix),
    };
    let base = base_matrix(spec, dim, config.seed, kind)?;
    Ok(Operator::new(base * scale))
}

fn base_matrix(spec: &MatrixSpec, dim: usize, seed: u64, kind: InteractionKind) -> Result<DMatrix<f64>> {
    match spec {
        MatrixSpec::Ones => Ok(DMatrix::from_element(dim, dim, 1.0)),
        MatrixSpec::RandomSymmetric => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(kind.stream());
            let mut m = DMatrix::zeros(dim, dim);
            for i in 0..dim {
                for j in i..dim {
                    let x: f64 = rng.gen_range(-1.0..=1.0);
                    m[(i, j)] = x;
                    m[(j, i)] = x;
                }
            }
            Ok(m)
        }
        MatrixSpec::Explicit(rows) => {
            if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                return Err(Error::config(format!(
                    "explicit matrix must be {dim}×{dim} to match the two-particle basis"
                )));
            }
            let m = DMatrix::from_fn(dim, dim, |i, j| rows[i][j]);
            if !is_symmetric(&m, SYMMETRY_TOL) {
                return Err(Error::config("explicit interaction matrix is not symmetric"));
            }
            Ok(m)
        }
    }
}
