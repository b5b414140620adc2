//! Sign-sector projectors and the energy-independent composite operators.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{Operator, SignPattern, SingleParticleSpectrum, TwoParticleBasis};

/// Any diagonal inverse with |denominator| below this aborts.
pub const DENOMINATOR_THRESHOLD: f64 = 1e-10;

/// The four diagonal sector projectors Λ++, Λ+−, Λ−+, Λ−−.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectorSet {
    pub pp: Operator,
    pub pm: Operator,
    pub mp: Operator,
    pub mm: Operator,
}

impl ProjectorSet {
    pub fn dim(&self) -> usize {
        self.pp.dim()
    }

    /// `Λ++ − Λ−−`
    pub fn pp_minus_mm(&self) -> DMatrix<f64> {
        self.pp.matrix() - self.mm.matrix()
    }
}

pub fn projectors(basis: &TwoParticleBasis) -> ProjectorSet {
    let select = |want: SignPattern| {
        let diag: Vec<f64> = basis
            .patterns()
            .iter()
            .map(|&p| if p == want { 1.0 } else { 0.0 })
            .collect();
        Operator::from_diagonal(&diag)
    };
    ProjectorSet {
        pp: select(SignPattern::PlusPlus),
        pm: select(SignPattern::PlusMinus),
        mp: select(SignPattern::MinusPlus),
        mm: select(SignPattern::MinusMinus),
    }
}

/// Diagonal entries `E − e_i − e_j`.
pub fn energy_denominators(basis: &TwoParticleBasis, energy: f64) -> Vec<f64> {
    basis.pair_energies().iter().map(|s| energy - s).collect()
}

/// `D = E − h₁ − h₂`.
pub fn build_d(basis: &TwoParticleBasis, energy: f64) -> Operator {
    Operator::from_diagonal(&energy_denominators(basis, energy))
}

/// `D_c = E_c − h₁ − h₂`.
pub fn build_dc(basis: &TwoParticleBasis, e_c: f64) -> Operator {
    build_d(basis, e_c)
}

/// Inverts a diagonal operator, enforcing the singularity policy.
pub fn invert_diagonal(op: &Operator, what: &str) -> Result<Operator> {
    let diag = op.diagonal();
    let mut inv = Vec::with_capacity(diag.len());
    for (p, d) in diag.iter().enumerate() {
        if d.abs() < DENOMINATOR_THRESHOLD {
            return Err(Error::degenerate(format!(
                "{what} has |entry| {:.3e} < {DENOMINATOR_THRESHOLD:e} at flat index {p}",
                d.abs()
            )));
        }
        inv.push(1.0 / d);
    }
    Ok(Operator::from_diagonal(&inv))
}

/// `D⁻¹`
pub fn invert_d(basis: &TwoParticleBasis, energy: f64) -> Result<Operator> {
    invert_diagonal(&build_d(basis, energy), "D")
}

fn check_dim(op: &Operator, basis: &TwoParticleBasis, name: &str) -> Result<()> {
    if op.dim() != basis.dim() {
        return Err(Error::invalid(format!(
            "{name} has dimension {} but the basis has {}",
            op.dim(),
            basis.dim()
        )));
    }
    Ok(())
}

/// No-pair Coulomb operator `h₁ + h₂ + Λ++ I_c Λ++`.
pub fn build_hc(basis: &TwoParticleBasis, projectors: &ProjectorSet, coulomb: &Operator) -> Result<Operator> {
    check_dim(coulomb, basis, "I_c")?;
    if !coulomb.is_hermitian() {
        return Err(Error::invalid("I_c must be symmetric"));
    }
    let pp = projectors.pp.matrix();
    let h0 = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(basis.pair_energies()));
    let m = h0 + pp * coulomb.matrix() * pp;
    Ok(Operator::new(m))
}

/// Coulomb virtual-pair operator `Λ++ I_c (1 − Λ++) − Λ−− I_c`.
pub fn build_hdelta1(projectors: &ProjectorSet, coulomb: &Operator) -> Result<Operator> {
    if coulomb.dim() != projectors.dim() {
        return Err(Error::invalid("I_c dimension does not match the projectors"));
    }
    let n = coulomb.dim();
    let pp = projectors.pp.matrix();
    let mm = projectors.mm.matrix();
    let not_pp = DMatrix::identity(n, n) - pp;
    Ok(Operator::new(pp * coulomb.matrix() * not_pp - mm * coulomb.matrix()))
}

/// `(Λ++ − Λ−−) D⁻¹`: diagonal, zero on mixed pairs.
pub fn build_g0(basis: &TwoParticleBasis, energy: f64) -> Result<Operator> {
    let mut diag = vec![0.0; basis.dim()];
    for (p, d) in energy_denominators(basis, energy).into_iter().enumerate() {
        let sign = match basis.pattern(p) {
            SignPattern::PlusPlus => 1.0,
            SignPattern::MinusMinus => -1.0,
            _ => continue,
        };
        if d.abs() < DENOMINATOR_THRESHOLD {
            return Err(Error::degenerate(format!(
                "E − e_i − e_j = {d:.3e} on pair {:?}",
                basis.pair(p)
            )));
        }
        diag[p] = sign / d;
    }
    Ok(Operator::from_diagonal(&diag))
}

/// Convenience bundle of the fixed (energy-independent) model operators.
#[derive(Debug, Clone)]
pub struct ModelOperators {
    pub spectrum: SingleParticleSpectrum,
    pub basis: TwoParticleBasis,
    pub projectors: ProjectorSet,
    pub coulomb: Operator,
    pub delta: Operator,
    pub h_c: Operator,
    pub h_delta1: Operator,
}

impl ModelOperators {
    pub fn build(config: &crate::model::ModelConfig) -> Result<Self> {
        use crate::model::{build_basis, build_interaction, build_spectrum, InteractionKind};
        config.validate()?;
        let spectrum = build_spectrum(config)?;
        let basis = build_basis(&spectrum);
        let projectors = projectors(&basis);
        let coulomb = build_interaction(config, InteractionKind::Coulomb, basis.dim())?;
        let delta = build_interaction(config, InteractionKind::Delta, basis.dim())?;
        let h_c = build_hc(&basis, &projectors, &coulomb)?;
        let h_delta1 = build_hdelta1(&projectors, &coulomb)?;
        Ok(Self {
            spectrum,
            basis,
            projectors,
            coulomb,
            delta,
            h_c,
            h_delta1,
        })
    }
}
