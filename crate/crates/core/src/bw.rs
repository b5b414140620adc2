//! No-pair reference problem and the Brillouin–Wigner expansion around it.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Operator, SignPattern, TwoParticleBasis};
use crate::operators::DENOMINATOR_THRESHOLD;

/// Unit-norm amplitude vector on the two-particle basis.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector(DVector<f64>);

impl StateVector {
    pub fn new(v: DVector<f64>) -> Result<Self> {
        let norm = v.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::invalid("state vector must have finite non-zero norm"));
        }
        Ok(Self(v / norm))
    }

    pub fn unit(dim: usize, at: usize) -> Self {
        let mut v = DVector::zeros(dim);
        v[at] = 1.0;
        Self(v)
    }

    pub fn amplitudes(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// `<self| A |self>`
    pub fn expectation(&self, a: &DMatrix<f64>) -> f64 {
        self.0.dot(&(a * &self.0))
    }
}

/// Energies produced by a Brillouin–Wigner solve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyLedger {
    pub e_c: f64,
    /// `ΔE⁽¹⁾, ΔE⁽²⁾, …` evaluated at the final `e`.
    pub d_e: Vec<f64>,
    pub e: f64,
    /// `e − e_c`
    pub delta_e: f64,
    pub iterations: usize,
    pub residual: f64,
}

/// Diagonalizes the ++ block of `h_c` and returns eigenpair `state_index`
/// (0 = lowest), embedded in the full space.
pub fn solve_no_pair(h_c: &Operator, basis: &TwoParticleBasis, state_index: usize) -> Result<(f64, StateVector)> {
    let pp = basis.indices_with(SignPattern::PlusPlus);
    if pp.is_empty() {
        return Err(Error::invalid("the ++ subspace is empty"));
    }
    if state_index >= pp.len() {
        return Err(Error::config(format!(
            "state_index {state_index} out of range for a {}-dimensional ++ block",
            pp.len()
        )));
    }
    let block = DMatrix::from_fn(pp.len(), pp.len(), |a, b| h_c.matrix()[(pp[a], pp[b])]);
    let eig = SymmetricEigen::new(block);
    let mut order: Vec<usize> = (0..pp.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let k = order[state_index];
    let e_c = eig.eigenvalues[k];
    let col = eig.eigenvectors.column(k);
    // fix the overall sign: largest component positive
    let lead = col.iter().fold(0.0_f64, |m, &x| if x.abs() > m.abs() { x } else { m });
    let sign = if lead < 0.0 { -1.0 } else { 1.0 };
    let mut full = DVector::zeros(basis.dim());
    for (a, &p) in pp.iter().enumerate() {
        full[p] = sign * col[a];
    }
    Ok((e_c, StateVector::new(full)?))
}

/// Reduced resolvent `Γ(E) = Q (E − H_c)⁻¹ Q`, `Q = 1 − |Ψ_c⟩⟨Ψ_c|`.
///
/// Solved as `[Q (E − H_c) Q + P] x = Q v`, which is regular whenever `E`
/// avoids the Q-space spectrum of `H_c`.
pub struct Resolvent {
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    psi: DVector<f64>,
}

impl Resolvent {
    pub fn new(h_c: &DMatrix<f64>, energy: f64, psi_c: &StateVector) -> Result<Self> {
        let n = h_c.nrows();
        let psi = psi_c.amplitudes().clone();
        let p = &psi * psi.transpose();
        let q = DMatrix::identity(n, n) - &p;
        let shifted = DMatrix::identity(n, n) * energy - h_c;
        let m = &q * shifted * &q + p;
        let lu = m.lu();
        let min_pivot = lu.u().diagonal().iter().fold(f64::INFINITY, |m, x| m.min(x.abs()));
        if !(min_pivot >= DENOMINATOR_THRESHOLD) {
            return Err(Error::Singular(format!(
                "E = {energy} hits the Q-space spectrum of H_c (pivot {min_pivot:.3e})"
            )));
        }
        Ok(Self { lu, psi })
    }

    fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        v - &self.psi * self.psi.dot(v)
    }

    /// `Γ v`
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let rhs = self.project(v);
        let x = self.lu.solve(&rhs).expect("factorization checked non-singular");
        self.project(&x)
    }

    /// Dense `Γ`.
    pub fn matrix(&self) -> DMatrix<f64> {
        let n = self.psi.len();
        let mut out = DMatrix::zeros(n, n);
        for k in 0..n {
            let mut e = DVector::zeros(n);
            e[k] = 1.0;
            out.set_column(k, &self.apply(&e));
        }
        out
    }
}

/// `Γ(E) v`.
pub fn resolvent_apply(h_c: &Operator, energy: f64, psi_c: &StateVector, v: &DVector<f64>) -> Result<DVector<f64>> {
    Ok(Resolvent::new(h_c.matrix(), energy, psi_c)?.apply(v))
}

/// Highest Brillouin–Wigner order supported.
pub const MAX_BW_ORDER: usize = 3;

/// `ΔE⁽ⁿ⁾ = ⟨Ψ_c| H_Δ (Γ H_Δ)ⁿ⁻¹ |Ψ_c⟩` for `n = 1..=order`, with both
/// `H_Δ` and `Γ` taken at `energy`.
pub fn bw_terms<F>(h_c: &Operator, h_delta: &F, energy: f64, psi_c: &StateVector, order: usize) -> Result<Vec<f64>>
where
    F: Fn(f64) -> Result<Operator>,
{
    if order == 0 || order > MAX_BW_ORDER {
        return Err(Error::config(format!(
            "Brillouin–Wigner order must be in 1..={MAX_BW_ORDER}, got {order}"
        )));
    }
    let hd = h_delta(energy)?;
    let psi = psi_c.amplitudes();
    let mut terms = Vec::with_capacity(order);
    let mut chain = hd.apply(psi);
    terms.push(psi.dot(&chain));
    if order > 1 {
        let gamma = Resolvent::new(h_c.matrix(), energy, psi_c)?;
        for _ in 1..order {
            chain = hd.apply(&gamma.apply(&chain));
            terms.push(psi.dot(&chain));
        }
    }
    Ok(terms)
}

/// A step larger than this multiple of `max(1, |E_c|)` counts as divergence.
pub const DIVERGENCE_FACTOR: f64 = 1e12;

/// Controls for [`bw_selfconsistent`].
#[derive(Debug, Clone, PartialEq)]
pub struct BwSettings {
    pub order: usize,
    pub max_iter: usize,
    /// Absolute step tolerance; `None` means `1e-12 · max(1, |E_c|)`.
    pub tol: Option<f64>,
}

impl Default for BwSettings {
    fn default() -> Self {
        Self {
            order: 3,
            max_iter: 200,
            tol: None,
        }
    }
}

impl BwSettings {
    pub fn validate(&self) -> Result<()> {
        if self.order == 0 || self.order > MAX_BW_ORDER {
            return Err(Error::config(format!("bw.order must be in 1..={MAX_BW_ORDER}")));
        }
        if self.max_iter == 0 {
            return Err(Error::config("bw.max_iter must be ≥ 1"));
        }
        if let Some(t) = self.tol {
            if !(t > 0.0) {
                return Err(Error::config("bw.tol must be > 0"));
            }
        }
        Ok(())
    }

    pub fn tolerance(&self, e_c: f64) -> f64 {
        self.tol.unwrap_or(1e-12 * e_c.abs().max(1.0))
    }
}

/// Fixed-point iteration `E ← E_c + Σₙ ΔE⁽ⁿ⁾(E)` starting from `E_c`.
///
/// Undamped while the steps contract; a step that flips sign without
/// shrinking below half its predecessor halves the damping factor (floor
/// 1/64).
pub fn bw_selfconsistent<F>(
    h_c: &Operator,
    h_delta: &F,
    psi_c: &StateVector,
    e_c: f64,
    settings: &BwSettings,
) -> Result<EnergyLedger>
where
    F: Fn(f64) -> Result<Operator>,
{
    settings.validate()?;
    let tol = settings.tolerance(e_c);
    let mut energy = e_c;
    let mut damping = 1.0_f64;
    let mut prev_step: Option<f64> = None;
    let mut last_step = f64::NAN;
    for it in 1..=settings.max_iter {
        let d_e = bw_terms(h_c, h_delta, energy, psi_c, settings.order)?;
        let target = e_c + d_e.iter().sum::<f64>();
        let step = target - energy;
        // a runaway iterate would only end in a spurious pole collision
        if !step.is_finite() || step.abs() > DIVERGENCE_FACTOR * e_c.abs().max(1.0) {
            return Err(Error::NonConvergence {
                iterations: it,
                last: energy,
                step,
            });
        }
        if step.abs() < tol {
            return Ok(EnergyLedger {
                e_c,
                d_e,
                e: energy,
                delta_e: energy - e_c,
                iterations: it,
                residual: step.abs(),
            });
        }
        if let Some(prev) = prev_step {
            if prev * step < 0.0 && step.abs() > 0.5 * prev.abs() {
                damping = (damping * 0.5).max(1.0 / 64.0);
            }
        }
        prev_step = Some(step);
        last_step = step;
        energy += damping * step;
    }
    Err(Error::NonConvergence {
        iterations: settings.max_iter,
        last: energy,
        step: last_step,
    })
}
