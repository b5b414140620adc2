//! The disputed first/second-order combination, evaluated both ways.
//!
//! With `X = i∫dε/2π F⁻¹ J F⁻¹` (truncated `J` series) and `Y = X·I_c`:
//!
//! ```text
//! ΔE⁽¹⁾      = ⟨Ψ_c| D X I_c |Ψ_c⟩
//! ΔE_b⁽²⁾    = ⟨Ψ_c| H_Δ1 Γ D X I_c |Ψ_c⟩ = ⟨Ψ_c| (I_c − D_c) X I_c |Ψ_c⟩
//! lindgren   = ⟨Ψ_c| (I_c + ΔE) Y |Ψ_c⟩
//! dkz        = ⟨Ψ_c| (I_c − ΔE) Y |Ψ_c⟩
//! ```
//!
//! Since `D − D_c = ΔE`, the direct terms add up to `lindgren`; `dkz` is off
//! by `2ΔE⟨Y⟩`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::bw::{bw_selfconsistent, solve_no_pair, BwSettings, EnergyLedger, Resolvent, StateVector};
use crate::error::{Error, Result};
use crate::model::{ModelConfig, Operator};
use crate::operators::{build_d, build_dc, invert_d, invert_diagonal, ModelOperators};
use crate::propagators::{j_sandwich, j_sandwich_sum_form, IntegrationSettings};
use crate::scaling::{power_law_fit, PowerFit};

/// Sign convention for the `ΔE` term of the combined expression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Convention {
    Lindgren,
    Dkz,
    /// `dkz` with `D` replaced by `D_c` inside the propagator-sum transform.
    DkzDcApprox,
}

/// `i∫dε/2π F⁻¹ J F⁻¹` at `energy`.
pub fn x_j(ops: &ModelOperators, energy: f64, settings: &IntegrationSettings) -> Result<Operator> {
    j_sandwich(&ops.spectrum, &ops.basis, energy, &ops.delta, settings.j_order)
}

/// `H_Δ2(E) = D(E) · X_J(E) · I_c`.
pub fn h_delta2(ops: &ModelOperators, energy: f64, settings: &IntegrationSettings) -> Result<Operator> {
    let x = x_j(ops, energy, settings)?;
    let d = build_d(&ops.basis, energy);
    Ok(Operator::new(d.matrix() * x.matrix() * ops.coulomb.matrix()))
}

/// `H_Δ(E) = H_Δ1 + H_Δ2(E)`.
pub fn h_delta(ops: &ModelOperators, energy: f64, settings: &IntegrationSettings) -> Result<Operator> {
    let h2 = h_delta2(ops, energy, settings)?;
    Ok(Operator::new(ops.h_delta1.matrix() + h2.matrix()))
}

fn expect(psi: &StateVector, m: &DMatrix<f64>) -> f64 {
    psi.expectation(m)
}

/// `⟨Ψ_c| D X_J I_c |Ψ_c⟩` at `energy`.
pub fn delta_e1_direct(
    ops: &ModelOperators,
    energy: f64,
    psi_c: &StateVector,
    settings: &IntegrationSettings,
) -> Result<f64> {
    Ok(expect(psi_c, h_delta2(ops, energy, settings)?.matrix()))
}

/// Both forms of the second-order `H_Δ1`–`H_Δ2` cross term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecondOrderB {
    /// `⟨Ψ_c| (I_c − D_c) X_J I_c |Ψ_c⟩`
    pub reduced: f64,
    /// `⟨Ψ_c| H_Δ1 Γ(E) H_Δ2(E) |Ψ_c⟩`
    pub resolvent_form: f64,
}

impl SecondOrderB {
    pub fn residual(&self) -> f64 {
        relative(self.resolvent_form - self.reduced, self.reduced)
    }
}

pub fn delta_e2b_direct(
    ops: &ModelOperators,
    energy: f64,
    e_c: f64,
    psi_c: &StateVector,
    settings: &IntegrationSettings,
) -> Result<SecondOrderB> {
    let x = x_j(ops, energy, settings)?;
    let ic = ops.coulomb.matrix();
    let dc = build_dc(&ops.basis, e_c);
    let reduced = expect(psi_c, &((ic - dc.matrix()) * x.matrix() * ic));

    let h2 = build_d(&ops.basis, energy).matrix() * x.matrix() * ic;
    let gamma = Resolvent::new(ops.h_c.matrix(), energy, psi_c)?;
    let right = gamma.apply(&(h2 * psi_c.amplitudes()));
    let left = ops.h_delta1.matrix().transpose() * psi_c.amplitudes();
    Ok(SecondOrderB {
        reduced,
        resolvent_form: left.dot(&right),
    })
}

/// `⟨Ψ_c| X_J I_c |Ψ_c⟩`.
pub fn y_expectation(ops: &ModelOperators, energy: f64, psi_c: &StateVector, settings: &IntegrationSettings) -> Result<f64> {
    let x = x_j(ops, energy, settings)?;
    Ok(expect(psi_c, &(x.matrix() * ops.coulomb.matrix())))
}

/// `⟨Ψ_c| (I_c ± ΔE) Y |Ψ_c⟩` with `ΔE = energy − e_c`.
pub fn combined_variant(
    ops: &ModelOperators,
    energy: f64,
    e_c: f64,
    psi_c: &StateVector,
    settings: &IntegrationSettings,
    convention: Convention,
) -> Result<f64> {
    let de = energy - e_c;
    let ic = ops.coulomb.matrix();
    let n = ic.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    match convention {
        Convention::Lindgren | Convention::Dkz => {
            let s = if convention == Convention::Lindgren { 1.0 } else { -1.0 };
            let y = x_j(ops, energy, settings)?.into_matrix() * ic;
            Ok(expect(psi_c, &((ic + &id * (s * de)) * y)))
        }
        Convention::DkzDcApprox => {
            let z = j_sandwich_sum_form(&ops.spectrum, &ops.basis, energy, &ops.delta, settings.j_order)?;
            let dc_inv = invert_diagonal(&build_dc(&ops.basis, e_c), "D_c")?;
            let y = dc_inv.matrix() * z.matrix() * dc_inv.matrix() * ic;
            Ok(expect(psi_c, &((ic - &id * de) * y)))
        }
    }
}

/// `D⁻¹` rebuilt as `D_c⁻¹ − ΔE/(D_c D)`.
pub fn dinv_from_dc(ops: &ModelOperators, energy: f64, e_c: f64) -> Result<Operator> {
    let dc_inv = invert_diagonal(&build_dc(&ops.basis, e_c), "D_c")?.diagonal();
    let d_inv = invert_d(&ops.basis, energy)?.diagonal();
    let de = energy - e_c;
    let diag: Vec<f64> = dc_inv.iter().zip(&d_inv).map(|(a, b)| a - de * a * b).collect();
    Ok(Operator::from_diagonal(&diag))
}

/// Predicted `lindgren − dkz`, plus the same quantity reached through the
/// propagator-sum transform and the `D_c` expansion of `D⁻¹`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    /// `2ΔE ⟨Ψ_c|Y|Ψ_c⟩`
    pub direct: f64,
    /// `2ΔE ⟨Ψ_c| D⁻¹ Z D⁻¹ I_c |Ψ_c⟩`, `D⁻¹ = D_c⁻¹ − ΔE/(D_c D)`
    pub transformed: f64,
    /// `⟨Ψ_c| (I_c + ΔE) D⁻¹ Z D⁻¹ I_c |Ψ_c⟩`
    pub lindgren_transformed: f64,
}

pub fn predicted_discrepancy(
    ops: &ModelOperators,
    energy: f64,
    e_c: f64,
    psi_c: &StateVector,
    settings: &IntegrationSettings,
) -> Result<Prediction> {
    let de = energy - e_c;
    let direct = 2.0 * de * y_expectation(ops, energy, psi_c, settings)?;
    let ic = ops.coulomb.matrix();
    let z = j_sandwich_sum_form(&ops.spectrum, &ops.basis, energy, &ops.delta, settings.j_order)?;
    let dinv = dinv_from_dc(ops, energy, e_c)?;
    let y = dinv.matrix() * z.matrix() * dinv.matrix() * ic;
    let n = ic.nrows();
    let transformed = 2.0 * de * expect(psi_c, &y);
    let lindgren_transformed = expect(psi_c, &((ic + DMatrix::identity(n, n) * de) * &y));
    Ok(Prediction {
        direct,
        transformed,
        lindgren_transformed,
    })
}

/// `|diff| / |reference|`, or `|diff|` when the reference vanishes.
pub fn relative(diff: f64, reference: f64) -> f64 {
    if reference == 0.0 {
        diff.abs()
    } else {
        diff.abs() / reference.abs()
    }
}

/// Reference energy from the instantaneous model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleEnergy {
    pub energy: f64,
    /// `|⟨Ψ_c|Ψ⟩|²` for the selected (normalized) eigenvector.
    pub overlap: f64,
}

/// Eigenvalue of `h₁ + h₂ + (Λ++ − Λ−−)(I_c + g_Δ)` whose eigenvector
/// overlaps most with `Ψ_c`.
pub fn model_oracle(ops: &ModelOperators, psi_c: &StateVector) -> Result<OracleEnergy> {
    let n = ops.basis.dim();
    let h0 = DMatrix::from_diagonal(&DVector::from_column_slice(ops.basis.pair_energies()));
    let h = h0 + ops.projectors.pp_minus_mm() * (ops.coulomb.matrix() + ops.delta.matrix());
    let scale = h.amax().max(1.0);
    let eigs = h.complex_eigenvalues();
    let psi = psi_c.amplitudes();
    let mut best: Option<OracleEnergy> = None;
    for z in eigs.iter() {
        if z.im.abs() > 1e-9 * scale {
            continue;
        }
        let Some(v) = inverse_iteration(&h, z.re, psi, scale) else {
            continue;
        };
        let overlap = psi.dot(&v).powi(2);
        if best.is_none_or(|b| overlap > b.overlap) {
            best = Some(OracleEnergy {
                energy: z.re,
                overlap,
            });
        }
    }
    match best {
        Some(b) if b.overlap >= 0.5 => Ok(b),
        Some(b) => Err(Error::invalid(format!(
            "oracle state tracking is ambiguous: best overlap {:.3} < 0.5",
            b.overlap
        ))),
        None => Err(Error::invalid(format!("no real eigenvalue among {n} found"))),
    }
}

fn inverse_iteration(h: &DMatrix<f64>, lambda: f64, start: &DVector<f64>, scale: f64) -> Option<DVector<f64>> {
    let n = h.nrows();
    let shift = lambda + 1e-10 * scale;
    let lu = (h - DMatrix::identity(n, n) * shift).lu();
    // a start vector orthogonal to the eigenvector would stall; mix in a ramp
    let mut v = start + DVector::from_fn(n, |k, _| 1e-3 * (k + 1) as f64);
    for _ in 0..4 {
        let w = lu.solve(&v)?;
        let norm = w.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return None;
        }
        v = w / norm;
    }
    Some(v)
}

/// Settings for a full compare pipeline.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PipelineSettings {
    pub integration: IntegrationSettings,
    pub bw: BwSettings,
    pub state_index: usize,
}

impl PipelineSettings {
    pub fn validate(&self) -> Result<()> {
        self.integration.validate()?;
        self.bw.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanRow {
    pub lambda: f64,
    pub difference: Option<f64>,
    pub predicted: Option<f64>,
    /// `difference / predicted`
    pub ratio: Option<f64>,
    pub error: Option<String>,
    /// Exit code class of `error`.
    pub error_code: Option<i32>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControversyReport {
    #[serde(rename = "dE1_direct")]
    pub de1_direct: f64,
    #[serde(rename = "dE2b_direct")]
    pub de2b_direct: f64,
    pub combined_lindgren: f64,
    pub combined_dkz: f64,
    pub combined_dkz_dc_approx: Option<f64>,
    pub difference: f64,
    pub predicted_difference: f64,
    pub y_expectation: f64,
    pub identity_residuals: BTreeMap<String, f64>,
}

/// No-pair solve, self-consistent BW energy, and the controversy terms.
#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub ops: ModelOperators,
    pub psi_c: StateVector,
    pub ledger: EnergyLedger,
    pub report: ControversyReport,
}

/// Self-consistent BW solve on a built model.
pub fn solve_bw(ops: &ModelOperators, settings: &PipelineSettings) -> Result<(StateVector, EnergyLedger)> {
    settings.validate()?;
    let (e_c, psi_c) = solve_no_pair(&ops.h_c, &ops.basis, settings.state_index)?;
    let hd = |e: f64| h_delta(ops, e, &settings.integration);
    let ledger = bw_selfconsistent(&ops.h_c, &hd, &psi_c, e_c, &settings.bw)?;
    Ok((psi_c, ledger))
}

/// Evaluates every controversy quantity at the self-consistent energy.
pub fn evaluate(
    ops: &ModelOperators,
    psi_c: &StateVector,
    ledger: &EnergyLedger,
    settings: &IntegrationSettings,
) -> Result<ControversyReport> {
    let (e, e_c) = (ledger.e, ledger.e_c);
    let de1 = delta_e1_direct(ops, e, psi_c, settings)?;
    let de2b = delta_e2b_direct(ops, e, e_c, psi_c, settings)?;
    let lindgren = combined_variant(ops, e, e_c, psi_c, settings, Convention::Lindgren)?;
    let dkz = combined_variant(ops, e, e_c, psi_c, settings, Convention::Dkz)?;
    let dc_approx = combined_variant(ops, e, e_c, psi_c, settings, Convention::DkzDcApprox).ok();
    let y = y_expectation(ops, e, psi_c, settings)?;
    let pred = predicted_discrepancy(ops, e, e_c, psi_c, settings)?;
    let difference = lindgren - dkz;

    let mut res = BTreeMap::new();
    res.insert("E2b_vs_E2b2".to_string(), de2b.residual());
    res.insert(
        "central_claim".to_string(),
        (difference - 2.0 * (e - e_c) * y).abs() / lindgren.abs().max(1.0),
    );
    res.insert(
        "derivation_chain".to_string(),
        relative(de1 + de2b.reduced - lindgren, lindgren),
    );
    res.insert(
        "difference_vs_predicted".to_string(),
        relative(difference - pred.direct, difference),
    );
    res.insert("Dm1_route".to_string(), relative(pred.transformed - pred.direct, pred.direct));
    res.insert(
        "G0mod_route".to_string(),
        relative(pred.lindgren_transformed - lindgren, lindgren),
    );
    Ok(ControversyReport {
        de1_direct: de1,
        de2b_direct: de2b.reduced,
        combined_lindgren: lindgren,
        combined_dkz: dkz,
        combined_dkz_dc_approx: dc_approx,
        difference,
        predicted_difference: pred.direct,
        y_expectation: y,
        identity_residuals: res,
    })
}

pub fn run_pipeline(config: &ModelConfig, settings: &PipelineSettings) -> Result<PipelineOutcome> {
    let ops = ModelOperators::build(config)?;
    let (psi_c, ledger) = solve_bw(&ops, settings)?;
    let report = evaluate(&ops, &psi_c, &ledger, &settings.integration)?;
    Ok(PipelineOutcome {
        ops,
        psi_c,
        ledger,
        report,
    })
}

/// Result of [`coupling_scan`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanOutcome {
    pub rows: Vec<ScanRow>,
    /// Fit over the successful rows; `None` if fewer than two succeeded.
    pub fit: Option<PowerFit>,
}

impl ScanOutcome {
    pub fn complete(&self) -> bool {
        self.rows.iter().all(|r| r.error.is_none())
    }
}

/// Runs the pipeline with both couplings multiplied by each `λ` and fits
/// `log|difference|` against `log λ`.
pub fn coupling_scan(config: &ModelConfig, schedule: &[f64], settings: &PipelineSettings) -> Result<ScanOutcome> {
    if schedule.len() < 4 {
        return Err(Error::config("scan requires ≥ 4 points"));
    }
    if schedule.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
        return Err(Error::config("scan λ values must be positive"));
    }
    if schedule.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::config("scan λ values must be strictly increasing"));
    }
    config.validate()?;
    settings.validate()?;
    let rows: Vec<ScanRow> = schedule
        .par_iter()
        .map(|&lambda| match run_pipeline(&config.with_coupling_factor(lambda), settings) {
            Ok(out) => {
                let (d, p) = (out.report.difference, out.report.predicted_difference);
                ScanRow {
                    lambda,
                    difference: Some(d),
                    predicted: Some(p),
                    ratio: (p != 0.0).then(|| d / p),
                    error: None,
                    error_code: None,
                }
            }
            Err(e) => ScanRow {
                lambda,
                difference: None,
                predicted: None,
                ratio: None,
                error: Some(e.to_string()),
                error_code: Some(e.exit_code()),
            },
        })
        .collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter_map(|r| r.difference.map(|d| (r.lambda, d)))
        .filter(|(_, d)| *d != 0.0)
        .unzip();
    let fit = if xs.len() >= 2 { power_law_fit(&xs, &ys).ok() } else { None };
    Ok(ScanOutcome { rows, fit })
}
