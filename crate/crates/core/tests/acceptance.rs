//! Exit criteria. Runs every criterion, prints one line each, and fails the
//! target if any criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::Rng;

use bw_sign::bw::{bw_selfconsistent, solve_no_pair, BwSettings, Resolvent, StateVector};
use bw_sign::controversy::{coupling_scan, model_oracle, run_pipeline, solve_bw, PipelineSettings};
use bw_sign::model::{build_basis, Operator, SingleParticleSpectrum, TwoParticleBasis};
use bw_sign::operators::{build_d, invert_d, projectors, ModelOperators};
use bw_sign::propagators::{contour_integral_finv, j_sandwich, propagator_s, quadrature_oracle_finv, IntegrationSettings, Particle};
use bw_sign::scaling::power_law_fit;

type Outcome = Result<String, String>;
type Criterion = (&'static str, &'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Energy with every pair denominator at least `margin` from zero.
fn energy_away_from_pairs(rng: &mut rand_chacha::ChaCha8Rng, basis: &TwoParticleBasis, margin: f64) -> f64 {
    loop {
        let e: f64 = rng.gen_range(-4.0..6.0);
        if basis.pair_energies().iter().all(|s| (e - s).abs() >= margin) {
            return e;
        }
    }
}

fn finv_case(spectrum: &SingleParticleSpectrum, energy: f64, settings: &IntegrationSettings) -> Result<(f64, f64), String> {
    let basis = build_basis(spectrum);
    let proj = projectors(&basis);
    let contour = contour_integral_finv(spectrum, &basis, energy).map_err(|e| e.to_string())?;
    let dinv = invert_d(&basis, energy).map_err(|e| e.to_string())?;
    let closed = proj.pp_minus_mm() * dinv.matrix();
    let algebraic = (contour.matrix() - &closed).amax();
    let quad = quadrature_oracle_finv(spectrum, &basis, energy, settings).map_err(|e| e.to_string())?;
    let numeric = (contour.matrix() - &quad.value).amax() / contour.matrix().amax();
    Ok((algebraic, numeric))
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let settings = IntegrationSettings::default();
    let mut cases = vec![(SingleParticleSpectrum::new(&[1.0], &[-1.2]).unwrap(), 2.1)];
    let mut rng = common::rng(1);
    while cases.len() < 21 {
        let (pos, neg) = common::random_spectrum(&mut rng, 6);
        let spectrum = SingleParticleSpectrum::new(&pos, &neg).unwrap();
        let energy = energy_away_from_pairs(&mut rng, &build_basis(&spectrum), 0.1);
        cases.push((spectrum, energy));
    }
    let (mut worst_alg, mut worst_num) = (0.0_f64, 0.0_f64);
    for (spectrum, energy) in &cases {
        let (a, n) = finv_case(spectrum, *energy, &settings)?;
        worst_alg = worst_alg.max(a);
        worst_num = worst_num.max(n);
    }
    let elapsed = start.elapsed();
    check(
        worst_alg < 1e-12 && worst_num < 1e-6 && elapsed < Duration::from_secs(10),
        format!(
            "{} cases, projector form {worst_alg:.2e} (< 1e-12), quadrature {worst_num:.2e} rel (< 1e-6), {:.2} s (< 10 s)",
            cases.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_2() -> Outcome {
    let mut rng = common::rng(2);
    let mut worst = 0.0_f64;
    let mut samples = 0;
    while samples < 100 {
        let (pos, neg) = common::random_spectrum(&mut rng, 6);
        let spectrum = SingleParticleSpectrum::new(&pos, &neg).unwrap();
        let basis = build_basis(&spectrum);
        let energy = energy_away_from_pairs(&mut rng, &basis, 0.1);
        let eps: f64 = rng.gen_range(-4.0..4.0);
        let near_pole = spectrum
            .energies()
            .iter()
            .any(|&e| (0.5 * energy + eps - e).abs() < 0.1 || (0.5 * energy - eps - e).abs() < 0.1);
        if near_pole {
            continue;
        }
        let s1 = propagator_s(&spectrum, &basis, energy, eps, Particle::First, 0.0);
        let s2 = propagator_s(&spectrum, &basis, energy, eps, Particle::Second, 0.0);
        for (p, d) in basis.pair_energies().iter().map(|s| energy - s).enumerate() {
            let product = s1[p] * s2[p];
            let sum_form = (s1[p] + s2[p]) / d;
            worst = worst.max((product - sum_form).norm());
        }
        samples += 1;
    }
    check(worst < 1e-12, format!("100 samples, max entrywise residual {worst:.2e} (< 1e-12)"))
}

fn criterion_3() -> Outcome {
    let mut rng = common::rng(3);
    let spectrum = SingleParticleSpectrum::new(&[1.0, 1.5], &[-1.0, -1.5]).unwrap();
    let basis = build_basis(&spectrum);
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let energy = energy_away_from_pairs(&mut rng, &basis, 0.1);
        let e_c = energy_away_from_pairs(&mut rng, &basis, 0.1);
        let de = energy - e_c;
        // scalar form, pair by pair
        for s in basis.pair_energies() {
            let (d, dc) = (energy - s, e_c - s);
            worst = worst.max((1.0 / d - (1.0 / dc - de / (dc * d))).abs());
        }
        // diagonal-operator form
        let d_inv = invert_d(&basis, energy).unwrap();
        let dc_inv = invert_d(&basis, e_c).unwrap();
        let rebuilt = dc_inv.matrix() - dc_inv.matrix() * d_inv.matrix() * de;
        worst = worst.max((d_inv.matrix() - rebuilt).amax());
    }
    check(worst < 1e-13, format!("100 (E, E_c) pairs, max residual {worst:.2e} (< 1e-13)"))
}

fn lmm_residual(ops: &ModelOperators, psi: &StateVector, energy: f64) -> Result<f64, String> {
    let gamma = Resolvent::new(ops.h_c.matrix(), energy, psi).map_err(|e| e.to_string())?.matrix();
    let mm = ops.projectors.mm.matrix();
    Ok((mm * gamma * build_d(&ops.basis, energy).matrix() - mm).amax())
}

fn criterion_4() -> Outcome {
    let mut worst = 0.0_f64;
    let mut evaluated = 0;
    for (name, cfg) in common::fixtures() {
        let ops = ModelOperators::build(&cfg).map_err(|e| format!("{name}: {e}"))?;
        let (e_c, psi) = solve_no_pair(&ops.h_c, &ops.basis, 0).map_err(|e| format!("{name}: {e}"))?;
        let (_, ledger) = solve_bw(&ops, &PipelineSettings::default()).map_err(|e| format!("{name}: {e}"))?;
        for energy in [e_c, ledger.e, e_c - 0.37, e_c + 0.23] {
            worst = worst.max(lmm_residual(&ops, &psi, energy).map_err(|e| format!("{name}: {e}"))?);
            evaluated += 1;
        }
    }
    check(worst < 1e-12, format!("{evaluated} (fixture, E) cases, max residual {worst:.2e} (< 1e-12)"))
}

fn criterion_5a() -> Outcome {
    let h_c = Operator::from_diagonal(&[0.0, 1.0]);
    let v = Operator::new(DMatrix::from_row_slice(2, 2, &[0.0, 0.1, 0.1, 0.0]));
    let f = |_e: f64| Ok(v.clone());
    let settings = BwSettings {
        order: 2,
        ..BwSettings::default()
    };
    let ledger = bw_selfconsistent(&h_c, &f, &StateVector::unit(2, 0), 0.0, &settings).map_err(|e| e.to_string())?;
    let exact = (1.0 - 1.04_f64.sqrt()) / 2.0;
    let err = (ledger.e - exact).abs();
    check(err < 1e-10, format!("2x2 order 2: |E - exact| = {err:.2e} (< 1e-10)"))
}

fn criterion_5b() -> Outcome {
    let lams = [0.02, 0.04, 0.08];
    let mut errs = Vec::new();
    for &lam in &lams {
        let cfg = common::dim4(lam, lam / 2.0);
        let ops = ModelOperators::build(&cfg).map_err(|e| e.to_string())?;
        let (psi, ledger) = solve_bw(&ops, &PipelineSettings::default()).map_err(|e| format!("λ={lam}: {e}"))?;
        let oracle = model_oracle(&ops, &psi).map_err(|e| format!("λ={lam}: {e}"))?;
        errs.push((ledger.e - oracle.energy).abs());
    }
    let fit = power_law_fit(&lams, &errs).map_err(|e| e.to_string())?;
    check(
        (fit.slope - 4.0).abs() <= 0.3,
        format!(
            "dim-4 |E_BW - E_oracle| = {:?}, log-log slope {:.3} (want 4 ± 0.3)",
            errs.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>(),
            fit.slope
        ),
    )
}

fn criterion_6() -> Outcome {
    let settings = PipelineSettings::default();
    let (mut worst_claim, mut worst_chain) = (0.0_f64, 0.0_f64);
    let mut names = Vec::new();
    for (name, cfg) in common::fixtures() {
        let out = run_pipeline(&cfg, &settings).map_err(|e| format!("{name}: {e}"))?;
        let r = &out.report;
        // ⟨Y⟩ recomputed from the J-series sandwich
        let x = j_sandwich(
            &out.ops.spectrum,
            &out.ops.basis,
            out.ledger.e,
            &out.ops.delta,
            settings.integration.j_order,
        )
        .map_err(|e| e.to_string())?;
        let y = out.psi_c.expectation(&(x.matrix() * out.ops.coulomb.matrix()));
        let de = out.ledger.e - out.ledger.e_c;
        let claim = (r.combined_lindgren - r.combined_dkz - 2.0 * de * y).abs() / r.combined_lindgren.abs().max(1.0);
        let chain = (r.de1_direct + r.de2b_direct - r.combined_lindgren).abs() / r.combined_lindgren.abs();
        worst_claim = worst_claim.max(claim);
        worst_chain = worst_chain.max(chain);
        names.push(name);
    }
    check(
        worst_claim < 1e-12 && worst_chain < 1e-10,
        format!(
            "{} fixtures, lindgren - dkz - 2ΔE<Y> {worst_claim:.2e} (< 1e-12 scaled), dE1 + dE2b vs lindgren {worst_chain:.2e} (< 1e-10 rel)",
            names.len()
        ),
    )
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let schedule = [0.02, 0.04, 0.08, 0.16];
    let cfg = bw_sign::model::ModelConfig::default();
    let scan = coupling_scan(&cfg, &schedule, &PipelineSettings::default()).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let failed: Vec<String> = scan
        .rows
        .iter()
        .filter_map(|r| r.error.as_ref().map(|e| format!("λ={}: {e}", r.lambda)))
        .collect();
    let fit = scan.fit.ok_or_else(|| format!("no fit; failed points {failed:?}"))?;
    let predicted = 3.0;
    check(
        failed.is_empty()
            && (fit.slope - predicted).abs() <= 0.2
            && fit.r_squared > 0.999
            && elapsed < Duration::from_secs(60),
        format!(
            "slope {:.3} (want {predicted} ± 0.2), R² {:.6} (> 0.999), failed points {}, {:.2} s (< 60 s){}",
            fit.slope,
            fit.r_squared,
            failed.len(),
            elapsed.as_secs_f64(),
            if failed.is_empty() { String::new() } else { format!(" [{}]", failed.join("; ")) }
        ),
    )
}

fn run_cli(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_bw-sign"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{args:?} exited with {:?}", out.status.code()));
    }
    String::from_utf8(out.stdout).map_err(|e| e.to_string())
}

fn without_timings(json: &str) -> Result<&str, String> {
    json.find("\"timings_ms\"")
        .map(|at| &json[..at])
        .ok_or_else(|| "report has no timings_ms key".to_string())
}

fn criterion_8() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("run.toml");
    std::fs::write(
        &path,
        "[spectrum]\npositive_energies = [1.0]\nnegative_energies = [-1.2]\n\n[interaction]\nseed = 4\n",
    )
    .map_err(|e| e.to_string())?;
    let p = path.to_str().unwrap();
    let mut compared = 0;
    for cmd in ["verify", "compare"] {
        let a = run_cli(&[cmd, "--config", p, "--format", "json"])?;
        let b = run_cli(&[cmd, "--config", p, "--format", "json"])?;
        if without_timings(&a)? != without_timings(&b)? {
            return Err(format!("{cmd}: reports differ"));
        }
        compared += 1;
    }
    Ok(format!("{compared} commands, two runs each, byte-identical apart from timings_ms"))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("1", "contour identity vs projector form and quadrature", criterion_1),
        ("2", "F⁻¹ = S1·S2 = D⁻¹(S1 + S2)", criterion_2),
        ("3", "D⁻¹ = D_c⁻¹ - ΔE/(D_c·D)", criterion_3),
        ("4", "Λ−− Γ D = Λ−−", criterion_4),
        ("5a", "BW order 2 exact on the 2x2 model", criterion_5a),
        ("5b", "BW vs instantaneous oracle scales as λ⁴", criterion_5b),
        ("6", "convention difference and derivation chain", criterion_6),
        ("7", "coupling-scan exponent", criterion_7),
        ("8", "deterministic JSON reports", criterion_8),
    ];
    let mut failures = 0;
    for (id, title, run) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("criterion {id} PASS  {title}: {detail}"),
            Err(detail) => {
                failures += 1;
                println!("criterion {id} FAIL  {title}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failures} failed", criteria.len() - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
