#![allow(dead_code)]

use bw_sign::model::{MatrixSpec, ModelConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// One positive and one negative level: a 4-dimensional pair space.
pub fn dim4(coulomb: f64, delta: f64) -> ModelConfig {
    ModelConfig {
        positive_energies: vec![1.0],
        negative_energies: vec![-1.2],
        coulomb_scale: coulomb,
        delta_scale: delta,
        ..ModelConfig::default()
    }
}

fn random_matrices(base: ModelConfig, seed: u64) -> ModelConfig {
    ModelConfig {
        coulomb_matrix: MatrixSpec::RandomSymmetric,
        delta_matrix: MatrixSpec::RandomSymmetric,
        seed,
        ..base
    }
}

/// Named model fixtures used by the identity checks.
pub fn fixtures() -> Vec<(String, ModelConfig)> {
    let mut out = vec![
        ("dim4-ones".to_string(), dim4(0.1, 0.05)),
        ("default-ones".to_string(), ModelConfig::default()),
    ];
    for seed in 0..3 {
        out.push((format!("dim4-random-{seed}"), random_matrices(dim4(0.1, 0.05), seed)));
    }
    for seed in 0..2 {
        out.push((format!("default-random-{seed}"), random_matrices(ModelConfig::default(), seed)));
    }
    out
}

/// Random spectrum with at most `max_levels` single-particle states, both
/// signs present, levels at least 0.05 apart.
pub fn random_spectrum(rng: &mut ChaCha8Rng, max_levels: usize) -> (Vec<f64>, Vec<f64>) {
    loop {
        let n_pos = rng.gen_range(1..max_levels);
        let n_neg = rng.gen_range(1..=(max_levels - n_pos));
        let pos: Vec<f64> = (0..n_pos).map(|_| rng.gen_range(0.5..3.0)).collect();
        let neg: Vec<f64> = (0..n_neg).map(|_| -rng.gen_range(0.5..3.0)).collect();
        let all: Vec<f64> = pos.iter().chain(&neg).copied().collect();
        let separated = all
            .iter()
            .enumerate()
            .all(|(i, a)| all[..i].iter().all(|b| (a - b).abs() > 0.05));
        if separated {
            return (pos, neg);
        }
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
