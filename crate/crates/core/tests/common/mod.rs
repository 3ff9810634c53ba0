//! Fixtures shared by the integration tests.

#![allow(dead_code)]

use std::path::PathBuf;

use nqs_core::hamiltonian::{read_fcidump, MolecularIntegrals};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

pub fn load(name: &str) -> MolecularIntegrals {
    read_fcidump(data_path(name)).expect("fixture FCIDUMP parses")
}

/// `e_fci` for `key` in `data/references.json`.
pub fn reference_fci(key: &str) -> Option<f64> {
    let text = std::fs::read_to_string(data_path("references.json")).expect("references.json");
    let v: serde_json::Value = serde_json::from_str(&text).expect("valid JSON");
    v[key]["e_fci"].as_f64()
}

/// Integrals with the full 8-fold symmetry and entries in `[-1, 1]`.
pub fn random_integrals(n_spatial: usize, n_electrons: usize, ms2: i64, seed: u64) -> MolecularIntegrals {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ham = MolecularIntegrals::zeros(n_spatial, n_electrons, ms2, rng.gen_range(-1.0..1.0));
    for p in 0..n_spatial {
        for q in 0..=p {
            ham.set_h(p, q, rng.gen_range(-1.0..1.0));
        }
    }
    for p in 0..n_spatial {
        for q in 0..=p {
            for r in 0..n_spatial {
                for s in 0..=r {
                    if p * (p + 1) / 2 + q >= r * (r + 1) / 2 + s {
                        ham.set_eri(p, q, r, s, rng.gen_range(-1.0..1.0));
                    }
                }
            }
        }
    }
    ham
}

pub fn random_vector(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Random symmetric `n x n` matrix `Q diag(d) Q^T` with eigenvalues spread
/// over `[-1, 1] * 10^spread` (log-uniform magnitudes give the conditioning).
pub fn random_symmetric(n: usize, seed: u64, spread: f64) -> nalgebra::DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = nalgebra::DMatrix::<f64>::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let q = g.qr().q();
    let d = nalgebra::DVector::<f64>::from_fn(n, |_, _| {
        let mag = 10f64.powf(rng.gen_range(-spread..=0.0));
        if rng.gen_bool(0.5) { mag } else { -mag }
    });
    let mut a = &q * nalgebra::DMatrix::from_diagonal(&d) * q.transpose();
    a = (&a + a.transpose()) * 0.5;
    a
}

pub fn inf_norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}
