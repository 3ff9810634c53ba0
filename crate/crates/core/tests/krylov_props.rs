//! Lanczos, the tridiagonal eigensolver and implicit restarts against
//! independent references: Sturm-sequence bisection, explicit polynomial
//! filtering and nalgebra's dense symmetric eigensolver.

mod common;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use nqs_core::krylov::{
    implicit_restart, irl_smallest, lanczos, norm, sl_smallest, tridiag_eigen, FnOperator, IrlConfig,
    LinearOperator, Reorthogonalization, TridiagonalMatrix,
};
use proptest::prelude::*;

use common::{random_symmetric, random_vector};

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = norm(&v);
    v.into_iter().map(|x| x / n).collect()
}

/// Eigenvalues of `t` below `x`, by the Sturm sequence of leading minors.
fn sturm_count(t: &TridiagonalMatrix, x: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0;
    for i in 0..t.dim() {
        let b2 = if i == 0 { 0.0 } else { t.beta[i - 1] * t.beta[i - 1] };
        q = t.alpha[i] - x - if i == 0 { 0.0 } else { b2 / q };
        if q == 0.0 {
            q = f64::EPSILON * (t.alpha[i].abs() + 1.0);
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

fn bisection_eigenvalues(t: &TridiagonalMatrix) -> Vec<f64> {
    let n = t.dim();
    let bound = (0..n)
        .map(|i| {
            t.alpha[i].abs()
                + if i > 0 { t.beta[i - 1].abs() } else { 0.0 }
                + if i + 1 < n { t.beta[i].abs() } else { 0.0 }
        })
        .fold(0.0f64, f64::max)
        + 1.0;
    (0..n)
        .map(|k| {
            let (mut lo, mut hi) = (-bound, bound);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if sturm_count(t, mid) > k {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            0.5 * (lo + hi)
        })
        .collect()
}

fn random_tridiagonal(n: usize, seed: u64) -> TridiagonalMatrix {
    let a = random_vector(n, seed);
    let b = random_vector(n.saturating_sub(1), seed + 1);
    TridiagonalMatrix {
        alpha: a.iter().map(|x| 3.0 * x).collect(),
        beta: b,
        beta_last: 0.0,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn tridiagonal_solver_matches_bisection(n in 1usize..60, seed in any::<u64>()) {
        let t = random_tridiagonal(n, seed);
        let (vals, vecs) = tridiag_eigen(&t).unwrap();
        let want = bisection_eigenvalues(&t);
        for (a, b) in vals.iter().zip(&want) {
            prop_assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        let dense = t.to_dense();
        for c in 0..n {
            let u: Vec<f64> = vecs.iter().map(|row| row[c]).collect();
            prop_assert!((norm(&u) - 1.0).abs() < 1e-12);
            for r in 0..n {
                let tu: f64 = (0..n).map(|j| dense[r][j] * u[j]).sum();
                prop_assert!((tu - vals[c] * u[r]).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn irl_smallest_is_shift_invariant(seed in 0u64..1000, sigma in -50.0f64..50.0) {
        let a = random_symmetric(60, seed, 3.0);
        let shifted = &a + DMatrix::<f64>::identity(60, 60) * sigma;
        // residuals are only resolvable down to the relative breakdown level
        let scale = 1.0 + sigma.abs();
        let cfg = IrlConfig { tol: 1e-11 * scale, ..IrlConfig::default() };
        let base = irl_smallest(&a, &cfg).unwrap();
        let moved = irl_smallest(&shifted, &cfg).unwrap();
        prop_assert!(base.converged && moved.converged);
        prop_assert!((moved.pair.lambda - base.pair.lambda - sigma).abs() < 1e-10 * scale);
    }

    #[test]
    fn lanczos_projection_relation_holds(n in 30usize..120, m in 2usize..25, seed in any::<u64>()) {
        let a = random_symmetric(n, seed % 10_000, 4.0);
        let v1 = unit(random_vector(n, seed));
        let f = lanczos(&a, v1, m, Reorthogonalization::Full).unwrap();
        prop_assert!(f.projection_residual(&a).unwrap() <= 1e-8);
        prop_assert!(f.orthogonality_loss() <= 1e-12);
    }
}

#[test]
fn implicit_restart_equals_explicit_polynomial_filter() {
    for seed in 0..10u64 {
        let n = 60;
        let a = random_symmetric(n, 1000 + seed, 2.0);
        let v1 = unit(random_vector(n, seed));
        let (m, k) = (20, 6);
        let f = lanczos(&a, v1.clone(), m, Reorthogonalization::Full).unwrap();
        let (vals, _) = tridiag_eigen(&f.tridiagonal()).unwrap();
        let shifts = &vals[k..];
        let g = implicit_restart(&f, shifts, k).unwrap();
        assert_eq!(g.len(), k);

        let mut w = DVector::from_column_slice(&v1);
        for &mu in shifts {
            w = &a * &w - &w * mu;
            w /= w.norm();
        }
        let cosine = w.as_slice().iter().zip(&g.basis[0]).map(|(x, y)| x * y).sum::<f64>();
        assert!(cosine.abs() >= 1.0 - 1e-8, "seed {seed}: |cos| = {}", cosine.abs());
        assert!(g.projection_residual(&a).unwrap() <= 1e-8);
    }
}

#[test]
fn irl_smallest_matches_dense_solver() {
    for seed in 0..8u64 {
        let n = 100 + 50 * seed as usize;
        let a = random_symmetric(n, 2000 + seed, seed as f64);
        let dense_min = SymmetricEigen::new(a.clone()).eigenvalues.min();
        let solve = irl_smallest(&a, &IrlConfig::default()).unwrap();
        let a_norm = a.norm();
        assert!(solve.converged, "seed {seed}: residual {:e}", solve.pair.residual);
        assert!((solve.pair.lambda - dense_min).abs() <= 1e-10 * a_norm);
        assert!(solve.pair.residual <= 1e-12);
        let ay = &a * DVector::from_column_slice(&solve.pair.y);
        let r = ay - DVector::from_column_slice(&solve.pair.y) * solve.pair.lambda;
        assert!(r.norm() <= 1e-12);
    }
}

#[test]
fn standard_lanczos_loses_orthogonality_where_full_does_not() {
    // well-separated extremes converge early and trigger the loss
    let n = 200;
    let diag: Vec<f64> = (0..n).map(|i| if i == 0 { -100.0 } else { i as f64 / n as f64 }).collect();
    let op = FnOperator::new(n, |x: &[f64]| Ok(x.iter().zip(&diag).map(|(a, d)| a * d).collect()));
    let v1 = unit(vec![1.0; n]);
    let plain = lanczos(&op, v1.clone(), 80, Reorthogonalization::None).unwrap();
    let full = lanczos(&op, v1, 80, Reorthogonalization::Full).unwrap();
    assert!(plain.orthogonality_loss() > 1e-3, "plain loss {:e}", plain.orthogonality_loss());
    assert!(full.orthogonality_loss() < 1e-12);
}

#[test]
fn sl_baseline_counts_its_budget() {
    let a = random_symmetric(150, 31, 2.0);
    let solve = sl_smallest(&a, 100, 1e-12, 5).unwrap();
    // 100 Lanczos products plus the explicit residual
    assert_eq!(solve.matvecs, 101);
    let dense_min = SymmetricEigen::new(a.clone()).eigenvalues.min();
    assert!(solve.pair.lambda >= dense_min - 1e-10);
}

#[test]
fn irl_counts_every_product() {
    let a = random_symmetric(120, 8, 3.0);
    let calls = std::cell::Cell::new(0usize);
    let op = FnOperator::new(120, |x: &[f64]| {
        calls.set(calls.get() + 1);
        a.apply(x)
    });
    let solve = irl_smallest(&op, &IrlConfig::default()).unwrap();
    assert_eq!(solve.matvecs, calls.get());
    assert!(solve.matvecs <= IrlConfig::default().max_restarts * IrlConfig::default().m + 1);
}
