//! Data-parallel kernels on the default rayon pool against a one-thread pool.
//!
//! Inside `pool.install` every `par_iter` in the crate runs on that pool, so
//! the one-thread variant measures the same code path without parallelism.
//! Built with `--no-default-features` both variants run the sequential
//! fallback and should time the same.

use std::path::PathBuf;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rayon::{ThreadPool, ThreadPoolBuilder};

use nqs_core::ansatz::{Ansatz, Architecture};
use nqs_core::estimators::{
    build_batch, coupled_heff_matvec, energy_gradient, estimate_energy, heff_matvec, tangent_matvec,
    BatchMode, HeffForm,
};
use nqs_core::hamiltonian::{read_fcidump, MolecularIntegrals};
use nqs_core::hilbert::DEFAULT_ENUMERATION_CAP;
use nqs_core::krylov::LinearOperator;
use nqs_core::optimizer::{irl_outer_step, OptimizerConfig};

fn load(name: &str) -> MolecularIntegrals {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name);
    read_fcidump(path).expect("fixture FCIDUMP parses")
}

fn pools() -> Vec<(String, ThreadPool)> {
    let full = ThreadPoolBuilder::new().build().unwrap();
    let label = if nqs_core::par::is_parallel() {
        format!("default-pool-{}", full.current_num_threads())
    } else {
        "sequential-build".to_owned()
    };
    vec![
        (label, full),
        ("single-thread-pool".to_owned(), ThreadPoolBuilder::new().num_threads(1).build().unwrap()),
    ]
}

fn lih_setup(hidden: usize) -> (Ansatz, Vec<f64>, MolecularIntegrals) {
    let ham = load("lih_sto3g.fcidump");
    let a = Ansatz::new(Architecture::new(ham.n_spin_orbitals(), hidden), ham.sector().unwrap()).unwrap();
    let theta = a.init_params(111);
    (a, theta, ham)
}

fn estimator_kernels(c: &mut Criterion) {
    let (a, theta, ham) = lih_setup(66);
    let p = a.n_params();
    let batch = build_batch(&a, &theta, &ham, BatchMode::Exact, true).unwrap();
    let est = estimate_energy(&batch).unwrap();
    let grad = energy_gradient(&batch, &est).unwrap();
    let v: Vec<f64> = (0..p).map(|i| ((i * 7919) % 101) as f64 / 101.0 - 0.5).collect();
    let mut cv = vec![0.3];
    cv.extend_from_slice(&v);

    let mut group = c.benchmark_group(format!("lih_p{p}"));
    group.sample_size(20);
    for (label, pool) in pools() {
        group.bench_function(BenchmarkId::new("build_batch_exact", &label), |b| {
            b.iter(|| pool.install(|| build_batch(&a, &theta, &ham, BatchMode::Exact, true).unwrap()))
        });
        group.bench_function(BenchmarkId::new("build_batch_stochastic_4k", &label), |b| {
            let mode = BatchMode::Stochastic { n_samples: 4000, seed: 3 };
            b.iter(|| pool.install(|| build_batch(&a, &theta, &ham, mode, true).unwrap()))
        });
        group.bench_function(BenchmarkId::new("heff_matvec", &label), |b| {
            b.iter(|| pool.install(|| heff_matvec(&batch, &est, &v).unwrap()))
        });
        group.bench_function(BenchmarkId::new("coupled_heff_matvec", &label), |b| {
            b.iter(|| pool.install(|| coupled_heff_matvec(&batch, &est, &v).unwrap()))
        });
        group.bench_function(BenchmarkId::new("tangent_matvec", &label), |b| {
            b.iter(|| pool.install(|| tangent_matvec(&batch, &est, HeffForm::Auto, &grad, &cv).unwrap()))
        });
    }
    group.finish();
}

fn outer_step(c: &mut Criterion) {
    let (a, theta, ham) = lih_setup(20);
    let cfg = OptimizerConfig::default();
    let mut group = c.benchmark_group("lih_outer_step");
    group.sample_size(10);
    for (label, pool) in pools() {
        group.bench_function(BenchmarkId::new("eigensolve_and_line_search", &label), |b| {
            b.iter(|| pool.install(|| irl_outer_step(&a, &theta, &ham, &cfg, 1).unwrap()))
        });
    }
    group.finish();
}

fn sector_hamiltonian(c: &mut Criterion) {
    let ham = load("ch4_sto3g.fcidump");
    let sector = ham.sector().unwrap();
    let h = ham.sparse_matrix(&sector, DEFAULT_ENUMERATION_CAP).unwrap();
    let x: Vec<f64> = (0..h.dim()).map(|i| 1.0 / (1.0 + i as f64)).collect();
    let mut group = c.benchmark_group("ch4_sector");
    group.sample_size(10);
    for (label, pool) in pools() {
        group.bench_function(BenchmarkId::new("sparse_apply", &label), |b| {
            b.iter(|| pool.install(|| h.apply(&x).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, estimator_kernels, outer_step, sector_hamiltonian);
criterion_main!(benches);
