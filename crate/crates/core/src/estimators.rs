//! Variational Monte Carlo estimators over a fixed sample batch.
//!
//! A [`SampleBatch`] holds configurations with weights (`1/N_s` per draw in
//! stochastic mode, normalized `|psi|^2` in exact mode) plus cached local
//! energies and log-derivatives. All statistics use connected (centered)
//! log-derivatives `dO = O - <O>`.
//!
//! Per-configuration work runs through [`crate::par`]; every reduction is a
//! fixed-order sequential sum so results do not depend on thread count.

use std::collections::HashMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::ansatz::Ansatz;
use crate::error::{NqsError, Result};
use crate::hamiltonian::MolecularIntegrals;
use crate::hilbert::{OccupationVector, DEFAULT_ENUMERATION_CAP};
use crate::par;

/// Default cap on `p` for the dense `H_eff` / `S` oracles.
pub const DEFAULT_DENSE_P_CAP: usize = 200;

/// Imaginary residues above this in real-projected outputs are logged.
const IMAG_WARN: f64 = 1e-8;

/// Columns per parallel block in the matvec accumulation.
const COLUMN_BLOCK: usize = 128;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BatchMode {
    /// Full enumeration of the sector with exact `|psi|^2` weights.
    Exact,
    /// `n_samples` ancestral draws; duplicates are merged into weights.
    Stochastic { n_samples: usize, seed: u64 },
}

#[derive(Clone, Debug)]
pub struct SampleBatch {
    pub configs: Vec<OccupationVector>,
    pub weights: Vec<f64>,
    pub e_loc: Vec<Complex64>,
    /// Row-major `configs.len() x n_params`; empty when built without derivatives.
    pub log_derivs: Vec<Complex64>,
    pub n_params: usize,
    /// Number of draws behind the weights (`N_s`), or `None` in exact mode.
    pub n_draws: Option<usize>,
    /// Exact mode only: for each config `n`, the pairs
    /// `(n', <x_n|H|x_n'> psi(x_n') / psi(x_n))` over connected configs in
    /// the batch.
    pub couplings: Option<Vec<Vec<(usize, Complex64)>>>,
    o_mean: Vec<Complex64>,
}

impl SampleBatch {
    /// Assembles a batch from precomputed caches. Weights are renormalized.
    pub fn from_parts(
        configs: Vec<OccupationVector>,
        weights: Vec<f64>,
        e_loc: Vec<Complex64>,
        log_derivs: Vec<Vec<Complex64>>,
        n_draws: Option<usize>,
    ) -> Result<Self> {
        let n = configs.len();
        if weights.len() != n || e_loc.len() != n || (!log_derivs.is_empty() && log_derivs.len() != n) {
            return Err(NqsError::DimensionMismatch {
                expected: n,
                got: weights.len().min(e_loc.len()),
            });
        }
        let n_params = log_derivs.first().map_or(0, Vec::len);
        if log_derivs.iter().any(|o| o.len() != n_params) {
            return Err(NqsError::InvalidInput("ragged log-derivative rows".into()));
        }
        let flat: Vec<Complex64> = log_derivs.into_iter().flatten().collect();
        Self::assemble(configs, weights, e_loc, flat, n_params, n_draws)
    }

    fn assemble(
        configs: Vec<OccupationVector>,
        mut weights: Vec<f64>,
        e_loc: Vec<Complex64>,
        log_derivs: Vec<Complex64>,
        n_params: usize,
        n_draws: Option<usize>,
    ) -> Result<Self> {
        if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(NqsError::InvalidInput("weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if configs.is_empty() || total <= 0.0 {
            return Err(NqsError::InvalidInput("empty batch".into()));
        }
        for w in &mut weights {
            *w /= total;
        }
        let mut o_mean = vec![Complex64::new(0.0, 0.0); n_params];
        if n_params > 0 {
            for (w, row) in weights.iter().zip(log_derivs.chunks_exact(n_params)) {
                for (m, o) in o_mean.iter_mut().zip(row) {
                    *m += *w * o;
                }
            }
        }
        Ok(Self {
            configs,
            weights,
            e_loc,
            log_derivs,
            n_params,
            n_draws,
            couplings: None,
            o_mean,
        })
    }

    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    pub fn is_exact(&self) -> bool {
        self.n_draws.is_none()
    }

    pub fn has_derivatives(&self) -> bool {
        self.n_params > 0 && !self.log_derivs.is_empty()
    }

    /// `O(x_n)` row.
    pub fn log_deriv(&self, n: usize) -> &[Complex64] {
        &self.log_derivs[n * self.n_params..(n + 1) * self.n_params]
    }

    /// `<O>` under the batch weights.
    pub fn mean_log_deriv(&self) -> &[Complex64] {
        &self.o_mean
    }

    fn require_derivatives(&self) -> Result<()> {
        if !self.has_derivatives() {
            return Err(NqsError::InvalidInput(
                "batch was built without log-derivatives".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EnergyEstimate {
    pub mean: f64,
    pub variance: f64,
    pub std_error: f64,
    /// `sum_n w_n Im E_loc(x_n)`; vanishes for an exact, real Hamiltonian.
    pub imag_mean: f64,
}

/// Builds a batch at `theta`, filling local energies and (optionally)
/// log-derivatives.
pub fn build_batch(
    ansatz: &Ansatz,
    theta: &[f64],
    ham: &MolecularIntegrals,
    mode: BatchMode,
    with_derivatives: bool,
) -> Result<SampleBatch> {
    build_batch_with_cap(ansatz, theta, ham, mode, with_derivatives, DEFAULT_ENUMERATION_CAP)
}

pub fn build_batch_with_cap(
    ansatz: &Ansatz,
    theta: &[f64],
    ham: &MolecularIntegrals,
    mode: BatchMode,
    with_derivatives: bool,
    cap: usize,
) -> Result<SampleBatch> {
    if ham.n_spin_orbitals() != ansatz.sector().n_spin_orbitals {
        return Err(NqsError::SectorMismatch(format!(
            "Hamiltonian has M = {}, ansatz sector {}",
            ham.n_spin_orbitals(),
            ansatz.sector()
        )));
    }
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(NqsError::NonFinite("parameters"));
    }
    let (configs, weights, log_psi, n_draws) = match mode {
        BatchMode::Exact => {
            let all = ansatz.sector().enumerate_with_cap(cap)?;
            let amps = par::try_map(&all, |x| ansatz.log_amplitude(theta, x))?;
            let mut configs = Vec::with_capacity(all.len());
            let mut weights = Vec::with_capacity(all.len());
            let mut log_psi = HashMap::with_capacity(all.len());
            for (x, a) in all.into_iter().zip(amps) {
                let p = a.probability();
                log_psi.insert(x.bits(), a.to_complex());
                // underflowed weights contribute nothing and would poison
                // the local-energy ratios
                if p > 0.0 {
                    configs.push(x);
                    weights.push(p);
                }
            }
            (configs, weights, log_psi, None)
        }
        BatchMode::Stochastic { n_samples, seed } => {
            if n_samples == 0 {
                return Err(NqsError::InvalidInput("empty batch".into()));
            }
            let mut draws = ansatz.sample(theta, n_samples, seed)?;
            draws.sort_unstable();
            let mut configs: Vec<OccupationVector> = Vec::new();
            let mut weights: Vec<f64> = Vec::new();
            for x in draws {
                match configs.last() {
                    Some(last) if *last == x => *weights.last_mut().expect("paired") += 1.0,
                    _ => {
                        configs.push(x);
                        weights.push(1.0);
                    }
                }
            }
            (configs, weights, HashMap::new(), Some(n_samples))
        }
    };

    let lookup = |y: &OccupationVector| -> Complex64 {
        match log_psi.get(&y.bits()) {
            Some(&l) => l,
            None => ansatz
                .log_amplitude(theta, y)
                .map(|a| a.to_complex())
                .unwrap_or(Complex64::new(f64::NEG_INFINITY, 0.0)),
        }
    };

    let per_config = par::try_map(&configs, |x| -> Result<(Complex64, Vec<Complex64>)> {
        let lx = lookup(x);
        if !lx.re.is_finite() {
            return Err(NqsError::ZeroAmplitude(format!("{x:?}")));
        }
        let e = ham.local_energy_from(&ham.connected(x), lx, lookup);
        if !e.re.is_finite() || !e.im.is_finite() {
            return Err(NqsError::NonFinite("local energy"));
        }
        let o = if with_derivatives {
            ansatz.log_derivative(theta, x)?
        } else {
            Vec::new()
        };
        Ok((e, o))
    })?;

    let couplings = if n_draws.is_none() && with_derivatives {
        let index: HashMap<u64, usize> =
            configs.iter().enumerate().map(|(i, x)| (x.bits(), i)).collect();
        Some(par::map(&configs, |x| {
            let lx = log_psi[&x.bits()];
            ham.connected(x)
                .into_iter()
                .filter_map(|c| {
                    let j = *index.get(&c.config.bits())?;
                    Some((j, c.element * (log_psi[&c.config.bits()] - lx).exp()))
                })
                .collect()
        }))
    } else {
        None
    };

    let n_params = if with_derivatives { ansatz.n_params() } else { 0 };
    let mut e_loc = Vec::with_capacity(configs.len());
    let mut flat = Vec::with_capacity(configs.len() * n_params);
    for (e, o) in per_config {
        e_loc.push(e);
        flat.extend(o);
    }
    let mut batch = SampleBatch::assemble(configs, weights, e_loc, flat, n_params, n_draws)?;
    batch.couplings = couplings;
    Ok(batch)
}

/// Weighted mean and variance of the local energy.
pub fn estimate_energy(batch: &SampleBatch) -> Result<EnergyEstimate> {
    if batch.is_empty() {
        return Err(NqsError::InvalidInput("empty batch".into()));
    }
    let mut mean = 0.0;
    let mut imag = 0.0;
    for (w, e) in batch.weights.iter().zip(&batch.e_loc) {
        mean += w * e.re;
        imag += w * e.im;
    }
    let mut variance = 0.0;
    for (w, e) in batch.weights.iter().zip(&batch.e_loc) {
        variance += w * (e - mean).norm_sqr();
    }
    if batch.is_exact() && imag.abs() > IMAG_WARN {
        log::warn!("exact-mode energy has imaginary part {imag:e}");
    }
    let std_error = match batch.n_draws {
        Some(n) => (variance / n as f64).sqrt(),
        None => 0.0,
    };
    Ok(EnergyEstimate {
        mean,
        variance,
        std_error,
        imag_mean: imag,
    })
}

/// `F_i = 2 Re( <O_i^* E_loc> - <O_i^*> E )`.
pub fn energy_gradient(batch: &SampleBatch, energy: &EnergyEstimate) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(NqsError::InvalidInput("empty batch".into()));
    }
    batch.require_derivatives()?;
    let p = batch.n_params;
    let mut acc = vec![Complex64::new(0.0, 0.0); p];
    for (n, (w, e)) in batch.weights.iter().zip(&batch.e_loc).enumerate() {
        let we = *w * e;
        for (a, o) in acc.iter_mut().zip(batch.log_deriv(n)) {
            *a += o.conj() * we;
        }
    }
    Ok(acc
        .iter()
        .zip(batch.mean_log_deriv())
        .map(|(a, m)| 2.0 * (a - m.conj() * energy.mean).re)
        .collect())
}

/// Matrix-free `H_eff v` with
/// `[H_eff]_ij = Re sum_n w_n dO_i^*(x_n) dE(x_n) dO_j(x_n)`,
/// `dE = Re E_loc - E`. Cost `O(N p)`; the `p x p` matrix is never formed.
pub fn heff_matvec(batch: &SampleBatch, energy: &EnergyEstimate, v: &[f64]) -> Result<Vec<f64>> {
    batch.require_derivatives()?;
    let p = batch.n_params;
    if v.len() != p {
        return Err(NqsError::DimensionMismatch {
            expected: p,
            got: v.len(),
        });
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(NqsError::NonFinite("matvec input"));
    }
    let mean_o = batch.mean_log_deriv();
    let n = batch.len();
    // c_n = w_n dE_n (dO_n . v)
    let coeffs: Vec<Complex64> = par::map_range(n, |k| {
        let row = batch.log_deriv(k);
        let mut z = Complex64::new(0.0, 0.0);
        for ((o, m), &vj) in row.iter().zip(mean_o).zip(v) {
            z += (o - m) * vj;
        }
        z * (batch.weights[k] * (batch.e_loc[k].re - energy.mean))
    });
    Ok(accumulate_columns(batch, &coeffs))
}

/// `out_i = Re sum_n conj(dO_i(x_n)) c_n`, blocked over columns.
fn accumulate_columns(batch: &SampleBatch, coeffs: &[Complex64]) -> Vec<f64> {
    let p = batch.n_params;
    let mean_o = batch.mean_log_deriv();
    let n_blocks = p.div_ceil(COLUMN_BLOCK);
    let blocks: Vec<Vec<f64>> = par::map_range(n_blocks, |b| {
        let lo = b * COLUMN_BLOCK;
        let hi = (lo + COLUMN_BLOCK).min(p);
        let mut out = vec![0.0; hi - lo];
        for (k, c) in coeffs.iter().enumerate() {
            let row = &batch.log_deriv(k)[lo..hi];
            for ((acc, o), m) in out.iter_mut().zip(row).zip(&mean_o[lo..hi]) {
                // Re(conj(dO) c)
                let d = o - m;
                *acc += d.re * c.re + d.im * c.im;
            }
        }
        out
    });
    blocks.into_iter().flatten().collect()
}

/// Which estimator of `<d_i psi| H - E |d_j psi>` to apply.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeffForm {
    /// Per-sample form `O_i^* (E_loc - E) O_j` ([`heff_matvec`]).
    Sampled,
    /// Exact-mode form with inter-configuration couplings
    /// ([`coupled_heff_matvec`]).
    Coupled,
    /// `Coupled` for exact batches, `Sampled` otherwise.
    Auto,
}

impl HeffForm {
    pub fn resolve(self, batch: &SampleBatch) -> HeffForm {
        match self {
            HeffForm::Auto if batch.couplings.is_some() => HeffForm::Coupled,
            HeffForm::Auto => HeffForm::Sampled,
            other => other,
        }
    }
}

/// `H_eff v` with the estimator selected by `form`.
pub fn heff_apply(batch: &SampleBatch, energy: &EnergyEstimate, form: HeffForm, v: &[f64]) -> Result<Vec<f64>> {
    match form.resolve(batch) {
        HeffForm::Coupled => coupled_heff_matvec(batch, energy, v),
        _ => heff_matvec(batch, energy, v),
    }
}

/// Exact-mode `H_eff v` including the couplings between configurations:
/// `[H_eff]_ij = <d_i psi| H - E |d_j psi>` with centered derivatives,
/// evaluated as `Re sum_n w_n dO_i^*(x_n) [sum_n' r_nn' u_n' - E u_n]`
/// where `u = dO v` and `r_nn' = H_nn' psi(x_n') / psi(x_n)`.
pub fn coupled_heff_matvec(batch: &SampleBatch, energy: &EnergyEstimate, v: &[f64]) -> Result<Vec<f64>> {
    batch.require_derivatives()?;
    let couplings = batch.couplings.as_ref().ok_or_else(|| {
        NqsError::InvalidInput("coupled H_eff needs an exact-mode batch".into())
    })?;
    let p = batch.n_params;
    if v.len() != p {
        return Err(NqsError::DimensionMismatch {
            expected: p,
            got: v.len(),
        });
    }
    let mean_o = batch.mean_log_deriv();
    let u: Vec<Complex64> = par::map_range(batch.len(), |k| {
        batch
            .log_deriv(k)
            .iter()
            .zip(mean_o)
            .zip(v)
            .map(|((o, m), &vj)| (o - m) * vj)
            .sum()
    });
    let coeffs: Vec<Complex64> = (0..batch.len())
        .map(|k| {
            let t: Complex64 = couplings[k].iter().map(|&(j, r)| r * u[j]).sum();
            batch.weights[k] * (t - energy.mean * u[k])
        })
        .collect();
    Ok(accumulate_columns(batch, &coeffs))
}

/// Product with the energy-centered tangent-space matrix over the basis
/// `{psi, d_1 psi, .., d_p psi}` with the parameter metric set to identity:
///
/// ```text
/// [ 0      F^T/2 ] [c_0]
/// [ F/2    H_eff ] [ v ]
/// ```
///
/// `c` has length `p + 1`; its lowest eigenvector `(c_0, v)` gives the
/// update `v / c_0` and the eigenvalue is the predicted energy change.
pub fn tangent_matvec(
    batch: &SampleBatch,
    energy: &EnergyEstimate,
    form: HeffForm,
    grad: &[f64],
    c: &[f64],
) -> Result<Vec<f64>> {
    let p = batch.n_params;
    if c.len() != p + 1 || grad.len() != p {
        return Err(NqsError::DimensionMismatch {
            expected: p + 1,
            got: c.len(),
        });
    }
    let hv = heff_apply(batch, energy, form, &c[1..])?;
    let mut out = Vec::with_capacity(p + 1);
    out.push(0.5 * grad.iter().zip(&c[1..]).map(|(g, v)| g * v).sum::<f64>());
    out.extend(hv.iter().zip(grad).map(|(h, g)| h + 0.5 * g * c[0]));
    Ok(out)
}

/// Dense `H_eff` oracle, symmetrized, with the pre-symmetrization asymmetry.
#[derive(Clone, Debug)]
pub struct DenseMatrix {
    pub matrix: DMatrix<f64>,
    pub asymmetry: f64,
}

/// Explicit `H_eff` from the full complex local energies, returned as
/// `(A + A^T)/2` (which equals the matrix applied by [`heff_matvec`]).
pub fn dense_heff(batch: &SampleBatch, energy: &EnergyEstimate, cap: usize) -> Result<DenseMatrix> {
    batch.require_derivatives()?;
    let p = batch.n_params;
    if p > cap {
        return Err(NqsError::CapExceeded {
            what: "dense H_eff",
            size: p as u128,
            cap,
        });
    }
    let mean_o = batch.mean_log_deriv();
    let mut a = DMatrix::<f64>::zeros(p, p);
    let mut d = vec![Complex64::new(0.0, 0.0); p];
    for k in 0..batch.len() {
        for ((di, o), m) in d.iter_mut().zip(batch.log_deriv(k)).zip(mean_o) {
            *di = o - m;
        }
        let de = batch.weights[k] * (batch.e_loc[k] - energy.mean);
        for i in 0..p {
            let left = d[i].conj() * de;
            for j in 0..p {
                a[(i, j)] += (left * d[j]).re;
            }
        }
    }
    Ok(symmetrize(a))
}

/// Explicit connected QGT `S_ij = Re(<O_i^* O_j> - <O_i>^* <O_j>)`.
pub fn dense_qgt(batch: &SampleBatch, cap: usize) -> Result<DenseMatrix> {
    batch.require_derivatives()?;
    let p = batch.n_params;
    if p > cap {
        return Err(NqsError::CapExceeded {
            what: "dense QGT",
            size: p as u128,
            cap,
        });
    }
    let mean_o = batch.mean_log_deriv();
    let mut s = DMatrix::<f64>::zeros(p, p);
    for k in 0..batch.len() {
        let row = batch.log_deriv(k);
        let w = batch.weights[k];
        for i in 0..p {
            let left = row[i].conj() * w;
            for j in 0..p {
                s[(i, j)] += (left * row[j]).re;
            }
        }
    }
    for i in 0..p {
        for j in 0..p {
            s[(i, j)] -= (mean_o[i].conj() * mean_o[j]).re;
        }
    }
    Ok(symmetrize(s))
}

fn symmetrize(a: DMatrix<f64>) -> DenseMatrix {
    let p = a.nrows();
    let mut asym = 0.0f64;
    for i in 0..p {
        for j in 0..i {
            asym = asym.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    let matrix = (&a + a.transpose()) * 0.5;
    DenseMatrix {
        matrix,
        asymmetry: asym,
    }
}
