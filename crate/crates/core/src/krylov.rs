//! Matrix-free symmetric eigensolvers: Lanczos tridiagonalization, implicit
//! shifted-QR restarts and the implicitly restarted Lanczos (IRL) driver for
//! the lowest eigenpair.
//!
//! The factorization maintained throughout is
//!
//! ```text
//! A V_j = V_j T_j + beta_j v_{j+1} e_j^T
//! ```
//!
//! with `V_j` orthonormal and `T_j` symmetric tridiagonal. An implicit
//! restart applies `mu` shifted QR sweeps to `T_j`, which compresses the
//! factorization to `k` columns whose first vector is
//! `prod_i (A - nu_i I) v_1` up to normalization.

use std::cell::Cell;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{NqsError, Result};

/// Relative factor for the breakdown test `beta_j <= tol * max(1, scale)`.
pub const BREAKDOWN_TOLERANCE: f64 = 1e-12;

/// Largest tridiagonal handled by [`tridiag_eigen`].
pub const TRIDIAG_CAP: usize = 1000;

/// A symmetric linear map accessed only through products.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64]) -> Result<Vec<f64>>;
}

/// Adapts a closure into a [`LinearOperator`].
pub struct FnOperator<F> {
    dim: usize,
    f: F,
}

impl<F> FnOperator<F>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> LinearOperator for FnOperator<F>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        (self.f)(x)
    }
}

impl LinearOperator for nalgebra::DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let v = nalgebra::DVectorView::from_slice(x, x.len());
        Ok((self * v).as_slice().to_vec())
    }
}

/// Counts products and rejects non-finite output.
struct Counted<'a, A: ?Sized> {
    op: &'a A,
    count: Cell<usize>,
}

impl<'a, A: LinearOperator + ?Sized> Counted<'a, A> {
    fn new(op: &'a A) -> Self {
        Self {
            op,
            count: Cell::new(0),
        }
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.count.set(self.count.get() + 1);
        let y = self.op.apply(x)?;
        if y.len() != x.len() {
            return Err(NqsError::DimensionMismatch {
                expected: x.len(),
                got: y.len(),
            });
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(NqsError::NonFinite("matvec output"));
        }
        Ok(y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reorthogonalization {
    /// Modified Gram-Schmidt against every stored vector, repeated once when
    /// the norm drops sharply.
    Full,
    /// Plain three-term recurrence.
    None,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TridiagonalMatrix {
    pub alpha: Vec<f64>,
    /// Sub-diagonal, length `m - 1`.
    pub beta: Vec<f64>,
    /// Residual coupling `beta_m`.
    pub beta_last: f64,
}

impl TridiagonalMatrix {
    pub fn dim(&self) -> usize {
        self.alpha.len()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let m = self.dim();
        let mut t = vec![vec![0.0; m]; m];
        for i in 0..m {
            t[i][i] = self.alpha[i];
            if i + 1 < m {
                t[i][i + 1] = self.beta[i];
                t[i + 1][i] = self.beta[i];
            }
        }
        t
    }

    fn scale(&self) -> f64 {
        self.alpha
            .iter()
            .chain(&self.beta)
            .fold(0.0f64, |a, v| a.max(v.abs()))
    }
}

/// A (possibly partial) Lanczos factorization.
#[derive(Clone, Debug)]
pub struct Lanczos {
    /// Orthonormal basis `v_1 .. v_j`.
    pub basis: Vec<Vec<f64>>,
    pub alpha: Vec<f64>,
    /// `beta[i]` couples `v_{i+1}` and `v_{i+2}`; the last entry is the
    /// residual norm `beta_j`.
    pub beta: Vec<f64>,
    /// `v_{j+1}`, absent after an invariant-subspace breakdown.
    pub next: Option<Vec<f64>>,
    pub invariant_subspace: bool,
    pub reorth: Reorthogonalization,
    pub matvecs: usize,
}

impl Lanczos {
    /// Empty factorization seeded with a unit vector.
    pub fn start(v1: Vec<f64>, reorth: Reorthogonalization) -> Result<Self> {
        let n = norm(&v1);
        if (n - 1.0).abs() > 1e-12 {
            return Err(NqsError::InvalidInput(format!(
                "Lanczos start vector has norm {n}"
            )));
        }
        Ok(Self {
            basis: Vec::new(),
            alpha: Vec::new(),
            beta: Vec::new(),
            next: Some(v1),
            invariant_subspace: false,
            reorth,
            matvecs: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    pub fn tridiagonal(&self) -> TridiagonalMatrix {
        let j = self.len();
        TridiagonalMatrix {
            alpha: self.alpha.clone(),
            beta: self.beta[..j.saturating_sub(1)].to_vec(),
            beta_last: self.beta.last().copied().unwrap_or(0.0),
        }
    }

    /// Grows the factorization to `m` columns or until breakdown.
    pub fn extend<A: LinearOperator + ?Sized>(&mut self, op: &A, m: usize) -> Result<()> {
        let counted = Counted::new(op);
        let res = self.extend_counted(&counted, m);
        self.matvecs += counted.count.get();
        res
    }

    fn extend_counted<A: LinearOperator + ?Sized>(&mut self, op: &Counted<A>, m: usize) -> Result<()> {
        while self.len() < m {
            let Some(v) = self.next.take() else { break };
            self.basis.push(v);
            let j = self.len() - 1;
            let mut w = op.apply(&self.basis[j])?;
            let a = dot(&self.basis[j], &w);
            axpy(-a, &self.basis[j], &mut w);
            if j > 0 {
                axpy(-self.beta[j - 1], &self.basis[j - 1], &mut w);
            }
            let mut a_corr = 0.0;
            if self.reorth == Reorthogonalization::Full {
                a_corr = reorthogonalize(&self.basis, &mut w);
            }
            self.alpha.push(a + a_corr);
            let b = norm(&w);
            self.beta.push(b);
            let broke = match self.reorth {
                Reorthogonalization::Full => {
                    let scale = self
                        .alpha
                        .iter()
                        .chain(&self.beta[..j])
                        .fold(1.0f64, |s, v| s.max(v.abs()));
                    b <= BREAKDOWN_TOLERANCE * scale
                }
                Reorthogonalization::None => b == 0.0,
            };
            if broke {
                self.invariant_subspace = true;
                *self.beta.last_mut().expect("just pushed") = 0.0;
                break;
            }
            scale_in_place(1.0 / b, &mut w);
            self.next = Some(w);
        }
        Ok(())
    }

    /// `max |(A V - V T - beta_j v_{j+1} e_j^T)_{il}|`, costs `j` products.
    pub fn projection_residual<A: LinearOperator + ?Sized>(&self, op: &A) -> Result<f64> {
        let j = self.len();
        let mut worst = 0.0f64;
        for c in 0..j {
            let mut r = op.apply(&self.basis[c])?;
            axpy(-self.alpha[c], &self.basis[c], &mut r);
            if c > 0 {
                axpy(-self.beta[c - 1], &self.basis[c - 1], &mut r);
            }
            if c + 1 < j {
                axpy(-self.beta[c], &self.basis[c + 1], &mut r);
            } else if let Some(next) = &self.next {
                axpy(-self.beta[c], next, &mut r);
            }
            worst = worst.max(r.iter().fold(0.0f64, |a, v| a.max(v.abs())));
        }
        Ok(worst)
    }

    /// `max |V^T V - I|` over the stored basis.
    pub fn orthogonality_loss(&self) -> f64 {
        let j = self.len();
        let mut worst = 0.0f64;
        for a in 0..j {
            for b in 0..=a {
                let d = dot(&self.basis[a], &self.basis[b]) - if a == b { 1.0 } else { 0.0 };
                worst = worst.max(d.abs());
            }
        }
        worst
    }
}

/// MGS pass(es) of `w` against `basis`; returns the total coefficient on the
/// last basis vector.
fn reorthogonalize(basis: &[Vec<f64>], w: &mut [f64]) -> f64 {
    let mut last_coeff = 0.0;
    for _ in 0..2 {
        let before = norm(w);
        for (i, v) in basis.iter().enumerate() {
            let c = dot(v, w);
            axpy(-c, v, w);
            if i + 1 == basis.len() {
                last_coeff += c;
            }
        }
        // second pass only when cancellation was severe
        if norm(w) > 0.717 * before {
            break;
        }
    }
    last_coeff
}

/// Standard Lanczos from `v1` for `m` steps.
pub fn lanczos<A: LinearOperator + ?Sized>(
    op: &A,
    v1: Vec<f64>,
    m: usize,
    reorth: Reorthogonalization,
) -> Result<Lanczos> {
    if m == 0 {
        return Err(NqsError::InvalidInput("Lanczos needs m >= 1".into()));
    }
    if v1.len() != op.dim() {
        return Err(NqsError::DimensionMismatch {
            expected: op.dim(),
            got: v1.len(),
        });
    }
    let mut f = Lanczos::start(v1, reorth)?;
    f.extend(op, m)?;
    Ok(f)
}

/// Eigen-decomposition of a symmetric tridiagonal matrix by implicit QL
/// with Wilkinson shifts. Returns ascending eigenvalues and the
/// eigenvectors as columns (`vectors[row][col]`).
pub fn tridiag_eigen(t: &TridiagonalMatrix) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = t.dim();
    if n > TRIDIAG_CAP {
        return Err(NqsError::CapExceeded {
            what: "tridiagonal eigensolve",
            size: n as u128,
            cap: TRIDIAG_CAP,
        });
    }
    if n == 0 {
        return Ok((Vec::new(), Vec::new()));
    }
    let mut d = t.alpha.clone();
    let mut e: Vec<f64> = t.beta.iter().copied().chain(std::iter::once(0.0)).collect();
    let mut z = vec![vec![0.0; n]; n];
    for (i, row) in z.iter_mut().enumerate() {
        row[i] = 1.0;
    }

    let eps = f64::EPSILON;
    let mut f = 0.0;
    let mut tst1 = 0.0f64;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 && e[m].abs() > eps * tst1 {
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > 200 {
                    return Err(NqsError::Internal("tridiagonal QL failed to converge".into()));
                }
                let g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for row in z.iter_mut() {
                        let hz = row[i + 1];
                        row[i + 1] = s * row[i] + c * hz;
                        row[i] = c * row[i] - s * hz;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    let values: Vec<f64> = order.iter().map(|&i| d[i]).collect();
    let vectors: Vec<Vec<f64>> = z
        .iter()
        .map(|row| order.iter().map(|&i| row[i]).collect())
        .collect();
    Ok((values, vectors))
}

/// Compresses an `m`-step factorization to `k` steps by `shifts.len()`
/// implicitly shifted QR sweeps on its tridiagonal matrix.
///
/// Shifts lying within `1e-14` of one of the kept Ritz values are nudged by
/// `1e-12` times the Ritz spread so the kept components are not annihilated.
pub fn implicit_restart(f: &Lanczos, shifts: &[f64], k: usize) -> Result<Lanczos> {
    let m = f.len();
    if k == 0 || k > m {
        return Err(NqsError::InvalidInput(format!(
            "keep count {k} invalid for an {m}-step factorization"
        )));
    }
    if shifts.len() > m - k {
        return Err(NqsError::InvalidInput(format!(
            "{} shifts exceed m - k = {}",
            shifts.len(),
            m - k
        )));
    }
    let tri = f.tridiagonal();
    let (ritz, _) = tridiag_eigen(&tri)?;
    let spread = (ritz[m - 1] - ritz[0]).abs().max(tri.scale()).max(f64::MIN_POSITIVE);
    let kept = &ritz[..k];

    let mut t = tri.to_dense();
    let mut q = vec![vec![0.0; m]; m];
    for (i, row) in q.iter_mut().enumerate() {
        row[i] = 1.0;
    }

    for &raw in shifts {
        let mut nu = raw;
        if kept.iter().any(|&r| (r - nu).abs() <= 1e-14) {
            log::warn!("restart shift {nu:e} coincides with a kept Ritz value; perturbing");
            nu += 1e-12 * spread;
        }
        qr_sweep(&mut t, &mut q, nu);
    }

    let n = f.basis[0].len();
    let combine = |col: usize| -> Vec<f64> {
        let mut v = vec![0.0; n];
        for (l, basis) in f.basis.iter().enumerate() {
            let c = q[l][col];
            if c != 0.0 {
                axpy(c, basis, &mut v);
            }
        }
        v
    };
    let basis: Vec<Vec<f64>> = (0..k).map(combine).collect();

    // r_k = V Q e_{k+1} * T+[k+1, k] + r_m * Q[m, k]
    let sigma = q[m - 1][k - 1];
    let mut resid = if k < m {
        let mut r = combine(k);
        scale_in_place(t[k][k - 1], &mut r);
        r
    } else {
        vec![0.0; n]
    };
    if let Some(next) = &f.next {
        axpy(f.beta[m - 1] * sigma, next, &mut resid);
    }

    let alpha: Vec<f64> = (0..k).map(|i| t[i][i]).collect();
    let mut beta: Vec<f64> = (0..k.saturating_sub(1)).map(|i| t[i + 1][i]).collect();
    let rn = norm(&resid);
    let scale = alpha.iter().chain(&beta).fold(1.0f64, |s, v| s.max(v.abs()));
    let invariant = rn <= BREAKDOWN_TOLERANCE * scale;
    beta.push(if invariant { 0.0 } else { rn });
    let next = if invariant {
        None
    } else {
        scale_in_place(1.0 / rn, &mut resid);
        Some(resid)
    };
    Ok(Lanczos {
        basis,
        alpha,
        beta,
        next,
        invariant_subspace: invariant,
        reorth: f.reorth,
        matvecs: f.matvecs,
    })
}

/// One implicit symmetric QR sweep with shift `nu` by Givens bulge chasing,
/// accumulating the rotations into `q`.
fn qr_sweep(t: &mut [Vec<f64>], q: &mut [Vec<f64>], nu: f64) {
    let m = t.len();
    if m < 2 {
        return;
    }
    let mut x = t[0][0] - nu;
    let mut y = t[1][0];
    for i in 0..m - 1 {
        let r = x.hypot(y);
        let (c, s) = if r == 0.0 { (1.0, 0.0) } else { (x / r, y / r) };
        // rows i, i+1
        let lo = i.saturating_sub(1);
        let hi = (i + 3).min(m);
        for col in lo..hi {
            let a = t[i][col];
            let b = t[i + 1][col];
            t[i][col] = c * a + s * b;
            t[i + 1][col] = -s * a + c * b;
        }
        // columns i, i+1
        for row in lo..hi {
            let a = t[row][i];
            let b = t[row][i + 1];
            t[row][i] = c * a + s * b;
            t[row][i + 1] = -s * a + c * b;
        }
        for row in q.iter_mut() {
            let a = row[i];
            let b = row[i + 1];
            row[i] = c * a + s * b;
            row[i + 1] = -s * a + c * b;
        }
        if i + 2 < m {
            x = t[i + 1][i];
            y = t[i + 2][i];
        }
    }
    // restore exact symmetric tridiagonal structure
    for i in 0..m {
        for j in 0..m {
            if i.abs_diff(j) > 1 {
                t[i][j] = 0.0;
            }
        }
        if i + 1 < m {
            let avg = 0.5 * (t[i][i + 1] + t[i + 1][i]);
            t[i][i + 1] = avg;
            t[i + 1][i] = avg;
        }
    }
}

/// Approximate eigenpair lifted to the full space.
#[derive(Clone, Debug)]
pub struct RitzPair {
    pub lambda: f64,
    pub y: Vec<f64>,
    /// Explicit `||A y - lambda y||`.
    pub residual: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IrlConfig {
    /// Krylov subspace size.
    pub m: usize,
    /// Residual tolerance on `||A y - lambda y||`.
    pub tol: f64,
    pub max_restarts: usize,
    pub seed: u64,
}

impl Default for IrlConfig {
    fn default() -> Self {
        Self {
            m: 20,
            tol: 1e-12,
            max_restarts: 300,
            seed: 111,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EigenSolve {
    pub pair: RitzPair,
    pub converged: bool,
    pub restarts: usize,
    pub matvecs: usize,
    /// Lowest Ritz value after each Lanczos sweep.
    pub ritz_history: Vec<f64>,
}

fn random_unit(dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = norm(&v);
        if n > 0.0 {
            scale_in_place(1.0 / n, &mut v);
            return v;
        }
    }
}

fn lift(basis: &[Vec<f64>], coeffs: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; basis[0].len()];
    for (v, &c) in basis.iter().zip(coeffs) {
        axpy(c, v, &mut y);
    }
    let n = norm(&y);
    if n > 0.0 {
        scale_in_place(1.0 / n, &mut y);
    }
    y
}

fn explicit_residual<A: LinearOperator + ?Sized>(
    op: &Counted<A>,
    y: &[f64],
    lambda: f64,
) -> Result<f64> {
    let mut r = op.apply(y)?;
    axpy(-lambda, y, &mut r);
    Ok(norm(&r))
}

/// Lowest eigenpair of a symmetric operator by implicitly restarted Lanczos
/// with `k = 1` and exact shifts (the `m - 1` largest Ritz values).
///
/// The cheap estimate `beta_m |e_m^T u_1|` drives iteration; convergence is
/// certified with one explicit residual product.
pub fn irl_smallest<A: LinearOperator + ?Sized>(op: &A, cfg: &IrlConfig) -> Result<EigenSolve> {
    let dim = op.dim();
    if dim == 0 {
        return Err(NqsError::InvalidInput("eigenproblem of dimension 0".into()));
    }
    if cfg.m == 0 {
        return Err(NqsError::InvalidInput("Krylov size m must be positive".into()));
    }
    let counted = Counted::new(op);
    if dim == 1 {
        let lambda = counted.apply(&[1.0])?[0];
        return Ok(EigenSolve {
            pair: RitzPair {
                lambda,
                y: vec![1.0],
                residual: 0.0,
            },
            converged: true,
            restarts: 0,
            matvecs: 1,
            ritz_history: vec![lambda],
        });
    }
    let m = cfg.m.min(dim).max(2);
    let mut f = Lanczos::start(random_unit(dim, cfg.seed), Reorthogonalization::Full)?;
    f.extend_counted(&counted, m)?;

    let mut history = Vec::new();
    let mut restarts = 0;
    loop {
        let (vals, vecs) = tridiag_eigen(&f.tridiagonal())?;
        let j = f.len();
        let u1: Vec<f64> = vecs.iter().map(|row| row[0]).collect();
        let lambda = vals[0];
        history.push(lambda);
        let estimate = f.beta[j - 1] * u1[j - 1].abs();
        let last = restarts >= cfg.max_restarts;

        if estimate <= cfg.tol || f.invariant_subspace || last {
            let y = lift(&f.basis, &u1);
            let residual = explicit_residual(&counted, &y, lambda)?;
            let converged = residual <= cfg.tol;
            if converged || last {
                return Ok(EigenSolve {
                    pair: RitzPair { lambda, y, residual },
                    converged,
                    restarts,
                    matvecs: counted.count.get(),
                    ritz_history: history,
                });
            }
            // an exhausted subspace cannot resolve residuals below the
            // breakdown threshold; rebuilding would only repeat it
            let floor = BREAKDOWN_TOLERANCE * f.tridiagonal().scale().max(1.0);
            if f.invariant_subspace && residual <= 2.0 * floor {
                log::warn!(
                    "residual {residual:e} is at the breakdown floor {floor:e}; tolerance {:e} unreachable",
                    cfg.tol
                );
                return Ok(EigenSolve {
                    pair: RitzPair { lambda, y, residual },
                    converged,
                    restarts,
                    matvecs: counted.count.get(),
                    ritz_history: history,
                });
            }
            if f.invariant_subspace || j < 2 {
                // estimate and explicit residual disagree on an exhausted
                // subspace: rebuild from the current Ritz vector
                restarts += 1;
                f = Lanczos::start(y, Reorthogonalization::Full)?;
                f.extend_counted(&counted, m)?;
                continue;
            }
        }

        restarts += 1;
        let shifts = &vals[1..];
        f = implicit_restart(&f, shifts, 1)?;
        f.extend_counted(&counted, m)?;
    }
}

/// Standard Lanczos baseline: no reorthogonalization, no restarts, a fixed
/// number of steps (breakdown only on an exactly zero `beta`).
pub fn sl_smallest<A: LinearOperator + ?Sized>(
    op: &A,
    iterations: usize,
    tol: f64,
    seed: u64,
) -> Result<EigenSolve> {
    let dim = op.dim();
    if dim == 0 {
        return Err(NqsError::InvalidInput("eigenproblem of dimension 0".into()));
    }
    let counted = Counted::new(op);
    let mut f = Lanczos::start(random_unit(dim, seed), Reorthogonalization::None)?;
    f.extend_counted(&counted, iterations.max(1))?;
    let (vals, vecs) = tridiag_eigen(&f.tridiagonal())?;
    let u1: Vec<f64> = vecs.iter().map(|row| row[0]).collect();
    let lambda = vals[0];
    let y = lift(&f.basis, &u1);
    let residual = explicit_residual(&counted, &y, lambda)?;
    Ok(EigenSolve {
        pair: RitzPair { lambda, y, residual },
        converged: residual <= tol,
        restarts: 0,
        matvecs: counted.count.get(),
        ritz_history: vec![lambda],
    })
}

// small dense vector helpers

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
fn scale_in_place(alpha: f64, x: &mut [f64]) {
    for v in x {
        *v *= alpha;
    }
}
