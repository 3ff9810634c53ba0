//! Autoregressive neural quantum state with exact particle-number masking.
//!
//! `psi(n) = sqrt(p(n)) * exp(i phi(n))` where `p(n) = prod_i p~(n_i | n_<i)`.
//!
//! The conditional network is a single hidden layer shared across positions.
//! Its input is the `±1`-encoded prefix (zeros for positions `>= i`) followed
//! by a one-hot position indicator, `2M` features in total, and it emits two
//! logits. Disallowed outcomes get a `-inf` logit before the softmax, so a
//! forced position carries probability one and no parameter dependence.
//!
//! The phase head is a separate `tanh` layer on the full `±1` configuration
//! with a scalar linear readout, initialized to output zero.
//!
//! Parameter layout (flat `theta`):
//!
//! | block      | shape              |
//! |------------|--------------------|
//! | `w_in`     | `2M x H` (input-major) |
//! | `b_in`     | `H`                |
//! | `w_out`    | `2 x H`            |
//! | `b_out`    | `2`                |
//! | `u_phase`  | `H_phi x M`        |
//! | `c_phase`  | `H_phi`            |
//! | `w_phase`  | `H_phi`            |
//! | `d_phase`  | `1`                |

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NqsError, Result};
use crate::hilbert::{OccupationVector, Sector};
use crate::par;

/// Samples drawn per independently seeded RNG stream.
const SAMPLE_CHUNK: usize = 256;

/// Layer widths of the network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub n_spin_orbitals: usize,
    pub hidden: usize,
    pub phase_hidden: usize,
}

impl Architecture {
    pub fn new(n_spin_orbitals: usize, hidden: usize) -> Self {
        Self {
            n_spin_orbitals,
            hidden,
            phase_hidden: hidden,
        }
    }

    /// Total parameter count `H (2M + 3) + 2 + H_phi (M + 2) + 1`.
    pub fn n_params(&self) -> usize {
        let m = self.n_spin_orbitals;
        self.hidden * (2 * m + 3) + 2 + self.phase_hidden * (m + 2) + 1
    }

    /// Smallest shared hidden width whose parameter count reaches `target`.
    pub fn hidden_for_target(n_spin_orbitals: usize, target: usize) -> usize {
        let per = 3 * n_spin_orbitals + 5;
        (target.saturating_sub(3)).div_ceil(per).max(1)
    }

    fn layout(&self) -> Layout {
        let m = self.n_spin_orbitals;
        let h = self.hidden;
        let hp = self.phase_hidden;
        let w_in = 0;
        let b_in = w_in + 2 * m * h;
        let w_out = b_in + h;
        let b_out = w_out + 2 * h;
        let u_phase = b_out + 2;
        let c_phase = u_phase + hp * m;
        let w_phase = c_phase + hp;
        let d_phase = w_phase + hp;
        Layout {
            w_in,
            b_in,
            w_out,
            b_out,
            u_phase,
            c_phase,
            w_phase,
            d_phase,
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Layout {
    w_in: usize,
    b_in: usize,
    w_out: usize,
    b_out: usize,
    u_phase: usize,
    c_phase: usize,
    w_phase: usize,
    d_phase: usize,
}

/// `ln psi = log_prob_half + i phase`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogAmplitude {
    pub log_prob_half: f64,
    pub phase: f64,
}

impl LogAmplitude {
    /// True when the configuration has probability zero under the masking.
    pub fn is_zero(&self) -> bool {
        self.log_prob_half == f64::NEG_INFINITY
    }

    pub fn to_complex(self) -> Complex64 {
        Complex64::new(self.log_prob_half, self.phase)
    }

    /// `|psi|^2`.
    pub fn probability(&self) -> f64 {
        (2.0 * self.log_prob_half).exp()
    }
}

/// Which outcomes the particle-number mask allows at a position.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Allowed {
    Both,
    OnlyEmpty,
    OnlyOccupied,
}

/// The network architecture bound to a particle-number sector.
#[derive(Clone, Debug)]
pub struct Ansatz {
    arch: Architecture,
    sector: Sector,
    layout: Layout,
}

impl Ansatz {
    pub fn new(arch: Architecture, sector: Sector) -> Result<Self> {
        if arch.n_spin_orbitals != sector.n_spin_orbitals {
            return Err(NqsError::InvalidInput(format!(
                "architecture has M = {} but sector has M = {}",
                arch.n_spin_orbitals, sector.n_spin_orbitals
            )));
        }
        if arch.hidden == 0 {
            return Err(NqsError::InvalidInput("hidden width must be positive".into()));
        }
        Ok(Self {
            arch,
            sector,
            layout: arch.layout(),
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn sector(&self) -> &Sector {
        &self.sector
    }

    pub fn n_params(&self) -> usize {
        self.arch.n_params()
    }

    /// Seeded uniform initialization, `U[-1/sqrt(fan_in), 1/sqrt(fan_in)]`,
    /// with the phase readout set to zero.
    pub fn init_params(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = self.arch.n_spin_orbitals;
        let h = self.arch.hidden;
        let hp = self.arch.phase_hidden;
        let l = &self.layout;
        let mut theta = vec![0.0; self.n_params()];
        let mut fill = |range: std::ops::Range<usize>, fan_in: usize, rng: &mut ChaCha8Rng| {
            let s = 1.0 / (fan_in as f64).sqrt();
            for v in &mut theta[range] {
                *v = rng.gen_range(-s..=s);
            }
        };
        fill(l.w_in..l.b_in, 2 * m, &mut rng);
        fill(l.b_in..l.w_out, 2 * m, &mut rng);
        fill(l.w_out..l.b_out, h, &mut rng);
        fill(l.b_out..l.u_phase, h, &mut rng);
        fill(l.u_phase..l.c_phase, m, &mut rng);
        fill(l.c_phase..l.w_phase, m, &mut rng);
        debug_assert_eq!(l.d_phase + 1, self.n_params());
        let _ = hp;
        theta
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.n_params() {
            return Err(NqsError::DimensionMismatch {
                expected: self.n_params(),
                got: theta.len(),
            });
        }
        Ok(())
    }

    fn allowed(&self, i: usize, n_up_so_far: usize, n_down_so_far: usize) -> Option<Allowed> {
        let half = self.sector.n_spatial();
        let (count, required, remaining) = if i < half {
            (n_up_so_far, self.sector.n_up, half - i)
        } else {
            (n_down_so_far, self.sector.n_down, 2 * half - i)
        };
        let can_occupy = count < required;
        // leaving i empty must still leave enough orbitals for the rest
        let can_leave = required.saturating_sub(count) < remaining;
        match (can_leave, can_occupy) {
            (true, true) => Some(Allowed::Both),
            (true, false) => Some(Allowed::OnlyEmpty),
            (false, true) => Some(Allowed::OnlyOccupied),
            (false, false) => None,
        }
    }

    /// Raw network logits at position `i` given the running input
    /// accumulator (`b_in + sum_{j<i} s_j w_in[j]`); fills `hidden`.
    #[inline]
    fn logits(&self, theta: &[f64], acc: &[f64], i: usize, hidden: &mut [f64]) -> [f64; 2] {
        let h = self.arch.hidden;
        let m = self.arch.n_spin_orbitals;
        let l = &self.layout;
        let pos = &theta[l.w_in + (m + i) * h..l.w_in + (m + i + 1) * h];
        for k in 0..h {
            hidden[k] = (acc[k] + pos[k]).tanh();
        }
        let w0 = &theta[l.w_out..l.w_out + h];
        let w1 = &theta[l.w_out + h..l.w_out + 2 * h];
        let mut z0 = theta[l.b_out];
        let mut z1 = theta[l.b_out + 1];
        for k in 0..h {
            z0 += w0[k] * hidden[k];
            z1 += w1[k] * hidden[k];
        }
        [z0, z1]
    }

    #[inline]
    fn push_input(&self, theta: &[f64], acc: &mut [f64], j: usize, occupied: bool) {
        let h = self.arch.hidden;
        let col = &theta[self.layout.w_in + j * h..self.layout.w_in + (j + 1) * h];
        let s = if occupied { 1.0 } else { -1.0 };
        for k in 0..h {
            acc[k] += s * col[k];
        }
    }

    fn fresh_acc(&self, theta: &[f64]) -> Vec<f64> {
        theta[self.layout.b_in..self.layout.b_in + self.arch.hidden].to_vec()
    }

    /// Masked conditional `(P(n_i = 0), P(n_i = 1))` given the first `i`
    /// occupations in `prefix`.
    pub fn conditional(&self, theta: &[f64], prefix: &[bool]) -> Result<(f64, f64)> {
        self.check_theta(theta)?;
        let m = self.arch.n_spin_orbitals;
        let i = prefix.len();
        if i >= m {
            return Err(NqsError::InvalidInput(format!(
                "prefix length {i} leaves no position in M = {m}"
            )));
        }
        let half = self.sector.n_spatial();
        let mut acc = self.fresh_acc(theta);
        let (mut nu, mut nd) = (0, 0);
        for (j, &b) in prefix.iter().enumerate() {
            let ok = match self.allowed(j, nu, nd) {
                Some(Allowed::Both) => true,
                Some(Allowed::OnlyEmpty) => !b,
                Some(Allowed::OnlyOccupied) => b,
                None => false,
            };
            if !ok {
                return Err(NqsError::InvalidInput(format!(
                    "prefix {prefix:?} is inconsistent with sector {}",
                    self.sector
                )));
            }
            self.push_input(theta, &mut acc, j, b);
            if b {
                if j < half {
                    nu += 1
                } else {
                    nd += 1
                }
            }
        }
        match self.allowed(i, nu, nd) {
            None => Err(NqsError::Internal(format!(
                "prefix {prefix:?} admits no continuation in sector {}",
                self.sector
            ))),
            Some(Allowed::OnlyEmpty) => Ok((1.0, 0.0)),
            Some(Allowed::OnlyOccupied) => Ok((0.0, 1.0)),
            Some(Allowed::Both) => {
                let mut hidden = vec![0.0; self.arch.hidden];
                let z = self.logits(theta, &acc, i, &mut hidden);
                let p = softmax2(z);
                Ok((p[0], p[1]))
            }
        }
    }

    /// `phi(n)` and the hidden activations of the phase head.
    fn phase_forward(&self, theta: &[f64], spins: &[f64], t: &mut [f64]) -> f64 {
        let m = self.arch.n_spin_orbitals;
        let l = &self.layout;
        let mut phi = theta[l.d_phase];
        for (k, tk) in t.iter_mut().enumerate() {
            let row = &theta[l.u_phase + k * m..l.u_phase + (k + 1) * m];
            let mut a = theta[l.c_phase + k];
            for j in 0..m {
                a += row[j] * spins[j];
            }
            *tk = a.tanh();
            phi += theta[l.w_phase + k] * *tk;
        }
        phi
    }

    fn check_vector(&self, x: &OccupationVector) -> Result<()> {
        if x.n_spin_orbitals() != self.arch.n_spin_orbitals {
            return Err(NqsError::SectorMismatch(format!(
                "{x:?} has M = {}, ansatz expects {}",
                x.n_spin_orbitals(),
                self.arch.n_spin_orbitals
            )));
        }
        Ok(())
    }

    /// Log-amplitude of `x`. Configurations outside the sector come back with
    /// `log_prob_half = -inf` rather than an error.
    pub fn log_amplitude(&self, theta: &[f64], x: &OccupationVector) -> Result<LogAmplitude> {
        self.check_theta(theta)?;
        self.check_vector(x)?;
        let m = self.arch.n_spin_orbitals;
        let half = self.sector.n_spatial();
        let mut acc = self.fresh_acc(theta);
        let mut hidden = vec![0.0; self.arch.hidden];
        let (mut nu, mut nd) = (0, 0);
        let mut log_prob = 0.0;
        for i in 0..m {
            let b = x.is_occupied(i);
            match self.allowed(i, nu, nd) {
                None => {
                    log_prob = f64::NEG_INFINITY;
                    break;
                }
                Some(Allowed::OnlyEmpty) if b => {
                    log_prob = f64::NEG_INFINITY;
                    break;
                }
                Some(Allowed::OnlyOccupied) if !b => {
                    log_prob = f64::NEG_INFINITY;
                    break;
                }
                Some(Allowed::Both) => {
                    let z = self.logits(theta, &acc, i, &mut hidden);
                    log_prob += log_softmax2(z)[b as usize];
                }
                Some(_) => {}
            }
            if b {
                if i < half {
                    nu += 1
                } else {
                    nd += 1
                }
            }
            if i + 1 < m {
                self.push_input(theta, &mut acc, i, b);
            }
        }
        let mut t = vec![0.0; self.arch.phase_hidden];
        let phase = self.phase_forward(theta, &x.spins(), &mut t);
        Ok(LogAmplitude {
            log_prob_half: 0.5 * log_prob,
            phase,
        })
    }

    /// `O_k(x) = d ln psi(x) / d theta_k`, real part from the amplitude
    /// network and imaginary part from the phase head.
    pub fn log_derivative(&self, theta: &[f64], x: &OccupationVector) -> Result<Vec<Complex64>> {
        self.check_theta(theta)?;
        self.check_vector(x)?;
        let m = self.arch.n_spin_orbitals;
        let h = self.arch.hidden;
        let hp = self.arch.phase_hidden;
        let half = self.sector.n_spatial();
        let l = self.layout;

        let mut grad_re = vec![0.0; self.n_params()];
        let mut acc = self.fresh_acc(theta);
        let mut hidden = vec![0.0; h];
        // delta[i] holds d logp_i / d pre-activation, only for free positions
        let mut deltas: Vec<Option<Vec<f64>>> = vec![None; m];
        let (mut nu, mut nd) = (0, 0);
        for i in 0..m {
            let b = x.is_occupied(i);
            let allowed = self.allowed(i, nu, nd);
            let ok = matches!(
                (allowed, b),
                (Some(Allowed::Both), _)
                    | (Some(Allowed::OnlyEmpty), false)
                    | (Some(Allowed::OnlyOccupied), true)
            );
            if !ok {
                return Err(NqsError::ZeroAmplitude(format!("{x:?}")));
            }
            if allowed == Some(Allowed::Both) {
                let z = self.logits(theta, &acc, i, &mut hidden);
                let p = softmax2(z);
                // d logp / d z_k = [k == b] - p_k
                let g = [
                    if b { -p[0] } else { 1.0 - p[0] },
                    if b { 1.0 - p[1] } else { -p[1] },
                ];
                grad_re[l.b_out] += g[0];
                grad_re[l.b_out + 1] += g[1];
                let mut delta = vec![0.0; h];
                for k in 0..h {
                    grad_re[l.w_out + k] += g[0] * hidden[k];
                    grad_re[l.w_out + h + k] += g[1] * hidden[k];
                    let back = g[0] * theta[l.w_out + k] + g[1] * theta[l.w_out + h + k];
                    delta[k] = back * (1.0 - hidden[k] * hidden[k]);
                }
                deltas[i] = Some(delta);
            }
            if b {
                if i < half {
                    nu += 1
                } else {
                    nd += 1
                }
            }
            if i + 1 < m {
                self.push_input(theta, &mut acc, i, b);
            }
        }

        // Input weights: prefix column j feeds every later free position,
        // so accumulate suffix sums of delta from the end.
        let mut suffix = vec![0.0; h];
        for j in (0..m).rev() {
            let s = if x.is_occupied(j) { 1.0 } else { -1.0 };
            let col = l.w_in + j * h;
            for k in 0..h {
                grad_re[col + k] += s * suffix[k];
            }
            if let Some(delta) = &deltas[j] {
                let pos = l.w_in + (m + j) * h;
                for k in 0..h {
                    grad_re[pos + k] += delta[k];
                    grad_re[l.b_in + k] += delta[k];
                    suffix[k] += delta[k];
                }
            }
        }

        let mut out: Vec<Complex64> = grad_re
            .iter()
            .map(|&g| Complex64::new(0.5 * g, 0.0))
            .collect();

        let spins = x.spins();
        let mut t = vec![0.0; hp];
        self.phase_forward(theta, &spins, &mut t);
        out[l.d_phase].im = 1.0;
        for k in 0..hp {
            let wk = theta[l.w_phase + k];
            out[l.w_phase + k].im = t[k];
            let dk = wk * (1.0 - t[k] * t[k]);
            out[l.c_phase + k].im = dk;
            for j in 0..m {
                out[l.u_phase + k * m + j].im = dk * spins[j];
            }
        }
        Ok(out)
    }

    /// Ancestral sampling with masked conditionals. Deterministic in
    /// `(theta, seed, count)` regardless of thread count.
    pub fn sample(&self, theta: &[f64], count: usize, seed: u64) -> Result<Vec<OccupationVector>> {
        self.check_theta(theta)?;
        let n_chunks = count.div_ceil(SAMPLE_CHUNK);
        let chunks: Vec<Vec<OccupationVector>> = par::map_range(n_chunks, |c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let len = SAMPLE_CHUNK.min(count - c * SAMPLE_CHUNK);
            (0..len).map(|_| self.sample_one(theta, &mut rng)).collect()
        });
        Ok(chunks.into_iter().flatten().collect())
    }

    fn sample_one(&self, theta: &[f64], rng: &mut ChaCha8Rng) -> OccupationVector {
        let m = self.arch.n_spin_orbitals;
        let half = self.sector.n_spatial();
        let mut acc = self.fresh_acc(theta);
        let mut hidden = vec![0.0; self.arch.hidden];
        let (mut nu, mut nd) = (0, 0);
        let mut bits = 0u64;
        for i in 0..m {
            let b = match self.allowed(i, nu, nd).expect("sector is feasible by construction") {
                Allowed::OnlyEmpty => false,
                Allowed::OnlyOccupied => true,
                Allowed::Both => {
                    let p = softmax2(self.logits(theta, &acc, i, &mut hidden));
                    rng.gen::<f64>() < p[1]
                }
            };
            if b {
                bits |= 1 << i;
                if i < half {
                    nu += 1
                } else {
                    nd += 1
                }
            }
            if i + 1 < m {
                self.push_input(theta, &mut acc, i, b);
            }
        }
        OccupationVector::from_raw(bits, m)
    }
}

#[inline]
fn softmax2(z: [f64; 2]) -> [f64; 2] {
    let mx = z[0].max(z[1]);
    let e0 = (z[0] - mx).exp();
    let e1 = (z[1] - mx).exp();
    let s = e0 + e1;
    [e0 / s, e1 / s]
}

#[inline]
fn log_softmax2(z: [f64; 2]) -> [f64; 2] {
    let mx = z[0].max(z[1]);
    let lse = mx + ((z[0] - mx).exp() + (z[1] - mx).exp()).ln();
    [z[0] - lse, z[1] - lse]
}

// ---------------------------------------------------------------------------
// checkpoints

const CHECKPOINT_MAGIC: &str = "# nqs-ansatz v1";

/// Parameters together with the architecture and sector they belong to.
#[derive(Clone, Debug, PartialEq)]
pub struct AnsatzParameters {
    pub architecture: Architecture,
    pub sector: Sector,
    pub theta: Vec<f64>,
}

impl AnsatzParameters {
    /// Text form: magic line, a `key=value` descriptor line, then one value
    /// per line at 17 significant digits.
    pub fn to_text(&self) -> String {
        let a = &self.architecture;
        let s = &self.sector;
        let mut out = String::new();
        let _ = writeln!(out, "{CHECKPOINT_MAGIC}");
        let _ = writeln!(
            out,
            "n_spin_orbitals={} hidden={} phase_hidden={} n_up={} n_down={} n_params={}",
            a.n_spin_orbitals,
            a.hidden,
            a.phase_hidden,
            s.n_up,
            s.n_down,
            self.theta.len()
        );
        for v in &self.theta {
            let _ = writeln!(out, "{v:.16e}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: String| NqsError::Checkpoint(m);
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(CHECKPOINT_MAGIC) {
            return Err(bad("missing checkpoint header".into()));
        }
        let desc = lines.next().ok_or_else(|| bad("missing descriptor".into()))?;
        let get = |key: &str| -> Result<usize> {
            desc.split_whitespace()
                .find_map(|kv| kv.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
                .ok_or_else(|| bad(format!("descriptor lacks {key}")))?
                .parse()
                .map_err(|_| bad(format!("bad value for {key}")))
        };
        let architecture = Architecture {
            n_spin_orbitals: get("n_spin_orbitals")?,
            hidden: get("hidden")?,
            phase_hidden: get("phase_hidden")?,
        };
        let sector = Sector::new(architecture.n_spin_orbitals, get("n_up")?, get("n_down")?)?;
        let n = get("n_params")?;
        if n != architecture.n_params() {
            return Err(bad(format!(
                "n_params = {n} disagrees with architecture ({})",
                architecture.n_params()
            )));
        }
        let theta = lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                let v: f64 = l.trim().parse().map_err(|_| bad(format!("bad value {l:?}")))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(bad("non-finite parameter".into()))
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        if theta.len() != n {
            return Err(bad(format!("expected {n} values, found {}", theta.len())));
        }
        Ok(Self {
            architecture,
            sector,
            theta,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}
