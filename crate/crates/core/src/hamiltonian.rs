//! Second-quantized molecular Hamiltonian over spin-orbitals.
//!
//! Integrals are ingested in chemists' notation `(pq|rs)` from FCIDUMP files.
//! Matrix elements follow the Slater-Condon rules with the sign conventions of
//! [`crate::hilbert`]; the physicists' integral `<PQ|RS> = (pr|qs)` carries
//! the spin deltas of the blocked spin-orbital layout.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{NqsError, Result};
use crate::hilbert::{
    classify_excitation, double_sign, single_sign, Degree, OccupationVector, Sector,
};
use crate::krylov::LinearOperator;
use crate::par;

/// Connected entries with `|element|` at or below this are dropped.
pub const DROP_TOLERANCE: f64 = 1e-14;

/// Default cap on the sector size for dense diagonalization.
pub const DEFAULT_DENSE_CAP: usize = 20_000;

/// Duplicate integral lines may differ by at most this much.
const DUPLICATE_TOLERANCE: f64 = 1e-12;

/// One- and two-electron integrals over spatial orbitals, in Hartree.
#[derive(Clone, Debug)]
pub struct MolecularIntegrals {
    pub n_spatial: usize,
    pub n_electrons: usize,
    /// `2 S_z`, i.e. `N_up - N_down`.
    pub ms2: i64,
    pub e_core: f64,
    /// Row-major `n_spatial x n_spatial`.
    pub h: Vec<f64>,
    /// `(pq|rs)` at index `((p n + q) n + r) n + s`.
    pub g: Vec<f64>,
}

impl MolecularIntegrals {
    /// Integrals that are identically zero except for the core energy.
    pub fn zeros(n_spatial: usize, n_electrons: usize, ms2: i64, e_core: f64) -> Self {
        Self {
            n_spatial,
            n_electrons,
            ms2,
            e_core,
            h: vec![0.0; n_spatial * n_spatial],
            g: vec![0.0; n_spatial.pow(4)],
        }
    }

    #[inline]
    pub fn n_spin_orbitals(&self) -> usize {
        2 * self.n_spatial
    }

    #[inline]
    pub fn h(&self, p: usize, q: usize) -> f64 {
        self.h[p * self.n_spatial + q]
    }

    /// Chemists' notation `(pq|rs)` over spatial orbitals.
    #[inline]
    pub fn eri(&self, p: usize, q: usize, r: usize, s: usize) -> f64 {
        let n = self.n_spatial;
        self.g[((p * n + q) * n + r) * n + s]
    }

    /// Sets `h_pq = h_qp`.
    pub fn set_h(&mut self, p: usize, q: usize, v: f64) {
        let n = self.n_spatial;
        self.h[p * n + q] = v;
        self.h[q * n + p] = v;
    }

    /// Sets `(pq|rs)` and its seven permutation partners.
    pub fn set_eri(&mut self, p: usize, q: usize, r: usize, s: usize, v: f64) {
        for (a, b, c, d) in eri_permutations(p, q, r, s) {
            let n = self.n_spatial;
            self.g[((a * n + b) * n + c) * n + d] = v;
        }
    }

    /// The `(N_up, N_down)` sector fixed by `NELEC` and `MS2`.
    pub fn sector(&self) -> Result<Sector> {
        let ne = self.n_electrons as i64;
        if (ne + self.ms2) % 2 != 0 || self.ms2.abs() > ne {
            return Err(NqsError::InvalidInput(format!(
                "NELEC = {ne} and MS2 = {} are inconsistent",
                self.ms2
            )));
        }
        let n_up = ((ne + self.ms2) / 2) as usize;
        let n_down = ((ne - self.ms2) / 2) as usize;
        Sector::new(self.n_spin_orbitals(), n_up, n_down)
    }

    #[inline]
    fn spatial(&self, p: usize) -> usize {
        p % self.n_spatial
    }

    #[inline]
    fn same_spin(&self, p: usize, q: usize) -> bool {
        p / self.n_spatial == q / self.n_spatial
    }

    /// Physicists' `<PQ|RS>` over spin-orbitals.
    #[inline]
    fn phys(&self, p: usize, q: usize, r: usize, s: usize) -> f64 {
        if self.same_spin(p, r) && self.same_spin(q, s) {
            self.eri(self.spatial(p), self.spatial(r), self.spatial(q), self.spatial(s))
        } else {
            0.0
        }
    }

    /// Antisymmetrized `<PQ||RS>`.
    #[inline]
    fn anti(&self, p: usize, q: usize, r: usize, s: usize) -> f64 {
        self.phys(p, q, r, s) - self.phys(p, q, s, r)
    }

    #[inline]
    fn h_spin(&self, p: usize, q: usize) -> f64 {
        if self.same_spin(p, q) {
            self.h(self.spatial(p), self.spatial(q))
        } else {
            0.0
        }
    }

    fn diagonal(&self, occ: &[usize]) -> f64 {
        let mut e = self.e_core;
        for (k, &i) in occ.iter().enumerate() {
            e += self.h_spin(i, i);
            for &j in &occ[..k] {
                e += self.anti(i, j, i, j);
            }
        }
        e
    }

    fn single_body(&self, occ: &[usize], hole: usize, particle: usize) -> f64 {
        let mut v = self.h_spin(particle, hole);
        for &k in occ {
            if k != hole {
                v += self.anti(particle, k, hole, k);
            }
        }
        v
    }

    fn check_vector(&self, x: &OccupationVector) -> Result<()> {
        if x.n_spin_orbitals() != self.n_spin_orbitals() {
            return Err(NqsError::SectorMismatch(format!(
                "{x:?} (M = {}, expected {})",
                x.n_spin_orbitals(),
                self.n_spin_orbitals()
            )));
        }
        Ok(())
    }

    /// `<x2|H|x>` by the Slater-Condon rules.
    pub fn matrix_element(&self, x: &OccupationVector, x2: &OccupationVector) -> Result<f64> {
        self.check_vector(x)?;
        self.check_vector(x2)?;
        if x.n_up() != x2.n_up() || x.n_down() != x2.n_down() {
            return Err(NqsError::SectorMismatch(format!("{x:?} vs {x2:?}")));
        }
        let ex = classify_excitation(x, x2);
        Ok(match ex.degree {
            Degree::Zero => self.diagonal(&x.occupied()),
            Degree::Single => {
                ex.sign * self.single_body(&x.occupied(), ex.holes[0], ex.particles[0])
            }
            Degree::Double => {
                let (i, j) = (ex.holes[0], ex.holes[1]);
                let (a, b) = (ex.particles[0], ex.particles[1]);
                ex.sign * self.anti(a, b, i, j)
            }
            Degree::Higher => 0.0,
        })
    }

    /// The diagonal entry plus every spin-conserving single and double
    /// excitation of `x` whose matrix element exceeds [`DROP_TOLERANCE`].
    ///
    /// Order: diagonal, singles (hole-major), doubles (hole-pair-major).
    pub fn connected(&self, x: &OccupationVector) -> Vec<ConnectedEntry> {
        let m = self.n_spin_orbitals();
        let bits = x.bits();
        let occ = x.occupied();
        let emp = x.empty();
        let mut out = Vec::with_capacity(1 + occ.len() * emp.len());
        out.push(ConnectedEntry {
            config: *x,
            element: self.diagonal(&occ),
        });

        for &i in &occ {
            for &a in &emp {
                if !self.same_spin(i, a) {
                    continue;
                }
                let v = self.single_body(&occ, i, a);
                if v.abs() <= DROP_TOLERANCE {
                    continue;
                }
                let (sign, new_bits) = single_sign(bits, i, a);
                out.push(ConnectedEntry {
                    config: OccupationVector::from_raw(new_bits, m),
                    element: sign * v,
                });
            }
        }

        let n = self.n_spatial;
        for (ki, &i) in occ.iter().enumerate() {
            for &j in &occ[ki + 1..] {
                let hole_up = (i < n) as u8 + (j < n) as u8;
                for (ka, &a) in emp.iter().enumerate() {
                    for &b in &emp[ka + 1..] {
                        if (a < n) as u8 + (b < n) as u8 != hole_up {
                            continue;
                        }
                        let v = self.anti(a, b, i, j);
                        if v.abs() <= DROP_TOLERANCE {
                            continue;
                        }
                        let sign = double_sign(bits, [i, j], [a, b]);
                        let new_bits = bits & !(1 << i | 1 << j) | 1 << a | 1 << b;
                        out.push(ConnectedEntry {
                            config: OccupationVector::from_raw(new_bits, m),
                            element: sign * v,
                        });
                    }
                }
            }
        }
        out
    }

    /// Local energy `sum_x' <x|H|x'> psi(x') / psi(x)` given a log-amplitude
    /// oracle. Configurations with a `-inf` log-amplitude contribute zero.
    pub fn local_energy<F>(&self, log_psi: F, x: &OccupationVector) -> Result<Complex64>
    where
        F: Fn(&OccupationVector) -> Complex64,
    {
        let lx = log_psi(x);
        if !lx.re.is_finite() || !lx.im.is_finite() {
            return Err(NqsError::ZeroAmplitude(format!("{x:?}")));
        }
        Ok(self.local_energy_from(&self.connected(x), lx, log_psi))
    }

    pub(crate) fn local_energy_from<F>(
        &self,
        entries: &[ConnectedEntry],
        log_psi_x: Complex64,
        log_psi: F,
    ) -> Complex64
    where
        F: Fn(&OccupationVector) -> Complex64,
    {
        let mut acc = Complex64::new(0.0, 0.0);
        for e in entries {
            let l = if e.config == entries[0].config {
                log_psi_x
            } else {
                log_psi(&e.config)
            };
            if l.re == f64::NEG_INFINITY {
                continue;
            }
            acc += e.element * (l - log_psi_x).exp();
        }
        acc
    }

    /// Explicit sector Hamiltonian in [`Sector::enumerate`] order.
    pub fn dense_matrix(&self, sector: &Sector, cap: usize) -> Result<(Vec<OccupationVector>, DMatrix<f64>)> {
        if sector.n_spin_orbitals != self.n_spin_orbitals() {
            return Err(NqsError::SectorMismatch(format!(
                "sector {sector} for {} spin-orbitals",
                self.n_spin_orbitals()
            )));
        }
        let size = sector.size();
        if size > cap as u128 {
            return Err(NqsError::CapExceeded {
                what: "dense FCI",
                size,
                cap,
            });
        }
        let configs = sector.enumerate_with_cap(cap)?;
        let n = configs.len();
        let rows: Vec<Vec<(usize, f64)>> = par::map(&configs, |x| {
            self.connected(x)
                .into_iter()
                .map(|e| {
                    let j = configs
                        .binary_search_by_key(&e.config.bits(), |c| c.bits())
                        .expect("connected configuration left the sector");
                    (j, e.element)
                })
                .collect()
        });
        let mut mat = DMatrix::<f64>::zeros(n, n);
        for (j, row) in rows.iter().enumerate() {
            for &(i, v) in row {
                // row j lists <i|H|j>
                mat[(i, j)] += v;
            }
        }
        Ok((configs, mat))
    }

    /// Sector Hamiltonian in compressed-row form for matrix-free products.
    pub fn sparse_matrix(&self, sector: &Sector, cap: usize) -> Result<SparseSectorHamiltonian> {
        if sector.n_spin_orbitals != self.n_spin_orbitals() {
            return Err(NqsError::SectorMismatch(format!(
                "sector {sector} for {} spin-orbitals",
                self.n_spin_orbitals()
            )));
        }
        let configs = sector.enumerate_with_cap(cap)?;
        let rows: Vec<Vec<(usize, f64)>> = par::map(&configs, |x| {
            let mut row: Vec<(usize, f64)> = self
                .connected(x)
                .into_iter()
                .map(|e| {
                    let j = configs
                        .binary_search_by_key(&e.config.bits(), |c| c.bits())
                        .expect("connected configuration left the sector");
                    (j, e.element)
                })
                .collect();
            row.sort_by_key(|&(j, _)| j);
            row
        });
        Ok(SparseSectorHamiltonian { configs, rows })
    }

    /// Lowest eigenpair of the explicitly assembled sector Hamiltonian.
    pub fn dense_fci_ground_state(&self, sector: &Sector) -> Result<FciSolution> {
        self.dense_fci_ground_state_with_cap(sector, DEFAULT_DENSE_CAP)
    }

    pub fn dense_fci_ground_state_with_cap(&self, sector: &Sector, cap: usize) -> Result<FciSolution> {
        let (configs, mat) = self.dense_matrix(sector, cap)?;
        let asym = max_asymmetry(&mat);
        if asym > 1e-12 {
            return Err(NqsError::Internal(format!(
                "sector Hamiltonian asymmetric by {asym:e}"
            )));
        }
        let n = configs.len();
        let eig = SymmetricEigen::new(mat);
        let (imin, &e0) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("non-empty sector");
        let mut amps: Vec<f64> = (0..n).map(|i| eig.eigenvectors[(i, imin)]).collect();
        let norm = amps.iter().map(|a| a * a).sum::<f64>().sqrt();
        let pivot = amps
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let sign = if amps[pivot] < 0.0 { -1.0 } else { 1.0 };
        for a in &mut amps {
            *a *= sign / norm;
        }
        Ok(FciSolution {
            energy: e0,
            configs,
            amplitudes: amps,
            asymmetry: asym,
        })
    }
}

fn max_asymmetry(mat: &DMatrix<f64>) -> f64 {
    let n = mat.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..i {
            worst = worst.max((mat[(i, j)] - mat[(j, i)]).abs());
        }
    }
    worst
}

fn eri_permutations(p: usize, q: usize, r: usize, s: usize) -> [(usize, usize, usize, usize); 8] {
    [
        (p, q, r, s),
        (q, p, r, s),
        (p, q, s, r),
        (q, p, s, r),
        (r, s, p, q),
        (s, r, p, q),
        (r, s, q, p),
        (s, r, q, p),
    ]
}

/// Sector Hamiltonian rows `<x_i|H|x_j>` over [`Sector::enumerate`] order.
#[derive(Clone, Debug)]
pub struct SparseSectorHamiltonian {
    pub configs: Vec<OccupationVector>,
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseSectorHamiltonian {
    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }
}

impl LinearOperator for SparseSectorHamiltonian {
    fn dim(&self) -> usize {
        self.configs.len()
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.configs.len() {
            return Err(NqsError::DimensionMismatch {
                expected: self.configs.len(),
                got: x.len(),
            });
        }
        Ok(par::map(&self.rows, |row| row.iter().map(|&(j, v)| v * x[j]).sum()))
    }
}

/// A configuration connected to a reference by `H`, with `<x'|H|x>`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConnectedEntry {
    pub config: OccupationVector,
    pub element: f64,
}

/// Dense FCI ground state; amplitudes follow `configs`, unit norm, largest
/// component positive.
#[derive(Clone, Debug)]
pub struct FciSolution {
    pub energy: f64,
    pub configs: Vec<OccupationVector>,
    pub amplitudes: Vec<f64>,
    pub asymmetry: f64,
}

impl FciSolution {
    /// Log-amplitude lookup for use with [`MolecularIntegrals::local_energy`].
    /// Negative amplitudes get phase `pi`; zeros map to `-inf`.
    pub fn log_amplitudes(&self) -> HashMap<u64, Complex64> {
        self.configs
            .iter()
            .zip(&self.amplitudes)
            .map(|(c, &a)| {
                let re = if a == 0.0 { f64::NEG_INFINITY } else { a.abs().ln() };
                let im = if a < 0.0 { std::f64::consts::PI } else { 0.0 };
                (c.bits(), Complex64::new(re, im))
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// FCIDUMP

/// Parses an FCIDUMP file from disk.
pub fn read_fcidump(path: impl AsRef<Path>) -> Result<MolecularIntegrals> {
    let mut text = String::new();
    std::fs::File::open(path.as_ref())?.read_to_string(&mut text)?;
    parse_fcidump(&text)
}

#[derive(Default)]
struct Header {
    norb: Option<usize>,
    nelec: Option<usize>,
    ms2: Option<i64>,
}

/// Parses Molpro-style FCIDUMP text.
///
/// The namelist header may span several lines, with or without `&FCI` /
/// `&END` (or `/`) markers. `ORBSYM`, `ISYM` and unknown keys are ignored.
/// Lines `i 0 0 0` (orbital energies) are skipped.
pub fn parse_fcidump(text: &str) -> Result<MolecularIntegrals> {
    let mut header_text = String::new();
    let mut header_done = false;
    let mut body_start = 0usize;
    let lines: Vec<&str> = text.lines().collect();

    for (lineno, line) in lines.iter().enumerate() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if !header_done {
            let upper = t.to_ascii_uppercase();
            let has_key = upper.contains('=');
            let is_entry = parse_entry(t).is_some();
            if is_entry && !has_key && !header_text.is_empty() {
                header_done = true;
                body_start = lineno;
                break;
            }
            header_text.push(' ');
            header_text.push_str(&upper);
            if upper.contains("&END") || upper.contains("$END") || upper == "/" || upper.ends_with('/') {
                header_done = true;
                body_start = lineno + 1;
                break;
            }
            continue;
        }
    }
    if !header_done {
        return Err(NqsError::Fcidump {
            line: lines.len(),
            msg: "header is not terminated and no integral lines follow".into(),
        });
    }

    let header = parse_header(&header_text).map_err(|msg| NqsError::Fcidump { line: 1, msg })?;
    let norb = header.norb.ok_or_else(|| NqsError::Fcidump {
        line: 1,
        msg: "missing NORB".into(),
    })?;
    let nelec = header.nelec.ok_or_else(|| NqsError::Fcidump {
        line: 1,
        msg: "missing NELEC".into(),
    })?;
    if norb == 0 || 2 * norb > crate::hilbert::MAX_SPIN_ORBITALS {
        return Err(NqsError::Fcidump {
            line: 1,
            msg: format!("NORB = {norb} outside the supported range 1..=32"),
        });
    }
    if nelec > 2 * norb {
        return Err(NqsError::Fcidump {
            line: 1,
            msg: format!("NELEC = {nelec} exceeds 2 * NORB"),
        });
    }
    let ms2 = header.ms2.unwrap_or(0);
    let mut ints = MolecularIntegrals::zeros(norb, nelec, ms2, 0.0);

    let mut seen_core: Option<f64> = None;
    let mut seen_h: HashMap<(usize, usize), f64> = HashMap::new();
    let mut seen_g: HashMap<(usize, usize, usize, usize), f64> = HashMap::new();

    for (idx, line) in lines.iter().enumerate().skip(body_start) {
        let lineno = idx + 1;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let (v, [i, j, k, l]) = parse_entry(t).ok_or_else(|| NqsError::Fcidump {
            line: lineno,
            msg: format!("malformed integral line {t:?}"),
        })?;
        for &ix in &[i, j, k, l] {
            if ix > norb {
                return Err(NqsError::Fcidump {
                    line: lineno,
                    msg: format!("orbital index {ix} exceeds NORB = {norb}"),
                });
            }
        }
        let conflict = |old: f64| -> Result<()> {
            if (old - v).abs() > DUPLICATE_TOLERANCE {
                Err(NqsError::Fcidump {
                    line: lineno,
                    msg: format!("conflicting duplicate entry ({old} vs {v})"),
                })
            } else {
                Ok(())
            }
        };
        match (i, j, k, l) {
            (0, 0, 0, 0) => {
                if let Some(old) = seen_core {
                    conflict(old)?;
                }
                seen_core = Some(v);
                ints.e_core = v;
            }
            (_, 0, 0, 0) if i > 0 => {
                log::debug!("FCIDUMP line {lineno}: skipping orbital energy entry");
            }
            (_, _, 0, 0) if i > 0 && j > 0 => {
                let key = (i.min(j), i.max(j));
                if let Some(&old) = seen_h.get(&key) {
                    conflict(old)?;
                }
                seen_h.insert(key, v);
                ints.set_h(i - 1, j - 1, v);
            }
            _ if i > 0 && j > 0 && k > 0 && l > 0 => {
                let key = canonical_eri(i, j, k, l);
                if let Some(&old) = seen_g.get(&key) {
                    conflict(old)?;
                }
                seen_g.insert(key, v);
                ints.set_eri(i - 1, j - 1, k - 1, l - 1, v);
            }
            _ => {
                return Err(NqsError::Fcidump {
                    line: lineno,
                    msg: format!("unsupported index pattern {i} {j} {k} {l}"),
                })
            }
        }
    }
    Ok(ints)
}

fn canonical_eri(i: usize, j: usize, k: usize, l: usize) -> (usize, usize, usize, usize) {
    eri_permutations(i, j, k, l).into_iter().min().expect("eight entries")
}

fn parse_entry(t: &str) -> Option<(f64, [usize; 4])> {
    let mut it = t.split_whitespace();
    let v = parse_float(it.next()?)?;
    let mut idx = [0usize; 4];
    for slot in &mut idx {
        *slot = it.next()?.parse().ok()?;
    }
    if it.next().is_some() {
        return None;
    }
    Some((v, idx))
}

fn parse_float(s: &str) -> Option<f64> {
    s.replace(['D', 'd'], "E").parse().ok()
}

fn parse_header(text: &str) -> std::result::Result<Header, String> {
    let cleaned = text
        .replace("&FCI", " ")
        .replace("$FCI", " ")
        .replace("&END", " ")
        .replace("$END", " ")
        .replace('/', " ");
    let mut header = Header::default();
    // split into KEY=VALUE[,VALUE...] groups
    let mut key: Option<String> = None;
    for raw in cleaned.split([',', ' ', '\t']) {
        let tok = raw.trim();
        if tok.is_empty() {
            continue;
        }
        let (k, val) = match tok.split_once('=') {
            Some((k, v)) => {
                key = Some(k.trim().to_string());
                (k.trim().to_string(), v.trim())
            }
            None => match &key {
                Some(k) => (k.clone(), tok),
                None => return Err(format!("unexpected header token {tok:?}")),
            },
        };
        if val.is_empty() {
            continue;
        }
        let int = || -> std::result::Result<i64, String> {
            val.parse::<i64>()
                .map_err(|_| format!("bad value {val:?} for {k}"))
        };
        match k.as_str() {
            "NORB" => header.norb = Some(usize::try_from(int()?).map_err(|_| "negative NORB".to_string())?),
            "NELEC" => header.nelec = Some(usize::try_from(int()?).map_err(|_| "negative NELEC".to_string())?),
            "MS2" => header.ms2 = Some(int()?),
            _ => {}
        }
    }
    Ok(header)
}
