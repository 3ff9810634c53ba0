//! Occupation-number basis states, fixed particle-number sectors and
//! excitation classification.
//!
//! Spin-orbitals use a blocked layout: indices `0..M/2` are spin-up spatial
//! orbitals and `M/2..M` are the spin-down copies of the same spatial
//! orbitals. A basis state is the ordered product
//! `c†_{i1} c†_{i2} ... c†_{ik} |vac>` with `i1 < i2 < ... < ik`.

use std::fmt;

use crate::error::{NqsError, Result};

/// Largest supported spin-orbital count (one machine word).
pub const MAX_SPIN_ORBITALS: usize = 64;

/// Default cap on the number of configurations `enumerate_sector` will produce.
pub const DEFAULT_ENUMERATION_CAP: usize = 1_000_000;

/// A Fock basis state `|n>` stored as a bitmask; bit `i` is `n_i`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OccupationVector {
    bits: u64,
    n_spin_orbitals: u8,
}

impl OccupationVector {
    pub fn new(bits: u64, n_spin_orbitals: usize) -> Result<Self> {
        check_width(n_spin_orbitals)?;
        if n_spin_orbitals < 64 && bits >> n_spin_orbitals != 0 {
            return Err(NqsError::InvalidInput(format!(
                "bitmask {bits:#b} has bits beyond M = {n_spin_orbitals}"
            )));
        }
        Ok(Self {
            bits,
            n_spin_orbitals: n_spin_orbitals as u8,
        })
    }

    /// Builds a vector from explicit occupations `n_0, n_1, ...`.
    pub fn from_occupations(occ: &[bool]) -> Result<Self> {
        check_width(occ.len())?;
        let bits = occ
            .iter()
            .enumerate()
            .fold(0u64, |acc, (i, &n)| if n { acc | (1 << i) } else { acc });
        Self::new(bits, occ.len())
    }

    #[inline]
    pub(crate) fn from_raw(bits: u64, n_spin_orbitals: usize) -> Self {
        Self {
            bits,
            n_spin_orbitals: n_spin_orbitals as u8,
        }
    }

    #[inline]
    pub fn bits(&self) -> u64 {
        self.bits
    }

    #[inline]
    pub fn n_spin_orbitals(&self) -> usize {
        self.n_spin_orbitals as usize
    }

    #[inline]
    pub fn is_occupied(&self, i: usize) -> bool {
        self.bits >> i & 1 == 1
    }

    #[inline]
    pub fn n_electrons(&self) -> usize {
        self.bits.count_ones() as usize
    }

    /// Mask selecting the spin-up half of the spin-orbitals.
    #[inline]
    pub fn up_mask(&self) -> u64 {
        low_mask(self.n_spin_orbitals() / 2)
    }

    #[inline]
    pub fn n_up(&self) -> usize {
        (self.bits & self.up_mask()).count_ones() as usize
    }

    #[inline]
    pub fn n_down(&self) -> usize {
        (self.bits & !self.up_mask()).count_ones() as usize
    }

    /// Occupied spin-orbital indices in ascending order.
    pub fn occupied(&self) -> Vec<usize> {
        BitIter(self.bits).collect()
    }

    /// Empty spin-orbital indices in ascending order.
    pub fn empty(&self) -> Vec<usize> {
        BitIter(!self.bits & low_mask(self.n_spin_orbitals())).collect()
    }

    /// Occupations as `±1` (occupied `+1`, empty `-1`).
    pub fn spins(&self) -> Vec<f64> {
        (0..self.n_spin_orbitals())
            .map(|i| if self.is_occupied(i) { 1.0 } else { -1.0 })
            .collect()
    }

    /// Whether spin-orbital `i` is spin-up in the blocked layout.
    #[inline]
    pub fn is_up_orbital(&self, i: usize) -> bool {
        i < self.n_spin_orbitals() / 2
    }
}

impl fmt::Debug for OccupationVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: String = (0..self.n_spin_orbitals())
            .map(|i| if self.is_occupied(i) { '1' } else { '0' })
            .collect();
        write!(f, "|{s}>")
    }
}

/// Iterator over set bit positions, ascending.
struct BitIter(u64);

impl Iterator for BitIter {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        if self.0 == 0 {
            return None;
        }
        let i = self.0.trailing_zeros() as usize;
        self.0 &= self.0 - 1;
        Some(i)
    }
}

#[inline]
fn low_mask(n: usize) -> u64 {
    if n >= 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

fn check_width(m: usize) -> Result<()> {
    if m > MAX_SPIN_ORBITALS {
        return Err(NqsError::InvalidInput(format!(
            "M = {m} spin-orbitals exceeds the supported maximum of {MAX_SPIN_ORBITALS}"
        )));
    }
    if m % 2 != 0 {
        return Err(NqsError::InvalidInput(format!(
            "M = {m} must be even (blocked spin layout)"
        )));
    }
    Ok(())
}

/// Fixed `(N_up, N_down)` particle-number sector over `M` spin-orbitals.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Sector {
    pub n_spin_orbitals: usize,
    pub n_up: usize,
    pub n_down: usize,
}

impl Sector {
    pub fn new(n_spin_orbitals: usize, n_up: usize, n_down: usize) -> Result<Self> {
        check_width(n_spin_orbitals)?;
        let half = n_spin_orbitals / 2;
        if n_up > half || n_down > half {
            return Err(NqsError::InvalidInput(format!(
                "sector (N_up = {n_up}, N_down = {n_down}) does not fit {half} spatial orbitals"
            )));
        }
        Ok(Self {
            n_spin_orbitals,
            n_up,
            n_down,
        })
    }

    #[inline]
    pub fn n_spatial(&self) -> usize {
        self.n_spin_orbitals / 2
    }

    /// Number of physically valid configurations, `C(M/2, N_up) * C(M/2, N_down)`.
    pub fn size(&self) -> u128 {
        binomial(self.n_spatial(), self.n_up) * binomial(self.n_spatial(), self.n_down)
    }

    pub fn contains(&self, x: &OccupationVector) -> bool {
        x.n_spin_orbitals() == self.n_spin_orbitals
            && x.n_up() == self.n_up
            && x.n_down() == self.n_down
    }

    /// Required electron count for the spin channel of spin-orbital `i`.
    #[inline]
    pub fn required_for(&self, i: usize) -> usize {
        if i < self.n_spatial() {
            self.n_up
        } else {
            self.n_down
        }
    }

    /// All configurations in ascending bitmask order.
    pub fn enumerate(&self) -> Result<Vec<OccupationVector>> {
        self.enumerate_with_cap(DEFAULT_ENUMERATION_CAP)
    }

    pub fn enumerate_with_cap(&self, cap: usize) -> Result<Vec<OccupationVector>> {
        let size = self.size();
        if size > cap as u128 {
            return Err(NqsError::CapExceeded {
                what: "sector enumeration",
                size,
                cap,
            });
        }
        let half = self.n_spatial();
        let ups = combinations(half, self.n_up);
        let downs = combinations(half, self.n_down);
        // down bits occupy the high half, so iterating down-major keeps the
        // full bitmask ascending
        let mut out = Vec::with_capacity(size as usize);
        for &d in &downs {
            for &u in &ups {
                out.push(OccupationVector::from_raw(u | d << half, self.n_spin_orbitals));
            }
        }
        Ok(out)
    }
}

impl fmt::Display for Sector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "M={} N_up={} N_down={}",
            self.n_spin_orbitals, self.n_up, self.n_down
        )
    }
}

/// Exact binomial coefficient.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// All `k`-bit subsets of `n` bits in ascending order (Gosper's hack).
fn combinations(n: usize, k: usize) -> Vec<u64> {
    if k == 0 {
        return vec![0];
    }
    if k > n {
        return Vec::new();
    }
    let limit = if n >= 64 { u64::MAX } else { 1u64 << n };
    let mut out = Vec::new();
    let mut x: u64 = (1u64 << k) - 1;
    loop {
        out.push(x);
        let c = x & x.wrapping_neg();
        let r = x.wrapping_add(c);
        if r == 0 {
            break;
        }
        x = (((r ^ x) >> 2) / c) | r;
        if n < 64 && x >= limit {
            break;
        }
    }
    out
}

/// Excitation degree between two determinants.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Degree {
    Zero,
    Single,
    Double,
    Higher,
}

/// Holes/particles connecting `x` to `x2` with the fermionic sign of
/// `<x2| c†_a c†_b c_j c_i |x>` (doubles) or `<x2| c†_a c_i |x>` (singles),
/// holes `i < j` and particles `a < b`.
#[derive(Clone, Debug, PartialEq)]
pub struct Excitation {
    pub degree: Degree,
    pub holes: Vec<usize>,
    pub particles: Vec<usize>,
    pub sign: f64,
}

/// Sign of applying `c_p` to a state with occupation `bits` (must be occupied).
#[inline]
pub(crate) fn annihilation_sign(bits: u64, p: usize) -> f64 {
    parity_below(bits, p)
}

/// Sign of applying `c†_p` to a state with occupation `bits` (must be empty).
#[inline]
pub(crate) fn creation_sign(bits: u64, p: usize) -> f64 {
    parity_below(bits, p)
}

#[inline]
fn parity_below(bits: u64, p: usize) -> f64 {
    if (bits & low_mask(p)).count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Sign of `c†_a c_i` acting on `bits`, together with the resulting bits.
#[inline]
pub(crate) fn single_sign(bits: u64, hole: usize, particle: usize) -> (f64, u64) {
    let s1 = annihilation_sign(bits, hole);
    let mid = bits & !(1 << hole);
    let s2 = creation_sign(mid, particle);
    (s1 * s2, mid | 1 << particle)
}

/// Sign of `c†_a c†_b c_j c_i` acting on `bits` with holes `(i, j)` and
/// particles `(a, b)`.
#[inline]
pub(crate) fn double_sign(bits: u64, holes: [usize; 2], particles: [usize; 2]) -> f64 {
    let [i, j] = holes;
    let [a, b] = particles;
    let mut s = annihilation_sign(bits, i);
    let mut cur = bits & !(1 << i);
    s *= annihilation_sign(cur, j);
    cur &= !(1 << j);
    s *= creation_sign(cur, b);
    cur |= 1 << b;
    s *= creation_sign(cur, a);
    s
}

/// Classifies the excitation taking `x` to `x2`.
///
/// # Panics
/// If the vectors have different widths.
pub fn classify_excitation(x: &OccupationVector, x2: &OccupationVector) -> Excitation {
    assert_eq!(
        x.n_spin_orbitals(),
        x2.n_spin_orbitals(),
        "excitation between vectors of different width"
    );
    let diff = x.bits ^ x2.bits;
    let holes: Vec<usize> = BitIter(diff & x.bits).collect();
    let particles: Vec<usize> = BitIter(diff & x2.bits).collect();
    if holes.len() != particles.len() {
        // different electron counts; not an excitation in the usual sense
        return Excitation {
            degree: Degree::Higher,
            holes,
            particles,
            sign: 1.0,
        };
    }
    match holes.len() {
        0 => Excitation {
            degree: Degree::Zero,
            holes,
            particles,
            sign: 1.0,
        },
        1 => {
            let (sign, _) = single_sign(x.bits, holes[0], particles[0]);
            Excitation {
                degree: Degree::Single,
                holes,
                particles,
                sign,
            }
        }
        2 => {
            let sign = double_sign(x.bits, [holes[0], holes[1]], [particles[0], particles[1]]);
            Excitation {
                degree: Degree::Double,
                holes,
                particles,
                sign,
            }
        }
        _ => Excitation {
            degree: Degree::Higher,
            holes,
            particles,
            sign: 1.0,
        },
    }
}
