//! Signed Pauli strings in symplectic form.
//!
//! A [`PauliString`] on `n` qubits stores one x-bit and one z-bit per qubit,
//! packed into 64-bit words, plus a phase exponent `k` so the operator is
//! `i^k · σ_0 ⊗ σ_1 ⊗ … ⊗ σ_{n-1}` with `σ(0,0)=I`, `σ(1,0)=X`, `σ(1,1)=Y`,
//! `σ(0,1)=Z`. Qubit 0 is the leftmost character in the text form and the
//! most significant bit of a computational-basis index.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::C64;

/// Largest qubit count for which dense matrices are materialized by default.
pub const DEFAULT_DENSE_LIMIT: usize = 12;

/// Single-qubit Pauli letter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pauli1 {
    I,
    X,
    Y,
    Z,
}

impl Pauli1 {
    pub const ALL: [Pauli1; 4] = [Pauli1::I, Pauli1::X, Pauli1::Y, Pauli1::Z];

    pub fn from_bits(x: bool, z: bool) -> Self {
        match (x, z) {
            (false, false) => Pauli1::I,
            (true, false) => Pauli1::X,
            (true, true) => Pauli1::Y,
            (false, true) => Pauli1::Z,
        }
    }

    pub fn bits(self) -> (bool, bool) {
        match self {
            Pauli1::I => (false, false),
            Pauli1::X => (true, false),
            Pauli1::Y => (true, true),
            Pauli1::Z => (false, true),
        }
    }

    /// Position in `ALL`, also the base-4 digit used by [`PauliIndex`].
    pub fn digit(self) -> usize {
        match self {
            Pauli1::I => 0,
            Pauli1::X => 1,
            Pauli1::Y => 2,
            Pauli1::Z => 3,
        }
    }

    pub fn from_digit(d: usize) -> Self {
        Self::ALL[d & 3]
    }

    pub fn as_char(self) -> char {
        match self {
            Pauli1::I => 'I',
            Pauli1::X => 'X',
            Pauli1::Y => 'Y',
            Pauli1::Z => 'Z',
        }
    }

    pub fn from_char(c: char) -> Option<Self> {
        match c {
            'I' => Some(Pauli1::I),
            'X' => Some(Pauli1::X),
            'Y' => Some(Pauli1::Y),
            'Z' => Some(Pauli1::Z),
            _ => None,
        }
    }

    /// The 2×2 matrix of this letter.
    pub fn matrix(self) -> [[C64; 2]; 2] {
        let o = C64::new(0.0, 0.0);
        let l = C64::new(1.0, 0.0);
        let i = C64::new(0.0, 1.0);
        match self {
            Pauli1::I => [[l, o], [o, l]],
            Pauli1::X => [[o, l], [l, o]],
            Pauli1::Y => [[o, -i], [i, o]],
            Pauli1::Z => [[l, o], [o, -l]],
        }
    }
}

/// Index of a phase-+1 Pauli string in `[0, 4^n)`: base-4 digits, qubit 0 most
/// significant, digit order `I, X, Y, Z`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PauliIndex(pub u64);

/// Maximum qubit count representable by a [`PauliIndex`].
pub const MAX_INDEX_QUBITS: usize = 31;

/// `i^k` for `k` mod 4.
pub fn i_pow(k: u8) -> C64 {
    match k & 3 {
        0 => C64::new(1.0, 0.0),
        1 => C64::new(0.0, 1.0),
        2 => C64::new(-1.0, 0.0),
        _ => C64::new(0.0, -1.0),
    }
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct PauliString {
    n: usize,
    x: Vec<u64>,
    z: Vec<u64>,
    phase: u8,
}

fn words(n: usize) -> usize {
    n.div_ceil(64)
}

fn popcount_and(a: &[u64], b: &[u64]) -> u32 {
    a.iter().zip(b).map(|(p, q)| (p & q).count_ones()).sum()
}

impl PauliString {
    pub fn identity(n: usize) -> Self {
        PauliString { n, x: vec![0; words(n)], z: vec![0; words(n)], phase: 0 }
    }

    pub fn from_letters(letters: &[Pauli1]) -> Self {
        let mut p = Self::identity(letters.len());
        for (q, &l) in letters.iter().enumerate() {
            p.set(q, l);
        }
        p
    }

    /// `letter` on qubit `q`, identity elsewhere.
    pub fn single(n: usize, q: usize, letter: Pauli1) -> Self {
        let mut p = Self::identity(n);
        p.set(q, letter);
        p
    }

    /// Builds a string from `(qubit, letter)` pairs.
    pub fn from_sparse(n: usize, entries: &[(usize, Pauli1)]) -> Self {
        let mut p = Self::identity(n);
        for &(q, l) in entries {
            p.set(q, l);
        }
        p
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Phase exponent `k` of `i^k`.
    pub fn phase(&self) -> u8 {
        self.phase
    }

    pub fn with_phase(mut self, k: u8) -> Self {
        self.phase = k & 3;
        self
    }

    pub fn negated(&self) -> Self {
        let mut p = self.clone();
        p.phase = (p.phase + 2) & 3;
        p
    }

    /// Same letters with phase +1.
    pub fn unsigned(&self) -> Self {
        let mut p = self.clone();
        p.phase = 0;
        p
    }

    pub fn is_hermitian(&self) -> bool {
        self.phase & 1 == 0
    }

    /// `+1.0` or `-1.0` for Hermitian strings.
    pub fn sign(&self) -> Result<f64> {
        match self.phase {
            0 => Ok(1.0),
            2 => Ok(-1.0),
            _ => Err(Error::NonHermitian(self.to_string())),
        }
    }

    pub fn x_bit(&self, q: usize) -> bool {
        (self.x[q / 64] >> (q % 64)) & 1 == 1
    }

    pub fn z_bit(&self, q: usize) -> bool {
        (self.z[q / 64] >> (q % 64)) & 1 == 1
    }

    pub fn letter(&self, q: usize) -> Pauli1 {
        Pauli1::from_bits(self.x_bit(q), self.z_bit(q))
    }

    pub fn letters(&self) -> Vec<Pauli1> {
        (0..self.n).map(|q| self.letter(q)).collect()
    }

    pub fn set(&mut self, q: usize, letter: Pauli1) {
        assert!(q < self.n, "qubit {q} out of range for {} qubits", self.n);
        let (xb, zb) = letter.bits();
        let (w, b) = (q / 64, q % 64);
        self.x[w] = (self.x[w] & !(1 << b)) | ((xb as u64) << b);
        self.z[w] = (self.z[w] & !(1 << b)) | ((zb as u64) << b);
    }

    /// Number of non-identity factors.
    pub fn weight(&self) -> usize {
        self.x.iter().zip(&self.z).map(|(a, b)| (a | b).count_ones() as usize).sum()
    }

    /// Qubits carrying a non-identity factor, ascending.
    pub fn support(&self) -> Vec<usize> {
        (0..self.n).filter(|&q| self.x_bit(q) || self.z_bit(q)).collect()
    }

    pub fn is_identity(&self) -> bool {
        self.weight() == 0
    }

    fn y_count(&self) -> u32 {
        popcount_and(&self.x, &self.z)
    }

    fn check_size(&self, other: &Self) -> Result<()> {
        if self.n != other.n {
            return Err(Error::SizeMismatch { left: self.n, right: other.n });
        }
        Ok(())
    }

    /// Operator product `self · other` with accumulated phase.
    pub fn multiply(&self, other: &Self) -> Result<Self> {
        self.check_size(other)?;
        // In X^x Z^z form the exponent is k = phase + #Y; moving Z^{z1} past
        // X^{x2} contributes (-1)^{z1·x2}.
        let k1 = self.phase as u32 + self.y_count();
        let k2 = other.phase as u32 + other.y_count();
        let swap = 2 * popcount_and(&self.z, &other.x);
        let x: Vec<u64> = self.x.iter().zip(&other.x).map(|(a, b)| a ^ b).collect();
        let z: Vec<u64> = self.z.iter().zip(&other.z).map(|(a, b)| a ^ b).collect();
        let y = popcount_and(&x, &z);
        let phase = ((k1 + k2 + swap + 4 * 64 * x.len() as u32 - y) % 4) as u8;
        Ok(PauliString { n: self.n, x, z, phase })
    }

    /// True iff the symplectic inner product vanishes mod 2.
    pub fn commutes(&self, other: &Self) -> Result<bool> {
        self.check_size(other)?;
        let s = popcount_and(&self.x, &other.z) + popcount_and(&self.z, &other.x);
        Ok(s % 2 == 0)
    }

    /// `⟨bits|P|bits⟩`, zero iff any x-bit is set.
    pub fn expectation_on_basis_state(&self, bits: &[bool]) -> Result<C64> {
        if bits.len() != self.n {
            return Err(Error::SizeMismatch { left: self.n, right: bits.len() });
        }
        if self.x.iter().any(|&w| w != 0) {
            return Ok(C64::new(0.0, 0.0));
        }
        let flips = bits.iter().enumerate().filter(|&(q, &b)| b && self.z_bit(q)).count();
        Ok(i_pow(self.phase + 2 * (flips % 2) as u8))
    }

    /// x-bits as a basis-index mask (qubit `q` ↦ bit `n-1-q`). Requires `n ≤ 64`.
    pub fn x_mask(&self) -> usize {
        self.mask(&self.x)
    }

    pub fn z_mask(&self) -> usize {
        self.mask(&self.z)
    }

    fn mask(&self, bits: &[u64]) -> usize {
        assert!(self.n <= 63, "basis masks need n <= 63");
        let mut m = 0usize;
        for q in 0..self.n {
            if (bits[q / 64] >> (q % 64)) & 1 == 1 {
                m |= 1 << (self.n - 1 - q);
            }
        }
        m
    }

    /// Precomputed action on computational basis states.
    pub fn basis_action(&self) -> BasisAction {
        BasisAction {
            x: self.x_mask(),
            z: self.z_mask(),
            base: self.phase.wrapping_add((self.y_count() % 4) as u8) & 3,
        }
    }

    pub fn dense_matrix(&self) -> Result<DMatrix<C64>> {
        self.dense_matrix_with_limit(DEFAULT_DENSE_LIMIT)
    }

    /// Kronecker product `i^k σ_0 ⊗ … ⊗ σ_{n-1}`.
    pub fn dense_matrix_with_limit(&self, limit: usize) -> Result<DMatrix<C64>> {
        if self.n > limit {
            return Err(Error::DenseLimit { n: self.n, limit });
        }
        let mut m = DMatrix::from_element(1, 1, i_pow(self.phase));
        for q in 0..self.n {
            let s = self.letter(q).matrix();
            let f = DMatrix::from_fn(2, 2, |r, c| s[r][c]);
            m = m.kronecker(&f);
        }
        Ok(m)
    }

    pub fn index(&self) -> Result<PauliIndex> {
        if self.n > MAX_INDEX_QUBITS {
            return Err(Error::InvalidParameter(format!(
                "{} qubits do not fit a Pauli index",
                self.n
            )));
        }
        let v = (0..self.n).fold(0u64, |acc, q| acc * 4 + self.letter(q).digit() as u64);
        Ok(PauliIndex(v))
    }

    pub fn from_index(n: usize, index: PauliIndex) -> Result<Self> {
        if n > MAX_INDEX_QUBITS || index.0 >= 1u64 << (2 * n) {
            return Err(Error::InvalidParameter(format!("index {} out of range for n={n}", index.0)));
        }
        let mut p = Self::identity(n);
        for q in 0..n {
            let d = (index.0 >> (2 * (n - 1 - q))) & 3;
            p.set(q, Pauli1::from_digit(d as usize));
        }
        Ok(p)
    }

    /// Restriction to the qubits in `sites`, in the given order.
    pub fn restrict(&self, sites: &[usize]) -> Self {
        let letters: Vec<Pauli1> = sites.iter().map(|&q| self.letter(q)).collect();
        Self::from_letters(&letters)
    }
}

/// Action of a Pauli string on basis states: `P|b⟩ = coef(b) |b ⊕ x⟩`.
#[derive(Clone, Copy, Debug)]
pub struct BasisAction {
    pub x: usize,
    pub z: usize,
    base: u8,
}

impl BasisAction {
    #[inline]
    pub fn apply(&self, b: usize) -> (usize, C64) {
        let k = self.base + 2 * ((self.z & b).count_ones() & 1) as u8;
        (b ^ self.x, i_pow(k))
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prefix = match self.phase {
            0 => "",
            1 => "i",
            2 => "-",
            _ => "-i",
        };
        f.write_str(prefix)?;
        for q in 0..self.n {
            write!(f, "{}", self.letter(q).as_char())?;
        }
        Ok(())
    }
}

impl fmt::Debug for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PauliString({self})")
    }
}

impl FromStr for PauliString {
    type Err = Error;

    /// Parses `[+|-][i]` followed by `I`, `X`, `Y`, `Z` characters.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (neg, rest) = match s.strip_prefix('-') {
            Some(r) => (true, r),
            None => (false, s.strip_prefix('+').unwrap_or(s)),
        };
        let (imag, body) = match rest.strip_prefix('i') {
            Some(r) => (true, r),
            None => (false, rest),
        };
        if body.is_empty() {
            return Err(Error::Parse(format!("empty Pauli string {s:?}")));
        }
        let letters = body
            .chars()
            .map(|c| Pauli1::from_char(c).ok_or_else(|| Error::Parse(format!("bad Pauli character {c:?} in {s:?}"))))
            .collect::<Result<Vec<_>>>()?;
        let phase = 2 * neg as u8 + imag as u8;
        Ok(Self::from_letters(&letters).with_phase(phase))
    }
}

impl Serialize for PauliString {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PauliString {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
