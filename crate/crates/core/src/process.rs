//! Certification of quantum operations through their Choi states.
//!
//! Qubits `0..n` of a Choi state are the reference copy and `n..2n` the
//! channel output, so `|φ⟩ = d^{-1/2} Σ_i |i⟩|i⟩` has amplitude index
//! `i·d + i`.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dense::{check_dense, DensePureState, DensityMatrix};
use crate::error::{Error, Result};
use crate::fidelity::{
    estimate_with_sampler, ErrorBudget, EstimatorOptions, FidelityReport, ProcessSummary, SampleRecord,
};
use crate::measure::{ExpectationBackend, NoiseSpec};
use crate::pauli::{Pauli1, PauliString, DEFAULT_DENSE_LIMIT};
use crate::rng::stream_rng;
use crate::sampler::RelevanceSampler;
use crate::stabilizer::StabilizerState;
use crate::state::{ProductState, Qubit, StateModel};
use crate::C64;

const CPTP_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CliffordGate {
    H(usize),
    S(usize),
    X(usize),
    Y(usize),
    Z(usize),
    Cnot(usize, usize),
    Cz(usize, usize),
    Swap(usize, usize),
}

impl CliffordGate {
    fn qubits(&self) -> Vec<usize> {
        match *self {
            CliffordGate::H(q) | CliffordGate::S(q) | CliffordGate::X(q) | CliffordGate::Y(q) | CliffordGate::Z(q) => {
                vec![q]
            }
            CliffordGate::Cnot(a, b) | CliffordGate::Cz(a, b) | CliffordGate::Swap(a, b) => vec![a, b],
        }
    }

    /// Decomposition into H, S, CNOT and Pauli gates.
    fn primitives(&self) -> Vec<CliffordGate> {
        match *self {
            CliffordGate::Cz(a, b) => vec![CliffordGate::H(b), CliffordGate::Cnot(a, b), CliffordGate::H(b)],
            CliffordGate::Swap(a, b) => vec![CliffordGate::Cnot(a, b), CliffordGate::Cnot(b, a), CliffordGate::Cnot(a, b)],
            g => vec![g],
        }
    }

    fn local_matrix(&self) -> DMatrix<C64> {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let c = |re: f64, im: f64| C64::new(re, im);
        match self {
            CliffordGate::H(_) => DMatrix::from_row_slice(2, 2, &[c(r, 0.0), c(r, 0.0), c(r, 0.0), c(-r, 0.0)]),
            CliffordGate::S(_) => DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 1.0)]),
            CliffordGate::X(_) => letter_matrix(Pauli1::X),
            CliffordGate::Y(_) => letter_matrix(Pauli1::Y),
            CliffordGate::Z(_) => letter_matrix(Pauli1::Z),
            CliffordGate::Cnot(..) => permutation(&[0, 1, 3, 2]),
            CliffordGate::Cz(..) => {
                let mut m = permutation(&[0, 1, 2, 3]);
                m[(3, 3)] = c(-1.0, 0.0);
                m
            }
            CliffordGate::Swap(..) => permutation(&[0, 2, 1, 3]),
        }
    }

    fn parse(token: &str) -> Result<Self> {
        let t = token.trim().to_ascii_lowercase();
        let bad = || Error::Parse(format!("bad gate `{token}`"));
        let split = t.find(|c: char| c.is_ascii_digit()).ok_or_else(bad)?;
        let (name, args) = t.split_at(split);
        let qs: Vec<usize> = args.split('-').map(|a| a.parse().map_err(|_| bad())).collect::<Result<_>>()?;
        Ok(match (name, qs.as_slice()) {
            ("h", [q]) => CliffordGate::H(*q),
            ("s", [q]) => CliffordGate::S(*q),
            ("x", [q]) => CliffordGate::X(*q),
            ("y", [q]) => CliffordGate::Y(*q),
            ("z", [q]) => CliffordGate::Z(*q),
            ("cnot" | "cx", [a, b]) if a != b => CliffordGate::Cnot(*a, *b),
            ("cz", [a, b]) if a != b => CliffordGate::Cz(*a, *b),
            ("swap", [a, b]) if a != b => CliffordGate::Swap(*a, *b),
            _ => return Err(bad()),
        })
    }
}

impl fmt::Display for CliffordGate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliffordGate::H(q) => write!(f, "h{q}"),
            CliffordGate::S(q) => write!(f, "s{q}"),
            CliffordGate::X(q) => write!(f, "x{q}"),
            CliffordGate::Y(q) => write!(f, "y{q}"),
            CliffordGate::Z(q) => write!(f, "z{q}"),
            CliffordGate::Cnot(a, b) => write!(f, "cnot{a}-{b}"),
            CliffordGate::Cz(a, b) => write!(f, "cz{a}-{b}"),
            CliffordGate::Swap(a, b) => write!(f, "swap{a}-{b}"),
        }
    }
}

fn letter_matrix(l: Pauli1) -> DMatrix<C64> {
    let m = l.matrix();
    DMatrix::from_fn(2, 2, |r, c| m[r][c])
}

fn permutation(images: &[usize]) -> DMatrix<C64> {
    let d = images.len();
    let mut m = DMatrix::zeros(d, d);
    for (col, &row) in images.iter().enumerate() {
        m[(row, col)] = C64::new(1.0, 0.0);
    }
    m
}

/// Embeds a `2^k × 2^k` operator acting on `qubits` (first listed is most
/// significant) into `n` qubits.
pub fn embed(local: &DMatrix<C64>, qubits: &[usize], n: usize) -> DMatrix<C64> {
    let d = 1usize << n;
    let k = qubits.len();
    let bit = |q: usize| 1usize << (n - 1 - q);
    let local_index = |b: usize| qubits.iter().fold(0, |acc, &q| (acc << 1) | usize::from(b & bit(q) != 0));
    let mask: usize = qubits.iter().map(|&q| bit(q)).sum();
    let place = |b: usize, li: usize| {
        let mut out = b & !mask;
        for (j, &q) in qubits.iter().enumerate() {
            if (li >> (k - 1 - j)) & 1 == 1 {
                out |= bit(q);
            }
        }
        out
    };
    let mut m = DMatrix::zeros(d, d);
    for col in 0..d {
        let lc = local_index(col);
        for lr in 0..(1usize << k) {
            let v = local[(lr, lc)];
            if v.norm_sqr() != 0.0 {
                m[(place(col, lr), col)] += v;
            }
        }
    }
    m
}

/// Sequence of Clifford gates, applied first to last.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CliffordCircuit {
    pub n: usize,
    pub gates: Vec<CliffordGate>,
}

impl CliffordCircuit {
    pub fn new(n: usize, gates: Vec<CliffordGate>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("circuit needs at least one qubit".into()));
        }
        for g in &gates {
            if g.qubits().iter().any(|&q| q >= n) {
                return Err(Error::InvalidParameter(format!("gate {g} outside {n} qubits")));
            }
        }
        Ok(CliffordCircuit { n, gates })
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::new(n, Vec::new())
    }

    /// `U P U†`, tracking the sign exactly.
    pub fn conjugate(&self, p: &PauliString) -> Result<PauliString> {
        self.conjugate_shifted(p, 0)
    }

    /// Conjugation by the circuit acting on qubits `offset..offset+n` of `p`.
    pub fn conjugate_shifted(&self, p: &PauliString, offset: usize) -> Result<PauliString> {
        if p.n() < offset + self.n {
            return Err(Error::SizeMismatch { left: offset + self.n, right: p.n() });
        }
        let mut cur = p.clone();
        for g in self.gates.iter().flat_map(|g| g.primitives()) {
            cur = conjugate_primitive(&cur, g, offset)?;
        }
        Ok(cur)
    }

    pub fn unitary(&self) -> Result<DMatrix<C64>> {
        check_dense(self.n, DEFAULT_DENSE_LIMIT)?;
        let d = 1usize << self.n;
        let mut u = DMatrix::identity(d, d);
        for g in &self.gates {
            u = embed(&g.local_matrix(), &g.qubits(), self.n) * u;
        }
        Ok(u)
    }
}

fn conjugate_primitive(p: &PauliString, g: CliffordGate, off: usize) -> Result<PauliString> {
    let n = p.n();
    let x = |q: usize| PauliString::single(n, q + off, Pauli1::X);
    let z = |q: usize| PauliString::single(n, q + off, Pauli1::Z);
    let image_x = |q: usize| -> Result<PauliString> {
        Ok(match g {
            CliffordGate::H(t) if t == q => z(q),
            CliffordGate::S(t) if t == q => PauliString::single(n, q + off, Pauli1::Y),
            CliffordGate::Cnot(c, t) if c == q => x(c).multiply(&x(t))?,
            CliffordGate::Z(t) | CliffordGate::Y(t) if t == q => x(q).negated(),
            _ => x(q),
        })
    };
    let image_z = |q: usize| -> Result<PauliString> {
        Ok(match g {
            CliffordGate::H(t) if t == q => x(q),
            CliffordGate::Cnot(c, t) if t == q => z(c).multiply(&z(t))?,
            CliffordGate::X(t) | CliffordGate::Y(t) if t == q => z(q).negated(),
            _ => z(q),
        })
    };
    // P = i^(phase + #Y) Π_q X_q^x Z_q^z
    let ys = (0..n).filter(|&q| p.letter(q) == Pauli1::Y).count();
    let mut acc = PauliString::identity(n).with_phase(((p.phase() as usize + ys) & 3) as u8);
    let touched = g.qubits();
    for q in 0..n {
        let (xb, zb) = p.letter(q).bits();
        let local = q.checked_sub(off).filter(|l| touched.contains(l));
        match local {
            None => {
                if xb || zb {
                    acc = acc.multiply(&PauliString::single(n, q, Pauli1::from_bits(xb, zb)))?;
                    if xb && zb {
                        // single(Y) = i^{-1}·XZ in the X^x Z^z frame
                        let k = (acc.phase() + 3) & 3;
                        acc = acc.with_phase(k);
                    }
                }
            }
            Some(l) => {
                if xb {
                    acc = acc.multiply(&image_x(l)?)?;
                }
                if zb {
                    acc = acc.multiply(&image_z(l)?)?;
                }
            }
        }
    }
    Ok(acc)
}

#[derive(Clone, Debug)]
pub enum ChannelKind {
    Unitary(DMatrix<C64>),
    Kraus(Vec<DMatrix<C64>>),
    Clifford(CliffordCircuit),
    Noise(NoiseSpec),
    /// Applied first to last.
    Sequence(Vec<ChannelModel>),
}

/// A CPTP map on `n` qubits.
#[derive(Clone, Debug)]
pub struct ChannelModel {
    n: usize,
    kind: ChannelKind,
}

fn qubits_of_dim(d: usize) -> Result<usize> {
    if d == 0 || !d.is_power_of_two() {
        return Err(Error::InvalidParameter(format!("dimension {d} is not a power of two")));
    }
    Ok(d.trailing_zeros() as usize)
}

impl ChannelModel {
    pub fn unitary(u: DMatrix<C64>) -> Result<Self> {
        if u.nrows() != u.ncols() {
            return Err(Error::NotCptp("unitary is not square".into()));
        }
        let n = qubits_of_dim(u.nrows())?;
        let err = (u.adjoint() * &u - DMatrix::<C64>::identity(u.nrows(), u.nrows())).norm();
        if err > CPTP_TOL {
            return Err(Error::NotCptp(format!("U†U deviates from identity by {err:e}")));
        }
        Ok(ChannelModel { n, kind: ChannelKind::Unitary(u) })
    }

    pub fn kraus(ops: Vec<DMatrix<C64>>) -> Result<Self> {
        let first = ops.first().ok_or_else(|| Error::NotCptp("empty Kraus set".into()))?;
        let d = first.nrows();
        let n = qubits_of_dim(d)?;
        if ops.iter().any(|k| k.shape() != (d, d)) {
            return Err(Error::NotCptp("Kraus operators differ in shape".into()));
        }
        let sum = ops.iter().fold(DMatrix::<C64>::zeros(d, d), |acc, k| acc + k.adjoint() * k);
        let err = (sum - DMatrix::<C64>::identity(d, d)).norm();
        if err > CPTP_TOL {
            return Err(Error::NotCptp(format!("Σ K†K deviates from identity by {err:e}")));
        }
        Ok(ChannelModel { n, kind: ChannelKind::Kraus(ops) })
    }

    pub fn clifford(circuit: CliffordCircuit) -> Self {
        ChannelModel { n: circuit.n, kind: ChannelKind::Clifford(circuit) }
    }

    pub fn noise(n: usize, noise: NoiseSpec) -> Result<Self> {
        noise.validate()?;
        Ok(ChannelModel { n, kind: ChannelKind::Noise(noise) })
    }

    pub fn identity(n: usize) -> Result<Self> {
        Ok(Self::clifford(CliffordCircuit::identity(n)?))
    }

    /// `next ∘ self`.
    pub fn then(self, next: ChannelModel) -> Result<Self> {
        if next.n != self.n {
            return Err(Error::SizeMismatch { left: self.n, right: next.n });
        }
        let mut parts = match self.kind {
            ChannelKind::Sequence(v) => v,
            kind => vec![ChannelModel { n: self.n, kind }],
        };
        match next.kind {
            ChannelKind::Sequence(v) => parts.extend(v),
            kind => parts.push(ChannelModel { n: next.n, kind }),
        }
        Ok(ChannelModel { n: self.n, kind: ChannelKind::Sequence(parts) })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> &ChannelKind {
        &self.kind
    }

    /// The channel extended linearly to arbitrary operators.
    pub fn apply_matrix(&self, m: &DMatrix<C64>) -> Result<DMatrix<C64>> {
        Ok(match &self.kind {
            ChannelKind::Unitary(u) => u * m * u.adjoint(),
            ChannelKind::Kraus(ops) => ops.iter().fold(DMatrix::zeros(m.nrows(), m.ncols()), |acc, k| acc + k * m * k.adjoint()),
            ChannelKind::Clifford(c) => {
                let u = c.unitary()?;
                &u * m * u.adjoint()
            }
            ChannelKind::Noise(noise) => noise.apply_matrix(m, self.n),
            ChannelKind::Sequence(parts) => {
                let mut cur = m.clone();
                for p in parts {
                    cur = p.apply_matrix(&cur)?;
                }
                cur
            }
        })
    }

    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        if rho.n() != self.n {
            return Err(Error::SizeMismatch { left: self.n, right: rho.n() });
        }
        Ok(DensityMatrix::from_matrix_unchecked(self.apply_matrix(rho.matrix())?))
    }

    /// The Clifford circuit this channel implements, if it is one.
    pub fn as_clifford(&self) -> Option<CliffordCircuit> {
        match &self.kind {
            ChannelKind::Clifford(c) => Some(c.clone()),
            ChannelKind::Noise(NoiseSpec::None) => CliffordCircuit::identity(self.n).ok(),
            ChannelKind::Sequence(parts) => {
                let mut gates = Vec::new();
                for p in parts {
                    gates.extend(p.as_clifford()?.gates);
                }
                CliffordCircuit::new(self.n, gates).ok()
            }
            _ => None,
        }
    }

    /// Unitary matrix of the channel, if it has one.
    pub fn as_unitary(&self) -> Result<Option<DMatrix<C64>>> {
        let d = 1usize << self.n;
        Ok(match &self.kind {
            ChannelKind::Unitary(u) => Some(u.clone()),
            ChannelKind::Clifford(c) => Some(c.unitary()?),
            ChannelKind::Kraus(ops) if ops.len() == 1 => Some(ops[0].clone()),
            ChannelKind::Kraus(_) => None,
            ChannelKind::Noise(NoiseSpec::None) => Some(DMatrix::identity(d, d)),
            ChannelKind::Noise(NoiseSpec::CoherentOverrotation(_)) => Some(self.apply_column_unitary()?),
            ChannelKind::Noise(_) => None,
            ChannelKind::Sequence(parts) => {
                let mut u = DMatrix::identity(d, d);
                for p in parts {
                    match p.as_unitary()? {
                        Some(v) => u = v * u,
                        None => return Ok(None),
                    }
                }
                Some(u)
            }
        })
    }

    /// Diagonal unitary for the overrotation noise, read off its action.
    fn apply_column_unitary(&self) -> Result<DMatrix<C64>> {
        let d = 1usize << self.n;
        let ChannelKind::Noise(NoiseSpec::CoherentOverrotation(theta)) = self.kind else {
            return Err(Error::Unsupported("not an overrotation".into()));
        };
        let n = self.n as f64;
        Ok(DMatrix::from_fn(d, d, |r, c| {
            if r == c {
                C64::from_polar(1.0, -theta / 2.0 * (n - 2.0 * r.count_ones() as f64))
            } else {
                C64::new(0.0, 0.0)
            }
        }))
    }
}

impl FromStr for ChannelModel {
    type Err = Error;

    /// Named channels: `id:n`, `h`, `s`, `x`, `y`, `z`, `cnot`, `cz`, `swap`,
    /// `rx:θ`, `ry:θ`, `rz:θ`, and `clifford:n:g,g,...` with gates such as
    /// `h0`, `s1`, `cnot0-1`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let mut parts = s.splitn(3, ':');
        let name = parts.next().unwrap_or_default();
        let arg = parts.next();
        let rest = parts.next();
        let num = |a: Option<&str>| -> Result<f64> {
            a.ok_or_else(|| Error::Parse(format!("`{name}` needs a parameter")))?
                .parse()
                .map_err(|_| Error::Parse(format!("bad parameter in `{s}`")))
        };
        let gate = |g: CliffordGate, n: usize| Ok(ChannelModel::clifford(CliffordCircuit::new(n, vec![g])?));
        match name {
            "id" | "identity" => ChannelModel::identity(arg.map_or(Ok(1.0), |a| num(Some(a)))? as usize),
            "h" => gate(CliffordGate::H(0), 1),
            "s" => gate(CliffordGate::S(0), 1),
            "x" => gate(CliffordGate::X(0), 1),
            "y" => gate(CliffordGate::Y(0), 1),
            "z" => gate(CliffordGate::Z(0), 1),
            "cnot" | "cx" => gate(CliffordGate::Cnot(0, 1), 2),
            "cz" => gate(CliffordGate::Cz(0, 1), 2),
            "swap" => gate(CliffordGate::Swap(0, 1), 2),
            "rx" | "ry" | "rz" => {
                let theta = num(arg)?;
                let l = match name {
                    "rx" => Pauli1::X,
                    "ry" => Pauli1::Y,
                    _ => Pauli1::Z,
                };
                ChannelModel::unitary(rotation(l, theta))
            }
            "clifford" => {
                let n = num(arg)? as usize;
                let gates = rest
                    .unwrap_or_default()
                    .split(',')
                    .filter(|t| !t.trim().is_empty())
                    .map(CliffordGate::parse)
                    .collect::<Result<Vec<_>>>()?;
                Ok(ChannelModel::clifford(CliffordCircuit::new(n, gates)?))
            }
            _ => Err(Error::Parse(format!("unknown channel `{s}`"))),
        }
    }
}

/// `e^{-iθP/2}` for a single-qubit Pauli `P`.
pub fn rotation(l: Pauli1, theta: f64) -> DMatrix<C64> {
    let id = DMatrix::<C64>::identity(2, 2);
    id * C64::new((theta / 2.0).cos(), 0.0) - letter_matrix(l) * C64::new(0.0, (theta / 2.0).sin())
}

/// JSON channel description: either a unitary or a Kraus list, entries as
/// `[re, im]` pairs in row-major nested arrays.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelSpec {
    Unitary(Vec<Vec<[f64; 2]>>),
    Kraus(Vec<Vec<Vec<[f64; 2]>>>),
}

fn to_matrix(rows: &[Vec<[f64; 2]>]) -> Result<DMatrix<C64>> {
    let d = rows.len();
    if rows.iter().any(|r| r.len() != d) {
        return Err(Error::Parse("channel matrix is not square".into()));
    }
    Ok(DMatrix::from_fn(d, d, |r, c| C64::new(rows[r][c][0], rows[r][c][1])))
}

impl ChannelSpec {
    pub fn into_channel(self) -> Result<ChannelModel> {
        match self {
            ChannelSpec::Unitary(rows) => ChannelModel::unitary(to_matrix(&rows)?),
            ChannelSpec::Kraus(ops) => ChannelModel::kraus(ops.iter().map(|o| to_matrix(o)).collect::<Result<_>>()?),
        }
    }
}

/// `(1⊗E)(|φ⟩⟨φ|)` on `2n` qubits.
#[derive(Clone, Debug)]
pub struct ChoiState {
    n: usize,
    rho: DensityMatrix,
}

impl ChoiState {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn density(&self) -> &DensityMatrix {
        &self.rho
    }

    /// Largest deviation of the reference marginal from `I/d`.
    pub fn tp_defect(&self) -> f64 {
        let marg = self.rho.partial_trace_tail(self.n);
        let d = marg.dim();
        let want = DMatrix::<C64>::identity(d, d) / C64::new(d as f64, 0.0);
        (marg.matrix() - want).iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

pub fn choi_state(channel: &ChannelModel) -> Result<ChoiState> {
    let n = channel.n();
    check_dense(2 * n, DEFAULT_DENSE_LIMIT)?;
    let d = 1usize << n;
    let mut mat = DMatrix::zeros(d * d, d * d);
    // Σ_ij |i⟩⟨j| ⊗ E(|i⟩⟨j|) / d
    for i in 0..d {
        for j in 0..d {
            let mut e = DMatrix::zeros(d, d);
            e[(i, j)] = C64::new(1.0, 0.0);
            let out = channel.apply_matrix(&e)? / C64::new(d as f64, 0.0);
            mat.view_mut((i * d, j * d), (d, d)).copy_from(&out);
        }
    }
    let rho = DensityMatrix::new(mat).map_err(|e| Error::NotCptp(e.to_string()))?;
    let choi = ChoiState { n, rho };
    let defect = choi.tp_defect();
    if defect > CPTP_TOL {
        return Err(Error::NotCptp(format!("reference marginal deviates from I/d by {defect:e}")));
    }
    Ok(choi)
}

/// Pure Choi vector `(1⊗U)|φ⟩`.
pub fn choi_vector(u: &DMatrix<C64>) -> Result<DensePureState> {
    let d = u.nrows();
    let s = C64::new(1.0 / (d as f64).sqrt(), 0.0);
    let mut amps = vec![C64::new(0.0, 0.0); d * d];
    for i in 0..d {
        for j in 0..d {
            amps[i * d + j] = u[(j, i)] * s;
        }
    }
    DensePureState::new(amps)
}

/// Stabilizer generators of a Clifford circuit's Choi state, obtained by
/// pushing the Bell-pair generators `X_q X_{n+q}`, `Z_q Z_{n+q}` through
/// the circuit on the output half.
pub fn clifford_choi(circuit: &CliffordCircuit) -> Result<StabilizerState> {
    let n = circuit.n;
    let mut gens = Vec::with_capacity(2 * n);
    for q in 0..n {
        for l in [Pauli1::X, Pauli1::Z] {
            let g = PauliString::from_sparse(2 * n, &[(q, l), (n + q, l)]);
            gens.push(circuit.conjugate_shifted(&g, n)?);
        }
    }
    StabilizerState::new(gens)
}

/// Target Choi state as a state model: symbolic for Clifford targets,
/// dense otherwise.
pub fn target_choi_model(target: &ChannelModel) -> Result<StateModel> {
    if let Some(c) = target.as_clifford() {
        return Ok(StateModel::Stabilizer(clifford_choi(&c)?));
    }
    let u = target.as_unitary()?.ok_or(Error::NonUnitaryTarget)?;
    Ok(StateModel::DensePure(choi_vector(&u)?))
}

/// `(dF + 1)/(d + 1)`.
pub fn average_fidelity(f_choi: f64, d: usize) -> f64 {
    let d = d as f64;
    (d * f_choi + 1.0) / (d + 1.0)
}

/// Exact `tr(ρ_target ρ_actual)` by dense Choi construction.
pub fn choi_fidelity(target: &ChannelModel, actual: &ChannelModel) -> Result<f64> {
    if target.n() != actual.n() {
        return Err(Error::SizeMismatch { left: target.n(), right: actual.n() });
    }
    let u = target.as_unitary()?.ok_or(Error::NonUnitaryTarget)?;
    choi_state(actual)?.density().fidelity_with_pure(&choi_vector(&u)?)
}

/// Conjugated product eigenstate `|μ*⟩` of the reference letters for the
/// branch `mu` (bit `n-1-q` selects the −1 eigenvector on qubit `q`),
/// with its eigenvalue `λ_μ`.
pub fn product_input(letters: &[Pauli1], mu: usize) -> Result<(DensityMatrix, f64)> {
    let n = letters.len();
    let mut lambda = 1.0;
    let sites = letters
        .iter()
        .enumerate()
        .map(|(q, &l)| {
            let negative = (mu >> (n - 1 - q)) & 1 == 1;
            if negative && l != Pauli1::I {
                lambda = -lambda;
            }
            Qubit::eigenstate(l, negative).conj()
        })
        .collect();
    Ok((ProductState::new(sites).to_dense()?.to_density(), lambda))
}

/// Per-branch `(λ_μ, tr(E(|μ*⟩⟨μ*|) P_b))` for a `2n`-qubit Pauli `P_a ⊗ P_b`.
fn branch_table(actual: &ChannelModel, p: &PauliString) -> Result<Vec<(f64, f64)>> {
    let n = actual.n();
    let pa: Vec<_> = (0..n).map(|q| p.letter(q)).collect();
    let pb = p.restrict(&(n..2 * n).collect::<Vec<_>>());
    (0..1usize << n)
        .map(|mu| {
            let (input, lambda) = product_input(&pa, mu)?;
            let out = actual.apply(&input)?;
            Ok((lambda, out.exact_expectation(&pb)?))
        })
        .collect()
}

/// Exact mean of the product-protocol outcome for `P_a ⊗ P_b`, summing over
/// every input branch with weight `2^{-n}`.
pub fn product_protocol_expectation(actual: &ChannelModel, p: &PauliString) -> Result<f64> {
    if p.n() != 2 * actual.n() {
        return Err(Error::SizeMismatch { left: 2 * actual.n(), right: p.n() });
    }
    let table = branch_table(actual, p)?;
    Ok(table.iter().map(|(l, e)| l * e).sum::<f64>() / table.len() as f64)
}

/// Each shot draws a branch `μ` uniformly and one ±1 outcome `b` of `P_b`
/// on `E(|μ*⟩⟨μ*|)`; the recorded value is `λ_μ b`, a ±1 variable whose
/// mean is `tr(ρ_E P)`.
fn product_protocol_shots<R: Rng + ?Sized>(table: &[(f64, f64)], n_shots: u64, rng: &mut R) -> Result<u64> {
    let mut remaining = n_shots;
    let mut plus = 0;
    for (idx, &(lambda, e)) in table.iter().enumerate() {
        let left = (table.len() - idx) as f64;
        let here = if idx + 1 == table.len() {
            remaining
        } else {
            Binomial::new(remaining, 1.0 / left).map_err(|e| Error::Numerical(e.to_string()))?.sample(rng)
        };
        remaining -= here;
        if here == 0 {
            continue;
        }
        let pr = ((1.0 + e) / 2.0).clamp(0.0, 1.0);
        let b_plus = Binomial::new(here, pr).map_err(|e| Error::Numerical(e.to_string()))?.sample(rng);
        plus += if lambda > 0.0 { b_plus } else { here - b_plus };
    }
    Ok(plus)
}

fn with_summary(mut report: FidelityReport, protocol: &str, n: usize) -> FidelityReport {
    let d = 1usize << n;
    report.process = Some(ProcessSummary {
        protocol: protocol.into(),
        d,
        choi_fidelity: report.estimate,
        average_fidelity: average_fidelity(report.estimate, d),
    });
    report
}

/// Entanglement-free certification: only product inputs and local Pauli
/// measurements on the channel output.
pub fn certify_process_product_protocol(
    target: &ChannelModel,
    actual: &ChannelModel,
    budget: &ErrorBudget,
    options: &EstimatorOptions,
    seed: u64,
) -> Result<FidelityReport> {
    let n = target.n();
    if actual.n() != n {
        return Err(Error::SizeMismatch { left: n, right: actual.n() });
    }
    check_dense(n, DEFAULT_DENSE_LIMIT)?;
    let model = target_choi_model(target)?;
    let sampler = RelevanceSampler::new(&model, options.strategy)?;
    let samples = (0..budget.n1)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream_rng(seed, k as u64);
            let (s, rejected) = match &options.truncation {
                Some(t) => sampler.draw_truncated(t, options.max_rejections, &mut rng)?,
                None => (sampler.draw(&mut rng)?, 0),
            };
            let table = branch_table(actual, &s.pauli)?;
            let (n_shots, plus, sigma_estimate) = match budget.shots_for(s.rho)? {
                None => (0, 0, table.iter().map(|(l, e)| l * e).sum::<f64>() / table.len() as f64),
                Some(m) => {
                    let plus = product_protocol_shots(&table, m, &mut rng)?;
                    (m, plus, (2.0 * plus as f64 - m as f64) / m as f64)
                }
            };
            Ok(SampleRecord {
                k,
                ratio: sigma_estimate / s.rho,
                pauli: s.pauli,
                rho: s.rho,
                n_shots,
                plus,
                sigma_estimate,
                rejected,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let report = FidelityReport::assemble(budget, seed, sampler.strategy(), options.truncation, 2 * n, samples);
    Ok(with_summary(report, "product", n))
}

/// Builds the actual channel's Choi state literally and certifies it as a
/// state against the target's Choi state.
pub fn certify_process_direct(
    target: &ChannelModel,
    actual: &ChannelModel,
    budget: &ErrorBudget,
    options: &EstimatorOptions,
    seed: u64,
) -> Result<FidelityReport> {
    let n = target.n();
    if actual.n() != n {
        return Err(Error::SizeMismatch { left: n, right: actual.n() });
    }
    let model = target_choi_model(target)?;
    let choi = choi_state(actual)?;
    let sampler = RelevanceSampler::new(&model, options.strategy)?;
    let report = estimate_with_sampler(&sampler, choi.density(), budget, options, seed)?;
    Ok(with_summary(report, "direct", n))
}
