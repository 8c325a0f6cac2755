//! Theoretical target states and their exact Pauli expectations `ρ_i = tr(ρ P_i)`.

use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dense::{DensePureState, DensityMatrix};
use crate::error::{Error, Result};
use crate::mps::{self, MpsState};
use crate::pauli::{i_pow, Pauli1, PauliString};
use crate::stabilizer::StabilizerState;
use crate::C64;

/// Single-qubit pure state, normalized.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Qubit(pub [C64; 2]);

impl Qubit {
    pub fn new(a: C64, b: C64) -> Result<Self> {
        let norm = (a.norm_sqr() + b.norm_sqr()).sqrt();
        if !(norm > 0.0) {
            return Err(Error::InvalidState("zero qubit vector".into()));
        }
        Ok(Qubit([a / norm, b / norm]))
    }

    /// Eigenstate of `letter` with eigenvalue `+1` (or `-1` if `negative`).
    /// The identity maps to `|0⟩`/`|1⟩`.
    pub fn eigenstate(letter: Pauli1, negative: bool) -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let (o, l) = (C64::new(0.0, 0.0), C64::new(1.0, 0.0));
        let s = if negative { -1.0 } else { 1.0 };
        match letter {
            Pauli1::I | Pauli1::Z => {
                if negative {
                    Qubit([o, l])
                } else {
                    Qubit([l, o])
                }
            }
            Pauli1::X => Qubit([C64::new(h, 0.0), C64::new(s * h, 0.0)]),
            Pauli1::Y => Qubit([C64::new(h, 0.0), C64::new(0.0, s * h)]),
        }
    }

    pub fn conj(self) -> Self {
        Qubit([self.0[0].conj(), self.0[1].conj()])
    }

    /// `⟨φ|σ|φ⟩` for a single-qubit letter.
    pub fn expectation(&self, letter: Pauli1) -> C64 {
        let m = letter.matrix();
        let v = self.0;
        let mut acc = C64::new(0.0, 0.0);
        for r in 0..2 {
            for c in 0..2 {
                acc += v[r].conj() * m[r][c] * v[c];
            }
        }
        acc
    }
}

impl FromStr for Qubit {
    type Err = Error;

    /// `0`, `1`, `+`, `-`, `+i`, `-i`.
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "0" => Qubit::eigenstate(Pauli1::Z, false),
            "1" => Qubit::eigenstate(Pauli1::Z, true),
            "+" => Qubit::eigenstate(Pauli1::X, false),
            "-" => Qubit::eigenstate(Pauli1::X, true),
            "+i" | "i" => Qubit::eigenstate(Pauli1::Y, false),
            "-i" => Qubit::eigenstate(Pauli1::Y, true),
            other => return Err(Error::Parse(format!("unknown single-qubit label {other:?}"))),
        })
    }
}

/// Tensor product of single-qubit pure states.
#[derive(Clone, Debug, PartialEq)]
pub struct ProductState {
    pub sites: Vec<Qubit>,
}

impl ProductState {
    pub fn new(sites: Vec<Qubit>) -> Self {
        ProductState { sites }
    }

    pub fn n(&self) -> usize {
        self.sites.len()
    }

    pub fn expectation(&self, p: &PauliString) -> Result<C64> {
        if p.n() != self.n() {
            return Err(Error::SizeMismatch { left: self.n(), right: p.n() });
        }
        let prod: C64 = self.sites.iter().enumerate().map(|(q, s)| s.expectation(p.letter(q))).product();
        Ok(prod * i_pow(p.phase()))
    }

    pub fn to_dense(&self) -> Result<DensePureState> {
        crate::dense::check_dense(self.n(), crate::pauli::DEFAULT_DENSE_LIMIT)?;
        let mut amps = vec![C64::new(1.0, 0.0)];
        for s in &self.sites {
            amps = amps.iter().flat_map(|a| [a * s.0[0], a * s.0[1]]).collect();
        }
        DensePureState::normalized(amps)
    }
}

/// Boundary condition for the 1D cluster state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    #[default]
    Open,
    Periodic,
}

#[derive(Clone, Debug)]
pub enum StateModel {
    Stabilizer(StabilizerState),
    Mps(MpsState),
    DensePure(DensePureState),
    Density(DensityMatrix),
    Product(ProductState),
}

/// Dense form of a [`StateModel`].
#[derive(Clone, Debug)]
pub enum DenseState {
    Pure(DensePureState),
    Mixed(DensityMatrix),
}

impl DenseState {
    pub fn to_density(&self) -> DensityMatrix {
        match self {
            DenseState::Pure(p) => p.to_density(),
            DenseState::Mixed(m) => m.clone(),
        }
    }
}

impl StateModel {
    pub fn n(&self) -> usize {
        match self {
            StateModel::Stabilizer(s) => s.n(),
            StateModel::Mps(m) => m.n(),
            StateModel::DensePure(p) => p.n(),
            StateModel::Density(r) => r.n(),
            StateModel::Product(p) => p.n(),
        }
    }

    pub fn dimension(&self) -> f64 {
        2f64.powi(self.n() as i32)
    }

    pub fn is_pure(&self) -> bool {
        !matches!(self, StateModel::Density(_))
    }

    /// Exact `ρ_i = tr(ρ P)` for a Hermitian Pauli string.
    pub fn expectation(&self, p: &PauliString) -> Result<f64> {
        if p.n() != self.n() {
            return Err(Error::SizeMismatch { left: self.n(), right: p.n() });
        }
        if !p.is_hermitian() {
            return Err(Error::NonHermitian(p.to_string()));
        }
        let v = match self {
            StateModel::Stabilizer(s) => return s.expectation(p),
            StateModel::Mps(m) => m.expectation(p)?,
            StateModel::DensePure(d) => d.expectation(p)?,
            StateModel::Density(r) => r.expectation(p)?,
            StateModel::Product(s) => s.expectation(p)?,
        };
        Ok(v.re)
    }

    pub fn to_dense(&self) -> Result<DenseState> {
        Ok(match self {
            StateModel::Stabilizer(s) => DenseState::Pure(s.to_dense()?),
            StateModel::Mps(m) => DenseState::Pure(m.to_dense()?),
            StateModel::DensePure(p) => DenseState::Pure(p.clone()),
            StateModel::Density(r) => DenseState::Mixed(r.clone()),
            StateModel::Product(p) => DenseState::Pure(p.to_dense()?),
        })
    }

    /// Dense amplitudes; fails for mixed states.
    pub fn to_dense_pure(&self) -> Result<DensePureState> {
        match self.to_dense()? {
            DenseState::Pure(p) => Ok(p),
            DenseState::Mixed(_) => Err(Error::Unsupported("target state must be pure".into())),
        }
    }
}

fn check_n(n: usize, min: usize, what: &str) -> Result<()> {
    if n < min {
        return Err(Error::InvalidParameter(format!("{what} needs n >= {min}, got {n}")));
    }
    Ok(())
}

/// `(|0…0⟩ + |1…1⟩)/√2` with generators `X…X` and `Z_k Z_{k+1}`.
pub fn make_ghz(n: usize) -> Result<StateModel> {
    check_n(n, 1, "GHZ state")?;
    let mut gens = vec![PauliString::from_letters(&vec![Pauli1::X; n])];
    for k in 0..n - 1 {
        gens.push(PauliString::from_sparse(n, &[(k, Pauli1::Z), (k + 1, Pauli1::Z)]));
    }
    Ok(StateModel::Stabilizer(StabilizerState::new(gens)?))
}

/// 1D cluster state with generators `Z_{k-1} X_k Z_{k+1}`.
pub fn make_cluster_1d(n: usize, boundary: Boundary) -> Result<StateModel> {
    check_n(n, 1, "cluster state")?;
    if boundary == Boundary::Periodic && n < 3 {
        return Err(Error::InvalidParameter("periodic cluster state needs n >= 3".into()));
    }
    let gens = (0..n)
        .map(|k| {
            let mut g = PauliString::single(n, k, Pauli1::X);
            match boundary {
                Boundary::Open => {
                    if k > 0 {
                        g.set(k - 1, Pauli1::Z);
                    }
                    if k + 1 < n {
                        g.set(k + 1, Pauli1::Z);
                    }
                }
                Boundary::Periodic => {
                    g.set((k + n - 1) % n, Pauli1::Z);
                    g.set((k + 1) % n, Pauli1::Z);
                }
            }
            g
        })
        .collect();
    Ok(StateModel::Stabilizer(StabilizerState::new(gens)?))
}

pub fn make_w(n: usize) -> Result<StateModel> {
    Ok(StateModel::Mps(mps::w_state(n)?))
}

pub fn make_t(n: usize) -> Result<StateModel> {
    Ok(StateModel::Mps(mps::t_state(n)?))
}

pub fn make_product(labels: &[&str]) -> Result<StateModel> {
    if labels.is_empty() {
        return Err(Error::InvalidParameter("product state needs at least one site".into()));
    }
    let sites = labels.iter().map(|l| l.parse()).collect::<Result<Vec<Qubit>>>()?;
    Ok(StateModel::Product(ProductState::new(sites)))
}

/// Haar-random pure state from normalized complex Gaussian amplitudes.
pub fn random_pure<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<StateModel> {
    check_n(n, 1, "random state")?;
    crate::dense::check_dense(n, crate::pauli::DEFAULT_DENSE_LIMIT)?;
    let amps = (0..1usize << n)
        .map(|_| C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng)))
        .collect();
    Ok(StateModel::DensePure(DensePureState::normalized(amps)?))
}

/// Serializable description of a target or prepared state.
///
/// JSON form is tagged by `family`, e.g. `{"family":"ghz","n":4}`; the
/// short text form is `ghz:4`, `cluster:5[:periodic]`, `w:3`, `t:2`,
/// `product:0,+,-i` or `random:3:SEED`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum StateSpec {
    Ghz {
        n: usize,
    },
    Cluster {
        n: usize,
        #[serde(default)]
        boundary: Boundary,
    },
    W {
        n: usize,
    },
    T {
        n: usize,
    },
    Product {
        labels: Vec<String>,
    },
    Random {
        n: usize,
        seed: u64,
    },
    Stabilizer {
        generators: Vec<String>,
    },
    /// Amplitudes as `[re, im]` pairs in basis order.
    Dense {
        amplitudes: Vec<[f64; 2]>,
    },
    /// Per site `[A^0, A^1]`, each a list of rows of `[re, im]`.
    Mps {
        tensors: Vec<[Vec<Vec<[f64; 2]>>; 2]>,
    },
}

fn complex_matrix(rows: &[Vec<[f64; 2]>]) -> Result<DMatrix<C64>> {
    let ncols = rows.first().map_or(0, |r| r.len());
    if rows.is_empty() || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::InvalidState("tensor slices must be non-empty and rectangular".into()));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |r, c| C64::new(rows[r][c][0], rows[r][c][1])))
}

impl StateSpec {
    pub fn build(&self) -> Result<StateModel> {
        match self {
            StateSpec::Ghz { n } => make_ghz(*n),
            StateSpec::Cluster { n, boundary } => make_cluster_1d(*n, *boundary),
            StateSpec::W { n } => make_w(*n),
            StateSpec::T { n } => make_t(*n),
            StateSpec::Product { labels } => make_product(&labels.iter().map(String::as_str).collect::<Vec<_>>()),
            StateSpec::Random { n, seed } => random_pure(*n, &mut crate::rng::stream_rng(*seed, 0)),
            StateSpec::Stabilizer { generators } => {
                let gens = generators.iter().map(|g| g.parse()).collect::<Result<Vec<PauliString>>>()?;
                Ok(StateModel::Stabilizer(StabilizerState::new(gens)?))
            }
            StateSpec::Dense { amplitudes } => {
                let amps = amplitudes.iter().map(|&[re, im]| C64::new(re, im)).collect();
                Ok(StateModel::DensePure(DensePureState::new(amps)?))
            }
            StateSpec::Mps { tensors } => {
                let sites = tensors
                    .iter()
                    .map(|[a0, a1]| Ok([complex_matrix(a0)?, complex_matrix(a1)?]))
                    .collect::<Result<Vec<_>>>()?;
                Ok(StateModel::Mps(MpsState::new(sites)?))
            }
        }
    }
}

impl FromStr for StateSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.starts_with('{') {
            return Err(Error::Parse("JSON state descriptors are read with serde".into()));
        }
        let parts: Vec<&str> = s.split(':').collect();
        let num = |i: usize| -> Result<usize> {
            parts
                .get(i)
                .ok_or_else(|| Error::Parse(format!("missing size in state {s:?}")))?
                .parse()
                .map_err(|_| Error::Parse(format!("bad size in state {s:?}")))
        };
        let spec = match parts[0].to_ascii_lowercase().as_str() {
            "ghz" => StateSpec::Ghz { n: num(1)? },
            "cluster" | "cluster-1d" => {
                let boundary = match parts.get(2).copied() {
                    None | Some("open") => Boundary::Open,
                    Some("periodic") => Boundary::Periodic,
                    Some(b) => return Err(Error::Parse(format!("unknown boundary {b:?}"))),
                };
                StateSpec::Cluster { n: num(1)?, boundary }
            }
            "w" => StateSpec::W { n: num(1)? },
            "t" => StateSpec::T { n: num(1)? },
            "product" => StateSpec::Product {
                labels: parts.get(1).unwrap_or(&"").split(',').filter(|l| !l.is_empty()).map(String::from).collect(),
            },
            "random" => StateSpec::Random {
                n: num(1)?,
                seed: parts.get(2).map_or(Ok(0), |v| v.parse()).map_err(|_| Error::Parse(format!("bad seed in {s:?}")))?,
            },
            other => return Err(Error::Parse(format!("unknown state family {other:?}"))),
        };
        if parts.len() > 3 {
            return Err(Error::Parse(format!("trailing fields in state {s:?}")));
        }
        Ok(spec)
    }
}
