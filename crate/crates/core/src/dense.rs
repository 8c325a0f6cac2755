//! Dense state vectors and density matrices for desk-scale qubit counts.

use nalgebra::DMatrix;
use crate::error::{Error, Result};
use crate::pauli::{PauliString, DEFAULT_DENSE_LIMIT};
use crate::C64;

const NORM_TOL: f64 = 1e-10;

pub(crate) fn check_dense(n: usize, limit: usize) -> Result<()> {
    if n > limit {
        return Err(Error::DenseLimit { n, limit });
    }
    Ok(())
}

fn qubits_for_len(len: usize) -> Result<usize> {
    if len == 0 || !len.is_power_of_two() {
        return Err(Error::InvalidState(format!("dimension {len} is not a power of two")));
    }
    Ok(len.trailing_zeros() as usize)
}

/// Pure state as a vector of `2^n` amplitudes (qubit 0 most significant).
#[derive(Clone, Debug, PartialEq)]
pub struct DensePureState {
    n: usize,
    amps: Vec<C64>,
}

impl DensePureState {
    /// Validates length and unit norm.
    pub fn new(amps: Vec<C64>) -> Result<Self> {
        let n = qubits_for_len(amps.len())?;
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidState(format!("state norm² {norm} is not 1")));
        }
        Ok(DensePureState { n, amps })
    }

    /// Rescales to unit norm.
    pub fn normalized(mut amps: Vec<C64>) -> Result<Self> {
        let n = qubits_for_len(amps.len())?;
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::InvalidState("zero or non-finite state vector".into()));
        }
        amps.iter_mut().for_each(|a| *a /= norm);
        Ok(DensePureState { n, amps })
    }

    pub fn basis(n: usize, index: usize) -> Result<Self> {
        check_dense(n, DEFAULT_DENSE_LIMIT)?;
        let mut amps = vec![C64::new(0.0, 0.0); 1 << n];
        *amps.get_mut(index).ok_or_else(|| Error::InvalidParameter(format!("basis index {index}")))? =
            C64::new(1.0, 0.0);
        Ok(DensePureState { n, amps })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amps
    }

    /// `⟨ψ|P|ψ⟩`.
    pub fn expectation(&self, p: &PauliString) -> Result<C64> {
        if p.n() != self.n {
            return Err(Error::SizeMismatch { left: self.n, right: p.n() });
        }
        let act = p.basis_action();
        Ok(self
            .amps
            .iter()
            .enumerate()
            .map(|(b, a)| {
                let (t, c) = act.apply(b);
                self.amps[t].conj() * c * a
            })
            .sum())
    }

    pub fn inner(&self, other: &Self) -> Result<C64> {
        if other.n != self.n {
            return Err(Error::SizeMismatch { left: self.n, right: other.n });
        }
        Ok(self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum())
    }

    /// Tensor product `self ⊗ other`.
    pub fn tensor(&self, other: &Self) -> Self {
        let amps = self
            .amps
            .iter()
            .flat_map(|a| other.amps.iter().map(move |b| a * b))
            .collect();
        DensePureState { n: self.n + other.n, amps }
    }

    pub fn to_density(&self) -> DensityMatrix {
        let d = self.amps.len();
        let mat = DMatrix::from_fn(d, d, |r, c| self.amps[r] * self.amps[c].conj());
        DensityMatrix { n: self.n, mat }
    }

    /// Amplitudes reshaped to a `2^k × 2^(n-k)` matrix: rows index the first
    /// `k` qubits.
    pub fn split_matrix(&self, k: usize) -> DMatrix<C64> {
        DMatrix::from_row_slice(1 << k, 1 << (self.n - k), &self.amps)
    }
}

/// Hermitian, unit-trace, positive semidefinite `2^n × 2^n` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    n: usize,
    mat: DMatrix<C64>,
}

/// `P M P†`.
pub(crate) fn conjugate_by_pauli(m: &DMatrix<C64>, p: &PauliString) -> DMatrix<C64> {
    let act = p.basis_action();
    let d = m.nrows();
    let mut out = DMatrix::zeros(d, d);
    for c in 0..d {
        let (tc, cc) = act.apply(c);
        for r in 0..d {
            let (tr, cr) = act.apply(r);
            out[(tr, tc)] = cr * m[(r, c)] * cc.conj();
        }
    }
    out
}

impl DensityMatrix {
    /// Validates Hermiticity and trace; positivity is checked up to 8 qubits.
    pub fn new(mat: DMatrix<C64>) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::InvalidState("density matrix is not square".into()));
        }
        let n = qubits_for_len(mat.nrows())?;
        let rho = DensityMatrix { n, mat };
        rho.validate(n <= 8)?;
        Ok(rho)
    }

    pub(crate) fn from_matrix_unchecked(mat: DMatrix<C64>) -> Self {
        let n = mat.nrows().trailing_zeros() as usize;
        DensityMatrix { n, mat }
    }

    pub fn maximally_mixed(n: usize) -> Result<Self> {
        check_dense(n, DEFAULT_DENSE_LIMIT)?;
        let d = 1usize << n;
        Ok(DensityMatrix { n, mat: DMatrix::identity(d, d) / C64::new(d as f64, 0.0) })
    }

    pub fn validate(&self, check_positive: bool) -> Result<()> {
        let d = self.mat.nrows();
        for r in 0..d {
            for c in r..d {
                if (self.mat[(r, c)] - self.mat[(c, r)].conj()).norm() > NORM_TOL {
                    return Err(Error::InvalidState("density matrix is not Hermitian".into()));
                }
            }
        }
        let tr = self.mat.trace();
        if (tr - C64::new(1.0, 0.0)).norm() > NORM_TOL {
            return Err(Error::InvalidState(format!("density matrix trace {tr} is not 1")));
        }
        if check_positive {
            let min = self.mat.clone().symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min);
            if min < -1e-9 {
                return Err(Error::InvalidState(format!("density matrix has eigenvalue {min}")));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.mat
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    /// `tr(ρ P)`.
    pub fn expectation(&self, p: &PauliString) -> Result<C64> {
        if p.n() != self.n {
            return Err(Error::SizeMismatch { left: self.n, right: p.n() });
        }
        let act = p.basis_action();
        Ok((0..self.dim())
            .map(|b| {
                let (t, c) = act.apply(b);
                self.mat[(b, t)] * c
            })
            .sum())
    }

    /// `⟨ψ|ρ|ψ⟩`.
    pub fn fidelity_with_pure(&self, psi: &DensePureState) -> Result<f64> {
        if psi.n() != self.n {
            return Err(Error::SizeMismatch { left: self.n, right: psi.n() });
        }
        let a = psi.amplitudes();
        let v = nalgebra::DVector::from_column_slice(a);
        Ok((v.adjoint() * &self.mat * &v)[(0, 0)].re)
    }

    /// `tr(ρσ)`.
    pub fn overlap(&self, other: &Self) -> Result<f64> {
        if other.n != self.n {
            return Err(Error::SizeMismatch { left: self.n, right: other.n });
        }
        // tr(AB) = Σ_rc A_rc B_cr
        let d = self.dim();
        let mut acc = C64::new(0.0, 0.0);
        for r in 0..d {
            for c in 0..d {
                acc += self.mat[(r, c)] * other.mat[(c, r)];
            }
        }
        Ok(acc.re)
    }

    pub fn purity(&self) -> f64 {
        self.overlap(self).expect("same size")
    }

    /// `P ρ P†` for a Pauli string `P`.
    pub fn conjugated_by_pauli(&self, p: &PauliString) -> Self {
        DensityMatrix { n: self.n, mat: conjugate_by_pauli(&self.mat, p) }
    }

    /// `U ρ U†`.
    pub fn evolved(&self, u: &DMatrix<C64>) -> Self {
        DensityMatrix { n: self.n, mat: u * &self.mat * u.adjoint() }
    }

    /// Affine mix `(1-p)·self + p·other`.
    pub fn mixed_with(&self, other: &Self, p: f64) -> Self {
        let w = C64::new(1.0 - p, 0.0);
        let v = C64::new(p, 0.0);
        DensityMatrix { n: self.n, mat: &self.mat * w + &other.mat * v }
    }

    /// Traces out the last `n - keep` qubits.
    pub fn partial_trace_tail(&self, keep: usize) -> Self {
        let da = 1usize << keep;
        let db = 1usize << (self.n - keep);
        let mat = DMatrix::from_fn(da, da, |r, c| (0..db).map(|b| self.mat[(r * db + b, c * db + b)]).sum());
        DensityMatrix { n: keep, mat }
    }

    /// Traces out the first `n - keep` qubits.
    pub fn partial_trace_head(&self, keep: usize) -> Self {
        let da = 1usize << (self.n - keep);
        let db = 1usize << keep;
        let mat = DMatrix::from_fn(db, db, |r, c| (0..da).map(|a| self.mat[(a * db + r, a * db + c)]).sum());
        DensityMatrix { n: keep, mat }
    }
}
