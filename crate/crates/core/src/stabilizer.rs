//! Stabilizer states given by `n` independent commuting generators.

use rand::Rng;

use crate::dense::{check_dense, DensePureState};
use crate::error::{Error, Result};
use crate::pauli::{Pauli1, PauliString, DEFAULT_DENSE_LIMIT};
use crate::C64;

#[derive(Clone, Debug)]
pub struct StabilizerState {
    n: usize,
    generators: Vec<PauliString>,
    /// Row-reduced generating set; `pivots[r]` is the only row with that
    /// symplectic column set (column `q` is x_q, column `n + q` is z_q).
    reduced: Vec<PauliString>,
    pivots: Vec<usize>,
}

fn column(p: &PauliString, col: usize) -> bool {
    let n = p.n();
    if col < n {
        p.x_bit(col)
    } else {
        p.z_bit(col - n)
    }
}

impl StabilizerState {
    pub fn new(generators: Vec<PauliString>) -> Result<Self> {
        let n = generators.first().map(|g| g.n()).ok_or_else(|| Error::InvalidState("no generators".into()))?;
        if generators.len() != n {
            return Err(Error::InvalidState(format!("{} generators for {n} qubits", generators.len())));
        }
        for g in &generators {
            if g.n() != n {
                return Err(Error::SizeMismatch { left: n, right: g.n() });
            }
            if !g.is_hermitian() {
                return Err(Error::InvalidState(format!("generator {g} is not Hermitian")));
            }
        }
        for (i, a) in generators.iter().enumerate() {
            for b in &generators[i + 1..] {
                if !a.commutes(b)? {
                    return Err(Error::InvalidState(format!("generators {a} and {b} anticommute")));
                }
            }
        }
        let (reduced, pivots) = row_reduce(&generators)?;
        if reduced.len() != n {
            return Err(Error::InvalidState(format!(
                "generators are dependent: symplectic rank {} < {n}",
                reduced.len()
            )));
        }
        Ok(StabilizerState { n, generators, reduced, pivots })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn generators(&self) -> &[PauliString] {
        &self.generators
    }

    /// `⟨P⟩ ∈ {0, ±1}` by decomposing `P` over the reduced generators.
    pub fn expectation(&self, p: &PauliString) -> Result<f64> {
        if p.n() != self.n {
            return Err(Error::SizeMismatch { left: self.n, right: p.n() });
        }
        if !p.is_hermitian() {
            return Err(Error::NonHermitian(p.to_string()));
        }
        let mut acc = PauliString::identity(self.n);
        for (row, &col) in self.reduced.iter().zip(&self.pivots) {
            if column(p, col) {
                acc = acc.multiply(row)?;
            }
        }
        if acc.unsigned() != p.unsigned() {
            return Ok(0.0);
        }
        // P = i^(kP - kacc) · acc and ⟨acc⟩ = 1.
        let k = (p.phase() + 4 - acc.phase()) & 3;
        Ok(if k == 0 { 1.0 } else { -1.0 })
    }

    /// Uniformly random element `s·P` of the stabilizer group, returned as
    /// the phase-+1 string `P` and the sign `s`.
    pub fn random_element<R: Rng + ?Sized>(&self, rng: &mut R) -> (PauliString, f64) {
        let mut acc = PauliString::identity(self.n);
        for g in &self.generators {
            if rng.random::<bool>() {
                acc = acc.multiply(g).expect("generators share n");
            }
        }
        let sign = if acc.phase() == 0 { 1.0 } else { -1.0 };
        (acc.unsigned(), sign)
    }

    /// All `2^n` signed group elements. Intended for small `n`.
    pub fn group_elements(&self) -> Vec<PauliString> {
        let mut out = vec![PauliString::identity(self.n)];
        for g in &self.generators {
            let extra: Vec<_> = out.iter().map(|e| e.multiply(g).expect("same n")).collect();
            out.extend(extra);
        }
        out
    }

    /// Amplitude vector from projecting a basis state onto the code space.
    pub fn to_dense(&self) -> Result<DensePureState> {
        check_dense(self.n, DEFAULT_DENSE_LIMIT)?;
        let d = 1usize << self.n;
        let actions: Vec<_> = self.generators.iter().map(|g| g.basis_action()).collect();
        for seed in 0..d {
            let mut v = vec![C64::new(0.0, 0.0); d];
            v[seed] = C64::new(1.0, 0.0);
            for act in &actions {
                let mut w = v.clone();
                for (b, a) in v.iter().enumerate() {
                    if a.norm_sqr() == 0.0 {
                        continue;
                    }
                    let (t, c) = act.apply(b);
                    w[t] += c * a;
                }
                v = w;
            }
            if v.iter().map(|a| a.norm_sqr()).sum::<f64>() > 1e-12 {
                return DensePureState::normalized(v);
            }
        }
        Err(Error::Numerical("stabilizer projection vanished on every basis state".into()))
    }

    /// Tableau for the single-qubit product state with the given letters as
    /// ±1 eigen-operators, e.g. `|0⟩ → +Z`.
    pub fn from_local_eigenstates(ops: &[(Pauli1, bool)]) -> Result<Self> {
        let n = ops.len();
        let gens = ops
            .iter()
            .enumerate()
            .map(|(q, &(l, negative))| {
                let g = PauliString::single(n, q, l);
                if negative {
                    g.negated()
                } else {
                    g
                }
            })
            .collect();
        Self::new(gens)
    }
}

fn row_reduce(gens: &[PauliString]) -> Result<(Vec<PauliString>, Vec<usize>)> {
    let n = gens[0].n();
    let mut rows: Vec<PauliString> = gens.to_vec();
    let mut pivots = Vec::new();
    let mut next = 0;
    for col in 0..2 * n {
        let Some(found) = (next..rows.len()).find(|&r| column(&rows[r], col)) else {
            continue;
        };
        rows.swap(next, found);
        let pivot_row = rows[next].clone();
        for r in 0..rows.len() {
            if r != next && column(&rows[r], col) {
                rows[r] = rows[r].multiply(&pivot_row)?;
            }
        }
        pivots.push(col);
        next += 1;
    }
    rows.truncate(next);
    Ok((rows, pivots))
}
