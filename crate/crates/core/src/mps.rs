//! Open-boundary matrix product states with physical dimension 2.
//!
//! States are kept right-canonical (`Σ_s A^s A^s† = I` on every site but the
//! first), so the Schmidt vectors to the right of any cut are orthonormal and
//! left-to-right sweeps only need a single-copy environment.

use nalgebra::DMatrix;

use crate::dense::{check_dense, DensePureState};
use crate::error::{Error, Result};
use crate::pauli::{i_pow, Pauli1, PauliString, DEFAULT_DENSE_LIMIT};
use crate::C64;

/// Site tensor `A^s` for `s ∈ {0, 1}`, each `χ_left × χ_right`.
pub type SiteTensor = [DMatrix<C64>; 2];

#[derive(Clone, Debug)]
pub struct MpsState {
    sites: Vec<SiteTensor>,
}

impl MpsState {
    /// Canonicalizes and normalizes the given tensors.
    pub fn new(mut sites: Vec<SiteTensor>) -> Result<Self> {
        if sites.is_empty() {
            return Err(Error::InvalidState("MPS needs at least one site".into()));
        }
        let n = sites.len();
        for (k, t) in sites.iter().enumerate() {
            if t[0].shape() != t[1].shape() {
                return Err(Error::InvalidState(format!("site {k}: physical slices differ in shape")));
            }
            if k + 1 < n && t[0].ncols() != sites[k + 1][0].nrows() {
                return Err(Error::InvalidState(format!("bond {k}: dimensions do not match")));
            }
        }
        if sites[0][0].nrows() != 1 || sites[n - 1][0].ncols() != 1 {
            return Err(Error::InvalidState("boundary bond dimensions must be 1".into()));
        }
        right_canonicalize(&mut sites)?;
        Ok(MpsState { sites })
    }

    /// Exact MPS of a dense vector by successive SVDs (no truncation beyond
    /// numerically zero singular values).
    pub fn from_dense(psi: &DensePureState) -> Result<Self> {
        let n = psi.n();
        let mut sites = Vec::with_capacity(n);
        let mut rest = DMatrix::from_row_slice(1, 1 << n, psi.amplitudes());
        for _ in 0..n - 1 {
            let chi = rest.nrows();
            let right = rest.ncols() / 2;
            // rows: (left bond, s); columns: remaining sites
            let m = DMatrix::from_fn(chi * 2, right, |r, c| rest[(r / 2, (r % 2) * right + c)]);
            // left vectors from the Gram matrix; nalgebra's complex SVD vectors drift on rank-deficient input
            let eig = (&m * m.adjoint()).symmetric_eigen();
            let lmax = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
            let mut order: Vec<usize> = (0..eig.eigenvalues.len()).filter(|&i| eig.eigenvalues[i] > 1e-13 * lmax.max(1e-300)).collect();
            order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
            if order.is_empty() {
                order.push(eig.eigenvalues.imax());
            }
            let u = DMatrix::from_fn(chi * 2, order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
            let keep = order.len();
            let a0 = DMatrix::from_fn(chi, keep, |r, c| u[(2 * r, c)]);
            let a1 = DMatrix::from_fn(chi, keep, |r, c| u[(2 * r + 1, c)]);
            rest = u.adjoint() * &m;
            sites.push([a0, a1]);
        }
        let chi = rest.nrows();
        let a0 = DMatrix::from_fn(chi, 1, |r, _| rest[(r, 0)]);
        let a1 = DMatrix::from_fn(chi, 1, |r, _| rest[(r, 1)]);
        sites.push([a0, a1]);
        Self::new(sites)
    }

    pub fn n(&self) -> usize {
        self.sites.len()
    }

    pub fn sites(&self) -> &[SiteTensor] {
        &self.sites
    }

    pub fn max_bond_dimension(&self) -> usize {
        self.sites.iter().map(|t| t[0].ncols()).max().unwrap_or(1)
    }

    /// `⟨ψ|ψ⟩` by transfer-matrix contraction.
    pub fn norm_sqr(&self) -> f64 {
        let id = PauliString::identity(self.n());
        self.expectation_complex(&id).re
    }

    /// `⟨ψ|P|ψ⟩` in `O(n χ³)`.
    pub fn expectation_complex(&self, p: &PauliString) -> C64 {
        let mut env = DMatrix::from_element(1, 1, C64::new(1.0, 0.0));
        for (k, site) in self.sites.iter().enumerate() {
            env = transfer(&env, site, p.letter(k));
        }
        env[(0, 0)] * i_pow(p.phase())
    }

    pub fn expectation(&self, p: &PauliString) -> Result<C64> {
        if p.n() != self.n() {
            return Err(Error::SizeMismatch { left: self.n(), right: p.n() });
        }
        Ok(self.expectation_complex(p))
    }

    pub fn amplitude(&self, bits: usize) -> C64 {
        let n = self.n();
        let mut v = DMatrix::from_element(1, 1, C64::new(1.0, 0.0));
        for (k, site) in self.sites.iter().enumerate() {
            let s = (bits >> (n - 1 - k)) & 1;
            v = v * &site[s];
        }
        v[(0, 0)]
    }

    pub fn to_dense(&self) -> Result<DensePureState> {
        check_dense(self.n(), DEFAULT_DENSE_LIMIT)?;
        let amps = (0..1usize << self.n()).map(|b| self.amplitude(b)).collect();
        DensePureState::normalized(amps)
    }
}

/// One step of the single-copy environment:
/// `G' = Σ_{s',s} σ_{s's} (A^{s'})† G A^s`.
pub(crate) fn transfer(env: &DMatrix<C64>, site: &SiteTensor, letter: Pauli1) -> DMatrix<C64> {
    let m = letter.matrix();
    let mut out = DMatrix::zeros(site[0].ncols(), site[0].ncols());
    for (sp, row) in m.iter().enumerate() {
        for (s, &coef) in row.iter().enumerate() {
            if coef.norm_sqr() == 0.0 {
                continue;
            }
            out += (site[sp].adjoint() * env * &site[s]) * coef;
        }
    }
    out
}

fn right_canonicalize(sites: &mut [SiteTensor]) -> Result<()> {
    let n = sites.len();
    for k in (1..n).rev() {
        let (chi_l, chi_r) = sites[k][0].shape();
        // M = [A^0 | A^1], factor M = L Q with orthonormal rows via QR of M†.
        let mut m = DMatrix::zeros(chi_l, 2 * chi_r);
        m.view_mut((0, 0), (chi_l, chi_r)).copy_from(&sites[k][0]);
        m.view_mut((0, chi_r), (chi_l, chi_r)).copy_from(&sites[k][1]);
        let qr = m.adjoint().qr();
        let q = qr.q();
        let r = qr.r();
        let qd = q.adjoint();
        let rank = qd.nrows();
        let a0 = qd.view((0, 0), (rank, chi_r)).into_owned();
        let a1 = qd.view((0, chi_r), (rank, chi_r)).into_owned();
        sites[k] = [a0, a1];
        let l = r.adjoint();
        sites[k - 1] = [&sites[k - 1][0] * &l, &sites[k - 1][1] * &l];
    }
    let norm = (sites[0][0].norm_squared() + sites[0][1].norm_squared()).sqrt();
    if !(norm > 1e-300) || !norm.is_finite() {
        return Err(Error::InvalidState("MPS has zero norm".into()));
    }
    let inv = C64::new(1.0 / norm, 0.0);
    sites[0] = [&sites[0][0] * inv, &sites[0][1] * inv];
    Ok(())
}

fn real(rows: usize, cols: usize, data: &[f64]) -> DMatrix<C64> {
    DMatrix::from_row_slice(rows, cols, &data.iter().map(|&v| C64::new(v, 0.0)).collect::<Vec<_>>())
}

/// `W_n`: uniform superposition of all weight-one basis states.
pub fn w_state(n: usize) -> Result<MpsState> {
    if n == 0 {
        return Err(Error::InvalidParameter("W state needs n >= 1".into()));
    }
    if n == 1 {
        return MpsState::new(vec![[real(1, 1, &[0.0]), real(1, 1, &[1.0])]]);
    }
    // bond state 0: no excitation yet, 1: excitation placed
    let mut sites = vec![[real(1, 2, &[1.0, 0.0]), real(1, 2, &[0.0, 1.0])]];
    for _ in 1..n - 1 {
        sites.push([real(2, 2, &[1.0, 0.0, 0.0, 1.0]), real(2, 2, &[0.0, 1.0, 0.0, 0.0])]);
    }
    sites.push([real(2, 1, &[0.0, 1.0]), real(2, 1, &[1.0, 0.0])]);
    MpsState::new(sites)
}

/// `|t_n⟩ = (n+1)^{-1/2} Σ_{j=0..n} |1⟩^{⊗j}|0⟩^{⊗(n-j)}`.
pub fn t_state(n: usize) -> Result<MpsState> {
    if n == 0 {
        return Err(Error::InvalidParameter("|t_n> needs n >= 1".into()));
    }
    if n == 1 {
        return MpsState::new(vec![[real(1, 1, &[1.0]), real(1, 1, &[1.0])]]);
    }
    // bond state 0: still in the run of ones, 1: switched to zeros
    let bulk0 = real(2, 2, &[0.0, 1.0, 0.0, 1.0]);
    let bulk1 = real(2, 2, &[1.0, 0.0, 0.0, 0.0]);
    let mut sites = vec![[real(1, 2, &[0.0, 1.0]), real(1, 2, &[1.0, 0.0])]];
    for _ in 1..n - 1 {
        sites.push([bulk0.clone(), bulk1.clone()]);
    }
    sites.push([real(2, 1, &[1.0, 1.0]), real(2, 1, &[1.0, 0.0])]);
    MpsState::new(sites)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn is_right_canonical(m: &MpsState) -> bool {
        m.sites().iter().skip(1).all(|t| {
            let g = &t[0] * t[0].adjoint() + &t[1] * t[1].adjoint();
            let id = DMatrix::<C64>::identity(g.nrows(), g.ncols());
            (g - id).iter().all(|v| v.norm() < 1e-10)
        })
    }

    #[test]
    fn w3_dense_amplitudes() {
        let w = w_state(3).unwrap();
        assert!((w.norm_sqr() - 1.0).abs() < 1e-10);
        assert!(is_right_canonical(&w));
        let psi = w.to_dense().unwrap();
        let a = 1.0 / 3f64.sqrt();
        for (b, amp) in psi.amplitudes().iter().enumerate() {
            let want = if b.count_ones() == 1 { a } else { 0.0 };
            assert!((amp.norm() - want).abs() < 1e-12, "b={b}");
        }
    }

    #[test]
    fn t2_amplitude_profile() {
        let t = t_state(2).unwrap();
        let psi = t.to_dense().unwrap();
        let a = 1.0 / 3f64.sqrt();
        // |00>, |10>, |11> carry weight; |01> does not
        let want = [a, 0.0, a, a];
        for (amp, w) in psi.amplitudes().iter().zip(want) {
            assert!((amp.norm() - w).abs() < 1e-12);
        }
    }

    #[test]
    fn expectation_matches_dense() {
        let w = w_state(4).unwrap();
        let psi = w.to_dense().unwrap();
        for s in ["XXII", "ZIZI", "YYII", "IXIX", "ZZZZ", "-XYIZ"] {
            let p: PauliString = s.parse().unwrap();
            let a = w.expectation(&p).unwrap();
            let b = psi.expectation(&p).unwrap();
            assert!((a - b).norm() < 1e-12, "{s}");
        }
    }

    #[test]
    fn from_dense_round_trip() {
        let amps: Vec<C64> = (0..16).map(|i| C64::new((i as f64 * 0.37).sin(), (i as f64 * 1.3).cos())).collect();
        let psi = DensePureState::normalized(amps).unwrap();
        let m = MpsState::from_dense(&psi).unwrap();
        assert!(is_right_canonical(&m));
        let back = m.to_dense().unwrap();
        let ov = psi.inner(&back).unwrap().norm();
        assert!((ov - 1.0).abs() < 1e-10);
    }

    #[test]
    fn rejects_bad_shapes() {
        let bad = vec![[real(1, 2, &[1.0, 0.0]), real(1, 2, &[0.0, 1.0])], [real(3, 1, &[1.0; 3]), real(3, 1, &[0.0; 3])]];
        assert!(MpsState::new(bad).is_err());
        assert!(MpsState::new(vec![[real(1, 1, &[0.0]), real(1, 1, &[0.0])]]).is_err());
    }
}
