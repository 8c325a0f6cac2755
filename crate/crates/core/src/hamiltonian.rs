//! Learning local Hamiltonians from short-time expectation shifts.
//!
//! For a product probe `ρ_j` and observable `A_i`, the shift after time `t`
//! is `W_ij = ⟨A_i(t)⟩ - ⟨A_i⟩ ≈ Σ_l T_{ij,l} h_l` with
//! `T_{ij,l} = i t tr(ρ_j [P_l, A_i])`. Stacking rows and applying the
//! pseudoinverse of `T` recovers the coefficients.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dense::check_dense;
use crate::error::{Error, Result};
use crate::pauli::{Pauli1, PauliString, DEFAULT_DENSE_LIMIT};
use crate::rng::{stream_rng, sub_seed};
use crate::state::{ProductState, Qubit, StateModel};
use crate::C64;

/// Relative singular-value cutoff of the pseudoinverse.
pub const SVD_CUTOFF: f64 = 1e-10;

/// Above this value of `t Σ|h_l|` the first-order model is flagged.
pub const LINEARIZATION_LIMIT: f64 = 0.1;

/// `H = Σ_l h_l P_l` on a chain of `n` qubits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianModel {
    pub n: usize,
    pub terms: Vec<PauliString>,
    pub coeffs: Vec<f64>,
}

/// Pauli strings supported on at most `k` contiguous sites, with
/// non-identity letters at both ends of the window, ordered by window
/// start and then by length.
pub fn chain_basis(n: usize, k: usize) -> Vec<PauliString> {
    let mut out = Vec::new();
    for start in 0..n {
        for len in 1..=k.min(n - start) {
            let inner = len.saturating_sub(2);
            let ends = if len == 1 { 3 } else { 9 };
            for code in 0..ends * 4usize.pow(inner as u32) {
                let mut letters = vec![Pauli1::I; n];
                let mut c = code;
                letters[start] = Pauli1::from_digit(c % 3 + 1);
                c /= 3;
                if len > 1 {
                    letters[start + len - 1] = Pauli1::from_digit(c % 3 + 1);
                    c /= 3;
                    for q in start + 1..start + len - 1 {
                        letters[q] = Pauli1::from_digit(c % 4);
                        c /= 4;
                    }
                }
                out.push(PauliString::from_letters(&letters));
            }
        }
    }
    out
}

impl HamiltonianModel {
    pub fn new(n: usize, terms: Vec<PauliString>, coeffs: Vec<f64>) -> Result<Self> {
        if terms.len() != coeffs.len() {
            return Err(Error::SizeMismatch { left: terms.len(), right: coeffs.len() });
        }
        for p in &terms {
            if p.n() != n {
                return Err(Error::SizeMismatch { left: n, right: p.n() });
            }
            if p.phase() != 0 {
                return Err(Error::InvalidParameter(format!("basis term {p} must be unsigned")));
            }
        }
        if let Some(c) = coeffs.iter().find(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter(format!("coefficient {c} is not finite")));
        }
        Ok(HamiltonianModel { n, terms, coeffs })
    }

    pub fn dimension(&self) -> f64 {
        2f64.powi(self.n as i32)
    }

    pub fn dense_matrix(&self) -> Result<DMatrix<C64>> {
        check_dense(self.n, DEFAULT_DENSE_LIMIT)?;
        let d = 1usize << self.n;
        let mut h = DMatrix::zeros(d, d);
        for (p, &c) in self.terms.iter().zip(&self.coeffs) {
            let act = p.basis_action();
            for b in 0..d {
                let (row, amp) = act.apply(b);
                h[(row, b)] += amp * c;
            }
        }
        Ok(h)
    }

    pub fn spectrum(&self) -> Result<Spectrum> {
        let eig = self.dense_matrix()?.symmetric_eigen();
        Ok(Spectrum { energies: eig.eigenvalues.iter().copied().collect(), vectors: eig.eigenvectors })
    }

    /// `d⁻¹ √tr((H - H̃)²)` for coefficients `other` on the same basis.
    pub fn rms_error(&self, other: &[f64]) -> Result<f64> {
        if other.len() != self.coeffs.len() {
            return Err(Error::SizeMismatch { left: self.coeffs.len(), right: other.len() });
        }
        let ss: f64 = self.coeffs.iter().zip(other).map(|(a, b)| (a - b).powi(2)).sum();
        Ok((ss * self.dimension()).sqrt() / self.dimension())
    }

    /// Crude bound `t Σ|h_l| ≥ t ‖H‖` used to flag the linearization.
    pub fn linearization_parameter(&self, t: f64) -> f64 {
        t * self.coeffs.iter().map(|c| c.abs()).sum::<f64>()
    }
}

/// Chain Hamiltonian on [`chain_basis`] with magnitudes uniform in
/// `[low, high]` and random signs.
pub fn random_local_hamiltonian<R: Rng + ?Sized>(
    n: usize,
    k: usize,
    rng: &mut R,
    low: f64,
    high: f64,
) -> Result<HamiltonianModel> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("chain needs n >= 2, got {n}")));
    }
    if k == 0 || !(0.0..=high).contains(&low) || !high.is_finite() {
        return Err(Error::InvalidParameter(format!("bad locality {k} or range [{low}, {high}]")));
    }
    let terms = chain_basis(n, k);
    let coeffs = terms
        .iter()
        .map(|_| {
            let mag = if high > low { rng.random_range(low..=high) } else { low };
            if rng.random::<bool>() {
                mag
            } else {
                -mag
            }
        })
        .collect();
    HamiltonianModel::new(n, terms, coeffs)
}

/// Eigendecomposition `H = V diag(E) V†`.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub energies: Vec<f64>,
    pub vectors: DMatrix<C64>,
}

impl Spectrum {
    /// `V† M V`.
    pub fn to_eigenbasis(&self, m: &DMatrix<C64>) -> DMatrix<C64> {
        self.vectors.adjoint() * m * &self.vectors
    }

    /// `e^{i(E_j - E_k)t} - 1`, written so small phases do not cancel.
    pub fn phase_factors(&self, t: f64) -> DMatrix<C64> {
        let e = &self.energies;
        DMatrix::from_fn(e.len(), e.len(), |j, k| {
            let theta = (e[j] - e[k]) * t;
            let h = (theta / 2.0).sin();
            C64::new(-2.0 * h * h, theta.sin())
        })
    }

    /// `tr(ρ(t) A) - tr(ρ A)` under `exp(-iHt)`, with `ρ` and `A` in the
    /// eigenbasis and `phases` from [`Spectrum::phase_factors`].
    pub fn shift(&self, rho: &DMatrix<C64>, a: &DMatrix<C64>, phases: &DMatrix<C64>) -> f64 {
        // Σ ρ_kj A_jk (e^{i(E_j - E_k)t} - 1)
        let d = self.energies.len();
        let mut acc = 0.0;
        for k in 0..d {
            for j in 0..d {
                acc += (rho[(k, j)] * a[(j, k)] * phases[(j, k)]).re;
            }
        }
        acc
    }
}

/// Additive error on each measured shift.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MeasurementNoise {
    #[default]
    Exact,
    /// Uniform on `[-eps, eps]`.
    Uniform { eps: f64 },
    Gaussian { sigma: f64 },
}

impl MeasurementNoise {
    pub fn validate(&self) -> Result<()> {
        let v = match *self {
            MeasurementNoise::Exact => 0.0,
            MeasurementNoise::Uniform { eps } => eps,
            MeasurementNoise::Gaussian { sigma } => sigma,
        };
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::InvalidParameter(format!("noise magnitude {v} must be finite and >= 0")));
        }
        Ok(())
    }

    pub fn scale(&self) -> f64 {
        match *self {
            MeasurementNoise::Exact => 0.0,
            MeasurementNoise::Uniform { eps } => eps,
            MeasurementNoise::Gaussian { sigma } => sigma,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            MeasurementNoise::Exact => 0.0,
            MeasurementNoise::Uniform { eps } if eps > 0.0 => rng.random_range(-eps..=eps),
            MeasurementNoise::Gaussian { sigma } if sigma > 0.0 => Normal::new(0.0, sigma).unwrap().sample(rng),
            _ => 0.0,
        }
    }
}

impl fmt::Display for MeasurementNoise {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeasurementNoise::Exact => write!(f, "exact"),
            MeasurementNoise::Uniform { eps } => write!(f, "uniform:{eps}"),
            MeasurementNoise::Gaussian { sigma } => write!(f, "gaussian:{sigma}"),
        }
    }
}

impl FromStr for MeasurementNoise {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, arg) = s.split_once(':').unwrap_or((s, ""));
        let value = || arg.parse::<f64>().map_err(|_| Error::Parse(format!("bad noise magnitude in {s:?}")));
        let noise = match kind {
            "exact" | "none" => MeasurementNoise::Exact,
            "uniform" => MeasurementNoise::Uniform { eps: value()? },
            "gaussian" => MeasurementNoise::Gaussian { sigma: value()? },
            _ => return Err(Error::Parse(format!("unknown measurement noise {s:?}"))),
        };
        noise.validate()?;
        Ok(noise)
    }
}

/// `⟨A(t)⟩_ρ` under `exp(-iHt)`, plus a draw from `noise`.
pub fn evolve_expectation<R: Rng + ?Sized>(
    h: &HamiltonianModel,
    rho: &StateModel,
    a: &PauliString,
    t: f64,
    noise: MeasurementNoise,
    rng: &mut R,
) -> Result<f64> {
    if rho.n() != h.n || a.n() != h.n {
        return Err(Error::SizeMismatch { left: h.n, right: rho.n().max(a.n()) });
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidParameter(format!("evolution time {t} must be positive")));
    }
    noise.validate()?;
    let spec = h.spectrum()?;
    let r = rho.to_dense()?.to_density();
    let before = r.expectation(a)?.re;
    let phases = spec.phase_factors(t);
    let shift = spec.shift(&spec.to_eigenbasis(r.matrix()), &spec.to_eigenbasis(&a.dense_matrix()?), &phases);
    Ok(before + shift + noise.sample(rng))
}

/// Product of single-qubit Pauli eigenstates, one `(letter, negative)` per site.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ProbeState(pub Vec<(Pauli1, bool)>);

impl ProbeState {
    pub fn zeros(n: usize) -> Self {
        ProbeState(vec![(Pauli1::Z, false); n])
    }

    pub fn n(&self) -> usize {
        self.0.len()
    }

    pub fn to_product(&self) -> ProductState {
        ProductState::new(self.0.iter().map(|&(l, neg)| Qubit::eigenstate(l, neg)).collect())
    }
}

impl fmt::Display for ProbeState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &(l, neg) in &self.0 {
            write!(f, "{}{}", if neg { '-' } else { '+' }, l.as_char())?;
        }
        Ok(())
    }
}

impl FromStr for ProbeState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let chars: Vec<char> = s.chars().collect();
        if chars.len() % 2 != 0 {
            return Err(Error::Parse(format!("probe {s:?} must be sign/letter pairs")));
        }
        chars
            .chunks(2)
            .map(|pair| {
                let neg = match pair[0] {
                    '+' => false,
                    '-' => true,
                    _ => return Err(Error::Parse(format!("bad sign in probe {s:?}"))),
                };
                match Pauli1::from_char(pair[1]) {
                    Some(l) if l != Pauli1::I => Ok((l, neg)),
                    _ => Err(Error::Parse(format!("bad letter in probe {s:?}"))),
                }
            })
            .collect::<Result<Vec<_>>>()
            .map(ProbeState)
    }
}

impl Serialize for ProbeState {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ProbeState {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// One measured pair `(A_i, ρ_j)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Setting {
    pub observable: PauliString,
    pub probe: ProbeState,
}

/// All 1- and 2-local observables (every letter pair on each site and
/// bond), each probed with all `6^m` eigenstate patterns on an `m`-site
/// window starting at the observable and `|0⟩` elsewhere.
pub fn local_design(n: usize, window: usize) -> Result<Vec<Setting>> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("chain needs n >= 2, got {n}")));
    }
    if window == 0 || window > n || window > 6 {
        return Err(Error::InvalidParameter(format!("window {window} must be in 1..={}", n.min(6))));
    }
    let mut out = Vec::new();
    for a in chain_basis(n, 2) {
        let support = a.support();
        let lo = support[0].min(n - window);
        let width = (support[support.len() - 1] + 1).max(lo + window) - lo;
        for code in 0..6usize.pow(width as u32) {
            let mut probe = ProbeState::zeros(n);
            let mut c = code;
            for q in lo..lo + width {
                probe.0[q] = (Pauli1::from_digit(c % 3 + 1), (c / 3) % 2 == 1);
                c /= 6;
            }
            out.push(Setting { observable: a.clone(), probe });
        }
    }
    Ok(out)
}

/// Stacked linear model `W = T h` for one evolution time.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintSystem {
    pub t: f64,
    pub basis: Vec<PauliString>,
    pub settings: Vec<Setting>,
    /// `settings.len() × basis.len()`.
    pub t_matrix: DMatrix<f64>,
    pub w: DVector<f64>,
}

/// `i tr(ρ [P, A])` on a product state, from Pauli algebra alone.
pub fn commutator_expectation(p: &PauliString, a: &PauliString, rho: &ProductState) -> Result<f64> {
    if p.commutes(a)? {
        return Ok(0.0);
    }
    // [P, A] = 2PA when they anticommute
    let v = C64::new(0.0, 2.0) * rho.expectation(&p.multiply(a)?)?;
    if v.im.abs() > 1e-12 {
        return Err(Error::Numerical(format!("i tr(rho [{p}, {a}]) has imaginary part {}", v.im)));
    }
    Ok(v.re)
}

/// Builds `T` for the given settings; `W` starts at zero.
pub fn assemble_constraints(basis: &[PauliString], settings: &[Setting], t: f64) -> Result<ConstraintSystem> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidParameter(format!("evolution time {t} must be positive")));
    }
    if basis.is_empty() || settings.is_empty() {
        return Err(Error::InvalidParameter("empty basis or settings".into()));
    }
    let n = basis[0].n();
    for s in settings {
        if s.observable.n() != n || s.probe.n() != n {
            return Err(Error::SizeMismatch { left: n, right: s.probe.n().max(s.observable.n()) });
        }
    }
    let rows: Vec<Vec<f64>> = settings
        .par_iter()
        .map(|s| {
            let prod = s.probe.to_product();
            basis.iter().map(|p| Ok(t * commutator_expectation(p, &s.observable, &prod)?)).collect()
        })
        .collect::<Result<_>>()?;
    let t_matrix = DMatrix::from_fn(settings.len(), basis.len(), |r, c| rows[r][c]);
    Ok(ConstraintSystem {
        t,
        basis: basis.to_vec(),
        settings: settings.to_vec(),
        t_matrix,
        w: DVector::zeros(settings.len()),
    })
}

impl ConstraintSystem {
    pub fn rows(&self) -> usize {
        self.settings.len()
    }

    /// Simulates every shift under `h`. Noise for row `r` comes from its
    /// own stream of `seed`.
    pub fn record(&mut self, h: &HamiltonianModel, noise: MeasurementNoise, seed: u64) -> Result<()> {
        self.w = DVector::from_vec(simulate_shifts(h, &self.settings, self.t, noise, seed)?);
        Ok(())
    }
}

/// `⟨A_i(t)⟩ - ⟨A_i⟩` for each setting, with additive noise.
pub fn simulate_shifts(
    h: &HamiltonianModel,
    settings: &[Setting],
    t: f64,
    noise: MeasurementNoise,
    seed: u64,
) -> Result<Vec<f64>> {
    noise.validate()?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidParameter(format!("evolution time {t} must be positive")));
    }
    let spec = h.spectrum()?;
    let phases = spec.phase_factors(t);
    let mut probes: Vec<&ProbeState> = settings.iter().map(|s| &s.probe).collect();
    let mut observables: Vec<&PauliString> = settings.iter().map(|s| &s.observable).collect();
    probes.sort_by_key(|p| p.to_string());
    probes.dedup();
    observables.sort_by_key(|p| p.to_string());
    observables.dedup();
    let rhos: HashMap<&ProbeState, DMatrix<C64>> = probes
        .par_iter()
        .map(|&p| {
            let psi = p.to_product().to_dense()?;
            let c = spec.vectors.adjoint() * DVector::from_column_slice(psi.amplitudes());
            Ok((p, &c * c.adjoint()))
        })
        .collect::<Result<_>>()?;
    let obs: HashMap<&PauliString, DMatrix<C64>> = observables
        .par_iter()
        .map(|&a| Ok((a, spec.to_eigenbasis(&a.dense_matrix()?))))
        .collect::<Result<_>>()?;
    Ok(settings
        .par_iter()
        .enumerate()
        .map(|(r, s)| {
            let shift = spec.shift(&rhos[&s.probe], &obs[&s.observable], &phases);
            let mut rng = stream_rng(seed, r as u64);
            shift + noise.sample(&mut rng)
        })
        .collect())
}

/// Moore-Penrose pseudoinverse of `T` via SVD, reusable across data vectors.
#[derive(Clone, Debug)]
pub struct PseudoInverse {
    pinv: DMatrix<f64>,
    rank: usize,
    sigma_max: f64,
    sigma_min_kept: f64,
}

impl PseudoInverse {
    pub fn new(t: &DMatrix<f64>) -> Result<Self> {
        let (q, r) = if t.nrows() > t.ncols() {
            let qr = t.clone().qr();
            (Some(qr.q()), qr.r())
        } else {
            (None, t.clone())
        };
        let svd = r.clone().svd(true, true);
        let sigma_max = svd.singular_values.max();
        let cutoff = SVD_CUTOFF * sigma_max;
        let rank = svd.singular_values.iter().filter(|&&s| s > cutoff).count();
        if rank == 0 {
            return Err(Error::RankDeficient { rank: 0, columns: t.ncols() });
        }
        let sigma_min_kept = svd.singular_values.iter().copied().filter(|&s| s > cutoff).fold(f64::INFINITY, f64::min);
        // nalgebra's singular vectors lose orthogonality on clustered
        // spectra, so full-rank systems go through the triangular factor
        let square_full_rank = q.is_some() && rank == t.ncols();
        let pinv = match (&q, square_full_rank) {
            (Some(q), true) => r
                .solve_upper_triangular(&q.transpose())
                .ok_or_else(|| Error::Numerical("singular triangular factor".into()))?,
            _ => {
                let p = svd.pseudo_inverse(cutoff).map_err(|e| Error::Numerical(e.to_string()))?;
                match q {
                    Some(q) => p * q.transpose(),
                    None => p,
                }
            }
        };
        Ok(PseudoInverse { pinv, rank, sigma_max, sigma_min_kept })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.pinv
    }

    /// `Σ_r |T⁺_{l,r}|²` for each coefficient `l`.
    pub fn scaling_factors(&self) -> Vec<f64> {
        self.pinv.row_iter().map(|r| r.norm_squared()).collect()
    }

    pub fn apply(&self, w: &DVector<f64>) -> DVector<f64> {
        &self.pinv * w
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnReport {
    pub t: f64,
    pub terms: Vec<PauliString>,
    pub estimate: Vec<f64>,
    pub rms_error: Option<f64>,
    pub scaling_factors: Vec<f64>,
    pub rank: usize,
    pub columns: usize,
    pub rows: usize,
    pub singular_cutoff: f64,
    pub sigma_max: f64,
    pub sigma_min_kept: f64,
    /// `‖T h̃ - W‖₂`.
    pub residual: f64,
    pub richardson: bool,
    pub warnings: Vec<String>,
}

impl LearnReport {
    pub fn mean_scaling_factor(&self) -> f64 {
        self.scaling_factors.iter().sum::<f64>() / self.scaling_factors.len() as f64
    }
}

fn base_report(system: &ConstraintSystem, pinv: &PseudoInverse, estimate: DVector<f64>) -> LearnReport {
    let residual = (&system.t_matrix * &estimate - &system.w).norm();
    let mut warnings = Vec::new();
    if pinv.rank < system.basis.len() {
        warnings.push(format!("rank-deficient system: rank {} of {} columns", pinv.rank, system.basis.len()));
    }
    LearnReport {
        t: system.t,
        terms: system.basis.clone(),
        estimate: estimate.iter().copied().collect(),
        rms_error: None,
        scaling_factors: pinv.scaling_factors(),
        rank: pinv.rank,
        columns: system.basis.len(),
        rows: system.rows(),
        singular_cutoff: SVD_CUTOFF * pinv.sigma_max,
        sigma_max: pinv.sigma_max,
        sigma_min_kept: pinv.sigma_min_kept,
        residual,
        richardson: false,
        warnings,
    }
}

/// `h̃ = T⁺ W`, compared against `truth` when given.
pub fn solve(system: &ConstraintSystem, truth: Option<&HamiltonianModel>) -> Result<LearnReport> {
    let pinv = PseudoInverse::new(&system.t_matrix)?;
    solve_with(system, &pinv, truth)
}

/// [`solve`] with a precomputed pseudoinverse of `system.t_matrix`.
pub fn solve_with(system: &ConstraintSystem, pinv: &PseudoInverse, truth: Option<&HamiltonianModel>) -> Result<LearnReport> {
    if pinv.pinv.ncols() != system.rows() || pinv.pinv.nrows() != system.basis.len() {
        return Err(Error::SizeMismatch { left: system.rows(), right: pinv.pinv.ncols() });
    }
    let mut report = base_report(system, pinv, pinv.apply(&system.w));
    if let Some(h) = truth {
        check_truth(h, &system.basis)?;
        report.rms_error = Some(h.rms_error(&report.estimate)?);
        if h.linearization_parameter(system.t) > LINEARIZATION_LIMIT {
            report.warnings.push(format!(
                "t Σ|h| = {:.3} exceeds {LINEARIZATION_LIMIT}; first-order model is unreliable",
                h.linearization_parameter(system.t)
            ));
        }
    }
    Ok(report)
}

fn check_truth(h: &HamiltonianModel, basis: &[PauliString]) -> Result<()> {
    if h.terms != basis {
        return Err(Error::InvalidParameter("ground-truth Hamiltonian uses a different basis".into()));
    }
    Ok(())
}

/// Two-point extrapolation `2 h̃(t/2) - h̃(t)`, cancelling the first-order
/// bias in `t`. Both systems must share basis and settings.
pub fn richardson(coarse: &LearnReport, fine: &LearnReport, truth: Option<&HamiltonianModel>) -> Result<LearnReport> {
    if coarse.terms != fine.terms || (fine.t * 2.0 - coarse.t).abs() > 1e-12 * coarse.t {
        return Err(Error::InvalidParameter("extrapolation needs the same basis at t and t/2".into()));
    }
    let mut out = fine.clone();
    out.estimate = fine.estimate.iter().zip(&coarse.estimate).map(|(f, c)| 2.0 * f - c).collect();
    // independent noise on both runs: Var = 4 Var_fine + Var_coarse
    out.scaling_factors = fine.scaling_factors.iter().zip(&coarse.scaling_factors).map(|(f, c)| 4.0 * f + c).collect();
    out.residual = (4.0 * fine.residual.powi(2) + coarse.residual.powi(2)).sqrt();
    out.richardson = true;
    out.rms_error = match truth {
        Some(h) => {
            check_truth(h, &out.terms)?;
            Some(h.rms_error(&out.estimate)?)
        }
        None => None,
    };
    Ok(out)
}

/// Least-squares `y ≈ c₀ + c₁x + c₂x²`.
pub fn quadratic_fit(xs: &[f64], ys: &[f64]) -> Result<[f64; 3]> {
    if xs.len() != ys.len() {
        return Err(Error::SizeMismatch { left: xs.len(), right: ys.len() });
    }
    if xs.len() < 3 {
        return Err(Error::InvalidParameter("quadratic fit needs at least three points".into()));
    }
    let v = DMatrix::from_fn(xs.len(), 3, |r, c| xs[r].powi(c as i32));
    let c = PseudoInverse::new(&v)?.apply(&DVector::from_column_slice(ys));
    Ok([c[0], c[1], c[2]])
}

/// Parameters of a repeated learning experiment on random chains.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnConfig {
    pub n: usize,
    pub k: usize,
    pub t: f64,
    pub noise: MeasurementNoise,
    pub window: usize,
    pub low: f64,
    pub high: f64,
    pub richardson: bool,
}

impl LearnConfig {
    pub fn new(n: usize, t: f64, noise: MeasurementNoise) -> Self {
        LearnConfig { n, k: 2, t, noise, window: 2, low: 0.8, high: 1.2, richardson: false }
    }
}

/// Prepared design for repeated trials; the pseudoinverse is shared.
#[derive(Clone, Debug)]
pub struct LearnExperiment {
    pub config: LearnConfig,
    system: ConstraintSystem,
    pinv: PseudoInverse,
    fine: Option<(ConstraintSystem, PseudoInverse)>,
}

impl LearnExperiment {
    pub fn new(config: LearnConfig) -> Result<Self> {
        config.noise.validate()?;
        check_dense(config.n, DEFAULT_DENSE_LIMIT)?;
        let basis = chain_basis(config.n, config.k);
        let settings = local_design(config.n, config.window)?;
        let system = assemble_constraints(&basis, &settings, config.t)?;
        let pinv = PseudoInverse::new(&system.t_matrix)?;
        let fine = if config.richardson {
            let s = assemble_constraints(&basis, &settings, config.t / 2.0)?;
            let p = PseudoInverse::new(&s.t_matrix)?;
            Some((s, p))
        } else {
            None
        };
        Ok(LearnExperiment { config, system, pinv, fine })
    }

    pub fn system(&self) -> &ConstraintSystem {
        &self.system
    }

    pub fn scaling_factors(&self) -> Vec<f64> {
        self.pinv.scaling_factors()
    }

    /// Trial `trial` of a run seeded with `seed`: draws a chain, simulates
    /// the shifts and solves.
    pub fn run_trial(&self, seed: u64, trial: u64) -> Result<(HamiltonianModel, LearnReport)> {
        let c = &self.config;
        let mut rng = stream_rng(sub_seed(seed, 1), trial);
        let h = random_local_hamiltonian(c.n, c.k, &mut rng, c.low, c.high)?;
        let noise_seed = sub_seed(sub_seed(seed, 2), trial);
        let mut sys = self.system.clone();
        sys.record(&h, c.noise, noise_seed)?;
        let coarse = solve_with(&sys, &self.pinv, Some(&h))?;
        let report = match &self.fine {
            None => coarse,
            Some((fine_sys, fine_pinv)) => {
                let mut fs = fine_sys.clone();
                fs.record(&h, c.noise, sub_seed(noise_seed, 3))?;
                let fine = solve_with(&fs, fine_pinv, Some(&h))?;
                richardson(&coarse, &fine, Some(&h))?
            }
        };
        Ok((h, report))
    }

    /// Trials `0..trials`, identical for any thread count.
    pub fn run(&self, seed: u64, trials: u64) -> Result<Vec<LearnReport>> {
        (0..trials).into_par_iter().map(|k| self.run_trial(seed, k).map(|(_, r)| r)).collect()
    }
}
