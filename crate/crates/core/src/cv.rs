//! Single-mode continuous-variable certification with Wigner functions.
//!
//! Convention: `W(α) = 2 tr(ρ D(α) Π D(α)†)`, so `|W| ≤ 2`,
//! `π⁻¹ ∫ W d²α = 1` and `F(ρ, σ) = π⁻¹ ∫ W_ρ W_σ d²α`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::C64;

/// Default relevance cutoff on `|W_ρ(α)|`.
pub const DEFAULT_CV_CUTOFF: f64 = 1e-3;

/// Largest value of `W²`, used as the rejection envelope.
pub const ENVELOPE: f64 = 4.0;

/// Pure superposition `Σ_j c_j |β_j⟩` of coherent states, normalized.
#[derive(Clone, Debug, PartialEq)]
pub struct CoherentSuperposition {
    terms: Vec<(C64, C64)>,
}

fn coherent_overlap(gamma: C64, delta: C64) -> C64 {
    // ⟨γ|δ⟩
    (-(gamma.norm_sqr() + delta.norm_sqr()) / 2.0 + gamma.conj() * delta).exp()
}

impl CoherentSuperposition {
    pub fn new(terms: Vec<(C64, C64)>) -> Result<Self> {
        let norm: C64 = terms
            .iter()
            .flat_map(|&(cj, bj)| terms.iter().map(move |&(ck, bk)| cj.conj() * ck * coherent_overlap(bj, bk)))
            .sum();
        if !(norm.re > 1e-300) {
            return Err(Error::InvalidState("coherent superposition has zero norm".into()));
        }
        let s = 1.0 / norm.re.sqrt();
        Ok(CoherentSuperposition { terms: terms.into_iter().map(|(c, b)| (c * s, b)).collect() })
    }

    pub fn terms(&self) -> &[(C64, C64)] {
        &self.terms
    }

    pub fn inner(&self, other: &Self) -> C64 {
        self.terms
            .iter()
            .flat_map(|&(cj, bj)| other.terms.iter().map(move |&(ck, bk)| cj.conj() * ck * coherent_overlap(bj, bk)))
            .sum()
    }

    fn wigner(&self, alpha: C64) -> f64 {
        // W_{|β⟩⟨γ|}(α) = 2 e^{α*β - αβ*} ⟨γ|2α - β⟩
        let mut acc = C64::new(0.0, 0.0);
        for &(cj, bj) in &self.terms {
            let phase = (alpha.conj() * bj - alpha * bj.conj()).exp();
            let shifted = alpha * 2.0 - bj;
            for &(ck, bk) in &self.terms {
                acc += cj * ck.conj() * phase * coherent_overlap(bk, shifted);
            }
        }
        2.0 * acc.re
    }

    fn fock_amplitudes(&self, m: usize) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); m];
        for &(c, b) in &self.terms {
            let mut amp = c * (-b.norm_sqr() / 2.0).exp();
            for (k, slot) in out.iter_mut().enumerate() {
                if k > 0 {
                    amp *= b / (k as f64).sqrt();
                }
                *slot += amp;
            }
        }
        out
    }
}

/// Density matrix in the Fock basis `|0⟩ … |M-1⟩`.
#[derive(Clone, Debug, PartialEq)]
pub struct FockState {
    rho: DMatrix<C64>,
}

impl FockState {
    pub fn new(rho: DMatrix<C64>) -> Result<Self> {
        if rho.nrows() != rho.ncols() || rho.nrows() == 0 {
            return Err(Error::InvalidState("Fock density matrix must be square".into()));
        }
        let tr = rho.trace();
        if (tr - C64::new(1.0, 0.0)).norm() > 1e-8 {
            return Err(Error::InvalidState(format!("Fock density matrix has trace {tr}")));
        }
        Ok(FockState { rho })
    }

    pub fn number(k: usize) -> Self {
        let mut rho = DMatrix::zeros(k + 1, k + 1);
        rho[(k, k)] = C64::new(1.0, 0.0);
        FockState { rho }
    }

    pub fn cutoff(&self) -> usize {
        self.rho.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.rho
    }

    pub fn purity(&self) -> f64 {
        (&self.rho * &self.rho).trace().re
    }

    /// Radius beyond which evaluation is refused; the Wigner function of
    /// any state within the cutoff is negligible well before it.
    pub fn validity_radius(&self) -> f64 {
        2.0 * (self.cutoff() as f64).sqrt() + 10.0
    }

    fn wigner(&self, alpha: C64) -> f64 {
        // W_{|m⟩⟨n|}(α) = 2(-1)^n √(n!/m!) (2α*)^{m-n} e^{-2|α|²} L_n^{(m-n)}(4|α|²), m ≥ n
        let m_dim = self.cutoff();
        let r2 = alpha.norm_sqr();
        let x = 4.0 * r2;
        let ln_fact: Vec<f64> = std::iter::once(0.0)
            .chain((1..m_dim).scan(0.0, |acc, k| {
                *acc += (k as f64).ln();
                Some(*acc)
            }))
            .collect();
        let unit = if r2 > 0.0 { alpha.conj() / alpha.norm() } else { C64::new(1.0, 0.0) };
        let ln_two_r = (2.0 * r2.sqrt()).ln();
        let mut total = 0.0;
        for k in 0..m_dim {
            if k > 0 && r2 == 0.0 {
                break;
            }
            // L_n^{(k)}(x) for n = 0 .. m_dim-k-1 by the three-term recurrence
            let kf = k as f64;
            let (mut l_prev, mut l_cur) = (0.0, 1.0);
            let phase = unit.powi(k as i32);
            for n in 0..m_dim - k {
                if n > 0 {
                    let nf = (n - 1) as f64;
                    let next = ((2.0 * nf + 1.0 + kf - x) * l_cur - (nf + kf) * l_prev) / (nf + 1.0);
                    l_prev = l_cur;
                    l_cur = next;
                }
                let m = n + k;
                let ln_pref = 0.5 * (ln_fact[n] - ln_fact[m]) - 2.0 * r2 + if k > 0 { kf * ln_two_r } else { 0.0 };
                let mag = 2.0 * ln_pref.exp() * l_cur * if n % 2 == 0 { 1.0 } else { -1.0 };
                let w_mn = phase * mag;
                if k == 0 {
                    total += (self.rho[(m, n)] * w_mn).re;
                } else {
                    // ρ_mn W_{|m⟩⟨n|} + ρ_nm conj(W_{|m⟩⟨n|})
                    total += 2.0 * (self.rho[(m, n)] * w_mn).re;
                }
            }
        }
        total
    }
}

/// A single-mode state.
#[derive(Clone, Debug, PartialEq)]
pub enum CvState {
    Coherent(C64),
    /// Even cat `∝ |α₀⟩ + |-α₀⟩`.
    Cat(C64),
    /// `(|α₀⟩⟨α₀| + |-α₀⟩⟨-α₀|)/2`.
    Mixture(C64),
    Fock(FockState),
}

/// Fock cutoff `⌈4|α₀|² + 25⌉` for truncating coherent-state families.
pub fn default_fock_cutoff(alpha0: C64) -> usize {
    (4.0 * alpha0.norm_sqr() + 25.0).ceil() as usize
}

impl CvState {
    /// Weighted pure components of the coherent-state families.
    fn components(&self) -> Result<Vec<(f64, CoherentSuperposition)>> {
        let one = C64::new(1.0, 0.0);
        Ok(match *self {
            CvState::Coherent(a) => vec![(1.0, CoherentSuperposition::new(vec![(one, a)])?)],
            CvState::Cat(a) => vec![(1.0, CoherentSuperposition::new(vec![(one, a), (one, -a)])?)],
            CvState::Mixture(a) => vec![
                (0.5, CoherentSuperposition::new(vec![(one, a)])?),
                (0.5, CoherentSuperposition::new(vec![(one, -a)])?),
            ],
            CvState::Fock(_) => return Err(Error::Unsupported("Fock state has no coherent components".into())),
        })
    }

    pub fn is_pure(&self) -> bool {
        match self {
            CvState::Mixture(a) => a.norm_sqr() == 0.0,
            CvState::Fock(f) => (f.purity() - 1.0).abs() < 1e-8,
            _ => true,
        }
    }

    /// Largest coherent amplitude, or the number-state scale for Fock states.
    pub fn extent(&self) -> f64 {
        match self {
            CvState::Coherent(a) | CvState::Cat(a) | CvState::Mixture(a) => a.norm(),
            CvState::Fock(f) => (f.cutoff() as f64).sqrt(),
        }
    }

    /// Truncated Fock representation with `m` levels.
    pub fn to_fock(&self, m: usize) -> Result<FockState> {
        if let CvState::Fock(f) = self {
            return Ok(f.clone());
        }
        let mut rho = DMatrix::zeros(m, m);
        for (w, comp) in self.components()? {
            let v = nalgebra::DVector::from_vec(comp.fock_amplitudes(m));
            rho += (&v * v.adjoint()) * C64::new(w, 0.0);
        }
        FockState::new(rho)
    }

    pub fn wigner(&self, alpha: C64) -> Result<f64> {
        if !(alpha.re.is_finite() && alpha.im.is_finite()) {
            return Err(Error::InvalidParameter("phase-space point must be finite".into()));
        }
        match self {
            CvState::Fock(f) => {
                if alpha.norm() > f.validity_radius() {
                    return Err(Error::InvalidParameter(format!(
                        "|α| = {} beyond the validity radius {} of a {}-level cutoff",
                        alpha.norm(),
                        f.validity_radius(),
                        f.cutoff()
                    )));
                }
                Ok(f.wigner(alpha))
            }
            _ => Ok(self.components()?.iter().map(|(w, c)| w * c.wigner(alpha)).sum()),
        }
    }
}

impl fmt::Display for CvState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let amp = |a: &C64| if a.im == 0.0 { format!("{}", a.re) } else { format!("{},{}", a.re, a.im) };
        match self {
            CvState::Coherent(a) => write!(f, "coherent:{}", amp(a)),
            CvState::Cat(a) => write!(f, "cat:{}", amp(a)),
            CvState::Mixture(a) => write!(f, "mixture:{}", amp(a)),
            CvState::Fock(s) => write!(f, "fock[{}]", s.cutoff()),
        }
    }
}

impl FromStr for CvState {
    type Err = Error;

    /// `coherent:a`, `cat:a`, `mixture:a` with `a` real or `re,im`;
    /// a trailing `:fock` switches to the truncated Fock representation;
    /// `fock:k` is the number state `|k⟩`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let mut parts = s.split(':');
        let kind = parts.next().unwrap_or_default();
        let arg = parts.next().ok_or_else(|| Error::Parse(format!("`{s}` needs an amplitude")))?;
        let truncated = match parts.next() {
            None => false,
            Some("fock") => true,
            Some(other) => return Err(Error::Parse(format!("unexpected `{other}` in `{s}`"))),
        };
        let bad = || Error::Parse(format!("bad amplitude in `{s}`"));
        if kind == "fock" {
            return Ok(CvState::Fock(FockState::number(arg.parse().map_err(|_| bad())?)));
        }
        let nums: Vec<f64> = arg.split(',').map(|v| v.trim().parse().map_err(|_| bad())).collect::<Result<_>>()?;
        let a = match nums.as_slice() {
            [re] => C64::new(*re, 0.0),
            [re, im] => C64::new(*re, *im),
            _ => return Err(bad()),
        };
        let state = match kind {
            "coherent" => CvState::Coherent(a),
            "cat" => CvState::Cat(a),
            "mixture" | "mix" => CvState::Mixture(a),
            _ => return Err(Error::Parse(format!("unknown CV state `{kind}`"))),
        };
        if truncated {
            return Ok(CvState::Fock(state.to_fock(default_fock_cutoff(a))?));
        }
        Ok(state)
    }
}

/// `tr(ρσ)`, from coherent-state overlaps when possible and Fock matrices
/// otherwise.
pub fn exact_fidelity(rho: &CvState, sigma: &CvState) -> Result<f64> {
    match (rho, sigma) {
        (CvState::Fock(_), _) | (_, CvState::Fock(_)) => {
            let m = [rho, sigma]
                .iter()
                .map(|s| match s {
                    CvState::Fock(f) => f.cutoff(),
                    other => default_fock_cutoff(C64::new(other.extent(), 0.0)),
                })
                .max()
                .unwrap_or(1);
            let pad = |f: FockState| {
                let k = f.cutoff();
                let mut big = DMatrix::zeros(m, m);
                big.view_mut((0, 0), (k, k)).copy_from(f.matrix());
                big
            };
            let a = pad(rho.to_fock(m)?);
            let b = pad(sigma.to_fock(m)?);
            Ok((a * b).trace().re)
        }
        _ => {
            let mut total = 0.0;
            for (wa, a) in rho.components()? {
                for (wb, b) in sigma.components()? {
                    total += wa * wb * a.inner(&b).norm_sqr();
                }
            }
            Ok(total)
        }
    }
}

/// Square sampling region `[-L, L]²` with `L = extent + 4`.
pub fn sampling_half_width(state: &CvState) -> f64 {
    state.extent() + 4.0
}

/// One draw from `p(α) = W_ρ(α)²/π` restricted to the box, by uniform
/// proposals and the envelope `W² ≤ 4`. Returns the point, `W_ρ` there and
/// the number of proposals used.
pub fn sample_relevance_cv<R: Rng + ?Sized>(
    state: &CvState,
    half_width: f64,
    max_proposals: usize,
    rng: &mut R,
) -> Result<(C64, f64, usize)> {
    if !(half_width > 0.0) {
        return Err(Error::InvalidParameter("box half-width must be positive".into()));
    }
    for tries in 1..=max_proposals {
        let alpha = C64::new(rng.random_range(-half_width..half_width), rng.random_range(-half_width..half_width));
        let w = state.wigner(alpha)?;
        if w * w > ENVELOPE * (1.0 + 1e-9) {
            return Err(Error::Sampling(format!("|W({alpha})| = {} exceeds the envelope", w.abs())));
        }
        if rng.random::<f64>() * ENVELOPE < w * w {
            return Ok((alpha, w, tries));
        }
    }
    Err(Error::Sampling(format!("no acceptance in {max_proposals} proposals")))
}

/// Displaced-parity estimate `2·mean(±1)` of `W_σ(α)` from `shots`
/// outcomes with `Pr(+1) = (1 + W/2)/2`.
pub fn parity_shots<R: Rng + ?Sized>(w_sigma: f64, shots: u64, rng: &mut R) -> Result<f64> {
    if shots == 0 {
        return Err(Error::InvalidParameter("need at least one parity shot".into()));
    }
    let pr = ((1.0 + w_sigma / 2.0) / 2.0).clamp(0.0, 1.0);
    let plus = Binomial::new(shots, pr).map_err(|e| Error::Numerical(e.to_string()))?.sample(rng);
    Ok(2.0 * (2.0 * plus as f64 - shots as f64) / shots as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvOptions {
    pub n_points: usize,
    /// Parity shots per point; zero uses the exact `W_σ`.
    pub shots_per_point: u64,
    pub cutoff: f64,
    pub max_proposals: usize,
}

impl Default for CvOptions {
    fn default() -> Self {
        CvOptions { n_points: 1000, shots_per_point: 200, cutoff: DEFAULT_CV_CUTOFF, max_proposals: 1_000_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvPoint {
    pub k: usize,
    pub re: f64,
    pub im: f64,
    pub w_rho: f64,
    pub w_sigma: f64,
    pub ratio: f64,
    /// Accepted draws discarded for `|W_ρ|` below the cutoff.
    pub below_cutoff: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub estimate: f64,
    pub exact: Option<f64>,
    pub options: CvOptions,
    pub seed: u64,
    pub half_width: f64,
    pub truncation_bound: f64,
    pub proposals: usize,
    pub points: Vec<CvPoint>,
}

impl CvReport {
    /// Mean of the first `k` ratios for every `k`.
    pub fn running_estimates(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                acc += p.ratio;
                acc / (i + 1) as f64
            })
            .collect()
    }
}

/// Monte Carlo estimate of `π⁻¹ ∫ W_ρ W_σ` as the mean of `W̃_σ/W_ρ` over
/// points drawn from `W_ρ²/π`.
pub fn estimate_fidelity_cv(rho: &CvState, sigma: &CvState, options: &CvOptions, seed: u64) -> Result<CvReport> {
    if !rho.is_pure() {
        return Err(Error::Unsupported("CV target must be pure".into()));
    }
    if options.n_points == 0 || !(options.cutoff >= 0.0 && options.cutoff < 2.0) {
        return Err(Error::InvalidParameter("need n_points ≥ 1 and a cutoff in [0, 2)".into()));
    }
    let half = sampling_half_width(rho);
    let rows = (0..options.n_points)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream_rng(seed, k as u64);
            let mut below = 0;
            let mut proposals = 0;
            loop {
                let (alpha, w_rho, tries) = sample_relevance_cv(rho, half, options.max_proposals, &mut rng)?;
                proposals += tries;
                if w_rho.abs() < options.cutoff {
                    below += 1;
                    if below > options.max_proposals {
                        return Err(Error::Sampling("every draw fell below the cutoff".into()));
                    }
                    continue;
                }
                let exact = sigma.wigner(alpha)?;
                let w_sigma = match options.shots_per_point {
                    0 => exact,
                    m => parity_shots(exact, m, &mut rng)?,
                };
                let point = CvPoint { k, re: alpha.re, im: alpha.im, w_rho, w_sigma, ratio: w_sigma / w_rho, below_cutoff: below };
                return Ok((point, proposals));
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let proposals = rows.iter().map(|r| r.1).sum();
    let points: Vec<CvPoint> = rows.into_iter().map(|r| r.0).collect();
    let estimate = points.iter().map(|p| p.ratio).sum::<f64>() / points.len() as f64;
    Ok(CvReport {
        estimate,
        exact: exact_fidelity(rho, sigma).ok(),
        options: *options,
        seed,
        half_width: half,
        truncation_bound: cv_truncation_error(rho, options.cutoff)?,
        proposals,
        points,
    })
}

/// Midpoint rule on `[-L, L]²`, doubling the grid until two successive
/// estimates differ by at most `abs_tol + rel_tol·|I|`. Returns the last
/// estimate and that difference.
pub fn integrate_plane<F: Fn(C64) -> f64 + Sync>(f: F, half_width: f64, abs_tol: f64, rel_tol: f64) -> Result<(f64, f64)> {
    let eval = |n: usize| -> f64 {
        let h = 2.0 * half_width / n as f64;
        let rows: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|i| {
                let x = -half_width + (i as f64 + 0.5) * h;
                (0..n).map(|j| f(C64::new(x, -half_width + (j as f64 + 0.5) * h))).sum::<f64>()
            })
            .collect();
        rows.iter().sum::<f64>() * h * h
    };
    let mut n = 128;
    let mut prev = eval(n);
    while n < 2048 {
        n *= 2;
        let cur = eval(n);
        let diff = (cur - prev).abs();
        if diff <= abs_tol + rel_tol * cur.abs() {
            return Ok((cur, diff));
        }
        prev = cur;
    }
    Err(Error::Numerical(format!("plane quadrature did not converge (last {prev})")))
}

/// Bound `√(π⁻¹ ∫_I W_ρ²)` on the fidelity bias from ignoring the region
/// `I = {|W_ρ| < c}`, by Cauchy-Schwarz with `π⁻¹ ∫ W_σ² ≤ 1`.
pub fn cv_truncation_error(rho: &CvState, c: f64) -> Result<f64> {
    if !(c >= 0.0) {
        return Err(Error::InvalidParameter("cutoff must be nonnegative".into()));
    }
    if c == 0.0 {
        return Ok(0.0);
    }
    let half = rho.extent() + 6.0;
    let (integral, err) = integrate_plane(
        |a| {
            let w = rho.wigner(a).unwrap_or(0.0);
            if w.abs() < c {
                w * w
            } else {
                0.0
            }
        },
        half,
        1e-6,
        2e-2,
    )?;
    // the indicator makes the integrand discontinuous; keep the bound
    // conservative by adding the last refinement step
    Ok(((integral + err).max(0.0) / PI).sqrt())
}

/// Least-squares slope of `log(error)` against `log N`, where the error at
/// `N` is the root mean square over runs of `|running estimate - exact|`.
pub fn error_decay_slope(runs: &[Vec<f64>], exact: f64, n_min: usize, n_max: usize, grid: usize) -> Result<f64> {
    if runs.is_empty() || n_min == 0 || n_max <= n_min || grid < 2 {
        return Err(Error::InvalidParameter("bad error-decay fit range".into()));
    }
    if runs.iter().any(|r| r.len() < n_max) {
        return Err(Error::InvalidParameter(format!("runs shorter than N = {n_max}")));
    }
    let (lo, hi) = ((n_min as f64).ln(), (n_max as f64).ln());
    let mut ns: Vec<usize> = (0..grid)
        .map(|g| (lo + (hi - lo) * g as f64 / (grid - 1) as f64).exp().round() as usize)
        .collect();
    ns.dedup();
    let pts: Vec<(f64, f64)> = ns
        .iter()
        .map(|&n| {
            let ms = runs.iter().map(|r| (r[n - 1] - exact).powi(2)).sum::<f64>() / runs.len() as f64;
            ((n as f64).ln(), 0.5 * ms.max(1e-300).ln())
        })
        .collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(sxy / sxx)
}
