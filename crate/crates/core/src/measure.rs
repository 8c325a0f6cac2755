//! Simulated laboratory: a noisy experimental state σ and finite-shot
//! estimates of its Pauli expectations.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::dense::{conjugate_by_pauli, DensityMatrix};
use crate::error::{Error, Result};
use crate::pauli::{Pauli1, PauliString};
use crate::state::StateModel;
use crate::C64;

/// Largest per-setting shot count a budget may ask for.
pub const MAX_SHOTS_PER_SETTING: u64 = 1 << 40;

/// Noise applied to the ideal state to obtain the experimental one.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum NoiseSpec {
    #[default]
    None,
    /// `σ = (1-p)ρ + p I/d`.
    GlobalDepolarizing(f64),
    /// Single-qubit depolarizing with probability `p` on every qubit.
    LocalDepolarizing(f64),
    /// Every qubit loses a fraction `p` of its coherences.
    Dephasing(f64),
    /// `e^{-iθZ/2}` on every qubit.
    CoherentOverrotation(f64),
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseSpec::None => Ok(()),
            NoiseSpec::GlobalDepolarizing(p) | NoiseSpec::LocalDepolarizing(p) | NoiseSpec::Dephasing(p) => {
                if (0.0..=1.0).contains(&p) {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter(format!("noise probability {p} outside [0, 1]")))
                }
            }
            NoiseSpec::CoherentOverrotation(theta) => {
                if theta.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter("overrotation angle must be finite".into()))
                }
            }
        }
    }

    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        self.validate()?;
        Ok(DensityMatrix::from_matrix_unchecked(self.apply_matrix(rho.matrix(), rho.n())))
    }

    /// The noise map extended linearly to arbitrary `2^n × 2^n` operators.
    pub fn apply_matrix(&self, m: &DMatrix<C64>, n: usize) -> DMatrix<C64> {
        let d = m.nrows();
        match *self {
            NoiseSpec::None => m.clone(),
            NoiseSpec::GlobalDepolarizing(p) => {
                let tr = m.trace();
                m * C64::new(1.0 - p, 0.0) + DMatrix::identity(d, d) * (tr * (p / d as f64))
            }
            NoiseSpec::LocalDepolarizing(p) => {
                let mut cur = m.clone();
                for q in 0..n {
                    let mut acc = &cur * C64::new(1.0 - 0.75 * p, 0.0);
                    for l in [Pauli1::X, Pauli1::Y, Pauli1::Z] {
                        acc += conjugate_by_pauli(&cur, &PauliString::single(n, q, l)) * C64::new(p / 4.0, 0.0);
                    }
                    cur = acc;
                }
                cur
            }
            NoiseSpec::Dephasing(p) => {
                // coherence (r, c) shrinks by (1-p) per qubit where r and c differ
                DMatrix::from_fn(d, d, |r, c| m[(r, c)] * (1.0 - p).powi((r ^ c).count_ones() as i32))
            }
            NoiseSpec::CoherentOverrotation(theta) => {
                // diagonal unitary: phase e^{-iθ/2 Σ_q z_q}, z_q = ±1
                let phase = |b: usize| {
                    let zsum = n as f64 - 2.0 * b.count_ones() as f64;
                    C64::from_polar(1.0, -theta / 2.0 * zsum)
                };
                DMatrix::from_fn(d, d, |r, c| m[(r, c)] * phase(r) * phase(c).conj())
            }
        }
    }
}

impl fmt::Display for NoiseSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseSpec::None => write!(f, "none"),
            NoiseSpec::GlobalDepolarizing(p) => write!(f, "depolarizing:{p}"),
            NoiseSpec::LocalDepolarizing(p) => write!(f, "local-depolarizing:{p}"),
            NoiseSpec::Dephasing(p) => write!(f, "dephasing:{p}"),
            NoiseSpec::CoherentOverrotation(t) => write!(f, "overrotation:{t}"),
        }
    }
}

impl FromStr for NoiseSpec {
    type Err = Error;

    /// `none`, `depolarizing:p` (alias `global-depolarizing:p`),
    /// `local-depolarizing:p`, `dephasing:p`, `overrotation:θ`
    /// (alias `coherent-overrotation:θ`).
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("none") {
            return Ok(NoiseSpec::None);
        }
        let (kind, arg) = s
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("noise `{s}` should look like kind:value")))?;
        let v: f64 = arg.trim().parse().map_err(|_| Error::Parse(format!("bad noise parameter `{arg}`")))?;
        let spec = match kind.trim().to_ascii_lowercase().as_str() {
            "depolarizing" | "global-depolarizing" => NoiseSpec::GlobalDepolarizing(v),
            "local-depolarizing" => NoiseSpec::LocalDepolarizing(v),
            "dephasing" => NoiseSpec::Dephasing(v),
            "overrotation" | "coherent-overrotation" => NoiseSpec::CoherentOverrotation(v),
            other => return Err(Error::Parse(format!("unknown noise kind `{other}`"))),
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl Serialize for NoiseSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for NoiseSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Noisy experimental state obtained from the ideal target.
pub fn prepare_sigma(rho: &StateModel, noise: &NoiseSpec) -> Result<DensityMatrix> {
    noise.apply(&rho.to_dense()?.to_density())
}

/// ±1 outcome counts from repeated measurement of one Pauli observable.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotRecord {
    pub pauli: PauliString,
    pub plus: u64,
    pub minus: u64,
    pub n_shots: u64,
}

impl ShotRecord {
    pub fn new(pauli: PauliString, plus: u64, n_shots: u64) -> Self {
        ShotRecord { pauli, plus, minus: n_shots - plus, n_shots }
    }

    /// Empirical mean of the ±1 outcomes.
    pub fn mean(&self) -> f64 {
        (self.plus as f64 - self.minus as f64) / self.n_shots as f64
    }
}

/// Draws `n_shots` i.i.d. outcomes with `Pr(+1) = (1 + e)/2`.
pub fn sample_outcomes<R: Rng + ?Sized>(pauli: PauliString, e: f64, n_shots: u64, rng: &mut R) -> Result<ShotRecord> {
    if n_shots == 0 {
        return Err(Error::InvalidParameter("n_shots must be at least 1".into()));
    }
    let pr = ((1.0 + e) / 2.0).clamp(0.0, 1.0);
    let plus = Binomial::new(n_shots, pr).map_err(|e| Error::Numerical(e.to_string()))?.sample(rng);
    Ok(ShotRecord::new(pauli, plus, n_shots))
}

/// Source of experimental Pauli expectations.
pub trait ExpectationBackend: Sync {
    fn n(&self) -> usize;

    /// Exact `tr(σ P)` for Hermitian `P`.
    fn exact_expectation(&self, p: &PauliString) -> Result<f64>;

    fn measure<R: Rng + ?Sized>(&self, p: &PauliString, n_shots: u64, rng: &mut R) -> Result<ShotRecord> {
        let e = self.exact_expectation(p)?;
        sample_outcomes(p.clone(), e, n_shots, rng)
    }
}

impl ExpectationBackend for DensityMatrix {
    fn n(&self) -> usize {
        DensityMatrix::n(self)
    }

    fn exact_expectation(&self, p: &PauliString) -> Result<f64> {
        if !p.is_hermitian() {
            return Err(Error::NonHermitian(p.to_string()));
        }
        Ok(self.expectation(p)?.re)
    }
}

impl ExpectationBackend for StateModel {
    fn n(&self) -> usize {
        StateModel::n(self)
    }

    fn exact_expectation(&self, p: &PauliString) -> Result<f64> {
        self.expectation(p)
    }
}

pub fn measure_pauli<R: Rng + ?Sized>(
    sigma: &DensityMatrix,
    p: &PauliString,
    n_shots: u64,
    rng: &mut R,
) -> Result<ShotRecord> {
    sigma.measure(p, n_shots, rng)
}

/// `N₂ = ⌈2 ln(2/δ₂) / (N₁ ε₂² ρ_i²)⌉`, at least one shot.
pub fn shot_budget(rho_i: f64, n1: usize, eps2: f64, delta2: f64) -> Result<u64> {
    if rho_i == 0.0 || !rho_i.is_finite() {
        return Err(Error::InvalidParameter("shot budget needs a nonzero ρ_i".into()));
    }
    if n1 == 0 || !(eps2 > 0.0) || !(delta2 > 0.0 && delta2 < 1.0) {
        return Err(Error::InvalidParameter(format!("bad budget inputs N1={n1}, eps2={eps2}, delta2={delta2}")));
    }
    let shots = (2.0 * (2.0 / delta2).ln() / (n1 as f64 * eps2 * eps2 * rho_i * rho_i)).ceil();
    if !(shots <= MAX_SHOTS_PER_SETTING as f64) {
        return Err(Error::BudgetInfeasible(format!("{shots:e} shots requested for ρ_i = {rho_i:e}")));
    }
    Ok((shots as u64).max(1))
}

/// How shots are distributed over the drawn settings.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode", content = "shots")]
pub enum ShotAllocation {
    /// Per-draw `N₂ ∝ 1/ρ_i²` from [`shot_budget`].
    #[default]
    InverseSquare,
    /// The same number of shots for every setting.
    Uniform(u64),
    /// No shot noise: the exact `σ_i` is used.
    Exact,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{make_ghz, make_product};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn depolarized_ghz_fidelity() {
        let ghz = make_ghz(3).unwrap();
        let psi = ghz.to_dense_pure().unwrap();
        for (p, want) in [(0.2, 0.825), (0.0, 1.0), (1.0, 0.125)] {
            let sigma = prepare_sigma(&ghz, &NoiseSpec::GlobalDepolarizing(p)).unwrap();
            assert!((sigma.fidelity_with_pure(&psi).unwrap() - want).abs() < 1e-12);
        }
    }

    #[test]
    fn noise_channels_give_valid_states() {
        let ghz = make_ghz(3).unwrap();
        for spec in ["none", "local-depolarizing:0.3", "dephasing:0.4", "overrotation:0.7", "depolarizing:1"] {
            let noise: NoiseSpec = spec.parse().unwrap();
            let sigma = prepare_sigma(&ghz, &noise).unwrap();
            sigma.validate(true).unwrap();
            assert_eq!(noise.to_string().parse::<NoiseSpec>().unwrap(), noise);
        }
        assert!("depolarizing:1.5".parse::<NoiseSpec>().is_err());
        assert!("wobble:0.1".parse::<NoiseSpec>().is_err());
    }

    #[test]
    fn local_channels_match_single_qubit_formulas() {
        let plus = make_product(&["+"]).unwrap();
        let x: PauliString = "X".parse().unwrap();
        let dep = prepare_sigma(&plus, &NoiseSpec::LocalDepolarizing(0.4)).unwrap();
        assert!((dep.expectation(&x).unwrap().re - 0.6).abs() < 1e-12);
        let deph = prepare_sigma(&plus, &NoiseSpec::Dephasing(0.4)).unwrap();
        assert!((deph.expectation(&x).unwrap().re - 0.6).abs() < 1e-12);
        let rot = prepare_sigma(&plus, &NoiseSpec::CoherentOverrotation(0.3)).unwrap();
        assert!((rot.expectation(&x).unwrap().re - 0.3f64.cos()).abs() < 1e-12);
        let y: PauliString = "Y".parse().unwrap();
        assert!((rot.expectation(&y).unwrap().re - 0.3f64.sin()).abs() < 1e-12);
    }

    #[test]
    fn deterministic_outcomes() {
        let zero = prepare_sigma(&make_product(&["0", "0"]).unwrap(), &NoiseSpec::None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = measure_pauli(&zero, &"ZI".parse().unwrap(), 500, &mut rng).unwrap();
        assert_eq!((r.plus, r.minus), (500, 0));
        assert!(measure_pauli(&zero, &"iZI".parse().unwrap(), 5, &mut rng).is_err());
        assert!(measure_pauli(&zero, &"ZI".parse().unwrap(), 0, &mut rng).is_err());
    }

    #[test]
    fn standard_error_matches_binomial() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p: PauliString = "Z".parse().unwrap();
        let n = 10_000;
        let means: Vec<f64> = (0..1000).map(|_| sample_outcomes(p.clone(), 0.5, n, &mut rng).unwrap().mean()).collect();
        let avg = means.iter().sum::<f64>() / means.len() as f64;
        let sd = (means.iter().map(|m| (m - avg).powi(2)).sum::<f64>() / (means.len() - 1) as f64).sqrt();
        let want = ((1.0 - 0.25) / n as f64).sqrt();
        assert!((sd / want - 1.0).abs() < 0.1, "{sd} vs {want}");
        assert!((avg - 0.5).abs() < 4.0 * want / (means.len() as f64).sqrt());
    }

    #[test]
    fn shot_budget_arithmetic() {
        assert_eq!(shot_budget(1.0, 100, 0.05, 0.05).unwrap(), 30);
        assert_eq!(shot_budget(-1.0, 100, 0.05, 0.05).unwrap(), 30);
        let a = shot_budget(0.5, 10, 0.01, 0.05).unwrap();
        let b = shot_budget(0.25, 10, 0.01, 0.05).unwrap();
        assert!((b as f64 / a as f64 - 4.0).abs() < 1e-3);
        assert!(shot_budget(0.0, 10, 0.1, 0.1).is_err());
        assert!(matches!(shot_budget(1e-9, 1, 1e-3, 0.01), Err(Error::BudgetInfeasible(_))));
    }
}
