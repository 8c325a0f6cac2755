//! Monte Carlo fidelity estimation `F̄ = N₁⁻¹ Σ_k σ̃_{i_k} / ρ_{i_k}` with the
//! Chebyshev + Hoeffding error budget.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{shot_budget, ExpectationBackend, ShotAllocation};
use crate::pauli::PauliString;
use crate::rng::stream_rng;
use crate::sampler::{DenseWeightTable, RelevanceSampler, SamplerStrategy, TruncationPolicy};
use crate::state::StateModel;

/// Accuracy split `ε = ε₁ + ε₂` and failure probability `δ`, split evenly
/// between the sampling and the shot-noise terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBudget {
    pub eps1: f64,
    pub eps2: f64,
    pub delta: f64,
    pub n1: usize,
    #[serde(default)]
    pub allocation: ShotAllocation,
}

impl ErrorBudget {
    pub fn new(eps1: f64, eps2: f64, delta: f64, n1: usize, allocation: ShotAllocation) -> Result<Self> {
        if !(eps1 > 0.0 && eps2 > 0.0) || !eps1.is_finite() || !eps2.is_finite() {
            return Err(Error::InvalidParameter(format!("eps1={eps1}, eps2={eps2} must be positive")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidParameter(format!("delta={delta} must lie in (0, 1)")));
        }
        if n1 == 0 {
            return Err(Error::InvalidParameter("N1 must be at least 1".into()));
        }
        if allocation == ShotAllocation::Uniform(0) {
            return Err(Error::InvalidParameter("uniform allocation needs at least one shot".into()));
        }
        Ok(ErrorBudget { eps1, eps2, delta, n1, allocation })
    }

    pub fn eps(&self) -> f64 {
        self.eps1 + self.eps2
    }

    pub fn delta1(&self) -> f64 {
        self.delta / 2.0
    }

    pub fn delta2(&self) -> f64 {
        self.delta / 2.0
    }

    /// Shots for a setting with target expectation `rho_i`; `None` means the
    /// exact value is used.
    pub fn shots_for(&self, rho_i: f64) -> Result<Option<u64>> {
        match self.allocation {
            ShotAllocation::InverseSquare => shot_budget(rho_i, self.n1, self.eps2, self.delta2()).map(Some),
            ShotAllocation::Uniform(k) => Ok(Some(k)),
            ShotAllocation::Exact => Ok(None),
        }
    }
}

/// `1/(N₁ ε₁²)`, not clipped to 1.
pub fn chebyshev_bound(n1: usize, eps1: f64) -> f64 {
    1.0 / (n1 as f64 * eps1 * eps1)
}

/// `2 exp(-ε₂² N₁² / (2 Σ_k 1/(ρ_k² N₂^[k])))` over `(ρ_k, N₂^[k])` pairs,
/// with `N₁` the number of pairs.
pub fn hoeffding_bound(samples: &[(f64, u64)], eps2: f64) -> f64 {
    let n1 = samples.len() as f64;
    let s: f64 = samples.iter().map(|&(r, n2)| 1.0 / (r * r * n2 as f64)).sum();
    2.0 * (-(eps2 * eps2 * n1 * n1 / 2.0) / s).exp()
}

/// `ε₁ = ε₂ = ε/2`, `N₁ = ⌈2/(δ ε₁²)⌉` so that each failure term is at most
/// `δ/2`. The target only matters for the shot rule that follows.
pub fn plan_budget(_rho: &StateModel, eps: f64, delta: f64) -> Result<ErrorBudget> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidParameter(format!("eps={eps} must be positive")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!("delta={delta} must lie in (0, 1)")));
    }
    let e1 = eps / 2.0;
    let n1 = (2.0 / (delta * e1 * e1)).ceil();
    if n1 > 1e9 {
        return Err(Error::BudgetInfeasible(format!("N1 = {n1:e} settings")));
    }
    ErrorBudget::new(e1, e1, delta, n1 as usize, ShotAllocation::InverseSquare)
}

/// Worst-case per-setting shots for a target whose smallest nonzero `|ρ_i|`
/// is `min_abs_rho`.
pub fn worst_case_shots(budget: &ErrorBudget, min_abs_rho: f64) -> Result<u64> {
    shot_budget(min_abs_rho, budget.n1, budget.eps2, budget.delta2())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub k: usize,
    pub pauli: PauliString,
    pub rho: f64,
    /// Zero when the exact experimental value was used.
    pub n_shots: u64,
    pub plus: u64,
    pub sigma_estimate: f64,
    pub ratio: f64,
    /// Draws discarded by truncation before this one was kept.
    pub rejected: usize,
}

/// Choi-state and average-fidelity view of a process certification.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProcessSummary {
    pub protocol: String,
    pub d: usize,
    pub choi_fidelity: f64,
    pub average_fidelity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    /// Unclipped; may fall outside [0, 1].
    pub estimate: f64,
    pub budget: ErrorBudget,
    pub seed: u64,
    pub sampler: SamplerStrategy,
    pub total_shots: u64,
    pub chebyshev_bound: f64,
    /// From realized draws; `None` with exact experimental values.
    pub hoeffding_bound: Option<f64>,
    pub truncation: Option<TruncationPolicy>,
    pub truncation_bias_bound: f64,
    pub rejected_draws: usize,
    pub process: Option<ProcessSummary>,
    pub samples: Vec<SampleRecord>,
}

impl FidelityReport {
    /// Union bound on `|F - F̄| > ε`, excluding truncation bias.
    pub fn failure_bound(&self) -> f64 {
        (self.chebyshev_bound + self.hoeffding_bound.unwrap_or(0.0)).min(1.0)
    }

    pub(crate) fn assemble(
        budget: &ErrorBudget,
        seed: u64,
        sampler: SamplerStrategy,
        truncation: Option<TruncationPolicy>,
        n: usize,
        samples: Vec<SampleRecord>,
    ) -> Self {
        let estimate = samples.iter().map(|s| s.ratio).sum::<f64>() / samples.len() as f64;
        let exact = samples.iter().all(|s| s.n_shots == 0);
        let hoeffding = (!exact).then(|| {
            let pairs: Vec<_> = samples.iter().map(|s| (s.rho, s.n_shots)).collect();
            hoeffding_bound(&pairs, budget.eps2)
        });
        FidelityReport {
            estimate,
            budget: *budget,
            seed,
            sampler,
            total_shots: samples.iter().map(|s| s.n_shots).sum(),
            chebyshev_bound: chebyshev_bound(budget.n1, budget.eps1),
            hoeffding_bound: hoeffding,
            truncation,
            truncation_bias_bound: truncation.map_or(0.0, |t| t.bias_bound(n)),
            rejected_draws: samples.iter().map(|s| s.rejected).sum(),
            process: None,
            samples,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorOptions {
    pub strategy: SamplerStrategy,
    pub truncation: Option<TruncationPolicy>,
    /// Consecutive truncated draws tolerated before giving up.
    pub max_rejections: usize,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        EstimatorOptions { strategy: SamplerStrategy::Auto, truncation: None, max_rejections: 100_000 }
    }
}

/// Measures one drawn setting, returning `(n_shots, plus, σ̃_i)`.
pub(crate) fn measure_setting<B: ExpectationBackend, R: Rng + ?Sized>(
    sigma: &B,
    pauli: &PauliString,
    shots: Option<u64>,
    rng: &mut R,
) -> Result<(u64, u64, f64)> {
    match shots {
        None => Ok((0, 0, sigma.exact_expectation(pauli)?)),
        Some(k) => {
            let rec = sigma.measure(pauli, k, rng)?;
            Ok((rec.n_shots, rec.plus, rec.mean()))
        }
    }
}

/// Runs the estimator with a prepared sampler. Sample `k` uses its own
/// random stream, so the report does not depend on the thread count.
pub fn estimate_with_sampler<B: ExpectationBackend>(
    sampler: &RelevanceSampler,
    sigma: &B,
    budget: &ErrorBudget,
    options: &EstimatorOptions,
    seed: u64,
) -> Result<FidelityReport> {
    let n = sampler.state().n();
    if sigma.n() != n {
        return Err(Error::SizeMismatch { left: n, right: sigma.n() });
    }
    if !sampler.state().is_pure() {
        return Err(Error::Unsupported("fidelity estimation needs a pure target".into()));
    }
    let samples = (0..budget.n1)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream_rng(seed, k as u64);
            let (s, rejected) = match &options.truncation {
                Some(t) => sampler.draw_truncated(t, options.max_rejections, &mut rng)?,
                None => (sampler.draw(&mut rng)?, 0),
            };
            let shots = budget.shots_for(s.rho)?;
            let (n_shots, plus, sigma_estimate) = measure_setting(sigma, &s.pauli, shots, &mut rng)?;
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
    Ok(FidelityReport::assemble(budget, seed, sampler.strategy(), options.truncation, n, samples))
}

pub fn estimate_fidelity<B: ExpectationBackend>(
    rho: &StateModel,
    sigma: &B,
    budget: &ErrorBudget,
    options: &EstimatorOptions,
    seed: u64,
) -> Result<FidelityReport> {
    let sampler = RelevanceSampler::new(rho, options.strategy)?;
    estimate_with_sampler(&sampler, sigma, budget, options, seed)
}

/// `Σ_i ρ_i σ_i / d` over every nonzero `ρ_i`: the estimator's expectation
/// computed by enumeration rather than sampling.
pub fn fidelity_by_enumeration<B: ExpectationBackend>(rho: &StateModel, sigma: &B) -> Result<f64> {
    let table = DenseWeightTable::build(&rho.to_dense()?)?;
    let d = rho.dimension();
    let terms = table.iter().map(|(p, r)| Ok(r * sigma.exact_expectation(&p)? / d)).collect::<Result<Vec<f64>>>()?;
    Ok(terms.iter().sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{prepare_sigma, NoiseSpec};
    use crate::state::{make_ghz, make_product, make_w};

    #[test]
    fn bound_arithmetic() {
        assert!((chebyshev_bound(10_000, 0.1) - 0.01).abs() < 1e-15);
        assert!((chebyshev_bound(100, 0.1) - 1.0).abs() < 1e-12);
        let samples = vec![(1.0, 100); 100];
        let want = 2.0 * (-50f64).exp();
        assert!(((hoeffding_bound(&samples, 0.1) - want) / want).abs() < 1e-12);
        let doubled = vec![(1.0, 200); 100];
        let ratio = (hoeffding_bound(&doubled, 0.1) / 2.0).ln() / (hoeffding_bound(&samples, 0.1) / 2.0).ln();
        assert!((ratio - 2.0).abs() < 1e-12);
    }

    #[test]
    fn planning() {
        let ghz = make_ghz(3).unwrap();
        let b = plan_budget(&ghz, 0.1, 0.1).unwrap();
        assert_eq!((b.eps1, b.eps2, b.n1), (0.05, 0.05, 8000));
        let half = plan_budget(&ghz, 0.05, 0.1).unwrap();
        assert_eq!(half.n1, 4 * b.n1);
        assert!(chebyshev_bound(b.n1, b.eps1) <= b.delta1());
        assert!(plan_budget(&ghz, 0.1, 1.5).is_err());
    }

    #[test]
    fn inverse_square_budget_meets_hoeffding_target() {
        let w = make_w(3).unwrap();
        let sigma = prepare_sigma(&w, &NoiseSpec::GlobalDepolarizing(0.1)).unwrap();
        let budget = ErrorBudget::new(0.1, 0.1, 0.1, 400, ShotAllocation::InverseSquare).unwrap();
        let r = estimate_fidelity(&w, &sigma, &budget, &EstimatorOptions::default(), 4).unwrap();
        assert!(r.hoeffding_bound.unwrap() <= budget.delta2());
        for s in &r.samples {
            assert!(s.ratio.abs() <= 1.0 / s.rho.abs() + 1e-12);
        }
        let mean = r.samples.iter().map(|s| s.ratio).sum::<f64>() / r.samples.len() as f64;
        assert!((mean - r.estimate).abs() < 1e-12);
    }

    #[test]
    fn ideal_ghz4_estimates_near_one() {
        let ghz = make_ghz(4).unwrap();
        let sigma = prepare_sigma(&ghz, &NoiseSpec::None).unwrap();
        let budget = ErrorBudget::new(0.025, 0.025, 0.1, 400, ShotAllocation::InverseSquare).unwrap();
        let mut inside = 0;
        for seed in 0..20 {
            let r = estimate_fidelity(&ghz, &sigma, &budget, &EstimatorOptions::default(), seed).unwrap();
            inside += usize::from((r.estimate - 1.0).abs() <= 0.05);
        }
        assert!(inside >= 19);
    }

    #[test]
    fn orthogonal_target_has_zero_fidelity() {
        let w = make_w(3).unwrap();
        let zero = prepare_sigma(&make_product(&["0", "0", "0"]).unwrap(), &NoiseSpec::None).unwrap();
        assert!(fidelity_by_enumeration(&w, &zero).unwrap().abs() < 1e-12);
        let budget = ErrorBudget::new(0.05, 0.05, 0.1, 2000, ShotAllocation::Exact).unwrap();
        let r = estimate_fidelity(&w, &zero, &budget, &EstimatorOptions::default(), 2).unwrap();
        assert!(r.estimate.abs() < 0.1, "{}", r.estimate);
        assert_eq!(r.total_shots, 0);
        assert!(r.hoeffding_bound.is_none());
    }

    #[test]
    fn enumeration_equals_overlap() {
        let w = make_w(3).unwrap();
        let sigma = prepare_sigma(&w, &"local-depolarizing:0.2".parse().unwrap()).unwrap();
        let want = sigma.fidelity_with_pure(&w.to_dense_pure().unwrap()).unwrap();
        assert!((fidelity_by_enumeration(&w, &sigma).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn reports_do_not_depend_on_thread_count() {
        let w = make_w(3).unwrap();
        let sigma = prepare_sigma(&w, &NoiseSpec::Dephasing(0.3)).unwrap();
        let budget = ErrorBudget::new(0.1, 0.1, 0.1, 300, ShotAllocation::InverseSquare).unwrap();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| estimate_fidelity(&w, &sigma, &budget, &EstimatorOptions::default(), 77).unwrap())
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn mixed_target_rejected() {
        let ghz = make_ghz(2).unwrap();
        let sigma = prepare_sigma(&ghz, &NoiseSpec::GlobalDepolarizing(0.5)).unwrap();
        let budget = ErrorBudget::new(0.1, 0.1, 0.1, 10, ShotAllocation::Exact).unwrap();
        let mixed = StateModel::Density(sigma.clone());
        assert!(estimate_fidelity(&mixed, &sigma, &budget, &EstimatorOptions::default(), 0).is_err());
    }
}
