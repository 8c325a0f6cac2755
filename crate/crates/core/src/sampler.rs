//! Sampling Pauli indices from the relevance distribution `Pr(i) = ρ_i²/d`.
//!
//! Three strategies are provided:
//! - stabilizer targets: uniform over the `d` stabilizer-group elements;
//! - conditional (chain-rule) sampling, one site at a time left to right,
//!   for dense vectors, density matrices, product states and MPS;
//! - a brute-force table of all `4^n` weights for dense states.
//!
//! For a prefix `Q = p_1 ⊗ … ⊗ p_k` the marginal is
//! `q(Q) = Σ_P tr(ρ (Q ⊗ P))² / d`, which for a pure state equals
//! `tr(R Q R Q) / 2^k` with `R` the reduced state of the first `k` qubits.
//! This is the two-copy expectation with SWAP on the unsampled sites,
//! evaluated without materializing `ρ ⊗ ρ`.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dense::{DensePureState, DensityMatrix};
use crate::error::{Error, Result};
use crate::mps::{transfer, MpsState};
use crate::pauli::{Pauli1, PauliString};
use crate::stabilizer::StabilizerState;
use crate::state::{DenseState, ProductState, StateModel};
use crate::C64;

/// Tolerance on `Σ_l q(prefix·l) / q(prefix)` before renormalization.
pub const NORMALIZATION_TOL: f64 = 1e-6;

/// A drawn basis element with its exact theoretical expectation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelevanceSample {
    /// Phase-+1 Pauli string `P_i`.
    pub pauli: PauliString,
    /// `ρ_i = tr(ρ P_i)`, never zero.
    pub rho: f64,
    /// `Pr(i) = ρ_i² / d`.
    pub weight: f64,
}

impl RelevanceSample {
    pub fn new(pauli: PauliString, rho: f64) -> Self {
        let d = 2f64.powi(pauli.n() as i32);
        RelevanceSample { weight: rho * rho / d, pauli, rho }
    }
}

/// Rejects samples with `|ρ_i| < d^{-(1+ε)/2}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationPolicy {
    epsilon: f64,
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        TruncationPolicy { epsilon: 1.0 }
    }
}

impl TruncationPolicy {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidParameter(format!("truncation epsilon must be > 0, got {epsilon}")));
        }
        Ok(TruncationPolicy { epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Exponent `α = (1+ε)/2` of the cutoff `d^{-α}`.
    pub fn alpha(&self) -> f64 {
        (1.0 + self.epsilon) / 2.0
    }

    pub fn cutoff(&self, n: usize) -> f64 {
        2f64.powf(-(n as f64) * self.alpha())
    }

    /// Upper bound `d^{1/2-α}` on the fidelity bias from dropped entries.
    pub fn bias_bound(&self, n: usize) -> f64 {
        2f64.powf(n as f64 * (0.5 - self.alpha()))
    }

    /// Upper bound `d^{-ε}` on the probability of drawing a dropped entry.
    pub fn rejection_bound(&self, n: usize) -> f64 {
        2f64.powf(-(n as f64) * self.epsilon)
    }
}

/// `true` when the sample is kept.
pub fn apply_truncation(sample: &RelevanceSample, policy: &TruncationPolicy) -> bool {
    sample.rho.abs() >= policy.cutoff(sample.pauli.n())
}

pub fn sample_stabilizer<R: Rng + ?Sized>(state: &StabilizerState, rng: &mut R) -> RelevanceSample {
    let (pauli, sign) = state.random_element(rng);
    RelevanceSample::new(pauli, sign)
}

/// Chain-rule evaluator for the marginals `q(prefix)`.
#[derive(Clone, Debug)]
pub enum ConditionalOracle {
    Pure(PureMarginals),
    Mixed(DensityMatrix),
    Product(ProductState),
    Mps(MpsState),
}

/// Dense pure state with cached reduced density matrices for short prefixes.
#[derive(Clone, Debug)]
pub struct PureMarginals {
    psi: DensePureState,
    reduced: Vec<Option<DMatrix<C64>>>,
}

impl PureMarginals {
    pub fn new(psi: DensePureState) -> Self {
        let n = psi.n();
        let reduced = (0..=n)
            .map(|k| {
                (k <= n - k).then(|| {
                    let m = psi.split_matrix(k);
                    &m * m.adjoint()
                })
            })
            .collect();
        PureMarginals { psi, reduced }
    }

    fn marginal(&self, prefix: &[Pauli1]) -> f64 {
        let k = prefix.len();
        if k == 0 {
            return 1.0;
        }
        let q = PauliString::from_letters(prefix);
        let act = q.basis_action();
        let value = match &self.reduced[k] {
            Some(r) => {
                // (RQ)_{a,c} = R_{a, c⊕x} coef(c); tr((RQ)²)
                let dk = r.nrows();
                let rq = DMatrix::from_fn(dk, dk, |a, c| {
                    let (t, coef) = act.apply(c);
                    r[(a, t)] * coef
                });
                let mut acc = C64::new(0.0, 0.0);
                for a in 0..dk {
                    for c in 0..dk {
                        acc += rq[(a, c)] * rq[(c, a)];
                    }
                }
                acc.re
            }
            None => {
                // ‖M† Q M‖_F² with M the 2^k × 2^(n-k) reshaped amplitudes
                let m = self.psi.split_matrix(k);
                let mut qm = DMatrix::zeros(m.nrows(), m.ncols());
                for a in 0..m.nrows() {
                    let (t, coef) = act.apply(a);
                    for b in 0..m.ncols() {
                        qm[(t, b)] = m[(a, b)] * coef;
                    }
                }
                let x = m.adjoint() * qm;
                x.iter().map(|v| v.norm_sqr()).sum()
            }
        };
        value / 2f64.powi(k as i32)
    }
}

fn mixed_marginal(rho: &DensityMatrix, prefix: &[Pauli1]) -> f64 {
    let k = prefix.len();
    let n = rho.n();
    let act = PauliString::from_letters(prefix).basis_action();
    let (da, db) = (1usize << k, 1usize << (n - k));
    let m = rho.matrix();
    // t_{bb'} = tr(ρ^{(bb')} Q),  ρ^{(bb')}_{a a'} = ρ_{(a b),(a' b')}
    let t = DMatrix::from_fn(db, db, |b, bp| {
        (0..da)
            .map(|c| {
                let (cx, coef) = act.apply(c);
                m[(c * db + b, cx * db + bp)] * coef
            })
            .sum::<C64>()
    });
    let mut acc = 0.0;
    for b in 0..db {
        for bp in 0..db {
            acc += (t[(b, bp)] * t[(bp, b)]).re;
        }
    }
    acc / 2f64.powi(k as i32)
}

/// Work done per draw, counted in conditional evaluations and single-site
/// contractions with and without reuse of the running prefix environment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingCost {
    pub conditional_evaluations: usize,
    pub contractions_cached: usize,
    pub contractions_uncached: usize,
}

impl ConditionalOracle {
    pub fn for_state(state: &StateModel) -> Result<Self> {
        Ok(match state {
            StateModel::Mps(m) => ConditionalOracle::Mps(m.clone()),
            StateModel::Product(p) => ConditionalOracle::Product(p.clone()),
            StateModel::Density(r) => ConditionalOracle::Mixed(r.clone()),
            StateModel::DensePure(p) => ConditionalOracle::Pure(PureMarginals::new(p.clone())),
            StateModel::Stabilizer(s) => ConditionalOracle::Pure(PureMarginals::new(s.to_dense()?)),
        })
    }

    pub fn n(&self) -> usize {
        match self {
            ConditionalOracle::Pure(p) => p.psi.n(),
            ConditionalOracle::Mixed(r) => r.n(),
            ConditionalOracle::Product(p) => p.n(),
            ConditionalOracle::Mps(m) => m.n(),
        }
    }

    pub fn cost_per_draw(&self) -> SamplingCost {
        let n = self.n();
        SamplingCost {
            conditional_evaluations: 4 * n,
            contractions_cached: 4 * n,
            contractions_uncached: 4 * n * (n + 1) / 2,
        }
    }

    /// Unnormalized marginal `q(prefix)`.
    pub fn marginal(&self, prefix: &[Pauli1]) -> f64 {
        match self {
            ConditionalOracle::Pure(p) => p.marginal(prefix),
            ConditionalOracle::Mixed(r) => mixed_marginal(r, prefix),
            ConditionalOracle::Product(p) => prefix
                .iter()
                .zip(&p.sites)
                .map(|(&l, s)| s.expectation(l).norm_sqr() / 2.0)
                .product(),
            ConditionalOracle::Mps(m) => {
                let env = mps_prefix_env(m, prefix);
                mps_marginal(&env, prefix.len())
            }
        }
    }

    /// Normalized conditional distribution of the next site's letter, in
    /// `Pauli1::ALL` order.
    pub fn conditional_weights(&self, prefix: &[Pauli1]) -> Result<[f64; 4]> {
        if prefix.len() >= self.n() {
            return Err(Error::InvalidParameter("prefix already covers every site".into()));
        }
        let raw = match self {
            ConditionalOracle::Mps(m) => {
                let env = mps_prefix_env(m, prefix);
                let k = prefix.len();
                Pauli1::ALL.map(|l| mps_marginal(&transfer(&env, &m.sites()[k], l), k + 1))
            }
            _ => {
                let mut ext = prefix.to_vec();
                ext.push(Pauli1::I);
                Pauli1::ALL.map(|l| {
                    *ext.last_mut().unwrap() = l;
                    self.marginal(&ext)
                })
            }
        };
        normalize(raw, self.marginal(prefix))
    }

    /// One exact draw from `Pr(i)`; `state` supplies the exact `ρ_i`.
    pub fn sample<R: Rng + ?Sized>(&self, state: &StateModel, rng: &mut R) -> Result<RelevanceSample> {
        let n = self.n();
        let mut prefix = Vec::with_capacity(n);
        let mut env = DMatrix::from_element(1, 1, C64::new(1.0, 0.0));
        let mut marginal = self.marginal(&[]);
        for k in 0..n {
            let raw = match self {
                ConditionalOracle::Mps(m) => {
                    let envs = Pauli1::ALL.map(|l| transfer(&env, &m.sites()[k], l));
                    let raw = [0, 1, 2, 3].map(|i| mps_marginal(&envs[i], k + 1));
                    let pick = choose(&normalize(raw, marginal)?, rng);
                    let [e0, e1, e2, e3] = envs;
                    env = [e0, e1, e2, e3].into_iter().nth(pick).unwrap();
                    prefix.push(Pauli1::ALL[pick]);
                    raw[pick]
                }
                _ => {
                    prefix.push(Pauli1::I);
                    let raw = Pauli1::ALL.map(|l| {
                        prefix[k] = l;
                        self.marginal(&prefix)
                    });
                    let pick = choose(&normalize(raw, marginal)?, rng);
                    prefix[k] = Pauli1::ALL[pick];
                    raw[pick]
                }
            };
            marginal = raw;
        }
        let pauli = PauliString::from_letters(&prefix);
        let rho = state.expectation(&pauli)?;
        if rho == 0.0 {
            return Err(Error::Sampling(format!("drew {pauli} with zero expectation")));
        }
        Ok(RelevanceSample::new(pauli, rho))
    }
}

fn mps_prefix_env(m: &MpsState, prefix: &[Pauli1]) -> DMatrix<C64> {
    let mut env = DMatrix::from_element(1, 1, C64::new(1.0, 0.0));
    for (site, &l) in m.sites().iter().zip(prefix) {
        env = transfer(&env, site, l);
    }
    env
}

/// With right-canonical tails the unsampled sites contribute `tr(G²)`.
fn mps_marginal(env: &DMatrix<C64>, k: usize) -> f64 {
    (env * env).trace().re / 2f64.powi(k as i32)
}

fn normalize(raw: [f64; 4], parent: f64) -> Result<[f64; 4]> {
    let raw = raw.map(|v| v.max(0.0));
    let total: f64 = raw.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::Sampling("conditional weights vanish".into()));
    }
    if (total - parent).abs() > NORMALIZATION_TOL * parent.abs().max(f64::MIN_POSITIVE) {
        return Err(Error::Sampling(format!(
            "conditional weights sum to {total:.9e}, parent marginal {parent:.9e}"
        )));
    }
    Ok(raw.map(|v| v / total))
}

fn choose<R: Rng + ?Sized>(w: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in w.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    w.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Every nonzero `ρ_i` of a dense state, computed by one Walsh-Hadamard
/// transform per X-pattern, with cumulative weights for inversion sampling.
#[derive(Clone, Debug)]
pub struct DenseWeightTable {
    n: usize,
    /// `(x mask, z mask, ρ_i)` with bit `n-1-q` for qubit `q`.
    entries: Vec<(u64, u64, f64)>,
    cumulative: Vec<f64>,
}

/// Entries with `|ρ_i|` below this are treated as exact zeros.
pub const TABLE_ZERO: f64 = 1e-12;

fn walsh_hadamard(v: &mut [C64]) {
    let mut h = 1;
    while h < v.len() {
        for block in v.chunks_mut(2 * h) {
            let (a, b) = block.split_at_mut(h);
            for (x, y) in a.iter_mut().zip(b.iter_mut()) {
                let (s, t) = (*x + *y, *x - *y);
                *x = s;
                *y = t;
            }
        }
        h *= 2;
    }
}

impl DenseWeightTable {
    pub fn build(state: &DenseState) -> Result<Self> {
        let n = match state {
            DenseState::Pure(p) => p.n(),
            DenseState::Mixed(r) => r.n(),
        };
        let d = 1usize << n;
        let rows: Vec<Vec<(u64, u64, f64)>> = (0..d)
            .into_par_iter()
            .map(|x| {
                let mut v: Vec<C64> = match state {
                    DenseState::Pure(p) => {
                        let a = p.amplitudes();
                        (0..d).map(|b| a[b ^ x].conj() * a[b]).collect()
                    }
                    DenseState::Mixed(r) => {
                        let m = r.matrix();
                        (0..d).map(|b| m[(b, b ^ x)]).collect()
                    }
                };
                walsh_hadamard(&mut v);
                v.iter()
                    .enumerate()
                    .filter_map(|(z, h)| {
                        let ys = (x & z).count_ones();
                        let rho = (h * crate::pauli::i_pow((ys & 3) as u8)).re;
                        (rho.abs() > TABLE_ZERO).then_some((x as u64, z as u64, rho))
                    })
                    .collect()
            })
            .collect();
        let entries: Vec<_> = rows.into_iter().flatten().collect();
        let df = d as f64;
        let mut acc = 0.0;
        let cumulative = entries
            .iter()
            .map(|e| {
                acc += e.2 * e.2 / df;
                acc
            })
            .collect();
        Ok(DenseWeightTable { n, entries, cumulative })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `Σ_i ρ_i²/d`, i.e. the purity.
    pub fn total_weight(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    pub fn pauli(&self, x: u64, z: u64) -> PauliString {
        let letters: Vec<_> = (0..self.n)
            .map(|q| {
                let bit = self.n - 1 - q;
                Pauli1::from_bits((x >> bit) & 1 == 1, (z >> bit) & 1 == 1)
            })
            .collect();
        PauliString::from_letters(&letters)
    }

    /// Nonzero entries as `(P_i, ρ_i)`.
    pub fn iter(&self) -> impl Iterator<Item = (PauliString, f64)> + '_ {
        self.entries.iter().map(|&(x, z, r)| (self.pauli(x, z), r))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<RelevanceSample> {
        let total = self.total_weight();
        if !(total > 0.0) {
            return Err(Error::Sampling("empty weight table".into()));
        }
        let u = rng.random::<f64>() * total;
        let i = self.cumulative.partition_point(|&c| c <= u).min(self.entries.len() - 1);
        let (x, z, rho) = self.entries[i];
        Ok(RelevanceSample::new(self.pauli(x, z), rho))
    }
}

pub fn sample_dense_bruteforce<R: Rng + ?Sized>(state: &DenseState, rng: &mut R) -> Result<RelevanceSample> {
    DenseWeightTable::build(state)?.sample(rng)
}

/// Which sampler to use for a target.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerStrategy {
    #[default]
    Auto,
    Stabilizer,
    Conditional,
    BruteForce,
}

/// Brute-force tables are built automatically up to this many qubits.
pub const AUTO_TABLE_MAX_QUBITS: usize = 10;

/// A ready-to-draw relevance sampler bound to its target state.
#[derive(Clone, Debug)]
pub struct RelevanceSampler {
    state: StateModel,
    kind: SamplerKind,
}

#[derive(Clone, Debug)]
enum SamplerKind {
    Stabilizer(StabilizerState),
    Conditional(ConditionalOracle),
    Table(Arc<DenseWeightTable>),
}

impl RelevanceSampler {
    pub fn new(state: &StateModel, strategy: SamplerStrategy) -> Result<Self> {
        let kind = match (strategy, state) {
            (SamplerStrategy::Auto | SamplerStrategy::Stabilizer, StateModel::Stabilizer(s)) => {
                SamplerKind::Stabilizer(s.clone())
            }
            (SamplerStrategy::Stabilizer, _) => {
                return Err(Error::Unsupported("stabilizer sampling needs a stabilizer target".into()))
            }
            (SamplerStrategy::Auto, StateModel::DensePure(_) | StateModel::Density(_))
                if state.n() <= AUTO_TABLE_MAX_QUBITS =>
            {
                SamplerKind::Table(Arc::new(DenseWeightTable::build(&state.to_dense()?)?))
            }
            (SamplerStrategy::BruteForce, _) => SamplerKind::Table(Arc::new(DenseWeightTable::build(&state.to_dense()?)?)),
            _ => SamplerKind::Conditional(ConditionalOracle::for_state(state)?),
        };
        Ok(RelevanceSampler { state: state.clone(), kind })
    }

    pub fn state(&self) -> &StateModel {
        &self.state
    }

    pub fn strategy(&self) -> SamplerStrategy {
        match self.kind {
            SamplerKind::Stabilizer(_) => SamplerStrategy::Stabilizer,
            SamplerKind::Conditional(_) => SamplerStrategy::Conditional,
            SamplerKind::Table(_) => SamplerStrategy::BruteForce,
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<RelevanceSample> {
        match &self.kind {
            SamplerKind::Stabilizer(s) => Ok(sample_stabilizer(s, rng)),
            SamplerKind::Conditional(c) => c.sample(&self.state, rng),
            SamplerKind::Table(t) => t.sample(rng),
        }
    }

    /// Draws until a sample survives truncation. Returns the sample and the
    /// number of rejected draws.
    pub fn draw_truncated<R: Rng + ?Sized>(
        &self,
        policy: &TruncationPolicy,
        max_attempts: usize,
        rng: &mut R,
    ) -> Result<(RelevanceSample, usize)> {
        for rejected in 0..max_attempts {
            let s = self.draw(rng)?;
            if apply_truncation(&s, policy) {
                return Ok((s, rejected));
            }
        }
        Err(Error::Sampling(format!("{max_attempts} consecutive draws fell below the truncation cutoff")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{make_ghz, make_product, make_t, make_w};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashMap;

    fn brute_marginal(state: &StateModel, prefix: &[Pauli1]) -> f64 {
        // Σ over completions of ρ_i² / d, straight from the definition.
        let n = state.n();
        let m = n - prefix.len();
        let d = 2f64.powi(n as i32);
        (0..4u64.pow(m as u32))
            .map(|t| {
                let mut letters = prefix.to_vec();
                for q in 0..m {
                    letters.push(Pauli1::from_digit(((t >> (2 * (m - 1 - q))) & 3) as usize));
                }
                let r = state.expectation(&PauliString::from_letters(&letters)).unwrap();
                r * r / d
            })
            .sum()
    }

    fn oracles(state: &StateModel) -> Vec<ConditionalOracle> {
        let mut out = vec![ConditionalOracle::for_state(state).unwrap()];
        if let Ok(p) = state.to_dense_pure() {
            out.push(ConditionalOracle::Pure(PureMarginals::new(p.clone())));
            out.push(ConditionalOracle::Mixed(p.to_density()));
            out.push(ConditionalOracle::Mps(MpsState::from_dense(&p).unwrap()));
        }
        out
    }

    #[test]
    fn marginals_match_definition() {
        let states = [make_w(3).unwrap(), make_t(4).unwrap(), make_ghz(3).unwrap(), make_product(&["+", "0", "-i"]).unwrap()];
        for state in &states {
            let n = state.n();
            for oracle in oracles(state) {
                for t in 0..4u64.pow(2) {
                    let prefix = [Pauli1::from_digit((t >> 2) as usize), Pauli1::from_digit((t & 3) as usize)];
                    for k in 0..=2.min(n) {
                        let want = brute_marginal(state, &prefix[..k]);
                        let got = oracle.marginal(&prefix[..k]);
                        assert!((want - got).abs() < 1e-12, "{oracle:?} {:?}: {got} vs {want}", &prefix[..k]);
                    }
                }
            }
        }
    }

    #[test]
    fn conditional_weights_form_distribution() {
        let state = make_w(4).unwrap();
        for oracle in oracles(&state) {
            let w = oracle.conditional_weights(&[Pauli1::X, Pauli1::X]).unwrap();
            assert!(w.iter().all(|&v| v >= 0.0));
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(oracle.conditional_weights(&[Pauli1::I; 4]).is_err());
        }
    }

    #[test]
    fn ghz_draws_are_uniform_over_group() {
        let state = make_ghz(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for strategy in [SamplerStrategy::Auto, SamplerStrategy::Conditional, SamplerStrategy::BruteForce] {
            let sampler = RelevanceSampler::new(&state, strategy).unwrap();
            let mut counts: HashMap<String, usize> = HashMap::new();
            let draws = 8000;
            for _ in 0..draws {
                let s = sampler.draw(&mut rng).unwrap();
                assert!((s.rho.abs() - 1.0).abs() < 1e-12);
                *counts.entry(s.pauli.to_string()).or_default() += 1;
            }
            assert_eq!(counts.len(), 8, "{strategy:?}");
            for (k, c) in counts {
                let f = c as f64 / draws as f64;
                assert!((f - 0.125).abs() < 0.02, "{strategy:?} {k}: {f}");
            }
        }
    }

    #[test]
    fn zero_state_only_yields_i_and_z() {
        let state = make_product(&["0"]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for strategy in [SamplerStrategy::Conditional, SamplerStrategy::BruteForce] {
            let sampler = RelevanceSampler::new(&state, strategy).unwrap();
            for _ in 0..200 {
                let s = sampler.draw(&mut rng).unwrap();
                assert!(matches!(s.pauli.letter(0), Pauli1::I | Pauli1::Z));
                assert!((s.rho - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn table_matches_direct_expectations() {
        let state = make_w(3).unwrap();
        let table = DenseWeightTable::build(&state.to_dense().unwrap()).unwrap();
        assert!((table.total_weight() - 1.0).abs() < 1e-12);
        let mut seen = 0;
        for t in 0..64u64 {
            let p = PauliString::from_index(3, crate::pauli::PauliIndex(t)).unwrap();
            let want = state.expectation(&p).unwrap();
            if want.abs() > TABLE_ZERO {
                seen += 1;
            }
            if let Some((_, r)) = table.iter().find(|(q, _)| *q == p) {
                assert!((r - want).abs() < 1e-12);
            }
        }
        assert_eq!(seen, table.len());
    }

    #[test]
    fn w_state_draw_frequencies_follow_weights() {
        let state = make_w(3).unwrap();
        let sampler = RelevanceSampler::new(&state, SamplerStrategy::Conditional).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let draws = 20000;
        let mut counts: HashMap<PauliString, usize> = HashMap::new();
        for _ in 0..draws {
            *counts.entry(sampler.draw(&mut rng).unwrap().pauli).or_default() += 1;
        }
        for (p, c) in counts {
            let r = state.expectation(&p).unwrap();
            let want = r * r / 8.0;
            let sd = (want * (1.0 - want) / draws as f64).sqrt();
            assert!((c as f64 / draws as f64 - want).abs() < 5.0 * sd + 1e-9, "{p}");
        }
    }

    #[test]
    fn truncation_cutoff() {
        let pol = TruncationPolicy::new(1.0).unwrap();
        assert_eq!(pol.cutoff(4), 1.0 / 16.0);
        assert!(TruncationPolicy::new(0.0).is_err());
        let s = RelevanceSample::new("XX".parse().unwrap(), 0.2);
        assert!(!apply_truncation(&s, &pol));
        assert!(apply_truncation(&RelevanceSample::new("XX".parse().unwrap(), 0.25), &pol));
        assert!((pol.bias_bound(4) - 0.25).abs() < 1e-15);
    }
}
