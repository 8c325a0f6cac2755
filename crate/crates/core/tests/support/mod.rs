//! Random generators and oracle checks shared by the property tests and the
//! acceptance runner. Every check recomputes its reference value from dense
//! matrices built here, not from the library's own dense paths.
#![allow(dead_code)]

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use certkit::cv::{integrate_plane, parity_shots, CvState};
use certkit::dense::{DensePureState, DensityMatrix};
use certkit::fidelity::{estimate_fidelity, hoeffding_bound, EstimatorOptions, FidelityReport};
use certkit::hamiltonian::{
    assemble_constraints, chain_basis, commutator_expectation, local_design, solve, LearnConfig,
    LearnExperiment, MeasurementNoise, ProbeState, Setting,
};
use certkit::measure::{measure_pauli, shot_budget, NoiseSpec};
use certkit::mps::{MpsState, SiteTensor};
use certkit::pauli::{Pauli1, PauliString};
use certkit::process::{
    average_fidelity, choi_fidelity, choi_state, product_protocol_expectation, target_choi_model, ChannelModel,
    CliffordCircuit, CliffordGate,
};
use certkit::sampler::{ConditionalOracle, DenseWeightTable, RelevanceSampler, SamplerStrategy};
use certkit::stabilizer::StabilizerState;
use certkit::state::{
    make_cluster_1d, make_ghz, make_t, make_w, random_pure, Boundary, ProductState, Qubit, StateModel,
};
use certkit::C64;

pub type Check = Result<(), String>;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn gauss<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    c(StandardNormal.sample(rng), StandardNormal.sample(rng))
}

pub fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Check {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn ok<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

// ---- generators ----

pub fn random_letter<R: Rng + ?Sized>(rng: &mut R) -> Pauli1 {
    Pauli1::ALL[rng.random_range(0..4)]
}

pub fn random_pauli<R: Rng + ?Sized>(n: usize, rng: &mut R) -> PauliString {
    let letters: Vec<_> = (0..n).map(|_| random_letter(rng)).collect();
    PauliString::from_letters(&letters).with_phase(rng.random_range(0..4))
}

pub fn random_hermitian_pauli<R: Rng + ?Sized>(n: usize, rng: &mut R) -> PauliString {
    let letters: Vec<_> = (0..n).map(|_| random_letter(rng)).collect();
    PauliString::from_letters(&letters)
}

/// All unsigned strings on `n` qubits, qubit 0 varying slowest.
pub fn all_paulis(n: usize) -> Vec<PauliString> {
    (0..4usize.pow(n as u32))
        .map(|mut k| {
            let mut letters = vec![Pauli1::I; n];
            for q in (0..n).rev() {
                letters[q] = Pauli1::ALL[k % 4];
                k /= 4;
            }
            PauliString::from_letters(&letters)
        })
        .collect()
}

pub fn random_unitary<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DMatrix<C64> {
    DMatrix::from_fn(d, d, |_, _| gauss(rng)).qr().q()
}

pub fn random_circuit<R: Rng + ?Sized>(n: usize, depth: usize, rng: &mut R) -> CliffordCircuit {
    let gates = (0..depth)
        .map(|_| {
            let a = rng.random_range(0..n);
            let b = if n > 1 { (a + rng.random_range(1..n)) % n } else { a };
            match rng.random_range(0..if n > 1 { 7 } else { 5 }) {
                0 => CliffordGate::H(a),
                1 => CliffordGate::S(a),
                2 => CliffordGate::X(a),
                3 => CliffordGate::Y(a),
                4 => CliffordGate::Z(a),
                5 => CliffordGate::Cnot(a, b),
                _ => CliffordGate::Cz(a, b),
            }
        })
        .collect();
    CliffordCircuit::new(n, gates).unwrap()
}

/// `U|0…0⟩` for a random Clifford `U`, as generators.
pub fn random_stabilizer<R: Rng + ?Sized>(n: usize, rng: &mut R) -> StabilizerState {
    let circuit = random_circuit(n, 4 * n + 2, rng);
    let gens = (0..n).map(|q| circuit.conjugate(&PauliString::single(n, q, Pauli1::Z)).unwrap()).collect();
    StabilizerState::new(gens).unwrap()
}

pub fn random_mps<R: Rng + ?Sized>(n: usize, chi: usize, rng: &mut R) -> MpsState {
    let mut left = 1;
    let sites: Vec<SiteTensor> = (0..n)
        .map(|k| {
            let right = if k + 1 == n { 1 } else { chi.min(1 << (k + 1)).min(1 << (n - k - 1)) };
            let t = [DMatrix::from_fn(left, right, |_, _| gauss(rng)), DMatrix::from_fn(left, right, |_, _| gauss(rng))];
            left = right;
            t
        })
        .collect();
    MpsState::new(sites).unwrap()
}

pub fn random_product<R: Rng + ?Sized>(n: usize, rng: &mut R) -> ProductState {
    ProductState::new((0..n).map(|_| Qubit::new(gauss(rng), gauss(rng)).unwrap()).collect())
}

/// Mixture of a random pure state with the maximally mixed state.
pub fn random_density<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DensityMatrix {
    let psi = random_pure(n, rng).unwrap().to_dense_pure().unwrap();
    let p = rng.random_range(0.0..1.0);
    psi.to_density().mixed_with(&DensityMatrix::maximally_mixed(n).unwrap(), p)
}

pub fn random_noise<R: Rng + ?Sized>(rng: &mut R) -> NoiseSpec {
    let p = rng.random_range(0.0..0.5);
    match rng.random_range(0..5) {
        0 => NoiseSpec::None,
        1 => NoiseSpec::GlobalDepolarizing(p),
        2 => NoiseSpec::LocalDepolarizing(p),
        3 => NoiseSpec::Dephasing(p),
        _ => NoiseSpec::CoherentOverrotation(p),
    }
}

/// A CPTP map: random unitary followed by a random-unitary mixture.
pub fn random_channel<R: Rng + ?Sized>(n: usize, rng: &mut R) -> ChannelModel {
    let d = 1 << n;
    let p: f64 = rng.random_range(0.0..0.4);
    let u = random_unitary(d, rng);
    let v = random_unitary(d, rng);
    let ops = vec![&u * c((1.0 - p).sqrt(), 0.0), &v * &u * c(p.sqrt(), 0.0)];
    ChannelModel::kraus(ops).unwrap()
}

/// Named and random targets on `n` qubits, every representation covered.
pub fn state_zoo<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<(String, StateModel)> {
    let mut out = vec![
        (format!("ghz:{n}"), make_ghz(n).unwrap()),
        (format!("w:{n}"), make_w(n).unwrap()),
        (format!("t:{n}"), make_t(n).unwrap()),
        ("random-stabilizer".into(), StateModel::Stabilizer(random_stabilizer(n, rng))),
        ("random-mps".into(), StateModel::Mps(random_mps(n, 3, rng))),
        ("random-product".into(), StateModel::Product(random_product(n, rng))),
        ("random-dense".into(), random_pure(n, rng).unwrap()),
        ("random-mixed".into(), StateModel::Density(random_density(n, rng))),
    ];
    if n >= 2 {
        out.push((format!("cluster:{n}"), make_cluster_1d(n, Boundary::Open).unwrap()));
    }
    if n >= 3 {
        out.push((format!("cluster:{n}:periodic"), make_cluster_1d(n, Boundary::Periodic).unwrap()));
    }
    out
}

// ---- dense oracles ----

/// Kronecker product of 2×2 letter matrices, times the string's phase.
pub fn pauli_matrix(p: &PauliString) -> DMatrix<C64> {
    let (o, l, i) = (c(0.0, 0.0), c(1.0, 0.0), c(0.0, 1.0));
    let mut m = DMatrix::from_element(1, 1, l);
    for q in 0..p.n() {
        let s = match p.letter(q) {
            Pauli1::I => DMatrix::from_row_slice(2, 2, &[l, o, o, l]),
            Pauli1::X => DMatrix::from_row_slice(2, 2, &[o, l, l, o]),
            Pauli1::Y => DMatrix::from_row_slice(2, 2, &[o, -i, i, o]),
            Pauli1::Z => DMatrix::from_row_slice(2, 2, &[l, o, o, -l]),
        };
        m = m.kronecker(&s);
    }
    m * i.powi(p.phase() as i32)
}

pub fn density_of(state: &StateModel) -> DMatrix<C64> {
    match state {
        StateModel::Density(r) => r.matrix().clone(),
        other => {
            let psi = other.to_dense_pure().unwrap();
            let v = nalgebra::DVector::from_column_slice(psi.amplitudes());
            &v * v.adjoint()
        }
    }
}

fn pure_density(psi: &DensePureState) -> DMatrix<C64> {
    let v = nalgebra::DVector::from_column_slice(psi.amplitudes());
    &v * v.adjoint()
}

// ---- pauli_core ----

pub fn check_group(a: &PauliString, b: &PauliString, cc: &PauliString) -> Check {
    let ab = ok(a.multiply(b))?;
    let left = ok(ab.multiply(cc))?;
    let right = ok(a.multiply(&ok(b.multiply(cc))?))?;
    ensure(left == right, || format!("({a}·{b})·{cc} = {left} but {a}·({b}·{cc}) = {right}"))?;
    ensure(ab.phase() < 4, || format!("phase {} out of range", ab.phase()))?;
    let err = (pauli_matrix(&ab) - pauli_matrix(a) * pauli_matrix(b)).norm();
    ensure(err < 1e-12, || format!("dense product of {a} and {b} differs by {err:e}"))
}

pub fn check_orthogonality(a: &PauliString, b: &PauliString) -> Check {
    let d = (1usize << a.n()) as f64;
    let tr = (pauli_matrix(a) * pauli_matrix(b)).trace() / d;
    let want = if a == b { 1.0 } else { 0.0 };
    ensure((tr - c(want, 0.0)).norm() < 1e-12, || format!("tr({a}·{b})/d = {tr}"))
}

pub fn check_commutation(a: &PauliString, b: &PauliString) -> Check {
    let (ma, mb) = (pauli_matrix(a), pauli_matrix(b));
    let dense = (&ma * &mb - &mb * &ma).norm() < 1e-9;
    let symbolic = ok(a.commutes(b))?;
    ensure(dense == symbolic, || format!("commutes({a}, {b}) = {symbolic}, dense says {dense}"))
}

// ---- state_models ----

pub fn check_expectations(state: &StateModel, paulis: &[PauliString]) -> Check {
    let rho = density_of(state);
    for p in paulis {
        let want = (&rho * pauli_matrix(p)).trace().re;
        let got = ok(state.expectation(p))?;
        ensure((got - want).abs() < 1e-9, || format!("⟨{p}⟩ = {got}, dense {want}"))?;
    }
    Ok(())
}

/// Exhaustive: values in {0, ±1} and exactly `d` nonzero strings.
pub fn check_stabilizer_support(s: &StabilizerState) -> Check {
    let n = s.n();
    let rho = pure_density(&ok(s.to_dense())?);
    let mut nonzero = 0;
    for p in all_paulis(n) {
        let v = ok(s.expectation(&p))?;
        ensure(v == 0.0 || v == 1.0 || v == -1.0, || format!("⟨{p}⟩ = {v}"))?;
        let want = (&rho * pauli_matrix(&p)).trace().re;
        ensure((v - want).abs() < 1e-9, || format!("⟨{p}⟩ = {v}, dense {want}"))?;
        nonzero += (v != 0.0) as usize;
    }
    ensure(nonzero == 1 << n, || format!("{nonzero} nonzero expectations, want {}", 1 << n))
}

/// Exhaustive `Σ_i ρ_i²/d = 1`.
pub fn check_purity(state: &StateModel) -> Check {
    let n = state.n();
    let d = (1usize << n) as f64;
    let mut total = 0.0;
    for p in all_paulis(n) {
        total += ok(state.expectation(&p))?.powi(2) / d;
    }
    ensure((total - 1.0).abs() < 1e-9, || format!("Σ ρ_i²/d = {total}"))
}

// ---- relevance_sampler ----

fn prefixes(len: usize) -> Vec<Vec<Pauli1>> {
    let mut out = vec![Vec::new()];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|p| {
                Pauli1::ALL.map(|l| {
                    let mut q = p.clone();
                    q.push(l);
                    q
                })
            })
            .collect();
    }
    out
}

/// Every representation's conditional weights equal the brute-force
/// marginals of `ρ_i²/d`, for every prefix.
pub fn check_sampler_agreement(models: &[StateModel]) -> Check {
    let n = models[0].n();
    let d = (1usize << n) as f64;
    let rho = density_of(&models[0]);
    let mut weights: HashMap<Vec<Pauli1>, f64> = HashMap::new();
    for p in all_paulis(n) {
        let r = (&rho * pauli_matrix(&p)).trace().re;
        let letters = p.letters();
        for k in 0..=n {
            *weights.entry(letters[..k].to_vec()).or_default() += r * r / d;
        }
    }
    let oracles: Vec<ConditionalOracle> = models.iter().map(|m| ok(ConditionalOracle::for_state(m))).collect::<Result<_, _>>()?;
    for k in 0..n {
        for prefix in prefixes(k) {
            let q = weights[&prefix];
            if q < 1e-12 {
                continue;
            }
            let want = Pauli1::ALL.map(|l| {
                let mut ext = prefix.clone();
                ext.push(l);
                weights[&ext] / q
            });
            for (m, oracle) in models.iter().zip(&oracles) {
                let got = ok(oracle.conditional_weights(&prefix))?;
                let sum: f64 = got.iter().sum();
                ensure(got.iter().all(|&w| w >= 0.0) && (sum - 1.0).abs() < 1e-10, || format!("weights {got:?}"))?;
                for (g, w) in got.iter().zip(&want) {
                    ensure((g - w).abs() < 1e-10, || {
                        format!("{} prefix {prefix:?}: weights {got:?}, brute force {want:?}", kind(m))
                    })?;
                }
            }
        }
    }
    let table = ok(DenseWeightTable::build(&ok(models[0].to_dense())?))?;
    for (p, r) in table.iter() {
        let w = weights[&p.letters()];
        ensure((r * r / d - w).abs() < 1e-10, || format!("table weight of {p} is {}, want {w}", r * r / d))?;
    }
    for m in models {
        if let StateModel::Stabilizer(s) = m {
            let group = s.group_elements();
            ensure(group.len() == 1 << n, || format!("{} group elements", group.len()))?;
            for g in group {
                let w = weights[&g.letters()];
                ensure((w - 1.0 / d).abs() < 1e-10, || format!("stabilizer element {g} has weight {w}"))?;
            }
        }
    }
    Ok(())
}

fn kind(m: &StateModel) -> &'static str {
    match m {
        StateModel::Stabilizer(_) => "stabilizer",
        StateModel::Mps(_) => "mps",
        StateModel::DensePure(_) => "dense",
        StateModel::Density(_) => "density",
        StateModel::Product(_) => "product",
    }
}

/// The same model in every representation it admits.
pub fn representations(state: &StateModel) -> Vec<StateModel> {
    let psi = state.to_dense_pure().unwrap();
    let mut out = vec![
        StateModel::DensePure(psi.clone()),
        StateModel::Mps(MpsState::from_dense(&psi).unwrap()),
        StateModel::Density(psi.to_density()),
    ];
    if matches!(state, StateModel::Stabilizer(_) | StateModel::Product(_)) {
        out.push(state.clone());
    }
    out
}

pub fn check_sampler_determinism(state: &StateModel, strategy: SamplerStrategy, seed: u64) -> Check {
    let sampler = ok(RelevanceSampler::new(state, strategy))?;
    let draw = || -> Result<Vec<(PauliString, f64)>, String> {
        let mut rng = certkit::rng::stream_rng(seed, 0);
        (0..20).map(|_| ok(sampler.draw(&mut rng)).map(|s| (s.pauli, s.rho))).collect()
    };
    let (a, b) = (draw()?, draw()?);
    ensure(a == b, || "same seed gave different draws".into())?;
    for (p, r) in &a {
        let want = ok(state.expectation(p))?;
        ensure((r - want).abs() < 1e-9, || format!("draw {p} carries ρ = {r}, want {want}"))?;
    }
    Ok(())
}

// ---- measurement_sim ----

/// Mean of repeated shot estimates lies within five standard errors.
pub fn check_unbiased_shots(sigma: &DensityMatrix, p: &PauliString, seed: u64) -> Check {
    let (reps, shots) = (400u64, 50u64);
    let want = (sigma.matrix() * pauli_matrix(p)).trace().re;
    let mut rng = certkit::rng::stream_rng(seed, 0);
    let mut sum = 0.0;
    for _ in 0..reps {
        sum += ok(measure_pauli(sigma, p, shots, &mut rng))?.mean();
    }
    let mean = sum / reps as f64;
    let se = ((1.0 - want * want).max(0.0) / (reps * shots) as f64).sqrt();
    ensure((mean - want).abs() <= 5.0 * se + 1e-12, || format!("shot mean {mean}, exact {want}"))
}

/// Realized exponent `ε₂² N₁² / (2 Σ 1/(ρ² N₂))` is at least `ln(2/δ₂)`.
pub fn check_hoeffding_exponent(rhos: &[f64], eps2: f64, delta2: f64) -> Check {
    let n1 = rhos.len();
    let pairs: Vec<(f64, u64)> = rhos.iter().map(|&r| Ok((r, ok(shot_budget(r, n1, eps2, delta2))?))).collect::<Result<_, String>>()?;
    let s: f64 = pairs.iter().map(|&(r, k)| 1.0 / (r * r * k as f64)).sum();
    let exponent = eps2 * eps2 * (n1 * n1) as f64 / (2.0 * s);
    ensure(exponent >= (2.0 / delta2).ln() * (1.0 - 1e-12), || format!("exponent {exponent} < ln(2/δ₂)"))?;
    let bound = hoeffding_bound(&pairs, eps2);
    ensure(bound <= delta2 * (1.0 + 1e-9), || format!("Hoeffding bound {bound} > δ₂ = {delta2}"))
}

// ---- fidelity_mc ----

/// Enumerating every nonzero `ρ_i` reproduces `tr(ρσ)` exactly.
pub fn check_enumeration(target: &StateModel, sigma: &DensityMatrix) -> Check {
    let got = ok(certkit::fidelity::fidelity_by_enumeration(target, sigma))?;
    let want = (density_of(target) * sigma.matrix()).trace().re;
    ensure((got - want).abs() < 1e-10, || format!("enumerated {got}, tr(ρσ) = {want}"))
}

pub fn check_ratio_bounds(report: &FidelityReport) -> Check {
    for s in &report.samples {
        ensure(s.ratio.abs() <= 1.0 / s.rho.abs() + 1e-12, || format!("|σ̃/ρ| = {} > 1/|ρ| at {}", s.ratio.abs(), s.pauli))?;
        ensure(s.sigma_estimate.abs() <= 1.0 + 1e-12, || format!("σ̃ = {}", s.sigma_estimate))?;
    }
    Ok(())
}

/// Fraction of `runs` seeded estimates within `eps` of the exact fidelity.
pub fn coverage(target: &StateModel, noise: NoiseSpec, eps: f64, delta: f64, runs: u64, seed: u64) -> Result<f64, String> {
    let sigma = ok(certkit::measure::prepare_sigma(target, &noise))?;
    let exact = (density_of(target) * sigma.matrix()).trace().re;
    let budget = ok(certkit::fidelity::plan_budget(target, eps, delta))?;
    let options = EstimatorOptions::default();
    let mut hits = 0;
    for r in 0..runs {
        let rep = ok(estimate_fidelity(target, &sigma, &budget, &options, certkit::rng::sub_seed(seed, r)))?;
        check_ratio_bounds(&rep)?;
        hits += ((rep.estimate - exact).abs() <= eps) as u64;
    }
    Ok(hits as f64 / runs as f64)
}

// ---- process_cert ----

/// Averaging the product-protocol estimator over every branch and every
/// drawn string gives the Choi fidelity.
pub fn check_product_protocol(target: &ChannelModel, actual: &ChannelModel) -> Check {
    let model = ok(target_choi_model(target))?;
    let table = ok(DenseWeightTable::build(&ok(model.to_dense())?))?;
    let dd = model.dimension();
    let mut acc = 0.0;
    for (p, r) in table.iter() {
        acc += r * ok(product_protocol_expectation(actual, &p))? / dd;
    }
    let want = ok(choi_fidelity(target, actual))?;
    ensure((acc - want).abs() < 1e-9, || format!("branch average {acc}, Choi overlap {want}"))
}

/// `E(ρ) = d Σ_ij ρ_ij J_(i,j)` with `J` the Choi state of `first.then(second)`.
pub fn check_composition(first: &ChannelModel, second: &ChannelModel, input: &DensityMatrix) -> Check {
    let composed = ok(first.clone().then(second.clone()))?;
    let choi = ok(choi_state(&composed))?;
    ensure(choi.tp_defect() < 1e-10, || format!("TP defect {}", choi.tp_defect()))?;
    let d = input.dim();
    let j = choi.density().matrix();
    let mut via_choi = DMatrix::<C64>::zeros(d, d);
    for a in 0..d {
        for b in 0..d {
            via_choi += j.view((a * d, b * d), (d, d)) * input.matrix()[(a, b)] * c(d as f64, 0.0);
        }
    }
    let direct = ok(second.apply_matrix(&ok(first.apply_matrix(input.matrix()))?))?;
    let err = (via_choi - direct).norm();
    ensure(err < 1e-10, || format!("Choi route and direct application differ by {err:e}"))
}

pub fn check_average_fidelity(f1: f64, f2: f64, d: usize) -> Check {
    let (a1, a2) = (average_fidelity(f1, d), average_fidelity(f2, d));
    let mid = average_fidelity(0.5 * (f1 + f2), d);
    ensure((mid - 0.5 * (a1 + a2)).abs() < 1e-12, || "average fidelity is not affine".into())?;
    ensure((f1 < f2) == (a1 < a2) || f1 == f2, || "average fidelity is not order preserving".into())?;
    ensure((average_fidelity(1.0, d) - 1.0).abs() < 1e-15, || "F = 1 does not map to 1".into())
}

// ---- cv_wigner ----

pub fn check_cv_normalization(state: &CvState) -> Check {
    let half = state.extent() + 7.0;
    let norm = ok(integrate_plane(|a| state.wigner(a).unwrap(), half, 1e-6, 1e-5))?.0 / PI;
    ensure((norm - 1.0).abs() < 1e-3, || format!("π⁻¹∫W = {norm}"))?;
    if state.is_pure() {
        let purity = ok(integrate_plane(|a| state.wigner(a).unwrap().powi(2), half, 1e-6, 1e-5))?.0 / PI;
        ensure((purity - 1.0).abs() < 1e-3, || format!("π⁻¹∫W² = {purity}"))?;
    }
    Ok(())
}

pub fn check_parity_unbiased(w: f64, seed: u64) -> Check {
    let mut rng = certkit::rng::stream_rng(seed, 0);
    let (reps, shots) = (2000u64, 100u64);
    let mut sum = 0.0;
    for _ in 0..reps {
        sum += ok(parity_shots(w, shots, &mut rng))?;
    }
    let mean = sum / reps as f64;
    // each shot is ±2 with mean w
    let se = ((4.0 - w * w).max(0.0) / (reps * shots) as f64).sqrt();
    ensure((mean - w).abs() <= 5.0 * se, || format!("parity mean {mean}, W = {w}"))
}

// ---- ham_learn ----

pub fn random_probe<R: Rng + ?Sized>(n: usize, rng: &mut R) -> ProbeState {
    ProbeState(
        (0..n)
            .map(|_| ([Pauli1::X, Pauli1::Y, Pauli1::Z][rng.random_range(0..3)], rng.random::<bool>()))
            .collect(),
    )
}

/// `t·i·tr(ρ[P, A])` from dense matrices for every entry of the system.
pub fn check_symbolic_entries(n: usize, settings: &[Setting], t: f64) -> Check {
    let basis = chain_basis(n, 2);
    let system = ok(assemble_constraints(&basis, settings, t))?;
    let mats: Vec<DMatrix<C64>> = basis.iter().map(pauli_matrix).collect();
    for (r, s) in settings.iter().enumerate() {
        let rho = pure_density(&ok(s.probe.to_product().to_dense())?);
        let a = pauli_matrix(&s.observable);
        for (col, p) in mats.iter().enumerate() {
            let comm = p * &a - &a * p;
            let want = t * (c(0.0, 1.0) * (&rho * comm).trace()).re;
            let got = system.t_matrix[(r, col)];
            ensure((got - want).abs() < 1e-12, || format!("row {r} column {col}: {got} vs dense {want}"))?;
        }
    }
    Ok(())
}

/// Changing a probe site outside `supp(P) ∪ supp(A)` leaves the entry alone.
pub fn check_row_locality<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Check {
    let basis = chain_basis(n, 2);
    let p = &basis[rng.random_range(0..basis.len())];
    let a = &basis[rng.random_range(0..basis.len())];
    let probe = random_probe(n, rng);
    let outside: Vec<usize> = (0..n).filter(|q| p.letter(*q) == Pauli1::I && a.letter(*q) == Pauli1::I).collect();
    if outside.is_empty() {
        return Ok(());
    }
    let mut moved = probe.clone();
    let q = outside[rng.random_range(0..outside.len())];
    moved.0[q] = random_probe(1, rng).0[0];
    let before = ok(commutator_expectation(p, a, &probe.to_product()))?;
    let after = ok(commutator_expectation(p, a, &moved.to_product()))?;
    ensure((before - after).abs() < 1e-12, || format!("entry ({p}, {a}) moved from {before} to {after} when site {q} changed"))
}

/// Exact shifts plus two-point extrapolation recover `h` to `1e-6`.
pub fn check_exact_recovery(n: usize, seed: u64) -> Check {
    let mut config = LearnConfig::new(n, 1e-4, MeasurementNoise::Exact);
    config.richardson = true;
    let exp = ok(LearnExperiment::new(config))?;
    let (h, report) = ok(exp.run_trial(seed, 0))?;
    let err = h.coeffs.iter().zip(&report.estimate).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ensure(err <= 1e-6, || format!("max coefficient error {err:e}"))
}

/// `‖T h̃ - W‖` equals the reported residual.
pub fn check_solver_residual(n: usize, seed: u64) -> Check {
    let basis = chain_basis(n, 2);
    let settings = ok(local_design(n, 2))?;
    let mut system = ok(assemble_constraints(&basis, &settings, 1e-3))?;
    let mut rng = certkit::rng::stream_rng(seed, 0);
    let h = ok(certkit::hamiltonian::random_local_hamiltonian(n, 2, &mut rng, 0.8, 1.2))?;
    ok(system.record(&h, MeasurementNoise::Uniform { eps: 1e-4 }, seed))?;
    let report = ok(solve(&system, Some(&h)))?;
    let est = nalgebra::DVector::from_column_slice(&report.estimate);
    let residual = (&system.t_matrix * est - &system.w).norm();
    ensure((residual - report.residual).abs() <= 1e-12 * (1.0 + residual), || {
        format!("residual {residual} but report says {}", report.residual)
    })?;
    ensure(h.terms == report.terms, || "report basis differs from the model's".into())
}
