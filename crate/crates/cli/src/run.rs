use std::fmt::Display;
use std::fs;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use certkit::cv::{error_decay_slope, estimate_fidelity_cv, exact_fidelity, CvOptions, CvState};
use certkit::fidelity::{estimate_with_sampler, plan_budget, ErrorBudget, EstimatorOptions, FidelityReport};
use certkit::hamiltonian::{quadratic_fit, LearnConfig, LearnExperiment, LearnReport, MeasurementNoise};
use certkit::measure::{prepare_sigma, NoiseSpec, ShotAllocation};
use certkit::process::{
    average_fidelity, certify_process_direct, certify_process_product_protocol, choi_fidelity, ChannelModel, ChannelSpec,
};
use certkit::rng::stream_rng;
use certkit::sampler::{RelevanceSampler, TruncationPolicy};
use certkit::state::{StateModel, StateSpec};
use certkit::C64;

use crate::args::*;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, specs or files; exit code 2.
    Config(String),
    /// Failure while computing or writing results; exit code 3.
    Compute(String),
}

impl Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Compute(m) => write!(f, "computation error: {m}"),
        }
    }
}

trait Classify<T> {
    fn cfg(self) -> Result<T, CliError>;
    fn comp(self) -> Result<T, CliError>;
}

impl<T, E: Display> Classify<T> for Result<T, E> {
    fn cfg(self) -> Result<T, CliError> {
        self.map_err(|e| CliError::Config(e.to_string()))
    }
    fn comp(self) -> Result<T, CliError> {
        self.map_err(|e| CliError::Compute(e.to_string()))
    }
}

/// Report payload plus CSV ledgers as `(suffix, bytes)`.
pub struct Output {
    pub config: Value,
    pub report: Value,
    pub warnings: Vec<String>,
    pub ledgers: Vec<(String, Vec<u8>)>,
}

fn to_value<T: Serialize>(v: &T) -> Result<Value, CliError> {
    serde_json::to_value(v).comp()
}

fn csv_bytes<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).comp()?;
    }
    w.into_inner().comp()
}

/// Reads `@path` arguments from disk.
fn resolve(arg: &str) -> Result<String, CliError> {
    match arg.strip_prefix('@') {
        Some(path) => fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {path}: {e}"))),
        None => Ok(arg.to_string()),
    }
}

pub fn parse_state(arg: &str) -> Result<StateModel, CliError> {
    let text = resolve(arg)?;
    let spec: StateSpec = if text.trim_start().starts_with('{') {
        serde_json::from_str(&text).cfg()?
    } else {
        text.parse().cfg()?
    };
    spec.build().cfg()
}

pub fn parse_channel(arg: &str) -> Result<ChannelModel, CliError> {
    let text = resolve(arg)?;
    if text.trim_start().starts_with('{') {
        serde_json::from_str::<ChannelSpec>(&text).cfg()?.into_channel().cfg()
    } else {
        text.parse().cfg()
    }
}

fn budget_from(b: &BudgetArgs, target: &StateModel) -> Result<(ErrorBudget, EstimatorOptions), CliError> {
    let allocation = match (b.exact, b.shots) {
        (true, _) => ShotAllocation::Exact,
        (false, Some(k)) => ShotAllocation::Uniform(k),
        (false, None) => ShotAllocation::InverseSquare,
    };
    let planned = plan_budget(target, b.eps, b.delta).cfg()?;
    let budget = ErrorBudget::new(planned.eps1, planned.eps2, b.delta, b.n1.unwrap_or(planned.n1), allocation).cfg()?;
    let truncation = b.truncate.map(TruncationPolicy::new).transpose().cfg()?;
    Ok((budget, EstimatorOptions { strategy: b.strategy, truncation, max_rejections: b.max_rejections }))
}

fn range_warning(report: &FidelityReport, warnings: &mut Vec<String>) {
    if !(0.0..=1.0).contains(&report.estimate) {
        warnings.push(format!("estimate {} lies outside [0, 1]; reported unclipped", report.estimate));
    }
}

#[derive(Serialize)]
struct StateCertification {
    #[serde(flatten)]
    report: FidelityReport,
    /// `⟨ψ|σ|ψ⟩` from dense matrices, when small enough.
    exact_fidelity: Option<f64>,
}

fn sample_ledger(report: &mut FidelityReport) -> Result<Vec<u8>, CliError> {
    let samples = std::mem::take(&mut report.samples);
    csv_bytes(samples)
}

pub fn certify_state(a: &CertifyState) -> Result<Output, CliError> {
    let target = parse_state(&a.target)?;
    let actual = match &a.actual {
        Some(s) => parse_state(s)?,
        None => target.clone(),
    };
    if actual.n() != target.n() {
        return Err(CliError::Config(format!("target has {} qubits, actual {}", target.n(), actual.n())));
    }
    let noise: NoiseSpec = a.noise.parse().cfg()?;
    noise.validate().cfg()?;
    let (budget, options) = budget_from(&a.budget, &target)?;
    let sampler = RelevanceSampler::new(&target, options.strategy).cfg()?;
    let seed = a.budget.seed;
    let (mut report, exact) = if noise == NoiseSpec::None {
        let exact = match (target.to_dense_pure(), actual.to_dense()) {
            (Ok(psi), Ok(sigma)) => Some(sigma.to_density().fidelity_with_pure(&psi).comp()?),
            _ => None,
        };
        (estimate_with_sampler(&sampler, &actual, &budget, &options, seed).comp()?, exact)
    } else {
        let sigma = prepare_sigma(&actual, &noise).comp()?;
        let exact = sigma.fidelity_with_pure(&target.to_dense_pure().comp()?).comp()?;
        (estimate_with_sampler(&sampler, &sigma, &budget, &options, seed).comp()?, Some(exact))
    };
    let mut warnings = Vec::new();
    range_warning(&report, &mut warnings);
    let ledger = sample_ledger(&mut report)?;
    Ok(Output {
        config: to_value(a)?,
        report: to_value(&StateCertification { report, exact_fidelity: exact })?,
        warnings,
        ledgers: vec![("samples".into(), ledger)],
    })
}

#[derive(Serialize)]
struct ProcessCertification {
    #[serde(flatten)]
    report: FidelityReport,
    exact_choi_fidelity: f64,
    exact_average_fidelity: f64,
}

pub fn certify_process(a: &CertifyProcess) -> Result<Output, CliError> {
    let target = parse_channel(&a.target)?;
    let mut actual = match &a.actual {
        Some(s) => parse_channel(s)?,
        None => target.clone(),
    };
    if actual.n() != target.n() {
        return Err(CliError::Config(format!("target acts on {} qubits, actual on {}", target.n(), actual.n())));
    }
    let noise: NoiseSpec = a.noise.parse().cfg()?;
    if noise != NoiseSpec::None {
        actual = actual.then(ChannelModel::noise(target.n(), noise).cfg()?).cfg()?;
    }
    let choi_target = certkit::process::target_choi_model(&target).cfg()?;
    let (budget, options) = budget_from(&a.budget, &choi_target)?;
    RelevanceSampler::new(&choi_target, options.strategy).cfg()?;
    let seed = a.budget.seed;
    let mut report = match a.protocol.as_str() {
        "direct" => certify_process_direct(&target, &actual, &budget, &options, seed),
        _ => certify_process_product_protocol(&target, &actual, &budget, &options, seed),
    }
    .comp()?;
    let exact = choi_fidelity(&target, &actual).comp()?;
    let mut warnings = Vec::new();
    range_warning(&report, &mut warnings);
    let ledger = sample_ledger(&mut report)?;
    Ok(Output {
        config: to_value(a)?,
        report: to_value(&ProcessCertification {
            report,
            exact_choi_fidelity: exact,
            exact_average_fidelity: average_fidelity(exact, 1 << target.n()),
        })?,
        warnings,
        ledgers: vec![("samples".into(), ledger)],
    })
}

pub fn certify_cv(a: &CertifyCv) -> Result<Output, CliError> {
    let rho: CvState = a.target.parse().cfg()?;
    let sigma: CvState = a.actual.parse().cfg()?;
    let options = CvOptions { n_points: a.points, shots_per_point: a.shots, cutoff: a.cutoff, max_proposals: a.max_proposals };
    let mut report = estimate_fidelity_cv(&rho, &sigma, &options, a.seed).comp()?;
    let points = std::mem::take(&mut report.points);
    let mut warnings = Vec::new();
    if !(0.0..=1.0).contains(&report.estimate) {
        warnings.push(format!("estimate {} lies outside [0, 1]; reported unclipped", report.estimate));
    }
    Ok(Output { config: to_value(a)?, report: to_value(&report)?, warnings, ledgers: vec![("points".into(), csv_bytes(points)?)] })
}

fn learn_config(n: usize, l: &LearnArgs) -> Result<LearnConfig, CliError> {
    if l.low > l.high {
        return Err(CliError::Config(format!("low {} exceeds high {}", l.low, l.high)));
    }
    let noise = match (l.noise_eps, l.noise_kind.as_str()) {
        (e, _) if e == 0.0 => MeasurementNoise::Exact,
        (eps, "gaussian") => MeasurementNoise::Gaussian { sigma: eps },
        (eps, _) => MeasurementNoise::Uniform { eps },
    };
    if l.window > n {
        return Err(CliError::Config(format!("window {} exceeds chain length {n}", l.window)));
    }
    Ok(LearnConfig { n, k: l.k, t: l.t, noise, window: l.window, low: l.low, high: l.high, richardson: l.richardson })
}

#[derive(Serialize)]
struct TrialRow {
    n: usize,
    trial: usize,
    rms_error: f64,
    mean_scaling_factor: f64,
    rank: usize,
    residual: f64,
}

#[derive(Serialize)]
struct ScalingRow {
    n: usize,
    term: String,
    scaling_factor: f64,
}

#[derive(Serialize)]
struct LearnSummary {
    n: usize,
    rows: usize,
    columns: usize,
    rank: usize,
    trials: usize,
    mean_rms_error: f64,
    std_rms_error: f64,
    mean_scaling_factor: f64,
    total_scaling_factor: f64,
    sigma_max: f64,
    sigma_min_kept: f64,
}

struct LearnRun {
    summary: LearnSummary,
    trials: Vec<TrialRow>,
    scaling: Vec<ScalingRow>,
    warnings: Vec<String>,
}

fn learn_run(config: LearnConfig, trials: usize, seed: u64) -> Result<LearnRun, CliError> {
    let n = config.n;
    let exp = LearnExperiment::new(config).cfg()?;
    let reports: Vec<LearnReport> = exp.run(seed, trials as u64).comp()?;
    let rms: Vec<f64> = reports.iter().map(|r| r.rms_error.unwrap_or(f64::NAN)).collect();
    let mean = rms.iter().sum::<f64>() / rms.len() as f64;
    let var = rms.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (rms.len().max(2) - 1) as f64;
    let first = &reports[0];
    let mut warnings: Vec<String> = reports.iter().flat_map(|r| r.warnings.iter().cloned()).collect();
    warnings.sort();
    warnings.dedup();
    Ok(LearnRun {
        summary: LearnSummary {
            n,
            rows: first.rows,
            columns: first.columns,
            rank: first.rank,
            trials,
            mean_rms_error: mean,
            std_rms_error: var.sqrt(),
            mean_scaling_factor: first.mean_scaling_factor(),
            total_scaling_factor: first.scaling_factors.iter().sum(),
            sigma_max: first.sigma_max,
            sigma_min_kept: first.sigma_min_kept,
        },
        trials: reports
            .iter()
            .enumerate()
            .map(|(k, r)| TrialRow {
                n,
                trial: k,
                rms_error: rms[k],
                mean_scaling_factor: r.mean_scaling_factor(),
                rank: r.rank,
                residual: r.residual,
            })
            .collect(),
        scaling: first
            .terms
            .iter()
            .zip(&first.scaling_factors)
            .map(|(p, &s)| ScalingRow { n, term: p.to_string(), scaling_factor: s })
            .collect(),
        warnings,
    })
}

pub fn learn_hamiltonian(a: &LearnHamiltonian) -> Result<Output, CliError> {
    let run = learn_run(learn_config(a.n as usize, &a.learn)?, a.learn.trials, a.learn.seed)?;
    Ok(Output {
        config: to_value(a)?,
        report: to_value(&run.summary)?,
        warnings: run.warnings,
        ledgers: vec![("trials".into(), csv_bytes(run.trials)?), ("scaling".into(), csv_bytes(run.scaling)?)],
    })
}

#[derive(Serialize)]
struct DrawRow {
    k: usize,
    pauli: String,
    rho: f64,
    weight: f64,
    rejected: usize,
}

pub fn sample_relevance(a: &SampleRelevance) -> Result<Output, CliError> {
    let target = parse_state(&a.target)?;
    let sampler = RelevanceSampler::new(&target, a.strategy).cfg()?;
    let policy = a.truncate.map(TruncationPolicy::new).transpose().cfg()?;
    let rows: Vec<DrawRow> = (0..a.samples)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream_rng(a.seed, k as u64);
            let (s, rejected) = match &policy {
                Some(p) => sampler.draw_truncated(p, a.max_rejections, &mut rng)?,
                None => (sampler.draw(&mut rng)?, 0),
            };
            Ok(DrawRow { k, pauli: s.pauli.to_string(), rho: s.rho, weight: s.weight, rejected })
        })
        .collect::<certkit::Result<_>>()
        .comp()?;
    let mut distinct: Vec<&str> = rows.iter().map(|r| r.pauli.as_str()).collect();
    distinct.sort_unstable();
    distinct.dedup();
    let report = json!({
        "n": target.n(),
        "strategy": sampler.strategy(),
        "samples": rows.len(),
        "distinct_settings": distinct.len(),
        "rejected_draws": rows.iter().map(|r| r.rejected).sum::<usize>(),
        "truncation_cutoff": policy.map(|p| p.cutoff(target.n())),
    });
    Ok(Output { config: to_value(a)?, report, warnings: Vec::new(), ledgers: vec![("draws".into(), csv_bytes(rows)?)] })
}

#[derive(Serialize)]
struct ErrorRow {
    run: usize,
    n: usize,
    estimate: f64,
    abs_error: f64,
}

#[derive(Serialize)]
struct PointRow {
    run: usize,
    k: usize,
    re: f64,
    im: f64,
    w_rho: f64,
    w_sigma: f64,
}

pub fn repro_fig_wigner(a: &ReproFigWigner) -> Result<Output, CliError> {
    let alpha = C64::new(a.alpha, 0.0);
    let (rho, sigma) = (CvState::Cat(alpha), CvState::Mixture(alpha));
    let exact = exact_fidelity(&rho, &sigma).comp()?;
    let options = CvOptions { n_points: a.points, shots_per_point: a.shots, cutoff: a.cutoff, ..CvOptions::default() };
    let mut errors = Vec::new();
    let mut points = Vec::new();
    let mut runs = Vec::new();
    let mut truncation_bound = 0.0;
    for r in 0..a.runs {
        let rep = estimate_fidelity_cv(&rho, &sigma, &options, a.seed.wrapping_add(r as u64)).comp()?;
        truncation_bound = rep.truncation_bound;
        let running = rep.running_estimates();
        errors.extend(running.iter().enumerate().map(|(i, &e)| ErrorRow { run: r, n: i + 1, estimate: e, abs_error: (e - exact).abs() }));
        points.extend(rep.points.iter().map(|p| PointRow { run: r, k: p.k, re: p.re, im: p.im, w_rho: p.w_rho, w_sigma: p.w_sigma }));
        runs.push(running);
    }
    let final_errors: Vec<f64> = runs.iter().map(|r| (r[r.len() - 1] - exact).abs()).collect();
    let slope = if a.points >= 20 { Some(error_decay_slope(&runs, exact, 10, a.points, a.grid).comp()?) } else { None };
    let report = json!({
        "exact": exact,
        "final_estimates": runs.iter().map(|r| r[r.len() - 1]).collect::<Vec<_>>(),
        "final_abs_errors": final_errors,
        "max_final_abs_error": final_errors.iter().cloned().fold(0.0, f64::max),
        "decay_slope": slope,
        "truncation_bound": truncation_bound,
    });
    Ok(Output {
        config: to_value(a)?,
        report,
        warnings: Vec::new(),
        ledgers: vec![("errors".into(), csv_bytes(errors)?), ("points".into(), csv_bytes(points)?)],
    })
}

pub fn repro_fig_rms(a: &ReproFigRms) -> Result<Output, CliError> {
    if a.n_min > a.n_max {
        return Err(CliError::Config(format!("n-min {} exceeds n-max {}", a.n_min, a.n_max)));
    }
    let mut summaries = Vec::new();
    let mut trials = Vec::new();
    let mut scaling = Vec::new();
    let mut warnings = Vec::new();
    for n in a.n_min as usize..=a.n_max as usize {
        let run = learn_run(learn_config(n, &a.learn)?, a.learn.trials, a.learn.seed)?;
        summaries.push(run.summary);
        trials.extend(run.trials);
        scaling.extend(run.scaling);
        warnings.extend(run.warnings.into_iter().map(|w| format!("n={n}: {w}")));
    }
    let ns: Vec<f64> = summaries.iter().map(|s| s.n as f64).collect();
    let fit = |f: fn(&LearnSummary) -> f64| quadratic_fit(&ns, &summaries.iter().map(f).collect::<Vec<_>>()).ok();
    let report = json!({
        "per_n": summaries,
        "mean_scaling_quadratic_fit": fit(|s| s.mean_scaling_factor),
        "total_scaling_quadratic_fit": fit(|s| s.total_scaling_factor),
    });
    Ok(Output {
        config: to_value(a)?,
        report,
        warnings,
        ledgers: vec![("trials".into(), csv_bytes(trials)?), ("scaling".into(), csv_bytes(scaling)?)],
    })
}

pub fn dispatch(cmd: &Command) -> Result<Output, CliError> {
    match cmd {
        Command::CertifyState(a) => certify_state(a),
        Command::CertifyProcess(a) => certify_process(a),
        Command::CertifyCv(a) => certify_cv(a),
        Command::LearnHamiltonian(a) => learn_hamiltonian(a),
        Command::SampleRelevance(a) => sample_relevance(a),
        Command::ReproFigWigner(a) => repro_fig_wigner(a),
        Command::ReproFigRms(a) => repro_fig_rms(a),
    }
}
