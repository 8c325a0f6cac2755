use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use certkit::sampler::SamplerStrategy;

#[derive(Parser, Debug)]
#[command(name = "certkit", version, about = "Monte Carlo certification of quantum states, processes and Hamiltonians")]
#[command(args_override_self = true)]
pub struct Cli {
    /// key=value file of defaults; flags given on the command line win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Worker threads (default: CERTKIT_THREADS, then all cores).
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    pub threads: Option<u16>,
    /// Directory for the JSON envelope and CSV ledgers. Without it the
    /// envelope goes to stdout.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Leave wall-clock time out of the envelope so reruns are byte-identical.
    #[arg(long, global = true)]
    pub no_timing: bool,
    #[command(subcommand)]
    pub command: Command,
}

pub const SUBCOMMANDS: [&str; 7] = [
    "certify-state",
    "certify-process",
    "certify-cv",
    "learn-hamiltonian",
    "sample-relevance",
    "repro-fig-wigner",
    "repro-fig-rms",
];

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Estimate the fidelity of a noisy preparation with a pure target state.
    CertifyState(CertifyState),
    /// Estimate the Choi fidelity of an implemented channel with a target.
    CertifyProcess(CertifyProcess),
    /// Estimate a single-mode fidelity from Wigner-function samples.
    CertifyCv(CertifyCv),
    /// Learn random chain Hamiltonians from short-time dynamics.
    LearnHamiltonian(LearnHamiltonian),
    /// Draw Pauli settings from the relevance distribution of a state.
    SampleRelevance(SampleRelevance),
    /// Cat state against its incoherent mixture: error against sample count.
    ReproFigWigner(ReproFigWigner),
    /// Learning error and scaling factors against chain length.
    ReproFigRms(ReproFigRms),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::CertifyState(_) => SUBCOMMANDS[0],
            Command::CertifyProcess(_) => SUBCOMMANDS[1],
            Command::CertifyCv(_) => SUBCOMMANDS[2],
            Command::LearnHamiltonian(_) => SUBCOMMANDS[3],
            Command::SampleRelevance(_) => SUBCOMMANDS[4],
            Command::ReproFigWigner(_) => SUBCOMMANDS[5],
            Command::ReproFigRms(_) => SUBCOMMANDS[6],
        }
    }
}

fn positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a positive number, got {s:?}")),
    }
}

fn non_negative(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a number >= 0, got {s:?}")),
    }
}

fn probability(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v < 1.0 => Ok(v),
        _ => Err(format!("expected a number in (0, 1), got {s:?}")),
    }
}

fn count(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(v) if v > 0 => Ok(v),
        _ => Err(format!("expected a positive integer, got {s:?}")),
    }
}

fn strategy(s: &str) -> Result<SamplerStrategy, String> {
    Ok(match s {
        "auto" => SamplerStrategy::Auto,
        "stabilizer" => SamplerStrategy::Stabilizer,
        "conditional" => SamplerStrategy::Conditional,
        "brute-force" => SamplerStrategy::BruteForce,
        _ => return Err(format!("unknown strategy {s:?} (auto, stabilizer, conditional, brute-force)")),
    })
}

/// Accuracy, confidence and sampling flags shared by the qubit estimators.
#[derive(Args, Debug, Serialize)]
pub struct BudgetArgs {
    /// Total additive accuracy, split evenly between sampling and shot noise.
    #[arg(long, default_value = "0.1", value_parser = positive)]
    pub eps: f64,
    /// Failure probability.
    #[arg(long, default_value = "0.1", value_parser = probability)]
    pub delta: f64,
    /// Override the planned number of sampled settings.
    #[arg(long, value_parser = count)]
    pub n1: Option<usize>,
    /// Fixed shots per setting instead of the 1/ρ² rule.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..), conflicts_with = "exact")]
    pub shots: Option<u64>,
    /// Use exact expectations (no shot noise).
    #[arg(long)]
    pub exact: bool,
    /// auto, stabilizer, conditional or brute-force.
    #[arg(long, default_value = "auto", value_parser = strategy)]
    pub strategy: SamplerStrategy,
    /// Discard settings with |ρ_i| below d^-(1+ε)/2 for this ε.
    #[arg(long, value_parser = positive)]
    pub truncate: Option<f64>,
    #[arg(long, default_value = "100000", value_parser = count)]
    pub max_rejections: usize,
    #[arg(long, default_value = "0")]
    pub seed: u64,
}

#[derive(Args, Debug, Serialize)]
pub struct CertifyState {
    /// Target state: ghz:4, cluster:5[:periodic], w:3, t:2, product:0,+,
    /// random:3:SEED, a JSON descriptor, or @file.json.
    #[arg(long)]
    pub target: String,
    /// State actually prepared before noise (default: the target).
    #[arg(long)]
    pub actual: Option<String>,
    /// none, depolarizing:p, local-depolarizing:p, dephasing:p, overrotation:θ.
    #[arg(long, default_value = "none")]
    pub noise: String,
    #[command(flatten)]
    #[serde(flatten)]
    pub budget: BudgetArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct CertifyProcess {
    /// Target channel: cnot, h, rx:θ, clifford:2:h0,cnot0-1, a JSON channel
    /// spec, or @file.json.
    #[arg(long)]
    pub target: String,
    /// Implemented channel before noise (default: the target).
    #[arg(long)]
    pub actual: Option<String>,
    /// Noise applied after the implemented channel.
    #[arg(long, default_value = "none")]
    pub noise: String,
    /// product (product inputs, local measurements) or direct (Choi state).
    #[arg(long, default_value = "product", value_parser = ["product", "direct"])]
    pub protocol: String,
    #[command(flatten)]
    #[serde(flatten)]
    pub budget: BudgetArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct CertifyCv {
    /// coherent:a, cat:a, mixture:a, fock:k, amplitudes as `re,im`, with an
    /// optional `:fock` suffix to go through the truncated Fock basis.
    #[arg(long)]
    pub target: String,
    #[arg(long)]
    pub actual: String,
    #[arg(long, default_value = "1000", value_parser = count)]
    pub points: usize,
    /// Parity shots per point; 0 uses exact Wigner values.
    #[arg(long, default_value = "200")]
    pub shots: u64,
    /// Points with |W_ρ| below this are skipped.
    #[arg(long, default_value = "1e-3", value_parser = non_negative)]
    pub cutoff: f64,
    #[arg(long, default_value = "1000000", value_parser = count)]
    pub max_proposals: usize,
    #[arg(long, default_value = "0")]
    pub seed: u64,
}

/// Shared flags of the learning experiments.
#[derive(Args, Debug, Serialize)]
pub struct LearnArgs {
    /// Evolution time.
    #[arg(long, default_value = "1e-3", value_parser = positive)]
    pub t: f64,
    /// Measurement precision ε of each shift; 0 is noiseless.
    #[arg(long, default_value = "1e-4", value_parser = non_negative)]
    pub noise_eps: f64,
    /// uniform on [-ε, ε] or gaussian with σ = ε.
    #[arg(long, default_value = "uniform", value_parser = ["uniform", "gaussian"])]
    pub noise_kind: String,
    #[arg(long, default_value = "50", value_parser = count)]
    pub trials: usize,
    /// Sites varied around each observable.
    #[arg(long, default_value = "2", value_parser = count)]
    pub window: usize,
    /// Term locality.
    #[arg(long, default_value = "2", value_parser = count)]
    pub k: usize,
    #[arg(long, default_value = "0.8", value_parser = non_negative)]
    pub low: f64,
    #[arg(long, default_value = "1.2", value_parser = non_negative)]
    pub high: f64,
    /// Combine runs at t and t/2 to cancel the first-order bias.
    #[arg(long)]
    pub richardson: bool,
    #[arg(long, default_value = "0")]
    pub seed: u64,
}

#[derive(Args, Debug, Serialize)]
pub struct LearnHamiltonian {
    /// Chain length.
    #[arg(long, value_parser = clap::value_parser!(u32).range(2..=12))]
    pub n: u32,
    #[command(flatten)]
    #[serde(flatten)]
    pub learn: LearnArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct SampleRelevance {
    #[arg(long)]
    pub target: String,
    #[arg(long, default_value = "1000", value_parser = count)]
    pub samples: usize,
    #[arg(long, default_value = "auto", value_parser = strategy)]
    pub strategy: SamplerStrategy,
    #[arg(long, value_parser = positive)]
    pub truncate: Option<f64>,
    #[arg(long, default_value = "100000", value_parser = count)]
    pub max_rejections: usize,
    #[arg(long, default_value = "0")]
    pub seed: u64,
}

#[derive(Args, Debug, Serialize)]
pub struct ReproFigWigner {
    /// Real cat amplitude.
    #[arg(long, default_value = "3", value_parser = positive)]
    pub alpha: f64,
    #[arg(long, default_value = "5", value_parser = count)]
    pub runs: usize,
    #[arg(long, default_value = "1000", value_parser = count)]
    pub points: usize,
    #[arg(long, default_value = "200")]
    pub shots: u64,
    #[arg(long, default_value = "1e-3", value_parser = non_negative)]
    pub cutoff: f64,
    /// Log-spaced sample counts used for the decay fit.
    #[arg(long, default_value = "20", value_parser = count)]
    pub grid: usize,
    /// Run r uses seed + r.
    #[arg(long, default_value = "1")]
    pub seed: u64,
}

#[derive(Args, Debug, Serialize)]
pub struct ReproFigRms {
    #[arg(long, default_value = "3", value_parser = clap::value_parser!(u32).range(2..=12))]
    pub n_min: u32,
    #[arg(long, default_value = "6", value_parser = clap::value_parser!(u32).range(2..=12))]
    pub n_max: u32,
    #[command(flatten)]
    #[serde(flatten)]
    pub learn: LearnArgs,
}
