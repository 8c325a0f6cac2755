mod args;
mod config;
mod envelope;
mod run;

use std::ffi::OsString;
use std::fs;
use std::process::ExitCode;
use std::time::Instant;

use clap::error::ErrorKind;
use clap::Parser;

use args::Cli;
use envelope::ResultEnvelope;
use run::CliError;

const EXIT_CONFIG: u8 = 2;
const EXIT_COMPUTE: u8 = 3;

fn thread_count(flag: Option<u16>) -> Result<Option<usize>, CliError> {
    if let Some(t) = flag {
        return Ok(Some(t as usize));
    }
    match std::env::var("CERTKIT_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(t) if t > 0 => Ok(Some(t)),
            _ => Err(CliError::Config(format!("CERTKIT_THREADS must be a positive integer, got {v:?}"))),
        },
        Err(_) => Ok(None),
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let threads = thread_count(cli.threads)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Compute(e.to_string()))?;
    let name = cli.command.name();
    let start = Instant::now();
    let out = pool.install(|| run::dispatch(&cli.command))?;
    let mut env = ResultEnvelope::new(name, out.config, out.report);
    env.warnings = out.warnings;
    if !cli.no_timing {
        env.wall_clock_seconds = Some(start.elapsed().as_secs_f64());
    }
    for w in &env.warnings {
        eprintln!("warning: {w}");
    }
    let io = |e: std::io::Error| CliError::Compute(format!("writing results: {e}"));
    match &cli.out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(io)?;
            for (suffix, bytes) in &out.ledgers {
                let file = format!("{name}-{suffix}.csv");
                fs::write(dir.join(&file), bytes).map_err(io)?;
                env.ledgers.push(file);
            }
            let text = serde_json::to_string_pretty(&env).map_err(|e| CliError::Compute(e.to_string()))?;
            fs::write(dir.join(format!("{name}.json")), text + "\n").map_err(io)?;
        }
        None => {
            let text = serde_json::to_string_pretty(&env).map_err(|e| CliError::Compute(e.to_string()))?;
            println!("{text}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let argv: Vec<OsString> = std::env::args_os().collect();
    let argv = match config::expand_config(argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("configuration error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_CONFIG),
            };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(match e {
                CliError::Config(_) => EXIT_CONFIG,
                CliError::Compute(_) => EXIT_COMPUTE,
            })
        }
    }
}
