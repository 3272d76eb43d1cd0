//! Command-line front end.
//!
//! Exit codes: 0 success, 1 divergence under `--fail-on-divergence` (or a
//! failed self-test / I/O error), 2 configuration error.

pub mod config;
pub mod output;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::MfapcError;
use crate::simulation::{lambda_sweep, run_closed_loop_with, Plant, RunResult};
use config::{parse_list, ConfigError, ExperimentSpec};
use output::{write_summary, write_trace_csv, LabeledRun};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "mfapc", version, about = "Model-free adaptive predictive control benchmarks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one experiment and write its trace.
    Run {
        /// Config file or bundled preset name.
        config: String,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run several experiments on the same plant and reference.
    Compare {
        #[arg(required = true, num_args = 1..)]
        configs: Vec<String>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Repeat one experiment over a list of lambda values.
    Sweep {
        config: String,
        /// Comma-separated lambda values.
        #[arg(long, value_name = "LIST")]
        lambda: String,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run the built-in consistency suites.
    Selftest,
    /// List the bundled presets.
    Presets,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Override the step count of every experiment.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Trace CSV destination; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Exit with status 1 if any run diverges.
    #[arg(long)]
    pub fail_on_divergence: bool,
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Run(MfapcError),
    Io(io::Error),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        Self::Config(e.0)
    }
}

impl From<MfapcError> for CliError {
    fn from(e: MfapcError) -> Self {
        match e {
            MfapcError::InvalidConfig(msg) => Self::Config(msg),
            other => Self::Run(other),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        Self::Io(e)
    }
}

pub fn main_with(cli: Cli) -> ExitCode {
    let result = match cli.command {
        Command::Run { config, common } => cmd_run(&config, &common),
        Command::Compare { configs, common } => cmd_compare(&configs, &common),
        Command::Sweep { config, lambda, common } => cmd_sweep(&config, &lambda, &common),
        Command::Selftest => Ok(cmd_selftest()),
        Command::Presets => {
            for (name, _) in config::PRESETS {
                println!("{name}");
            }
            Ok(EXIT_OK)
        }
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(CliError::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(CliError::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_FAILURE)
        }
        Err(CliError::Io(e)) => {
            eprintln!("i/o error: {e}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}

fn load(source: &str, common: &CommonArgs) -> Result<ExperimentSpec, CliError> {
    let mut spec = ExperimentSpec::load(source)?;
    if let Some(steps) = common.steps {
        if steps == 0 {
            return Err(CliError::Config("--steps must be positive".into()));
        }
        spec.steps = steps;
    }
    Ok(spec)
}

fn execute(spec: &ExperimentSpec) -> Result<RunResult, CliError> {
    let plant = Plant::new(spec.plant.clone())?;
    Ok(run_closed_loop_with(
        plant,
        &spec.reference,
        &spec.controller,
        spec.variant,
        spec.steps,
        &spec.options,
    )?)
}

// Trace goes to --out or stdout; the summary to stdout, or stderr when stdout carries the trace.
fn emit(runs: &[LabeledRun<'_>], with_run_id: bool, common: &CommonArgs) -> Result<u8, CliError> {
    match &common.out {
        Some(path) => {
            let mut file = BufWriter::new(File::create(path)?);
            write_trace_csv(&mut file, runs, with_run_id)?;
            file.flush()?;
            write_summary(&mut io::stdout().lock(), runs)?;
        }
        None => {
            let mut stdout = BufWriter::new(io::stdout().lock());
            write_trace_csv(&mut stdout, runs, with_run_id)?;
            stdout.flush()?;
            write_summary(&mut io::stderr().lock(), runs)?;
        }
    }
    let diverged = runs.iter().any(|r| r.result.metrics.diverged);
    Ok(if diverged && common.fail_on_divergence {
        EXIT_FAILURE
    } else {
        EXIT_OK
    })
}

fn cmd_run(source: &str, common: &CommonArgs) -> Result<u8, CliError> {
    let spec = load(source, common)?;
    let result = execute(&spec)?;
    emit(&[LabeledRun::new(&spec.name, &result)], false, common)
}

fn unique_ids(names: &[&str]) -> Vec<String> {
    names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let seen = names[..i].iter().filter(|n| *n == name).count();
            if seen == 0 {
                name.to_string()
            } else {
                format!("{name}#{}", seen + 1)
            }
        })
        .collect()
}

fn cmd_compare(sources: &[String], common: &CommonArgs) -> Result<u8, CliError> {
    let specs = sources
        .iter()
        .map(|s| load(s, common))
        .collect::<Result<Vec<_>, _>>()?;
    let first = &specs[0];
    for spec in &specs[1..] {
        if spec.plant != first.plant || spec.reference != first.reference || spec.steps != first.steps {
            return Err(CliError::Config(format!(
                "`{}` and `{}` differ in plant, reference or steps",
                first.name, spec.name
            )));
        }
    }
    let results = specs.iter().map(execute).collect::<Result<Vec<_>, _>>()?;
    let ids = unique_ids(&specs.iter().map(|s| s.name.as_str()).collect::<Vec<_>>());
    let runs: Vec<_> = ids.iter().zip(&results).map(|(id, r)| LabeledRun::new(id, r)).collect();
    emit(&runs, true, common)
}

fn cmd_sweep(source: &str, lambdas: &str, common: &CommonArgs) -> Result<u8, CliError> {
    let spec = load(source, common)?;
    let lambdas = parse_list(lambdas)
        .ok_or_else(|| CliError::Config(format!("--lambda expects a comma-separated list, got `{lambdas}`")))?;
    let plant = Plant::new(spec.plant.clone())?;
    for &lambda in &lambdas {
        let mut cfg = spec.controller.clone();
        cfg.lambda = lambda;
        spec.variant.check(&cfg)?;
    }
    let results = lambda_sweep(
        &plant,
        &spec.reference,
        &spec.controller,
        spec.variant,
        &lambdas,
        spec.steps,
        &spec.options,
    )?;
    let ids: Vec<String> = lambdas.iter().map(|l| format!("{}:lambda={l}", spec.name)).collect();
    let runs: Vec<_> = ids.iter().zip(&results).map(|(id, r)| LabeledRun::new(id, r)).collect();
    emit(&runs, true, common)
}

fn cmd_selftest() -> u8 {
    let reports = crate::selftest::run_all();
    for r in &reports {
        println!("{}\t{}\t{}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
    }
    if reports.iter().all(|r| r.passed) {
        EXIT_OK
    } else {
        EXIT_FAILURE
    }
}
