//! `socialmesh` - run social-profile-overlay experiments, the scripted
//! demo, the invariant suite, or config validation from the command line.
//!
//! Set `SOCIALMESH_LOG` (e.g. `SOCIALMESH_LOG=debug`) for verbosity.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use socialmesh_core::sim::config::{parse_and_validate, ExperimentKind, ScenarioConfig};
use socialmesh_core::sim::demo::run_demo;
use socialmesh_core::sim::experiments::{invariant_battery, run};
use socialmesh_core::sim::MetricsReport;

#[derive(Parser)]
#[command(
    name = "socialmesh",
    version,
    about = "Deterministic simulator for social profile overlays",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Csv,
    Json,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario config file (JSON); defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Write the report here (atomically); stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: OutputFormat,
}

#[derive(Subcommand)]
enum Command {
    /// Measure directory + profile join time across directory sizes.
    JoinLatency(RunArgs),
    /// Measure profile availability under member churn with the owner offline.
    ChurnAvailability(RunArgs),
    /// Scripted four-peer walkthrough of the full workflow.
    Demo(RunArgs),
    /// Headless property suite; exit code mirrors pass/fail.
    Invariants(RunArgs),
    /// Schema-check a scenario config and list every violation.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("SOCIALMESH_LOG")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::JoinLatency(args) => run_experiment(ExperimentKind::JoinLatency, args),
        Command::ChurnAvailability(args) => run_experiment(ExperimentKind::ChurnAvailability, args),
        Command::Demo(args) => run_demo_command(args),
        Command::Invariants(args) => run_invariants(args),
        Command::Validate { config } => validate(&config),
    }
}

fn load_config(kind: ExperimentKind, args: &RunArgs) -> Result<ScenarioConfig, ExitCode> {
    let mut config = match &args.config {
        None => ScenarioConfig::default_for(kind),
        Some(path) => {
            let text = match std::fs::read_to_string(path) {
                Ok(text) => text,
                Err(err) => {
                    eprintln!("FAIL config: cannot read {}: {err}", path.display());
                    return Err(ExitCode::from(2));
                }
            };
            let value: serde_json::Value = match serde_json::from_str(&text) {
                Ok(value) => value,
                Err(err) => {
                    eprintln!("FAIL config: {} is not valid JSON: {err}", path.display());
                    return Err(ExitCode::from(2));
                }
            };
            match parse_and_validate(&value) {
                Ok(config) => config,
                Err(violations) => {
                    for v in violations {
                        eprintln!("FAIL config.{v}");
                    }
                    return Err(ExitCode::from(2));
                }
            }
        }
    };
    config.experiment = kind;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn emit(report: &MetricsReport, args: &RunArgs) -> Result<(), ExitCode> {
    let body = match args.format {
        OutputFormat::Csv => report.to_csv(),
        OutputFormat::Json => report.to_json_pretty(),
    };
    match &args.out {
        None => {
            print!("{body}");
            Ok(())
        }
        Some(path) => write_atomic(path, body.as_bytes()).map_err(|err| {
            eprintln!("FAIL output: cannot write {}: {err}", path.display());
            ExitCode::from(2)
        }),
    }
}

/// Write via a temp file and rename, so interrupted runs never leave a
/// truncated report behind.
fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
}

fn run_experiment(kind: ExperimentKind, args: RunArgs) -> ExitCode {
    let config = match load_config(kind, &args) {
        Ok(config) => config,
        Err(code) => return code,
    };
    let report = match run(&config) {
        Ok(report) => report,
        Err(err) => {
            eprintln!("FAIL run: {err}");
            return ExitCode::from(2);
        }
    };
    if emit(&report, &args).is_err() {
        return ExitCode::from(2);
    }
    if let Some(out) = &args.out {
        eprintln!(
            "wrote {} ({} rows, experiment {})",
            out.display(),
            report.rows.len(),
            report.experiment
        );
    }
    ExitCode::SUCCESS
}

fn run_demo_command(args: RunArgs) -> ExitCode {
    let config = match load_config(ExperimentKind::Demo, &args) {
        Ok(config) => config,
        Err(code) => return code,
    };
    let demo = run_demo(&config);
    print!("{}", demo.transcript);
    if args.out.is_some() {
        let report = match run(&config) {
            Ok(report) => report,
            Err(err) => {
                eprintln!("FAIL run: {err}");
                return ExitCode::from(2);
            }
        };
        if emit(&report, &args).is_err() {
            return ExitCode::from(2);
        }
    }
    if demo.all_passed() {
        ExitCode::SUCCESS
    } else {
        for assertion in demo.assertions.iter().filter(|a| !a.passed) {
            eprintln!("FAIL {}: {}", assertion.name, assertion.detail);
        }
        ExitCode::FAILURE
    }
}

fn run_invariants(args: RunArgs) -> ExitCode {
    let config = match load_config(ExperimentKind::Invariants, &args) {
        Ok(config) => config,
        Err(code) => return code,
    };
    let checks = invariant_battery(config.seed);
    let mut all_passed = true;
    for check in &checks {
        let verdict = if check.passed { "PASS" } else { "FAIL" };
        println!("{verdict} {}: {}", check.name, check.detail);
        if !check.passed {
            eprintln!("FAIL {}: {}", check.name, check.detail);
            all_passed = false;
        }
    }
    if args.out.is_some() {
        match run(&config) {
            Ok(report) => {
                if emit(&report, &args).is_err() {
                    return ExitCode::from(2);
                }
            }
            Err(err) => {
                eprintln!("FAIL run: {err}");
                return ExitCode::from(2);
            }
        }
    }
    if all_passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn validate(path: &Path) -> ExitCode {
    let text = match std::fs::read_to_string(path) {
        Ok(text) => text,
        Err(err) => {
            eprintln!("FAIL config: cannot read {}: {err}", path.display());
            return ExitCode::from(2);
        }
    };
    let value: serde_json::Value = match serde_json::from_str(&text) {
        Ok(value) => value,
        Err(err) => {
            eprintln!("FAIL config: not valid JSON: {err}");
            return ExitCode::FAILURE;
        }
    };
    match parse_and_validate(&value) {
        Ok(config) => {
            println!(
                "valid: experiment {}, seed {}",
                config.experiment.name(),
                config.seed
            );
            ExitCode::SUCCESS
        }
        Err(violations) => {
            println!("{} violation(s):", violations.len());
            for v in &violations {
                println!("  {v}");
                eprintln!("FAIL config.{v}");
            }
            ExitCode::FAILURE
        }
    }
}
