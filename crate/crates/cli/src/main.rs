use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use sandwich_cli::{default_verify_config, run, run_builtin_verify, CliError, Command, ExperimentConfig, Fault, RunOptions};
use sandwich_core::sampler::Strategy;

#[derive(Parser)]
#[command(name = "sandwich", version, about = "Maximum-entropy sampling and sandwich coupling experiments")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    trials: Option<u64>,
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    #[arg(long, global = true, value_enum)]
    strategy: Option<StrategyArg>,
    /// Worker threads. Outputs do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Permit the approximate mcmc strategy.
    #[arg(long, global = true)]
    allow_approx: bool,
    #[arg(long, global = true, hide = true, value_enum)]
    inject_fault: Option<FaultArg>,
}

#[derive(Subcommand, Clone, Copy)]
enum Sub {
    /// Solve the max-entropy program; writes solution.json, diagnostics.json.
    Solve,
    /// Geometry, bounds and unimodality of the optimizer.
    Diagnose,
    /// Draw graphs uniformly from the set; writes graphs.txt, profiles.csv.
    Sample,
    /// Run sandwich coupling trials; writes trials.csv, couple_summary.json.
    Couple,
    /// Exact property checks; without --config runs the built-in suite.
    Verify,
}

#[derive(ValueEnum, Clone, Copy)]
enum StrategyArg {
    Enum,
    Dp,
    Mcmc,
}

#[derive(ValueEnum, Clone, Copy)]
enum FaultArg {
    CorruptEnt,
}

fn apply_overrides(config: &mut ExperimentConfig, cli: &Cli) {
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    if let Some(t) = cli.trials {
        config.trials = t;
    }
    if let Some(e) = cli.epsilon {
        config.epsilon = Some(e);
    }
    if let Some(s) = cli.strategy {
        config.strategy = match s {
            StrategyArg::Enum => Strategy::Enumeration,
            StrategyArg::Dp => Strategy::BudgetDp,
            StrategyArg::Mcmc => Strategy::Mcmc,
        };
    }
    if cli.allow_approx {
        config.allow_approx = true;
    }
    if let Some(o) = &cli.out {
        config.out = Some(o.clone());
    }
}

fn execute(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let command = match cli.command {
        Sub::Solve => Command::Solve,
        Sub::Diagnose => Command::Diagnose,
        Sub::Sample => Command::Sample,
        Sub::Couple => Command::Couple,
        Sub::Verify => Command::Verify,
    };
    let opts = RunOptions {
        jobs: cli.jobs,
        fault: cli.inject_fault.map(|FaultArg::CorruptEnt| Fault::CorruptEnt),
    };
    match &cli.config {
        Some(path) => {
            let mut config = ExperimentConfig::load(path)?;
            apply_overrides(&mut config, cli);
            run(command, Some(&config), &opts)
        }
        None if command == Command::Verify => {
            let mut config = default_verify_config();
            apply_overrides(&mut config, cli);
            run_builtin_verify(&config, &opts)
        }
        None => Err(CliError::Config(format!("{}: --config is required", command.name()))),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("sandwich: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
