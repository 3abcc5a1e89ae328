use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pinning_cli::config::{Config, Experiment};
use pinning_cli::experiments::{list_experiments, run};
use pinning_cli::output::write_outcome;
use pinning_cli::CliError;

/// Output directory override, the only setting read from the environment.
const OUT_ENV: &str = "PINNING_OUT";

#[derive(Parser)]
#[command(name = "pinning", version, about = "Pinning approximations of Brownian motion on manifolds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML config merged over the experiment defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default `out/<experiment>`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Exit with status 1 when an acceptance threshold is missed.
    #[arg(long, global = true)]
    strict: bool,
    /// Overrides `mc.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: config `threads`, else all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    WickCheck,
    ChernoffCheck,
    HessianLimit,
    NormalizationCheck,
    SamplePinned,
    CompareDensity,
    BridgeStat,
    /// Print the experiments and what each one checks.
    List,
}

impl Command {
    fn experiment(self) -> Option<Experiment> {
        Some(match self {
            Command::WickCheck => Experiment::WickCheck,
            Command::ChernoffCheck => Experiment::ChernoffCheck,
            Command::HessianLimit => Experiment::HessianLimit,
            Command::NormalizationCheck => Experiment::NormalizationCheck,
            Command::SamplePinned => Experiment::SamplePinned,
            Command::CompareDensity => Experiment::CompareDensity,
            Command::BridgeStat => Experiment::BridgeStat,
            Command::List => return None,
        })
    }
}

fn execute(cli: &Cli, experiment: Experiment) -> Result<bool, CliError> {
    let mut cfg = Config::load(experiment, cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.mc.seed = seed;
    }
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    if cfg.threads == Some(0) {
        return Err(CliError::Config("threads must be >= 1".into()));
    }
    let out = cli
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(experiment.name()));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    let outcome = pool.install(|| run(&cfg))?;
    write_outcome(&out, &cfg, &outcome)?;
    println!(
        "{}: {} (config_hash {}, output {})",
        experiment.name(),
        if outcome.passed { "pass" } else { "FAIL" },
        cfg.hash(),
        out.display()
    );
    Ok(outcome.passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Some(experiment) = cli.command.experiment() else {
        print!("{}", list_experiments());
        return ExitCode::SUCCESS;
    };
    match execute(&cli, experiment) {
        Ok(passed) if passed || !cli.strict => ExitCode::SUCCESS,
        Ok(_) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
