mod commands;
mod config;
mod output;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Context;
use crate::config::{ConfigErrors, ExperimentConfig};
use crate::output::{OutDir, Provenance};

/// Quasi-constant-yield harvesting on heterogeneous habitats.
#[derive(Debug, Parser)]
#[command(name = "qcyield", version)]
struct Cli {
    /// JSON experiment configuration; defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding `seed` in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overriding `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override a configuration entry, e.g. `--set model.mu=4`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Worker threads for the parallel parts.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Print the normalized configuration and exit.
    #[arg(long, global = true)]
    print_config: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Principal eigenpair, second eigenvalue and its lower bound.
    Eig,
    /// A steady state of the model at the configured yield.
    Steady {
        /// Also count distinct significant solutions from random probes.
        #[arg(long)]
        count_solutions: bool,
    },
    /// The yield thresholds and, when configured, the bracket on the critical yield.
    Thresholds,
    /// Time integration of the parabolic flow.
    Evolve,
    /// Generate a binary landscape with a given aggregation index.
    Landscape,
    /// Effect of rearranging the harvest effort on the principal eigenvalue.
    Rearrange,
    /// The fragmentation study over random landscapes.
    Study {
        /// Number of landscapes, overriding `study.samples`.
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Threshold gap as the unfavourable growth rate is shifted.
    Gap,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Eig => "eig",
            Command::Steady { .. } => "steady",
            Command::Thresholds => "thresholds",
            Command::Evolve => "evolve",
            Command::Landscape => "landscape",
            Command::Rearrange => "rearrange",
            Command::Study { .. } => "study",
            Command::Gap => "gap",
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Config(ConfigErrors),
    Core(qcyield_core::Error),
    Io(std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numerical() => 2,
            _ => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "invalid configuration:\n{e}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl From<qcyield_core::Error> for CliError {
    fn from(e: qcyield_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<ConfigErrors> for CliError {
    fn from(e: ConfigErrors) -> Self {
        CliError::Config(e)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut overrides = Vec::new();
    if let Some(s) = cli.seed {
        overrides.push(format!("seed={s}"));
    }
    if let Some(o) = &cli.out {
        overrides.push(format!("output.dir={}", serde_json::Value::from(o.display().to_string())));
    }
    if let Command::Study { samples: Some(n) } = cli.command {
        overrides.push(format!("study.samples={n}"));
    }
    overrides.extend(cli.set.iter().cloned());
    let cfg = ExperimentConfig::load(cli.config.as_deref(), &overrides)?;
    if cli.print_config {
        return emit(&cfg.to_json());
    }
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(ConfigErrors(vec![("--threads".into(), "must be at least 1".into())]).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| std::io::Error::other(e.to_string()))?;
    }
    let prov = Provenance {
        version: env!("CARGO_PKG_VERSION"),
        config_hash: cfg.hash(),
        command: cli.command.name().to_string(),
    };
    let out = OutDir::create(&cfg.output.dir, prov, cfg.output.binary_fields)?;
    std::fs::write(out.path("config.json"), cfg.to_json() + "\n")?;
    let ctx = Context {
        cfg,
        out,
        threads: cli.threads,
    };
    let summary = match cli.command {
        Command::Eig => commands::eig(&ctx)?,
        Command::Steady { count_solutions } => commands::steady(&ctx, count_solutions)?,
        Command::Thresholds => commands::thresholds_cmd(&ctx)?,
        Command::Evolve => commands::evolve(&ctx)?,
        Command::Landscape => commands::landscape(&ctx)?,
        Command::Rearrange => commands::rearrange(&ctx)?,
        Command::Study { .. } => commands::study(&ctx)?,
        Command::Gap => commands::gap(&ctx)?,
    };
    emit(&serde_json::to_string_pretty(&summary).expect("summary serializes"))
}

/// Writes to standard output; a closed pipe is not an error.
fn emit(text: &str) -> Result<(), CliError> {
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qcyield: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
