//! Configuration-driven experiments on top of `emzkit`.

pub mod commands;
pub mod config;
pub mod report;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::{cmd_emz, cmd_gle, cmd_mc, cmd_spectrum, cmd_validate, CliError, CliResult};
pub use config::{ConfigError, ExperimentConfig};
pub use report::{Check, RunReport, Verdict};

#[derive(Debug, Parser)]
#[command(name = "emzkit", version, about = "Effective Mori-Zwanzig kernels from spectral Galerkin generators")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Spectra of the generator and of QKQ.
    Spectrum(RunArgs),
    /// Memory kernel, fluctuation term and their equilibrium limits.
    Emz(RunArgs),
    /// Solution of the generalized Langevin equation.
    Gle(RunArgs),
    /// Monte Carlo estimates.
    Mc(RunArgs),
    /// Full pipeline with aggregated checks.
    Validate(RunArgs),
}

#[derive(Debug, Clone, clap::Args)]
pub struct RunArgs {
    /// Experiment configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (overrides the config).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Random seed (overrides the config).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; 0 picks automatically.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
}

impl Command {
    fn parts(&self) -> (&str, &RunArgs) {
        match self {
            Command::Spectrum(a) => ("spectrum", a),
            Command::Emz(a) => ("emz", a),
            Command::Gle(a) => ("gle", a),
            Command::Mc(a) => ("mc", a),
            Command::Validate(a) => ("validate", a),
        }
    }
}

/// Loads a configuration file and applies command-line overrides.
pub fn load_config(args: &RunArgs) -> CliResult<ExperimentConfig> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| ConfigError {
        line: None,
        field: args.config.display().to_string(),
        message: e.to_string(),
    })?;
    let mut cfg = ExperimentConfig::parse(&text)?;
    if let Some(seed) = args.seed {
        cfg.mc.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.output_dir = out.display().to_string();
    }
    Ok(cfg)
}

/// Runs one subcommand on a loaded configuration.
pub fn run_command(name: &str, cfg: &ExperimentConfig) -> CliResult<RunReport> {
    match name {
        "spectrum" => cmd_spectrum(cfg),
        "emz" => cmd_emz(cfg),
        "gle" => cmd_gle(cfg),
        "mc" => cmd_mc(cfg),
        _ => cmd_validate(cfg),
    }
}

/// Executes the parsed command line, writes the outputs and returns the
/// process exit code.
pub fn run(cli: &Cli) -> i32 {
    let (name, args) = cli.command.parts();
    if args.threads > 0 {
        // Fails only if a pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(args.threads).build_global();
    }
    let result = load_config(args).and_then(|cfg| {
        let report = run_command(name, &cfg)?;
        report.write(std::path::Path::new(&cfg.output_dir))?;
        Ok((cfg, report))
    });
    match result {
        Ok((cfg, report)) => {
            for c in &report.checks {
                let verdict = match c.verdict {
                    Verdict::Pass => "PASS",
                    Verdict::Fail => "FAIL",
                    Verdict::NotApplicable => "N/A ",
                };
                let measured = c.measured.map_or(String::from("-"), |m| format!("{m:.6e}"));
                let tol = c.tolerance.map_or(String::from("-"), |t| format!("{t:.1e}"));
                println!("{verdict} {:<36} measured {measured:<14} tolerance {tol}", c.name);
            }
            println!("outputs written to {}", cfg.output_dir);
            if report.passed() {
                0
            } else {
                1
            }
        }
        Err(e) => {
            eprintln!("emzkit: {e}");
            e.exit_code()
        }
    }
}
