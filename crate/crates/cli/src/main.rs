use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use kwc_cli::{commands, parse_config, LoadedConfig, Options, Summary};

#[derive(Parser)]
#[command(name = "kwc", version, about = "Pseudo-parabolic grain-boundary solver and studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured problem and write energy.csv and snapshots
    Run(Common),
    /// Cauchy differences along a ladder of time steps
    ConvergeTau(Common),
    /// Distances to the base run along a ladder of eps values
    ContinuityEps(Common),
    /// Energy, maximum-principle, Hessian and determinism checks
    Verify(Common),
    /// Compare the step solvers with dense reference solvers
    Oracle(Common),
}

#[derive(Args)]
struct Common {
    /// Configuration file
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Output directory, overriding [output] dir
    #[arg(short, long)]
    outdir: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    tau_ladder: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    eps_ladder: Option<Vec<f64>>,
    /// Perturb the initial data along the eps ladder
    #[arg(long)]
    perturb: bool,
    /// Seed for randomised inputs
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    quiet: bool,
}

impl Common {
    fn options(&self) -> Options {
        Options {
            outdir: self.outdir.clone(),
            tau_ladder: self.tau_ladder.clone(),
            eps_ladder: self.eps_ladder.clone(),
            perturb: self.perturb,
            seed: self.seed,
            quiet: self.quiet,
        }
    }

    fn load(&self) -> Result<LoadedConfig> {
        let path = self.config.as_ref().context("missing -c/--config")?;
        let loaded = parse_config(path).with_context(|| format!("invalid config {}", path.display()))?;
        if !self.quiet {
            eprintln!("M = {}", loaded.problem.m());
        }
        Ok(loaded)
    }
}

fn execute(cli: &Cli) -> Result<Summary> {
    Ok(match &cli.command {
        Command::Run(c) => commands::run_command(&c.load()?, &c.options()),
        Command::ConvergeTau(c) => commands::converge_tau(&c.load()?, &c.options()),
        Command::ContinuityEps(c) => commands::continuity_eps(&c.load()?, &c.options()),
        Command::Verify(c) => commands::verify(&c.load()?, &c.options()),
        Command::Oracle(c) => commands::oracle(&c.options()),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary).expect("summary serialises"));
            ExitCode::from(summary.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            let failure = serde_json::json!({ "passed": false, "error": format!("{e:#}") });
            println!("{failure}");
            ExitCode::from(2)
        }
    }
}
