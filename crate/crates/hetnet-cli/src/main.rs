use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use hetnet::experiment::{run_scenario, Mode, ScenarioConfig, TestcaseOverrides};
use hetnet::msa::AllocationFormula;

/// Heterogeneous cellular network simulator: decoupled association,
/// fixed-association allocation and dual-decomposition allocation.
#[derive(Debug, Parser)]
#[command(name = "hetnet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Association statistics over random maps.
    Deploy,
    /// Decoupled association with the fixed-association optimal allocation.
    Ssa,
    /// Joint association and allocation by dual decomposition.
    Msa,
    /// Equal split vs fixed-association optimum vs dual decomposition.
    Compare,
    /// One of the six hand-built rate scenarios.
    Testcase {
        /// Scenario number, 1 to 6.
        #[arg(value_parser = clap::value_parser!(u8).range(1..=6))]
        number: u8,
        /// Scenario variant (`a` or `b`, scenario 6 only).
        #[arg(long)]
        variant: Option<String>,
    },
}

#[derive(Debug, Args)]
struct Overrides {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Fairness parameter of the alpha-fair utility.
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Asymmetry penalty weight of the fixed-association allocation.
    #[arg(long = "A", global = true)]
    asymmetry_weight: Option<f64>,
    /// Per-user bound on the downlink/uplink rate gap.
    #[arg(long, global = true)]
    epsilon_u: Option<f64>,
    /// Price step size.
    #[arg(long, global = true)]
    gamma: Option<f64>,
    #[arg(long, global = true)]
    iterations: Option<usize>,
    /// Femto-to-macro intensity ratio.
    #[arg(long, global = true)]
    ratio: Option<f64>,
    #[arg(long, global = true)]
    replications: Option<usize>,
    #[arg(long, global = true)]
    grid_resolution: Option<usize>,
    #[arg(long, global = true)]
    allocation_formula: Option<AllocationFormula>,
    /// Switching margin before a user leaves its current station.
    #[arg(long, global = true)]
    hysteresis: Option<f64>,
}

impl Overrides {
    fn apply(&self, cfg: &mut ScenarioConfig) {
        macro_rules! set {
            ($($flag:ident => $field:ident),*) => {
                $( if let Some(v) = self.$flag.clone() { cfg.$field = v; } )*
            };
        }
        set!(
            seed => seed,
            out_dir => out_dir,
            alpha => alpha,
            asymmetry_weight => asymmetry_weight,
            epsilon_u => epsilon_u,
            gamma => gamma,
            iterations => iterations,
            ratio => femto_ratio,
            replications => replications,
            grid_resolution => grid_resolution,
            allocation_formula => allocation_formula,
            hysteresis => hysteresis
        );
    }

    fn testcase(&self) -> TestcaseOverrides {
        TestcaseOverrides {
            alpha: self.alpha,
            epsilon: self.epsilon_u,
            step: self.gamma,
            iterations: self.iterations,
            formula: self.allocation_formula,
            hysteresis: self.hysteresis,
            ..Default::default()
        }
    }
}

fn run(cli: Cli) -> Result<String> {
    let mode = match cli.command {
        Command::Deploy => Mode::Deploy,
        Command::Ssa => Mode::Ssa,
        Command::Msa => Mode::Msa,
        Command::Compare => Mode::Compare,
        Command::Testcase { number, variant } => {
            Mode::Testcase { number, variant, overrides: cli.overrides.testcase() }
        }
    };
    let mut cfg = match mode {
        Mode::Ssa | Mode::Msa | Mode::Compare => ScenarioConfig::optimization_preset(),
        _ => ScenarioConfig::default(),
    };
    if let Some(path) = &cli.overrides.config {
        cfg.apply_file(path).with_context(|| format!("loading {}", path.display()))?;
    }
    cli.overrides.apply(&mut cfg);
    let report = run_scenario(&cfg, &mode).with_context(|| format!("running {}", mode.name()))?;
    Ok(report.summary)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(summary) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
