use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};

mod config;
mod presets;
mod run;

use config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "optomech", version, about = "Photon-counting optomechanics: trajectories, correlations, inference and bounds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON experiment configuration.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Named built-in configuration; see `optomech presets`.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), None) => ExperimentConfig::load(path)?,
            (None, Some(name)) => presets::preset(name)?,
            _ => bail!("pass exactly one of --config or --preset"),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if self.workers.is_some() {
            cfg.workers = self.workers;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Sample click records.
    Simulate(Common),
    /// Conditional photon number and negativity along stored records.
    Replay {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        records: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        step: f64,
    },
    /// Two-time intensity correlation of the ensemble.
    G2(Common),
    /// Two-time click histogram of two regimes and their difference.
    Zeta(Common),
    /// Grid posterior and squared error of a parameter estimate.
    Infer(Common),
    /// Cramér-Rao and van Trees bounds.
    Bounds(Common),
    /// Entanglement measures along closed or open evolution.
    Entanglement(Common),
    /// Check a configuration and report the regime it is in.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Print the report instead of writing it.
        #[arg(long)]
        stdout: bool,
    },
    /// List the built-in configurations, or print one.
    Presets { name: Option<String> },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (name, common) = match &cli.command {
        Command::Simulate(c) => ("simulate", c),
        Command::G2(c) => ("g2", c),
        Command::Zeta(c) => ("zeta", c),
        Command::Infer(c) => ("infer", c),
        Command::Bounds(c) => ("bounds", c),
        Command::Entanglement(c) => ("entanglement", c),
        Command::Replay { common, records, step } => {
            let cfg = common.load()?;
            run::replay(&cfg, records, *step, &common.out_dir)?;
            return Ok(());
        }
        Command::Validate { common, stdout } => {
            let cfg = common.load()?;
            let report = serde_json::to_string_pretty(&run::validate(&cfg)?)?;
            if *stdout {
                println!("{report}");
            } else {
                let mut out = run::Output::new(&common.out_dir)?;
                out.write("validation.json", report.as_bytes())?;
                out.finish("validate", &cfg)?;
            }
            return Ok(());
        }
        Command::Presets { name } => {
            match name {
                Some(n) => println!("{}", presets::preset(n)?.to_json()),
                None => presets::NAMES.iter().for_each(|n| println!("{n}")),
            }
            return Ok(());
        }
    };
    let cfg = common.load()?;
    let manifest = run::run_experiment(name, &cfg, &common.out_dir)?;
    log::info!("{} artifacts in {}", manifest.artifacts.len(), common.out_dir.display());
    Ok(())
}
