use anyhow::{Context, Result};
use chd_cli::config::{from_raw, RawConfig};
use chd_cli::sweep::SweepAxis;
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "chdsim",
    about = "Coupled Cahn-Hilliard / elastodynamics / damage simulator with per-step certification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Path to the run configuration file
    #[arg(long, short)]
    config: PathBuf,
    /// Overrides of the form section.key=value, applied after parsing
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
    /// Output directory (overrides [output] directory)
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Print the full summary instead of a single status line
    #[arg(long, short, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and certify every step
    Run(Common),
    /// Rerun the scenario over a refinement sweep of tau or delta
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Sweep axis: tau or delta
        #[arg(long)]
        axis: SweepAxis,
        /// Number of refinement levels (at least 3)
        #[arg(long, default_value_t = 3)]
        levels: usize,
        /// Per-level scale factor in (0,1)
        #[arg(long, default_value_t = 0.5)]
        factor: f64,
    },
    /// Validate the material assumptions only
    Validate(Common),
}

fn load_config(common: &Common) -> Result<chd_cli::RunConfig> {
    let text = std::fs::read_to_string(&common.config)
        .with_context(|| format!("cannot read {}", common.config.display()))?;
    let mut raw = RawConfig::parse(&text).map_err(|e| anyhow::anyhow!("{e}"))?;
    for spec in &common.set {
        raw.apply_override(spec)
            .map_err(|e| anyhow::anyhow!("{e}"))?;
    }
    let mut cfg = from_raw(raw).map_err(|e| anyhow::anyhow!("{e}"))?;
    if let Some(dir) = &common.output {
        cfg.out_dir = dir.display().to_string();
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    match run_cli() {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn run_cli() -> Result<u8> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(common) => {
            let cfg = load_config(&common)?;
            let out_dir = PathBuf::from(&cfg.out_dir);
            let code = chd_cli::runner::run(&cfg, &out_dir, common.verbose > 0)?;
            Ok(code as u8)
        }
        Command::Sweep {
            common,
            axis,
            levels,
            factor,
        } => {
            let cfg = load_config(&common)?;
            let out_dir = PathBuf::from(&cfg.out_dir);
            let report = chd_cli::sweep::sweep(&cfg, axis, levels, factor, &out_dir)?;
            print!("{}", report.table());
            Ok(if report.passed() { 0 } else { 1 })
        }
        Command::Validate(common) => {
            let cfg = load_config(&common)?;
            let report = cfg.material.validate_assumptions(cfg.seed);
            print!("{report}");
            Ok(if report.all_passed() { 0 } else { 1 })
        }
    }
}
