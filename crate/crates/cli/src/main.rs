//! `ablate`: guardrailed ablation studies from a declarative config.
//!
//! Exit codes: 0 success, 1 configuration error, 2 partial grid failure.

use std::path::PathBuf;
use std::process::ExitCode;

use ablate_cli::config::{ConfigError, GridConfig};
use ablate_cli::grid::{self, GridError, GridOptions};
use ablate_cli::manifest::RunManifest;
use ablate_cli::tables::{report_tables, write_tables};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "ablate", version, about = "Guardrailed ablation studies for tabular XAI methods")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Grid configuration file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config's `out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed override for this run.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic datasets (CSV + schema + ground truth).
    Synth(Common),
    /// Train and checkpoint the models for every configured dataset.
    Train(Common),
    /// Run the full experiment grid.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// Worker threads for grid cells (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
        /// Ignore cached cell results and recompute everything.
        #[arg(long)]
        force: bool,
    },
    /// Regenerate summary tables from a completed run directory.
    Report {
        /// Run directory containing manifest.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the baseline sample-size sweep.
    Sweep(Common),
    /// Re-render a single overlay plot from stored cell results.
    Plot {
        /// Run directory containing manifest.json.
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            let config_error = matches!(
                err.downcast_ref::<GridError>(),
                Some(GridError::Config(_) | GridError::Data(_))
            ) || err.downcast_ref::<ConfigError>().is_some();
            if config_error { ExitCode::from(1) } else { ExitCode::from(2) }
        }
    }
}

fn load(common: &Common) -> Result<(GridConfig, PathBuf), ConfigError> {
    let cfg = GridConfig::from_path(&common.config)?;
    let out = common.out.clone().unwrap_or_else(|| cfg.out_dir.clone());
    Ok((cfg, out))
}

fn run() -> anyhow::Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Synth(common) => {
            let (cfg, out) = load(&common)?;
            let written = grid::run_synth(&cfg, &out, common.seed)?;
            for path in written {
                println!("wrote {}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Train(common) => {
            let (cfg, out) = load(&common)?;
            for (name, acc) in grid::run_train(&cfg, &out, common.seed)? {
                println!("{name}: eval accuracy {acc:.3}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Ablate { common, jobs, force } => {
            let (cfg, out) = load(&common)?;
            let opts = GridOptions { jobs, force, seed_override: common.seed };
            let manifest = grid::run_grid(&cfg, &out, &opts)?;
            let failed = manifest.failed_cells();
            println!(
                "ran {} cells ({} failed) in {} ms; manifest at {}",
                manifest.cells.len(),
                failed.len(),
                manifest.total_wall_ms,
                out.join("manifest.json").display()
            );
            for cell in &failed {
                if let ablate_cli::manifest::CellStatus::Failed { error } = &cell.status {
                    eprintln!("cell {} failed: {error}", cell.id);
                }
            }
            Ok(if failed.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
        Command::Report { out } => {
            let manifest = RunManifest::load(&out.join("manifest.json"))?;
            let expected: Vec<String> = manifest.cells.iter().map(|c| c.id.clone()).collect();
            let mut results = Vec::new();
            for cell in &manifest.cells {
                let raw = std::fs::read_to_string(out.join(&cell.result_path))?;
                results.push(serde_json::from_str(&raw)?);
            }
            let tables = report_tables(&expected, &results)?;
            for path in write_tables(&tables, &out.join("tables"))? {
                println!("wrote {}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep(common) => {
            let (cfg, out) = load(&common)?;
            let points = grid::run_sweep(&cfg, &out, common.seed)?;
            for p in points {
                println!("size {:>6}: tau {:.4} +- {:.4}", p.size, p.mean_tau, p.std_tau);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Plot { out } => {
            let manifest = RunManifest::load(&out.join("manifest.json"))?;
            println!("{} plots available under {}", manifest.plots.len(), out.join("plots").display());
            for plot in &manifest.plots {
                println!("{plot}");
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
