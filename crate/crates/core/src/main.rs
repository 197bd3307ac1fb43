use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gsdot_core::io::{self, RunConfig, RunOptions};
use gsdot_core::Error;

#[derive(Parser)]
#[command(name = "gsdot", version, about = "Gaussian-splat diffuse optical tomography")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate data for a phantom, reconstruct it and write maps, metrics and a manifest.
    Run {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Noise seed, replacing the configured one.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory, replacing the configured one.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build (or verify) the cached sensitivity matrix for a configuration.
    Jacobian {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Recompute metrics from the maps saved in a run directory.
    Metrics { dir: PathBuf },
}

#[derive(Args)]
struct Common {
    /// Validate the configuration and print the plan without computing anything.
    #[arg(long)]
    dry_run: bool,
    /// Rebuild the sensitivity matrix even if a cache exists.
    #[arg(long)]
    force_rebuild_jacobian: bool,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::Cache(_) => 3,
        Error::Divergence { .. } | Error::NonFiniteLoss { .. } => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run {
            config,
            common,
            seed,
            out,
        } => {
            let opts = RunOptions {
                seed,
                force_rebuild_jacobian: common.force_rebuild_jacobian,
                out_dir: out,
            };
            let cfg = RunConfig::load(&config)?;
            if common.dry_run {
                print!("{}", io::describe_plan(&cfg, &opts)?);
                return Ok(());
            }
            let output = io::run_config(&cfg, &opts)?;
            let m = &output.manifest;
            for row in &m.metrics {
                println!(
                    "{} {:5}  rmse {:.4}  ssim {:.4}  com {:.4}",
                    row.case, row.condition, row.rmse, row.ssim, row.com_error
                );
            }
            println!(
                "compression {} unknowns vs {} pixels ({:.2}x); K = {} vs N_g = {} gives {:.2}x",
                m.compression.splat_unknowns,
                m.compression.grid_unknowns,
                m.compression.ratio,
                io::pipeline::REFERENCE_SPLATS,
                m.compression_reference.grid_unknowns,
                m.compression_reference.ratio
            );
            println!("outputs in {}", output.out_dir.display());
        }
        Command::Jacobian { config, common } => {
            let cfg = RunConfig::load(&config)?.resolved()?;
            let opts = RunOptions {
                force_rebuild_jacobian: common.force_rebuild_jacobian,
                ..RunOptions::default()
            };
            if common.dry_run {
                print!("{}", io::describe_plan(&cfg, &opts)?);
                return Ok(());
            }
            let setup = cfg.setup()?;
            let (_, info) = io::obtain_jacobian(&cfg, &setup, common.force_rebuild_jacobian)?;
            println!(
                "{} {} x {} ({} bytes) at {}",
                if info.reused { "verified" } else { "built" },
                info.rows,
                info.columns,
                info.size_bytes,
                info.cache_path.map(|p| p.display().to_string()).unwrap_or_default()
            );
        }
        Command::Metrics { dir } => {
            println!("case,condition,rmse,ssim,com_error");
            for r in io::recompute_metrics(&dir)? {
                println!("{},{},{},{},{}", r.case, r.condition, r.rmse, r.ssim, r.com_error);
            }
        }
    }
    Ok(())
}
