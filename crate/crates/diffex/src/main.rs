//! Experiment runner: resolves a TOML config, executes the requested
//! experiment, and writes CSV outputs plus a manifest of the resolved
//! configuration into the output directory.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use diffex::config::Config;
use diffex::experiments::{self, summary_csv, ConvergenceResult, Setup};
use diffex::harness::emit_csv;

#[derive(Parser)]
#[command(
    name = "diffex",
    about = "Decentralized optimization over noisy, rate-constrained links"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config file; unspecified keys use built-in defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed for every random stream of the experiment.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory for CSV files and the run manifest.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Suboptimality-gap curves: noiseless and noisy baselines against
    /// differential exchange at each configured confidence exponent.
    Convergence {
        #[command(flatten)]
        common: Common,
        /// Restrict to one variant: diffex | naive_dlmd | noiseless_baseline.
        #[arg(long)]
        variant: Option<String>,
    },
    /// Success probability versus quantizer dynamic range.
    SaturationSweep {
        #[command(flatten)]
        common: Common,
        /// Monte Carlo trials per grid point (overrides the config key).
        #[arg(long)]
        trials: Option<u64>,
    },
    /// Discrepancy-variance growth with and without the schedules.
    NoiseAccumulation {
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate the suboptimality and success-probability bounds.
    Bounds {
        #[command(flatten)]
        common: Common,
    },
}

fn load_config(common: &Common) -> Result<Config> {
    match &common.config {
        Some(path) => Config::from_path(path).with_context(|| "loading config"),
        None => Ok(Config::default()),
    }
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn write_manifest(dir: &Path, command: &str, seed: u64, setup: &Setup) -> Result<()> {
    let mut lines = vec![
        format!("command: {command}"),
        format!("seed: {seed}"),
        format!(
            "reference: f_star = {}, certificate = {:e}, iterations = {}",
            setup.reference.f_star, setup.reference.certificate, setup.reference.iterations
        ),
        format!(
            "pilot: L_hat = {}, Omega2_hat = {}",
            setup.pilot.l_hat, setup.pilot.omega2_hat
        ),
        format!("resolved: r_prox = {}, omega2 = {}", setup.r_prox, setup.omega2),
    ];
    for (name, topology) in &setup.topologies {
        lines.push(format!(
            "topology {name}: lambda = {}, edges = {}",
            topology.spectral_info().lambda,
            topology.edge_count()
        ));
    }
    lines.push(String::new());
    lines.push("[resolved config]".to_string());
    lines.push(setup.config.to_toml());
    write_text(dir, "manifest.txt", &lines.join("\n"))?;
    Ok(())
}

fn filter_variant(result: &mut ConvergenceResult, variant: &str) {
    result.arms.retain(|a| a.meta.variant == variant);
}

fn main() -> Result<()> {
    // die quietly when stdout is truncated by a pipe (e.g. `diffex ... | head`)
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    match cli.command {
        Command::Convergence { common, variant } => {
            let config = load_config(&common)?;
            std::fs::create_dir_all(&common.out)?;
            let setup = Setup::prepare(config)?;
            let mut result = experiments::convergence(&setup, common.seed)?;
            if let Some(v) = &variant {
                filter_variant(&mut result, v);
                anyhow::ensure!(
                    !result.arms.is_empty(),
                    "no arm matches variant {v:?} (expected diffex, naive_dlmd, or noiseless_baseline)"
                );
            }
            emit_csv(&result.csv_rows(), &common.out.join("records.csv"))?;
            write_text(&common.out, "summary.csv", &summary_csv(&result))?;
            write_manifest(&common.out, "convergence", common.seed, &setup)?;
            for arm in &result.arms {
                println!(
                    "{:<20} {:<9} gamma={:<4} final mean gap {:.6} ({} runs, {} ok)",
                    arm.meta.variant,
                    arm.meta.topology,
                    arm.meta.gamma,
                    arm.final_mean_gap(),
                    arm.records.len(),
                    arm.records
                        .iter()
                        .filter(|r| r.status.is_success())
                        .count()
                );
            }
            println!("wrote {}", common.out.join("records.csv").display());
        }
        Command::SaturationSweep { common, trials } => {
            let mut config = load_config(&common)?;
            if let Some(t) = trials {
                config.trials = t;
            }
            std::fs::create_dir_all(&common.out)?;
            let setup = Setup::prepare(config)?;
            let result = experiments::saturation_sweep(&setup, common.seed)?;
            write_text(&common.out, "success.csv", &result.summary_csv())?;
            write_manifest(&common.out, "saturation-sweep", common.seed, &setup)?;
            for p in &result.points {
                println!(
                    "{:<9} U={:<5} p_hat={:.3} [{:.3}, {:.3}] bound={:.3e}",
                    p.topology,
                    p.u,
                    p.estimate.p_hat,
                    p.estimate.wilson_low,
                    p.estimate.wilson_high,
                    p.estimate.bound
                );
            }
            println!("wrote {}", common.out.join("success.csv").display());
        }
        Command::NoiseAccumulation { common } => {
            let config = load_config(&common)?;
            std::fs::create_dir_all(&common.out)?;
            let setup = Setup::prepare(config)?;
            let result = experiments::noise_accumulation(&setup, common.seed)?;
            write_text(&common.out, "noise_accumulation.csv", &result.csv())?;
            write_manifest(&common.out, "noise-accumulation", common.seed, &setup)?;
            for p in &result.constant {
                println!("constant  k={:<6} var={:.6}", p.k, p.var_raw);
            }
            for p in &result.scheduled {
                println!(
                    "scheduled k={:<6} var_scaled={:.6} (cap {:.6})",
                    p.k, p.var_scaled, result.cap
                );
            }
        }
        Command::Bounds { common } => {
            let config = load_config(&common)?;
            std::fs::create_dir_all(&common.out)?;
            let setup = Setup::prepare(config)?;
            let report = experiments::bounds(&setup)?;
            write_text(&common.out, "bounds.csv", &report.csv)?;
            write_manifest(&common.out, "bounds", common.seed, &setup)?;
            for line in &report.lines {
                println!("{line}");
            }
        }
    }
    Ok(())
}
