//! Command-line front end: simulate a scenario, calibrate the array from a
//! pilot snapshot, sense a CSI file into a water-level series, or run the
//! AoA-variation study.
//!
//! Exit codes: 0 success, 1 internal/numeric failure, 2 configuration or
//! usage error, 3 file-format error, 4 calibration failure, 5 peak-finding
//! failure, 6 phase-unwrap failure. Errors print one machine-parseable
//! line: `error[<kind>]: <message>`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hydrosense::pipeline::{self, RunConfig};
use hydrosense::Error;

#[derive(Parser)]
#[command(
    name = "hydrosense",
    version,
    about = "Water-level change estimation from bistatic downlink CSI"
)]
struct Cli {
    /// Verbose logging (stage diagnostics on stderr).
    #[arg(long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a scenario into a CSI file plus ground-truth CSV.
    Simulate {
        #[command(flatten)]
        config: ConfigArg,
        /// Output CSI file.
        #[arg(long)]
        out: PathBuf,
        /// Ground-truth CSV path (defaults to `<out>.truth.csv`).
        #[arg(long)]
        truth_out: Option<PathBuf>,
        /// Also write a pilot baseband snapshot for calibration.
        #[arg(long)]
        emit_pilot: Option<PathBuf>,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Estimate the water-level series from a CSI file.
    Sense {
        #[command(flatten)]
        config: ConfigArg,
        /// Input CSI file.
        csi_file: PathBuf,
        /// Output water-level CSV.
        #[arg(long)]
        out: PathBuf,
        /// Calibration JSON produced by `calibrate`.
        #[arg(long)]
        calibration: Option<PathBuf>,
        /// Also write the 2D MUSIC spectrum as CSV.
        #[arg(long)]
        emit_spectrum: Option<PathBuf>,
    },
    /// Estimate array errors from a pilot snapshot file.
    Calibrate {
        /// Pilot snapshot file (CSIW container, k = 1).
        snapshot_file: PathBuf,
        /// Known pilot AoA (deg, from surveyed geometry).
        #[arg(long)]
        pilot_aoa: f64,
        /// Number of sources present in the snapshot.
        #[arg(long, default_value_t = 1)]
        sources: usize,
        /// Output calibration JSON.
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep Tx-Rx distance and report the water-path AoA variation.
    StudyAoa {
        #[command(flatten)]
        config: ConfigArg,
        /// Output CSV.
        #[arg(long)]
        out: PathBuf,
    },
}

fn configure_threads() {
    if let Ok(raw) = std::env::var("HYDROSENSE_THREADS") {
        match raw.parse::<usize>() {
            Ok(n) if n >= 1 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    log::warn!("could not apply HYDROSENSE_THREADS={n}: {e}");
                }
            }
            _ => log::warn!("ignoring invalid HYDROSENSE_THREADS={raw:?}"),
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Simulate {
            config,
            out,
            truth_out,
            emit_pilot,
            seed,
        } => {
            let mut cfg = RunConfig::load(&config.config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let truth = truth_out.unwrap_or_else(|| {
                let mut p = out.as_os_str().to_owned();
                p.push(".truth.csv");
                PathBuf::from(p)
            });
            pipeline::cli_simulate(&cfg, &out, Some(&truth), emit_pilot.as_deref())?;
            eprintln!(
                "wrote {} ({} captures) and {}",
                out.display(),
                cfg.sampling.n,
                truth.display()
            );
            Ok(())
        }
        Command::Sense {
            config,
            csi_file,
            out,
            calibration,
            emit_spectrum,
        } => {
            let cfg = RunConfig::load(&config.config)?;
            let outcome = pipeline::cli_sense(
                &csi_file,
                &cfg,
                calibration.as_deref(),
                &out,
                emit_spectrum.as_deref(),
            )?;
            eprintln!(
                "theta0 = {:.3} deg, theta1 = {:.3} deg, alpha = {:.3} deg; total level change \
                 {:+.4} m over {} captures; wrote {}",
                outcome.theta0_deg,
                outcome.theta1_deg,
                outcome.alpha_deg,
                outcome.water.delta_w_m.last().copied().unwrap_or(0.0),
                outcome.water.delta_w_m.len(),
                out.display()
            );
            Ok(())
        }
        Command::Calibrate {
            snapshot_file,
            pilot_aoa,
            sources,
            out,
        } => {
            let model = pipeline::cli_calibrate(&snapshot_file, pilot_aoa, sources, &out)?;
            eprintln!(
                "estimated gains {:?}; wrote {}",
                model
                    .gains
                    .iter()
                    .map(|g| (g * 1000.0).round() / 1000.0)
                    .collect::<Vec<_>>(),
                out.display()
            );
            Ok(())
        }
        Command::StudyAoa { config, out } => {
            let cfg = RunConfig::load(&config.config)?;
            pipeline::cli_study_aoa(&cfg, &out)?;
            eprintln!("wrote {}", out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(
        if cli.verbose { "info" } else { "warn" },
    ))
    .format_timestamp(None)
    .init();
    configure_threads();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.kind());
            ExitCode::from(e.exit_code())
        }
    }
}
