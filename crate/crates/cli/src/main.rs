use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use noon_ocm::coincidence::{extract_coincidences, parse_pulse_records};
use noon_ocm::fit::fit_fringe;
use noon_ocm::ocm::{CentroidHistogram, DetectionEvent};
use noon_ocm::sim::events_to_delimited;
use ocm_cli::pipeline::{self, Artifact};
use ocm_cli::presets::{self, Overrides, Preset};
use ocm_cli::{exit_code, ExperimentConfig};

const DEFAULT_OUTPUT: &str = "ocm-output";

#[derive(Parser)]
#[command(
    name = "ocm",
    version,
    about = "Optical centroid measurement simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline described by a TOML configuration.
    Run {
        config: PathBuf,
        /// Overrides the config's `output_dir`.
        #[arg(short, long, env = "OCM_OUTPUT_DIR")]
        output_dir: Option<PathBuf>,
    },
    /// Run a bundled figure configuration.
    Preset {
        name: Preset,
        #[arg(short, long, env = "OCM_OUTPUT_DIR")]
        output_dir: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Events per photon number (and for the singles fit).
        #[arg(long)]
        events: Option<u64>,
        /// Print the sub-run configurations as TOML and exit.
        #[arg(long)]
        print_config: bool,
        #[arg(long)]
        no_plots: bool,
    },
    /// Fit the fringe model to a histogram file.
    Fit {
        histogram: PathBuf,
        /// Fix the fringe frequency (radians per coordinate unit).
        #[arg(long)]
        frequency: Option<f64>,
    },
    /// Extract N-fold coincidences from a pulse-record file.
    Coincidences {
        pulses: PathBuf,
        #[arg(long)]
        channels: usize,
        #[arg(long)]
        order: usize,
        #[arg(short, long, env = "OCM_OUTPUT_DIR")]
        output_dir: Option<PathBuf>,
    },
}

fn report(written: &[PathBuf], warnings: &[String], dir: &Path) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
    println!("wrote {} files to {}", written.len(), dir.display());
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, output_dir } => {
            let cfg = ExperimentConfig::load(&config)?;
            let dir = output_dir
                .or_else(|| cfg.output_dir.clone())
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT));
            let (written, warnings) = pipeline::run_to_dir(&cfg, &dir)?;
            report(&written, &warnings, &dir);
        }
        Command::Preset {
            name,
            output_dir,
            seed,
            events,
            print_config,
            no_plots,
        } => {
            let o = Overrides { seed, events };
            if print_config {
                for (sub, cfg) in presets::preset_configs(name, o) {
                    println!("# {sub}\n{}", cfg.to_toml());
                }
                return Ok(());
            }
            let dir = output_dir.unwrap_or_else(|| Path::new(DEFAULT_OUTPUT).join(name.name()));
            let bundle = presets::run_preset(name, o)?;
            let (written, warnings) = pipeline::finish(bundle, !no_plots, &dir)?;
            report(&written, &warnings, &dir);
        }
        Command::Fit {
            histogram,
            frequency,
        } => {
            let text = fs::read_to_string(&histogram)
                .with_context(|| format!("reading {}", histogram.display()))?;
            let hist =
                CentroidHistogram::parse_delimited(&text).context("stage `parse histogram`")?;
            let fit = fit_fringe(&hist, frequency).context("stage `fit`")?;
            print!("{}", fit.to_key_value());
        }
        Command::Coincidences {
            pulses,
            channels,
            order,
            output_dir,
        } => {
            let text = fs::read_to_string(&pulses)
                .with_context(|| format!("reading {}", pulses.display()))?;
            let records = parse_pulse_records(&text).context("stage `parse pulses`")?;
            let c = extract_coincidences(&records, channels, order)
                .context("stage `extract coincidences`")?;
            let events: Vec<DetectionEvent> = c.events;
            let dir = output_dir.unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT));
            let artifacts = [
                Artifact {
                    path: "events.txt".into(),
                    contents: events_to_delimited(&events),
                },
                Artifact {
                    path: "table.tsv".into(),
                    contents: c.table.to_delimited(),
                },
                Artifact {
                    path: "stats.txt".into(),
                    contents: c.stats.to_key_value(),
                },
            ];
            let written = pipeline::write_artifacts(&dir, &artifacts)?;
            report(&written, &[], &dir);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
