//! Command-line entry point.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::error::{Error, Result};
use crate::experiments::{preset_names, with_threads};
use crate::io::{execute, json_string, load_preset, read_config, write_results, Format, RunConfig, RunReport, Summary};
use crate::sequences::calibration_report;
use crate::spin::SpinSystemConfig;

#[derive(Parser, Debug)]
#[command(name = "spinsense", version, about = "Ancilla-assisted spin sensing simulator")]
pub struct Cli {
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for the parallel scans.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Also write SVG plots.
    #[arg(long, global = true)]
    pub svg: bool,
    /// Reserved; all computations are deterministic.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Print a JSON summary on stdout.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run a configuration file.
    Run { config: PathBuf },
    /// Run a built-in preset.
    Preset { name: String },
    /// Search the sequence conventions and report which one is consistent.
    Calibrate {
        /// Take g and the coupling angle from this configuration.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run the three sensitivity scenarios.
    Estimates,
    /// List built-in presets.
    ListPresets,
}

/// 1 for configuration problems, 2 when no signal was found, 3 for output I/O.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NoPeak { .. } | Error::NoCalibration(_) => 2,
        Error::Io { .. } | Error::EmptyResult => 3,
        _ => 1,
    }
}

/// Parses `args` and runs; returns the process exit code.
pub fn main<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn threads(cli: &Cli) -> usize {
    cli.threads
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

fn dispatch(cli: &Cli) -> Result<u8> {
    match &cli.command {
        Command::ListPresets => {
            for name in preset_names() {
                println!("{name}");
            }
            Ok(0)
        }
        Command::Run { config } => {
            // an unreadable config file is a configuration error, not an output failure
            let cfg = match read_config(config) {
                Err(e @ Error::Io { .. }) => {
                    eprintln!("error: {e}");
                    return Ok(1);
                }
                other => other?,
            };
            let stem = config
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "run".into());
            run_config(cli, cfg, &stem)
        }
        Command::Preset { name } => run_config(cli, load_preset(name)?, name),
        Command::Estimates => run_config(cli, load_preset("estimates")?, "estimates"),
        Command::Calibrate { config } => calibrate(cli, config.as_deref()),
    }
}

fn run_config(cli: &Cli, cfg: RunConfig, stem: &str) -> Result<u8> {
    let report = with_threads(threads(cli), || execute(&cfg))??;
    let mut out = cfg.output();
    if cli.svg && !out.formats.contains(&Format::Svg) {
        out.formats.push(Format::Svg);
    }
    let dir = cli
        .out
        .clone()
        .or_else(|| out.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("spinsense-out"));
    let written = write_results(&report, &dir, stem, &out.formats)?;
    if cli.json {
        print!("{}", json_string(&report));
    } else {
        print_summary(&report);
        for p in &written {
            println!("wrote {}", p.display());
        }
    }
    if report.no_peaks() {
        eprintln!("error: no column shows a peak");
        return Ok(2);
    }
    Ok(0)
}

fn print_summary(report: &RunReport) {
    for p in &report.peaks {
        match &p.peak {
            Some(pk) => println!(
                "{:<28} position {:.8e}  width {:.3e}  contrast {:.4}",
                p.column, pk.position, pk.width, pk.contrast
            ),
            None => println!("{:<28} no peak", p.column),
        }
    }
    match &report.summary {
        Summary::Scan => {}
        Summary::ContrastVsT1(f) => {
            for c in &f.curves {
                let vals: Vec<String> = c.contrast.iter().map(|v| format!("{v:.4}")).collect();
                println!("{:<20} {}", c.label, vals.join("  "));
            }
        }
        Summary::Estimates(e) => println!("{e}"),
        Summary::OptimizeRepetitions(s) => println!("N_opt = {}", s.n_opt),
    }
}

fn calibrate(cli: &Cli, config: Option<&Path>) -> Result<u8> {
    let system = match config {
        Some(p) => read_config(p)?.system()?.clone(),
        None => SpinSystemConfig::single(0.0, 1.0, 1.0 / 80.0, std::f64::consts::FRAC_PI_4),
    };
    let report = with_threads(threads(cli), || calibration_report(&system))??;
    if cli.json {
        println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    } else {
        println!("{report}");
    }
    Ok(if report.selected.is_some() { 0 } else { 2 })
}
