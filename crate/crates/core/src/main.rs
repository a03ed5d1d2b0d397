use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pnr_core::io::config::{parse_duration, RunConfig};
use pnr_core::pipeline::{cmd_aggregate, cmd_fit, cmd_pipeline, cmd_simulate, cmd_snr, with_workers};
use pnr_core::{Error, Result, SamplingMode};

/// Classical click-statistics simulator and analysis tools for multiplexed detectors.
#[derive(Parser)]
#[command(name = "pnr", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML with dotted keys); built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated coincidence windows such as `10ns,500ns,20us`.
    #[arg(long)]
    windows: Option<String>,
    /// Output directory, overriding PNR_OUT_DIR and `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<SamplingMode>,
}

fn parse_mode(s: &str) -> std::result::Result<SamplingMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one time-tag file per sweep level.
    Simulate(Common),
    /// Aggregate time-tag files into click histograms.
    Aggregate {
        #[command(flatten)]
        common: Common,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Fit histogram files and write the mean-photon-number surface.
    Fit {
        #[command(flatten)]
        common: Common,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Evaluate the SNR grid, or per-device curves from a survey table.
    Snr {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        survey: Option<PathBuf>,
    },
    /// Simulate, aggregate, fit and write every report.
    Pipeline(Common),
}

fn load(common: &Common) -> Result<(RunConfig, PathBuf)> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    cfg.apply_env();
    if let Some(seed) = common.seed {
        cfg.set_seed(seed);
    }
    if let Some(mode) = common.mode {
        cfg.sim.sampling_mode = mode;
    }
    if let Some(w) = common.workers {
        cfg.workers = w;
    }
    if let Some(list) = &common.windows {
        cfg.windows = list
            .split(',')
            .map(|w| parse_duration(w).ok_or_else(|| Error::config("--windows", format!("cannot read `{w}` as a duration"))))
            .collect::<Result<_>>()?;
        if cfg.windows.is_empty() {
            return Err(Error::config("--windows", "must not be empty"));
        }
        cfg.window_ticks()?;
        if cfg.distribution_window >= cfg.windows.len() {
            cfg.distribution_window = cfg.windows.len() / 2;
        }
    }
    let out = common.out.clone().unwrap_or_else(|| cfg.out_dir.clone());
    Ok((cfg, out))
}

fn report(paths: &[PathBuf]) {
    for p in paths {
        println!("{}", p.display());
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(common) => {
            let (cfg, out) = load(&common)?;
            report(&with_workers(cfg.workers, || cmd_simulate(&cfg, &out))??);
        }
        Command::Aggregate { common, inputs } => {
            let (cfg, out) = load(&common)?;
            let ticks = cfg.window_ticks()?;
            report(&with_workers(cfg.workers, || cmd_aggregate(&inputs, &ticks, &out))??);
        }
        Command::Fit { common, inputs } => {
            let (cfg, out) = load(&common)?;
            let (path, surface) = with_workers(cfg.workers, || cmd_fit(&inputs, &cfg, &out))??;
            warn_high_mu(surface.rows.iter().filter(|r| r.mu > surface.detector_count as f64).count());
            report(&[path]);
        }
        Command::Snr { common, survey } => {
            let (cfg, out) = load(&common)?;
            let (paths, _) = cmd_snr(&cfg, survey.as_deref(), &out)?;
            report(&paths);
        }
        Command::Pipeline(common) => {
            let (cfg, out) = load(&common)?;
            let (run, paths) = with_workers(cfg.workers, || cmd_pipeline(&cfg, &out))??;
            warn_high_mu(run.high_mu_cells());
            println!("{} artifacts in {}", paths.len(), Path::new(&out).display());
        }
    }
    Ok(())
}

fn warn_high_mu(cells: usize) {
    if cells > 0 {
        eprintln!("warning: {cells} cell(s) fitted a mean photon number above the detector count");
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.class().exit_code() as u8)
        }
    }
}
