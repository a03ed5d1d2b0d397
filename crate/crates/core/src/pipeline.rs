//! Command implementations: simulate, aggregate, fit, snr and the end-to-end pipeline.
//!
//! Sweep cells run concurrently on the current rayon pool. Results are
//! collected by cell index and written sequentially, so every artifact is a
//! pure function of the configuration and seed.

use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::click_model::poisson_reconstruction;
use crate::coincidence::{aggregate_sweep, ClickHistogram, WindowSchedule};
use crate::error::{Error, Result};
use crate::field_model::{simulate_stream, TimeTagStream};
use crate::fitter::{fit_grid, FitGrid};
use crate::io::config::RunConfig;
use crate::io::histogram::HistogramFile;
use crate::io::snr_files::{write_surface_files, write_survey};
use crate::io::surface::{LevelAxis, SurfaceFile};
use crate::io::tags::{aggregate_tags_file, write_tags_file};
use crate::io::create_writer;
use crate::rng::derive_seed;
use crate::snr::{parse_survey, snr_surface, SnrSurface};

/// Runs `f` on a pool of `workers` threads, or on every core when `workers` is 0.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::config("workers", e.to_string()))?;
    Ok(pool.install(f))
}

/// Simulates one sweep level with its own derived seed.
pub fn simulate_level(cfg: &RunConfig, level: usize) -> Result<TimeTagStream> {
    let source = cfg.source_for(level)?;
    let net = cfg.network()?;
    let dets = cfg.detector_specs()?;
    let mut sim = cfg.sim;
    sim.seed = derive_seed(cfg.seed, level as u64);
    simulate_stream(&source, &net, &dets, &sim)
}

fn tag_path(dir: &Path, level: usize) -> PathBuf {
    dir.join("tags").join(format!("level_{level:02}.tags"))
}

fn hist_path(dir: &Path, stem: &str, window_ticks: u64) -> PathBuf {
    dir.join("hist").join(format!("{stem}_w{window_ticks:06}.hist"))
}

/// Writes one time-tag file per sweep level.
pub fn cmd_simulate(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let alpha = cfg.alpha_sq_levels();
    (0..cfg.levels.len())
        .into_par_iter()
        .map(|level| {
            let stream = simulate_level(cfg, level).map_err(|e| e.at_stage("simulate", level))?;
            let path = tag_path(out, level);
            write_tags_file(&path, &stream, Some(alpha[level])).map_err(|e| e.at_stage("simulate", level))?;
            Ok(path)
        })
        .collect()
}

/// Writes one histogram file per (input, window) pair.
pub fn cmd_aggregate(inputs: &[PathBuf], windows: &[u64], out: &Path) -> Result<Vec<PathBuf>> {
    if inputs.is_empty() {
        return Err(Error::config("inputs", "no time-tag files given"));
    }
    let per_input: Vec<Vec<PathBuf>> = inputs
        .par_iter()
        .enumerate()
        .map(|(i, input)| {
            let (header, hists) = aggregate_tags_file(input, windows).map_err(|e| e.at_stage("aggregate", i))?;
            let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("input");
            windows
                .iter()
                .zip(hists)
                .map(|(&w, hist)| {
                    let file = HistogramFile {
                        schedule: WindowSchedule::gated(w, header.gate_ticks),
                        tick_duration: header.tick_duration,
                        alpha_sq: header.alpha_sq,
                        hist,
                    };
                    let path = hist_path(out, stem, w);
                    file.write_file(&path).map_err(|e| e.at_stage("aggregate", i))?;
                    Ok(path)
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(per_input.into_iter().flatten().collect())
}

fn sorted_unique(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| a.to_bits() == b.to_bits());
    v
}

/// Fits a set of histogram files and assembles the `μ(window, level)` surface.
///
/// Files without an `alpha_sq` header share level 0. Grid cells with no
/// histogram are recorded as failed fits.
pub fn cmd_fit(inputs: &[PathBuf], cfg: &RunConfig, out: &Path) -> Result<(PathBuf, SurfaceFile)> {
    if inputs.is_empty() {
        return Err(Error::config("inputs", "no histogram files given"));
    }
    let files = inputs
        .iter()
        .map(|p| HistogramFile::read_file(p))
        .collect::<Result<Vec<_>>>()?;
    let n = files[0].hist.detector_count;
    if let Some((i, f)) = files.iter().enumerate().find(|(_, f)| f.hist.detector_count != n) {
        return Err(Error::Parse {
            path: inputs[i].display().to_string(),
            line: 1,
            message: format!("{} detectors, expected {n} like the first input", f.hist.detector_count),
        });
    }
    if n != cfg.detectors.count {
        return Err(Error::config(
            "detectors.count",
            format!("config has {} detectors, histograms have {n}", cfg.detectors.count),
        ));
    }
    let windows = sorted_unique(files.iter().map(HistogramFile::window_seconds).collect());
    let levels = sorted_unique(files.iter().map(|f| f.alpha_sq.unwrap_or(0.0)).collect());
    let mut grid = vec![vec![None; levels.len()]; windows.len()];
    for (i, f) in files.iter().enumerate() {
        let r = windows.iter().position(|w| w.to_bits() == f.window_seconds().to_bits()).unwrap_or(0);
        let c = levels
            .iter()
            .position(|l| l.to_bits() == f.alpha_sq.unwrap_or(0.0).to_bits())
            .unwrap_or(0);
        if grid[r][c].replace(f.hist.clone()).is_some() {
            return Err(Error::Parse {
                path: inputs[i].display().to_string(),
                line: 1,
                message: "another input already covers this (window, alpha_sq) cell".into(),
            });
        }
    }
    let grid: Vec<Vec<ClickHistogram>> = grid
        .into_iter()
        .map(|row| row.into_iter().map(|c| c.unwrap_or_else(|| ClickHistogram::empty(n))).collect())
        .collect();
    let fitted = fit_cells(cfg, &grid, &windows)?;
    let surface = SurfaceFile::from_grid(&fitted, &windows, &levels, LevelAxis::AlphaSq, n);
    let path = out.join("surface.txt");
    surface.write_file(&path)?;
    Ok((path, surface))
}

fn fit_cells(cfg: &RunConfig, grid: &[Vec<ClickHistogram>], windows: &[f64]) -> Result<FitGrid> {
    fit_grid(grid, |r, c| cfg.fit_config(windows[r], &grid[r][c]), cfg.fit.smoothing)
}

/// Writes the SNR grid and contour, plus survey curves when a table is given.
pub fn cmd_snr(cfg: &RunConfig, survey: Option<&Path>, out: &Path) -> Result<(Vec<PathBuf>, SnrSurface)> {
    let s = &cfg.snr;
    let surface = snr_surface(&s.n_values, &s.windows, s.rate, s.coherence, s.integration)?;
    write_surface_files(out, &surface)?;
    let mut written = vec![out.join("snr_grid.txt"), out.join("snr_contour.csv")];
    if let Some(table) = survey {
        let text = std::fs::read_to_string(table).map_err(|e| Error::io(table, e))?;
        let devices = parse_survey(&text, &table.display().to_string())?;
        let path = out.join("survey.csv");
        write_survey(create_writer(&path)?, &devices)?;
        written.push(path);
    }
    Ok((written, surface))
}

/// Everything the pipeline computes before writing.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub window_ticks: Vec<u64>,
    /// Per-level rates in counts per second, one entry per detector.
    pub rates: Vec<Vec<f64>>,
    /// `histograms[window][level]`.
    pub histograms: Vec<Vec<ClickHistogram>>,
    pub fits: FitGrid,
    pub gate_ticks: u64,
}

impl PipelineRun {
    /// Raw fitted `μ` along the window axis for one level.
    pub fn mu_by_window(&self, level: usize) -> Vec<f64> {
        let raw = self.fits.raw_mu();
        (0..self.fits.rows).map(|r| raw[r * self.fits.cols + level]).collect()
    }

    /// Cells whose fitted `μ` exceeds the detector count.
    pub fn high_mu_cells(&self) -> usize {
        self.fits
            .cells
            .iter()
            .filter(|c| c.as_ref().is_ok_and(|f| f.high_mu_warning()))
            .count()
    }
}

/// Simulates every level, aggregates every window and fits every cell.
pub fn run_pipeline(cfg: &RunConfig, tags_dir: Option<&Path>) -> Result<PipelineRun> {
    let window_ticks = cfg.window_ticks()?;
    let alpha = cfg.alpha_sq_levels();
    let per_level: Vec<(Vec<f64>, Vec<ClickHistogram>)> = (0..cfg.levels.len())
        .into_par_iter()
        .map(|level| {
            let stream = simulate_level(cfg, level).map_err(|e| e.at_stage("simulate", level))?;
            if let Some(dir) = tags_dir {
                write_tags_file(&tag_path(dir, level), &stream, Some(alpha[level]))
                    .map_err(|e| e.at_stage("simulate", level))?;
            }
            let hists = aggregate_sweep(&stream, &window_ticks).map_err(|e| e.at_stage("aggregate", level))?;
            Ok((stream.detector_rates(), hists))
        })
        .collect::<Result<_>>()?;

    let rates = per_level.iter().map(|(r, _)| r.clone()).collect();
    let mut histograms = vec![Vec::with_capacity(cfg.levels.len()); window_ticks.len()];
    for (_, hists) in per_level {
        for (row, h) in histograms.iter_mut().zip(hists) {
            row.push(h);
        }
    }
    let fits = fit_cells(cfg, &histograms, &cfg.windows).map_err(|e| e.at_stage("fit", 0))?;
    Ok(PipelineRun {
        window_ticks,
        rates,
        histograms,
        fits,
        gate_ticks: cfg.sim.gate_ticks(),
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = create_writer(path)?;
    w.write_all(text.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

/// Writes the report tables, histograms and surface for a finished run.
pub fn write_artifacts(cfg: &RunConfig, run: &PipelineRun, out: &Path) -> Result<Vec<PathBuf>> {
    let n = cfg.detectors.count;
    let alpha = cfg.alpha_sq_levels();
    let mut written = Vec::new();

    let mut rates = String::from("level,alpha_sq");
    for d in 1..=n {
        rates.push_str(&format!(",d{d}_cps"));
    }
    rates.push_str(",mean_cps\n");
    for (l, r) in run.rates.iter().enumerate() {
        let mean = r.iter().sum::<f64>() / n as f64;
        rates.push_str(&format!("{},{}", cfg.levels[l], alpha[l]));
        for v in r {
            rates.push_str(&format!(",{v}"));
        }
        rates.push_str(&format!(",{mean}\n"));
    }
    let path = out.join("count_rates.csv");
    write_text(&path, &rates)?;
    written.push(path);

    let mut stats = String::from("level,window_s,window_count");
    for k in 0..=n {
        stats.push_str(&format!(",obs_k{k}"));
    }
    for k in 0..=n {
        stats.push_str(&format!(",fit_k{k}"));
    }
    stats.push('\n');
    for l in 0..cfg.levels.len() {
        for (r, &w) in cfg.windows.iter().enumerate() {
            let h = &run.histograms[r][l];
            stats.push_str(&format!("{},{w},{}", cfg.levels[l], h.window_count));
            for f in h.frequencies() {
                stats.push_str(&format!(",{f}"));
            }
            match run.fits.cell(r, l) {
                Ok(fit) => fit.fitted_multiplicity.iter().for_each(|p| stats.push_str(&format!(",{p}"))),
                Err(_) => (0..=n).for_each(|_| stats.push_str(",NaN")),
            }
            stats.push('\n');
        }
    }
    let path = out.join("click_stats.csv");
    write_text(&path, &stats)?;
    written.push(path);

    let (r, l) = (cfg.distribution_window, cfg.distribution_level);
    let cell = r * cfg.levels.len() + l;
    let fit = run
        .fits
        .cell(r, l)
        .as_ref()
        .map_err(|e| Error::Numerical(e.clone()).at_stage("report", cell))?;
    let poisson = poisson_reconstruction(fit.params.mu, n).map_err(|e| e.at_stage("report", cell))?;
    let observed = run.histograms[r][l].frequencies();
    let mut dist = String::from("k,click,binomial,poisson\n");
    for k in 0..=n {
        let label = if k == n { format!("{k}+") } else { k.to_string() };
        dist.push_str(&format!(
            "{label},{},{},{}\n",
            observed[k], fit.fitted_multiplicity[k], poisson.probs[k]
        ));
    }
    let path = out.join("distribution.csv");
    write_text(&path, &dist)?;
    written.push(path);

    if cfg.write_histograms {
        for (r, row) in run.histograms.iter().enumerate() {
            for (l, h) in row.iter().enumerate() {
                let file = HistogramFile {
                    schedule: WindowSchedule::gated(run.window_ticks[r], run.gate_ticks),
                    tick_duration: cfg.sim.tick_duration,
                    alpha_sq: Some(alpha[l]),
                    hist: h.clone(),
                };
                let path = hist_path(out, &format!("level_{l:02}"), run.window_ticks[r]);
                file.write_file(&path).map_err(|e| e.at_stage("report", r * cfg.levels.len() + l))?;
                written.push(path);
            }
        }
    }

    let surface = SurfaceFile::from_grid(&run.fits, &cfg.windows, &cfg.levels, cfg.level_axis, n);
    let path = out.join("surface.txt");
    surface.write_file(&path)?;
    written.push(path);
    Ok(written)
}

pub fn cmd_pipeline(cfg: &RunConfig, out: &Path) -> Result<(PipelineRun, Vec<PathBuf>)> {
    let tags_dir = cfg.write_tags.then_some(out);
    let run = run_pipeline(cfg, tags_dir)?;
    let written = write_artifacts(cfg, &run, out)?;
    Ok((run, written))
}
