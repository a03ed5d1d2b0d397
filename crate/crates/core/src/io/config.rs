//! Run configuration: a flat TOML file of dotted keys such as `sim.duration = "0.2s"`.
//!
//! Durations accept a bare number of seconds or a string with an `fs`, `ps`,
//! `ns`, `us`, `ms` or `s` suffix. Unknown keys are rejected, and every
//! validation error names the offending key.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::surface::LevelAxis;
use crate::click_model::ClickModelParams;
use crate::coincidence::ClickHistogram;
use crate::error::{Error, Result};
use crate::field_model::{calibrate_threshold, CoherentSource, DetectorSpec, SamplingMode, SimConfig, SplitterNetwork};
use crate::fitter::{FitConfig, FitTarget, Interval};

/// Environment variable that overrides `output.dir`.
pub const OUT_DIR_ENV: &str = "PNR_OUT_DIR";

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum Quantity {
    Number(f64),
    Text(String),
}

impl Quantity {
    fn seconds(&self, key: &str) -> Result<f64> {
        match self {
            Quantity::Number(v) => Ok(*v),
            Quantity::Text(s) => parse_duration(s).ok_or_else(|| Error::config(key, format!("cannot read `{s}` as a duration"))),
        }
    }
}

/// Parses `"2us"`, `"0.2 s"`, `"1e-9"` and similar into seconds.
pub fn parse_duration(s: &str) -> Option<f64> {
    let s = s.trim();
    // dividing by an exact power of ten keeps "5us" at the double nearest 5e-6
    const UNITS: [(&str, f64); 7] = [
        ("fs", 1e15),
        ("ps", 1e12),
        ("ns", 1e9),
        ("us", 1e6),
        ("µs", 1e6),
        ("ms", 1e3),
        ("s", 1.0),
    ];
    for (suffix, per_second) in UNITS {
        if let Some(num) = s.strip_suffix(suffix) {
            return num.trim().parse::<f64>().ok().map(|v| v / per_second);
        }
    }
    s.parse().ok()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum ScalarOrList {
    Scalar(f64),
    List(Vec<f64>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum Threshold {
    Value(f64),
    Keyword(String),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    seed: Option<u64>,
    workers: Option<usize>,
    #[serde(default)]
    source: RawSource,
    #[serde(default)]
    network: RawNetwork,
    #[serde(default)]
    detectors: RawDetectors,
    #[serde(default)]
    sim: RawSim,
    #[serde(default)]
    sweep: RawSweep,
    #[serde(default)]
    fit: RawFit,
    #[serde(default)]
    report: RawReport,
    #[serde(default)]
    output: RawOutput,
    #[serde(default)]
    snr: RawSnr,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSource {
    coherence_time: Option<Quantity>,
    power_to_alpha_sq: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNetwork {
    intensities: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDetectors {
    count: Option<usize>,
    threshold: Option<Threshold>,
    intrinsic_dark_rate: Option<f64>,
    dead_time: Option<Quantity>,
    dark_rate: Option<f64>,
    efficiency_scale: Option<ScalarOrList>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSim {
    slot: Option<Quantity>,
    duration: Option<Quantity>,
    gate: Option<Quantity>,
    tick: Option<Quantity>,
    mode: Option<SamplingMode>,
    slot_cap: Option<u64>,
    record_cap: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    windows: Option<Vec<Quantity>>,
    window_min: Option<Quantity>,
    window_max: Option<Quantity>,
    window_step: Option<Quantity>,
    alpha_sq: Option<Vec<f64>>,
    powers: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFit {
    mu_max: Option<f64>,
    nu_factor: Option<f64>,
    fit_efficiencies: Option<bool>,
    restarts: Option<usize>,
    max_evals: Option<usize>,
    tolerance: Option<f64>,
    target: Option<FitTarget>,
    smoothing: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawReport {
    distribution_window: Option<usize>,
    distribution_level: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<PathBuf>,
    write_tags: Option<bool>,
    write_histograms: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSnr {
    rate: Option<f64>,
    coherence: Option<Quantity>,
    integration: Option<Quantity>,
    n_min: Option<usize>,
    n_max: Option<usize>,
    window_min: Option<Quantity>,
    window_max: Option<Quantity>,
    window_points: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorSettings {
    pub count: usize,
    /// `None` calibrates γ from `intrinsic_dark_rate`.
    pub threshold: Option<f64>,
    pub intrinsic_dark_rate: f64,
    pub dead_time: f64,
    pub dark_rate: f64,
    pub efficiency_scale: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitSettings {
    pub mu_max: f64,
    /// Upper bound on each ν as a multiple of its nominal value.
    pub nu_factor: f64,
    pub fit_efficiencies: bool,
    pub restarts: usize,
    pub max_evals: usize,
    pub tolerance: f64,
    pub target: FitTarget,
    pub smoothing: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnrSettings {
    pub rate: f64,
    pub coherence: f64,
    pub integration: f64,
    pub n_values: Vec<usize>,
    pub windows: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
    pub coherence_time: f64,
    pub power_to_alpha_sq: Option<f64>,
    pub intensities: Vec<f64>,
    pub detectors: DetectorSettings,
    pub sim: SimConfig,
    /// Coincidence windows in seconds.
    pub windows: Vec<f64>,
    pub level_axis: LevelAxis,
    /// Sweep levels in units of `level_axis`.
    pub levels: Vec<f64>,
    pub fit: FitSettings,
    pub distribution_window: usize,
    pub distribution_level: usize,
    pub out_dir: PathBuf,
    pub write_tags: bool,
    pub write_histograms: bool,
    pub snr: SnrSettings,
}

/// 10 ns followed by 500 ns steps up to 20 µs.
pub fn default_windows() -> Vec<f64> {
    stepped_windows(10e-9, 20e-6, 500e-9)
}

fn stepped_windows(min: f64, max: f64, step: f64) -> Vec<f64> {
    let mut out = vec![min];
    let steps = (max / step + 1e-9).floor() as u64;
    out.extend(
        (1..=steps)
            .map(|k| snap(k as f64 * step))
            .filter(|&w| w > min * (1.0 + 1e-12)),
    );
    if out.last().is_some_and(|&last| last < max * (1.0 - 1e-12)) {
        out.push(max);
    }
    out
}

/// Rounds to 12 significant digits so `3 × 500 ns` prints as `0.0000015`.
fn snap(v: f64) -> f64 {
    format!("{v:.11e}").parse().unwrap_or(v)
}

/// 21 geometric levels of mean photon number per slot.
pub fn default_levels() -> Vec<f64> {
    log_space(0.1, 100.0, 21)
}

fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| snap((a + (b - a) * i as f64 / (n - 1) as f64).exp())).collect()
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::from_toml("", "<defaults>").expect("defaults are valid")
    }
}

fn positive(key: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::config(key, format!("must be positive, got {v}")))
    }
}

fn non_negative(key: &str, v: f64) -> Result<f64> {
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::config(key, format!("must be >= 0, got {v}")))
    }
}

fn seconds(q: &Option<Quantity>, key: &str, default: f64) -> Result<f64> {
    q.as_ref().map(|q| q.seconds(key)).transpose().map(|v| v.unwrap_or(default))
}

/// Names the key on the line where TOML reported an error.
fn toml_error(text: &str, e: &toml::de::Error) -> Error {
    let key = e
        .span()
        .and_then(|span| {
            let start = text[..span.start.min(text.len())].rfind('\n').map_or(0, |i| i + 1);
            let line = text[start..].lines().next()?;
            line.split_once('=').map(|(k, _)| k.trim().to_string())
        })
        .filter(|k| !k.is_empty())
        .unwrap_or_else(|| "<file>".to_string());
    Error::config(key, e.message().to_string())
}

impl RunConfig {
    pub fn from_toml(text: &str, path: &str) -> Result<Self> {
        let raw: RawFile = toml::from_str(text).map_err(|e| {
            let err = toml_error(text, &e);
            match err {
                Error::Config { key, message } => Error::config(key, format!("{message} ({path})")),
                other => other,
            }
        })?;
        Self::resolve(raw)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, &path.display().to_string())
    }

    /// Applies the output-directory environment override.
    pub fn apply_env(&mut self) {
        if let Some(dir) = std::env::var_os(OUT_DIR_ENV).filter(|d| !d.is_empty()) {
            self.out_dir = PathBuf::from(dir);
        }
    }

    fn resolve(raw: RawFile) -> Result<Self> {
        let det = &raw.detectors;
        let count = det.count.unwrap_or(4);
        if count == 0 || count > 64 {
            return Err(Error::config("detectors.count", "must be in 1..=64"));
        }
        let intensities = match &raw.network.intensities {
            Some(v) if v.len() != count => {
                return Err(Error::config(
                    "network.intensities",
                    format!("{} entries for {count} detectors", v.len()),
                ))
            }
            Some(v) => v.clone(),
            None => vec![1.0 / count as f64; count],
        };
        let total: f64 = intensities.iter().sum();
        if intensities.iter().any(|&x| !(x >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::config("network.intensities", "must be non-negative and sum to 1"));
        }
        let threshold = match &det.threshold {
            None => None,
            Some(Threshold::Keyword(k)) if k == "auto" => None,
            Some(Threshold::Keyword(k)) => {
                return Err(Error::config("detectors.threshold", format!("expected a number or \"auto\", got `{k}`")))
            }
            Some(Threshold::Value(v)) => Some(positive("detectors.threshold", *v)?),
        };
        let efficiency_scale = match &det.efficiency_scale {
            None => vec![1.0; count],
            Some(ScalarOrList::Scalar(v)) => vec![*v; count],
            Some(ScalarOrList::List(v)) if v.len() == count => v.clone(),
            Some(ScalarOrList::List(v)) => {
                return Err(Error::config(
                    "detectors.efficiency_scale",
                    format!("{} entries for {count} detectors", v.len()),
                ))
            }
        };
        if efficiency_scale.iter().any(|e| !(0.0..=1.0).contains(e)) {
            return Err(Error::config("detectors.efficiency_scale", "entries must lie in [0, 1]"));
        }
        let detectors = DetectorSettings {
            count,
            threshold,
            intrinsic_dark_rate: positive(
                "detectors.intrinsic_dark_rate",
                det.intrinsic_dark_rate.unwrap_or(DetectorSpec::DEFAULT_INTRINSIC_DARK_RATE),
            )?,
            dead_time: non_negative(
                "detectors.dead_time",
                seconds(&det.dead_time, "detectors.dead_time", DetectorSpec::DEFAULT_DEAD_TIME)?,
            )?,
            dark_rate: non_negative("detectors.dark_rate", det.dark_rate.unwrap_or(0.0))?,
            efficiency_scale,
        };

        let seed = raw.seed.unwrap_or(0);
        let defaults = SimConfig::default();
        let s = &raw.sim;
        let sim = SimConfig {
            slot_duration: positive("sim.slot", seconds(&s.slot, "sim.slot", defaults.slot_duration)?)?,
            duration: positive("sim.duration", seconds(&s.duration, "sim.duration", defaults.duration)?)?,
            gate_time: non_negative("sim.gate", seconds(&s.gate, "sim.gate", defaults.gate_time)?)?,
            tick_duration: positive("sim.tick", seconds(&s.tick, "sim.tick", defaults.tick_duration)?)?,
            seed,
            sampling_mode: s.mode.unwrap_or_default(),
            slot_cap: s.slot_cap.unwrap_or(defaults.slot_cap),
            record_cap: s.record_cap.unwrap_or(defaults.record_cap),
        };
        sim.validate().map_err(|e| Error::config("sim", e.to_string()))?;

        let sw = &raw.sweep;
        let windows = match (&sw.windows, &sw.window_min, &sw.window_max, &sw.window_step) {
            (Some(list), None, None, None) => list
                .iter()
                .map(|q| q.seconds("sweep.windows"))
                .collect::<Result<Vec<_>>>()?,
            (None, None, None, None) => default_windows(),
            (None, Some(lo), Some(hi), Some(step)) => {
                let lo = positive("sweep.window_min", lo.seconds("sweep.window_min")?)?;
                let hi = positive("sweep.window_max", hi.seconds("sweep.window_max")?)?;
                let step = positive("sweep.window_step", step.seconds("sweep.window_step")?)?;
                if hi < lo {
                    return Err(Error::config("sweep.window_max", "must be >= sweep.window_min"));
                }
                stepped_windows(lo, hi, step)
            }
            (Some(_), ..) => {
                return Err(Error::config("sweep.windows", "give either a list or window_min/max/step, not both"))
            }
            _ => {
                return Err(Error::config(
                    "sweep.window_min",
                    "window_min, window_max and window_step must be given together",
                ))
            }
        };
        if windows.is_empty() {
            return Err(Error::config("sweep.windows", "must not be empty"));
        }
        for &w in &windows {
            positive("sweep.windows", w)?;
        }
        let (level_axis, levels) = match (&sw.alpha_sq, &sw.powers) {
            (Some(_), Some(_)) => return Err(Error::config("sweep.powers", "give sweep.alpha_sq or sweep.powers, not both")),
            (Some(a), None) => (LevelAxis::AlphaSq, a.clone()),
            (None, Some(p)) => {
                if raw.source.power_to_alpha_sq.is_none() {
                    return Err(Error::config("source.power_to_alpha_sq", "required when sweep.powers is set"));
                }
                (LevelAxis::Power, p.clone())
            }
            (None, None) => (LevelAxis::AlphaSq, default_levels()),
        };
        let level_key = match level_axis {
            LevelAxis::AlphaSq => "sweep.alpha_sq",
            LevelAxis::Power => "sweep.powers",
        };
        if levels.is_empty() {
            return Err(Error::config(level_key, "must not be empty"));
        }
        for &l in &levels {
            non_negative(level_key, l)?;
        }
        if let Some(k) = raw.source.power_to_alpha_sq {
            positive("source.power_to_alpha_sq", k)?;
        }

        let f = &raw.fit;
        let fit = FitSettings {
            mu_max: positive("fit.mu_max", f.mu_max.unwrap_or(40.0))?,
            nu_factor: positive("fit.nu_factor", f.nu_factor.unwrap_or(10.0))?,
            fit_efficiencies: f.fit_efficiencies.unwrap_or(false),
            restarts: f.restarts.unwrap_or(2),
            max_evals: f.max_evals.unwrap_or(4000),
            tolerance: positive("fit.tolerance", f.tolerance.unwrap_or(1e-10))?,
            target: f.target.unwrap_or_default(),
            smoothing: f.smoothing.unwrap_or(true),
        };
        if fit.max_evals == 0 {
            return Err(Error::config("fit.max_evals", "must be >= 1"));
        }
        if fit.target == FitTarget::Pattern && count > crate::click_model::MAX_PATTERN_DETECTORS {
            return Err(Error::config("fit.target", "pattern fits support at most 24 detectors"));
        }

        let distribution_window = raw.report.distribution_window.unwrap_or(windows.len() / 2);
        let distribution_level = raw.report.distribution_level.unwrap_or(levels.len() / 2);
        if distribution_window >= windows.len() {
            return Err(Error::config("report.distribution_window", "index outside the window sweep"));
        }
        if distribution_level >= levels.len() {
            return Err(Error::config("report.distribution_level", "index outside the level sweep"));
        }

        let sn = &raw.snr;
        let n_min = sn.n_min.unwrap_or(1);
        let n_max = sn.n_max.unwrap_or(50);
        if n_min == 0 || n_max < n_min {
            return Err(Error::config("snr.n_max", "need 1 <= snr.n_min <= snr.n_max"));
        }
        let wmin = positive("snr.window_min", seconds(&sn.window_min, "snr.window_min", 1e-15)?)?;
        let wmax = positive("snr.window_max", seconds(&sn.window_max, "snr.window_max", 1e-3)?)?;
        let points = sn.window_points.unwrap_or(61);
        if points == 0 || wmax < wmin {
            return Err(Error::config("snr.window_points", "need >= 1 point and window_min <= window_max"));
        }
        let snr = SnrSettings {
            rate: positive("snr.rate", sn.rate.unwrap_or(2e5))?,
            coherence: positive("snr.coherence", seconds(&sn.coherence, "snr.coherence", 2e-12)?)?,
            integration: positive("snr.integration", seconds(&sn.integration, "snr.integration", 0.5)?)?,
            n_values: (n_min..=n_max).collect(),
            windows: log_space(wmin, wmax, points),
        };

        let cfg = RunConfig {
            seed,
            workers: raw.workers.unwrap_or(0),
            coherence_time: positive(
                "source.coherence_time",
                seconds(&raw.source.coherence_time, "source.coherence_time", CoherentSource::DEFAULT_COHERENCE_TIME)?,
            )?,
            power_to_alpha_sq: raw.source.power_to_alpha_sq,
            intensities,
            detectors,
            sim,
            windows,
            level_axis,
            levels,
            fit,
            distribution_window,
            distribution_level,
            out_dir: raw.output.dir.clone().unwrap_or_else(|| PathBuf::from("pnr-out")),
            write_tags: raw.output.write_tags.unwrap_or(false),
            write_histograms: raw.output.write_histograms.unwrap_or(true),
            snr,
        };
        cfg.window_ticks()?;
        cfg.detector_specs()?;
        Ok(cfg)
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.sim.seed = seed;
    }

    /// Windows in ticks; each must be a whole number of ticks no longer than the gate.
    pub fn window_ticks(&self) -> Result<Vec<u64>> {
        let gate = self.sim.gate_ticks();
        self.windows
            .iter()
            .map(|&w| {
                let ticks = w / self.sim.tick_duration;
                let rounded = ticks.round();
                if rounded < 1.0 || (ticks - rounded).abs() > 1e-6 * rounded.max(1.0) {
                    return Err(Error::config(
                        "sweep.windows",
                        format!("{w} s is not a whole number of {} s ticks", self.sim.tick_duration),
                    ));
                }
                let ticks = rounded as u64;
                if gate != 0 && ticks > gate {
                    return Err(Error::config("sweep.windows", format!("{w} s exceeds the gate time")));
                }
                Ok(ticks)
            })
            .collect()
    }

    /// Mean photon number per slot for each sweep level.
    pub fn alpha_sq_levels(&self) -> Vec<f64> {
        match self.level_axis {
            LevelAxis::AlphaSq => self.levels.clone(),
            LevelAxis::Power => {
                let k = self.power_to_alpha_sq.unwrap_or(1.0);
                self.levels.iter().map(|p| p * k).collect()
            }
        }
    }

    pub fn source_for(&self, level: usize) -> Result<CoherentSource> {
        let alpha_sq = self.alpha_sq_levels()[level];
        match self.level_axis {
            LevelAxis::AlphaSq => CoherentSource::new(alpha_sq, self.coherence_time),
            LevelAxis::Power => CoherentSource::from_power(
                self.levels[level],
                self.power_to_alpha_sq.unwrap_or(1.0),
                self.coherence_time,
            ),
        }
    }

    pub fn network(&self) -> Result<SplitterNetwork> {
        SplitterNetwork::from_intensities(&self.intensities).map_err(|e| Error::config("network.intensities", e.to_string()))
    }

    pub fn threshold(&self) -> Result<f64> {
        match self.detectors.threshold {
            Some(t) => Ok(t),
            None => calibrate_threshold(self.detectors.intrinsic_dark_rate, self.sim.slot_duration)
                .map_err(|e| Error::config("detectors.intrinsic_dark_rate", e.to_string())),
        }
    }

    pub fn detector_specs(&self) -> Result<Vec<DetectorSpec>> {
        let gamma = self.threshold()?;
        self.detectors
            .efficiency_scale
            .iter()
            .map(|&scale| {
                let mut d = DetectorSpec::new(gamma, self.detectors.dead_time)
                    .map_err(|e| Error::config("detectors", e.to_string()))?;
                d.dark_rate = self.detectors.dark_rate;
                d.efficiency_scale = scale;
                Ok(d)
            })
            .collect()
    }

    /// Nominal dark exponent per detector for a window of `window_s` seconds.
    pub fn nominal_nu(&self, window_s: f64) -> f64 {
        (self.detectors.intrinsic_dark_rate + self.detectors.dark_rate) * window_s
    }

    /// Fit configuration for one window, started from a moment estimate of `μ`.
    pub fn fit_config(&self, window_s: f64, hist: &ClickHistogram) -> FitConfig {
        let n = self.detectors.count;
        let nu = self.nominal_nu(window_s);
        let etas: Vec<f64> = self.detectors.efficiency_scale.iter().map(|s| s * s).collect();
        let mut initial = ClickModelParams {
            mu: 0.0,
            etas: etas.clone(),
            nus: vec![nu; n],
            weights: self.intensities.clone(),
        };
        initial.mu = moment_mu(hist, &initial).min(self.fit.mu_max);
        let bounds = crate::fitter::FitBounds {
            mu: Interval::new(0.0, self.fit.mu_max),
            etas: etas
                .iter()
                .map(|&e| if self.fit.fit_efficiencies { Interval::new(0.0, 1.0) } else { Interval::fixed(e) })
                .collect(),
            nus: vec![Interval::new(0.0, (self.fit.nu_factor * nu).max(nu)); n],
            fit_weights: true,
        };
        FitConfig {
            initial,
            bounds,
            max_evals: self.fit.max_evals,
            tolerance: self.fit.tolerance,
            restarts: self.fit.restarts,
            seed: self.seed,
            target: self.fit.target,
        }
    }
}

/// `μ` that reproduces the observed mean click count under uniform splitting.
pub fn moment_mu(hist: &ClickHistogram, nominal: &ClickModelParams) -> f64 {
    let n = nominal.detector_count() as f64;
    let eta = nominal.etas.iter().sum::<f64>() / n;
    let nu = nominal.nus.iter().sum::<f64>() / n;
    let frac = (hist.mean_clicks() / n).min(1.0 - 1e-12);
    if eta <= 0.0 {
        return 0.0;
    }
    ((-(1.0 - frac).ln() - nu) * n / eta).max(0.0)
}
