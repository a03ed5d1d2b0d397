//! Chi-squared recovery of click-model parameters from measured histograms.
//!
//! Each free parameter is mapped onto `[0, 1]` between its bounds and the
//! Pearson statistic is minimized with box-clipped Nelder–Mead plus restarts.
//! Branch weights are searched through softmax logits so they stay on the
//! probability simplex. A parameter whose interval collapses to a point is
//! held fixed.

use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::click_model::{click_distribution, pattern_distribution, ClickModelParams};
use crate::coincidence::ClickHistogram;
use crate::error::{Error, Result};
use crate::rng::SimRng;
use crate::simplex::{minimize, SimplexOptions};

/// Guard for empty expected bins in the Pearson denominator.
pub const EXPECTED_FLOOR: f64 = 1e-12;

const LOGIT_RANGE: f64 = 15.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn fixed(v: f64) -> Self {
        Interval { lo: v, hi: v }
    }

    pub fn is_fixed(&self) -> bool {
        self.lo == self.hi
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }

    fn to_unit(self, v: f64) -> f64 {
        ((v - self.lo) / (self.hi - self.lo)).clamp(0.0, 1.0)
    }

    fn from_unit(self, t: f64) -> f64 {
        self.lo + t * (self.hi - self.lo)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitBounds {
    pub mu: Interval,
    pub etas: Vec<Interval>,
    pub nus: Vec<Interval>,
    /// Whether branch weights are searched or held at their initial values.
    pub fit_weights: bool,
}

impl FitBounds {
    /// Efficiencies pinned at their nominal values, dark exponents in
    /// `[0, nu_max_i]`, `μ` in `[0, mu_max]`, weights free.
    pub fn nominal(initial: &ClickModelParams, mu_max: f64, nu_max: &[f64]) -> Self {
        FitBounds {
            mu: Interval::new(0.0, mu_max),
            etas: initial.etas.iter().map(|&e| Interval::fixed(e)).collect(),
            nus: nu_max.iter().map(|&v| Interval::new(0.0, v)).collect(),
            fit_weights: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitTarget {
    /// Fit the click-multiplicity distribution `P_0..P_N`.
    #[default]
    Multiplicity,
    /// Fit all `2^N` click patterns, which also resolves per-detector balance.
    Pattern,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub initial: ClickModelParams,
    pub bounds: FitBounds,
    /// Objective evaluations per simplex run.
    pub max_evals: usize,
    pub tolerance: f64,
    /// Extra simplex runs restarted around the incumbent.
    pub restarts: usize,
    pub seed: u64,
    pub target: FitTarget,
}

impl FitConfig {
    /// Defaults around `initial`: `μ ≤ mu_max`, dark exponents up to ten times nominal.
    pub fn new(initial: ClickModelParams, mu_max: f64) -> Self {
        let nu_max: Vec<f64> = initial.nus.iter().map(|&v| (10.0 * v).max(1e-9)).collect();
        let bounds = FitBounds::nominal(&initial, mu_max, &nu_max);
        FitConfig {
            initial,
            bounds,
            max_evals: 4000,
            tolerance: 1e-10,
            restarts: 2,
            seed: 0,
            target: FitTarget::Multiplicity,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.initial.validate()?;
        let n = self.initial.detector_count();
        if self.bounds.etas.len() != n || self.bounds.nus.len() != n {
            return Err(Error::invalid("bounds", "need one eta and nu interval per detector"));
        }
        let check = |name: &'static str, iv: &Interval, v: f64| {
            if !(iv.lo <= iv.hi) || !iv.contains(v) {
                Err(Error::invalid(name, format!("initial value {v} outside [{}, {}]", iv.lo, iv.hi)))
            } else {
                Ok(())
            }
        };
        check("mu", &self.bounds.mu, self.initial.mu)?;
        for (iv, &v) in self.bounds.etas.iter().zip(&self.initial.etas) {
            check("eta", iv, v)?;
            if iv.lo < 0.0 || iv.hi > 1.0 {
                return Err(Error::invalid("eta", "bounds must lie within [0, 1]"));
            }
        }
        for (iv, &v) in self.bounds.nus.iter().zip(&self.initial.nus) {
            check("nu", iv, v)?;
            if iv.lo < 0.0 {
                return Err(Error::invalid("nu", "bounds must be >= 0"));
            }
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::invalid("tolerance", "must be > 0"));
        }
        if self.max_evals == 0 {
            return Err(Error::invalid("max_evals", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: ClickModelParams,
    pub chi_squared: f64,
    pub initial_chi_squared: f64,
    pub fitted_multiplicity: Vec<f64>,
    /// Largest `|P_k - O_k / windows|`.
    pub residual_max: f64,
    pub converged: bool,
    pub evals: usize,
}

impl FitResult {
    /// Set when the fitted mean photon number exceeds the detector count,
    /// where the multiplicity data constrain it only weakly.
    pub fn high_mu_warning(&self) -> bool {
        self.params.mu > self.params.detector_count() as f64
    }
}

/// Pearson statistic of the multiplicity counts against the model.
pub fn chi_squared(hist: &ClickHistogram, params: &ClickModelParams) -> f64 {
    pearson(&hist.multiplicity_counts, &click_distribution(params), hist.window_count)
}

/// Pearson statistic over all `2^N` click patterns.
pub fn pattern_chi_squared(hist: &ClickHistogram, params: &ClickModelParams) -> Result<f64> {
    let probs = pattern_distribution(params)?;
    let mut observed = vec![0u64; probs.len()];
    for (&mask, &count) in &hist.pattern_counts {
        observed[mask as usize] += count;
    }
    Ok(pearson(&observed, &probs, hist.window_count))
}

fn pearson(observed: &[u64], probs: &[f64], windows: u64) -> f64 {
    let n = windows as f64;
    observed
        .iter()
        .zip(probs)
        .map(|(&o, &p)| {
            let e = n * p;
            let d = o as f64 - e;
            d * d / e.max(EXPECTED_FLOOR)
        })
        .sum()
}

/// Maps between model parameters and the optimizer's unit box.
struct Layout {
    base: ClickModelParams,
    bounds: FitBounds,
    free_mu: bool,
    free_etas: Vec<usize>,
    free_nus: Vec<usize>,
    logits: usize,
}

impl Layout {
    fn new(cfg: &FitConfig) -> Self {
        let n = cfg.initial.detector_count();
        Layout {
            base: cfg.initial.clone(),
            bounds: cfg.bounds.clone(),
            free_mu: !cfg.bounds.mu.is_fixed(),
            free_etas: (0..n).filter(|&i| !cfg.bounds.etas[i].is_fixed()).collect(),
            free_nus: (0..n).filter(|&i| !cfg.bounds.nus[i].is_fixed()).collect(),
            logits: if cfg.bounds.fit_weights && n > 1 { n - 1 } else { 0 },
        }
    }

    fn dims(&self) -> usize {
        self.free_mu as usize + self.free_etas.len() + self.free_nus.len() + self.logits
    }

    fn encode(&self, p: &ClickModelParams) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.dims());
        if self.free_mu {
            x.push(self.bounds.mu.to_unit(p.mu));
        }
        x.extend(self.free_etas.iter().map(|&i| self.bounds.etas[i].to_unit(p.etas[i])));
        x.extend(self.free_nus.iter().map(|&i| self.bounds.nus[i].to_unit(p.nus[i])));
        if self.logits > 0 {
            let n = p.weights.len();
            let last = p.weights[n - 1].max(1e-300).ln();
            let range = Interval::new(-LOGIT_RANGE, LOGIT_RANGE);
            x.extend(
                p.weights[..n - 1]
                    .iter()
                    .map(|w| range.to_unit(w.max(1e-300).ln() - last)),
            );
        }
        x
    }

    fn decode(&self, x: &[f64]) -> ClickModelParams {
        let mut p = self.base.clone();
        let mut it = x.iter().copied();
        if self.free_mu {
            p.mu = self.bounds.mu.from_unit(it.next().unwrap_or(0.0));
        }
        for &i in &self.free_etas {
            p.etas[i] = self.bounds.etas[i].from_unit(it.next().unwrap_or(0.0));
        }
        for &i in &self.free_nus {
            p.nus[i] = self.bounds.nus[i].from_unit(it.next().unwrap_or(0.0));
        }
        if self.logits > 0 {
            let range = Interval::new(-LOGIT_RANGE, LOGIT_RANGE);
            let mut logits: Vec<f64> = it.map(|t| range.from_unit(t)).collect();
            logits.push(0.0);
            let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
            let total: f64 = exps.iter().sum();
            p.weights = exps.iter().map(|e| e / total).collect();
        }
        p
    }
}

/// Fits the click model to `hist`, returning the best point found.
pub fn fit(hist: &ClickHistogram, cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    if hist.window_count == 0 {
        return Err(Error::invalid("histogram", "contains no windows"));
    }
    if hist.detector_count != cfg.initial.detector_count() {
        return Err(Error::invalid(
            "histogram",
            format!(
                "{} detectors in histogram, {} in fit config",
                hist.detector_count,
                cfg.initial.detector_count()
            ),
        ));
    }

    let objective = |p: &ClickModelParams| -> f64 {
        match cfg.target {
            FitTarget::Multiplicity => chi_squared(hist, p),
            FitTarget::Pattern => pattern_chi_squared(hist, p).unwrap_or(f64::INFINITY),
        }
    };
    if cfg.target == FitTarget::Pattern {
        pattern_chi_squared(hist, &cfg.initial)?;
    }
    let initial_chi_squared = objective(&cfg.initial);

    // No clicks at all and darkness allowed: the boundary is the exact answer.
    let all_dark = hist.multiplicity_counts[0] == hist.window_count;
    if all_dark && cfg.bounds.mu.lo == 0.0 && cfg.bounds.nus.iter().all(|iv| iv.lo == 0.0) {
        let mut params = cfg.initial.clone();
        params.mu = 0.0;
        params.nus.iter_mut().for_each(|v| *v = 0.0);
        return Ok(finish(hist, params, objective, initial_chi_squared, true, 0));
    }

    let layout = Layout::new(cfg);
    let opts = SimplexOptions {
        max_evals: cfg.max_evals,
        tolerance: cfg.tolerance,
        initial_step: 0.1,
    };
    let mut f = |x: &[f64]| objective(&layout.decode(x));

    let start = layout.encode(&cfg.initial);
    let mut best = minimize(&mut f, &start, &opts);
    let mut evals = best.evals;
    let mut rng = SimRng::seed_from_u64(cfg.seed);
    for r in 0..cfg.restarts {
        let jitter = 0.05 * (r + 1) as f64;
        let from: Vec<f64> = best
            .x
            .iter()
            .map(|&t| (t + rng.random_range(-jitter..=jitter)).clamp(0.0, 1.0))
            .collect();
        let run = minimize(&mut f, &from, &SimplexOptions { initial_step: jitter.max(0.02), ..opts });
        evals += run.evals;
        if run.value < best.value || (run.value == best.value && run.converged) {
            best = run;
        }
    }

    let mut params = layout.decode(&best.x);
    let mut value = best.value;
    // the starting point is always admissible, so never return something worse
    if !(value <= initial_chi_squared) {
        params = cfg.initial.clone();
        value = initial_chi_squared;
    }
    if !value.is_finite() {
        return Err(Error::Numerical(format!("chi-squared is not finite ({value})")));
    }
    Ok(finish(hist, params, objective, initial_chi_squared, best.converged, evals))
}

fn finish(
    hist: &ClickHistogram,
    params: ClickModelParams,
    objective: impl Fn(&ClickModelParams) -> f64,
    initial_chi_squared: f64,
    converged: bool,
    evals: usize,
) -> FitResult {
    let fitted_multiplicity = click_distribution(&params);
    let residual_max = fitted_multiplicity
        .iter()
        .zip(hist.frequencies())
        .map(|(p, o)| (p - o).abs())
        .fold(0.0, f64::max);
    FitResult {
        chi_squared: objective(&params),
        params,
        initial_chi_squared,
        fitted_multiplicity,
        residual_max,
        converged,
        evals,
    }
}

/// Fitted grid over (window, power) cells, stored row-major with one row per window.
#[derive(Debug, Clone)]
pub struct FitGrid {
    pub rows: usize,
    pub cols: usize,
    pub cells: Vec<std::result::Result<FitResult, String>>,
    /// Nearest-neighbor averaged `μ`, present when smoothing was requested.
    pub smoothed_mu: Option<Vec<f64>>,
}

impl FitGrid {
    pub fn cell(&self, row: usize, col: usize) -> &std::result::Result<FitResult, String> {
        &self.cells[row * self.cols + col]
    }

    /// Raw fitted `μ` per cell, NaN for failed cells.
    pub fn raw_mu(&self) -> Vec<f64> {
        self.cells
            .iter()
            .map(|c| c.as_ref().map(|r| r.params.mu).unwrap_or(f64::NAN))
            .collect()
    }

    /// The reported `μ` surface: smoothed when available, raw otherwise.
    pub fn mu_surface(&self) -> Vec<f64> {
        self.smoothed_mu.clone().unwrap_or_else(|| self.raw_mu())
    }
}

/// Fits every cell with its own configuration.
pub fn fit_grid<F>(grid: &[Vec<ClickHistogram>], config_for: F, smoothing: bool) -> Result<FitGrid>
where
    F: Fn(usize, usize) -> FitConfig + Sync,
{
    let rows = grid.len();
    let cols = grid.first().map(Vec::len).unwrap_or(0);
    if rows == 0 || cols == 0 {
        return Err(Error::invalid("histograms", "grid must not be empty"));
    }
    if grid.iter().any(|r| r.len() != cols) {
        return Err(Error::invalid("histograms", "grid rows must have equal length"));
    }
    let cells: Vec<_> = (0..rows * cols)
        .into_par_iter()
        .map(|idx| {
            let (r, c) = (idx / cols, idx % cols);
            fit(&grid[r][c], &config_for(r, c)).map_err(|e| e.to_string())
        })
        .collect();
    let mut out = FitGrid {
        rows,
        cols,
        cells,
        smoothed_mu: None,
    };
    if smoothing {
        out.smoothed_mu = Some(nearest_neighbor_smooth(&out.raw_mu(), rows, cols));
    }
    Ok(out)
}

pub fn fit_sweep(grid: &[Vec<ClickHistogram>], cfg: &FitConfig, smoothing: bool) -> Result<FitGrid> {
    fit_grid(grid, |_, _| cfg.clone(), smoothing)
}

/// One pass of averaging each cell with its finite 4-neighbors.
pub fn nearest_neighbor_smooth(values: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let at = |r: usize, c: usize| values[r * cols + c];
    let mut out = Vec::with_capacity(values.len());
    for r in 0..rows {
        for c in 0..cols {
            if !at(r, c).is_finite() {
                out.push(at(r, c));
                continue;
            }
            let mut sum = at(r, c);
            let mut n = 1.0;
            let neighbors = [
                (r.checked_sub(1), Some(c)),
                ((r + 1 < rows).then_some(r + 1), Some(c)),
                (Some(r), c.checked_sub(1)),
                (Some(r), (c + 1 < cols).then_some(c + 1)),
            ];
            for (nr, nc) in neighbors {
                if let (Some(nr), Some(nc)) = (nr, nc) {
                    let v = at(nr, nc);
                    if v.is_finite() {
                        sum += v;
                        n += 1.0;
                    }
                }
            }
            out.push(sum / n);
        }
    }
    out
}
