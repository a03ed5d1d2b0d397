//! Binomial click model for arrays of on-off detectors fed by coherent light.
//!
//! Detector `i` clicks with probability `p_i = 1 - exp(-η_i |u_i|² μ - ν_i)`,
//! independently of the others. Only the products `η_i |u_i|² μ` enter, so
//! `μ` is pinned by the convention `Σ |u_i|² = 1` and efficiencies are read
//! relative to whatever nominal values the caller supplies.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const WEIGHT_TOL: f64 = 1e-12;

/// Largest detector count for which per-pattern tables are built.
pub const MAX_PATTERN_DETECTORS: usize = 24;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClickModelParams {
    /// Mean photon number `|α|²`.
    pub mu: f64,
    pub etas: Vec<f64>,
    /// Dark-count exponents; a dark count happens with probability `1 - e^{-ν_i}`.
    pub nus: Vec<f64>,
    /// Branch intensities `|u_i|²`, summing to one.
    pub weights: Vec<f64>,
}

impl ClickModelParams {
    pub fn uniform(n: usize, mu: f64, eta: f64, nu: f64) -> Self {
        ClickModelParams {
            mu,
            etas: vec![eta; n],
            nus: vec![nu; n],
            weights: vec![1.0 / n as f64; n],
        }
    }

    pub fn detector_count(&self) -> usize {
        self.weights.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.weights.len();
        if n == 0 {
            return Err(Error::invalid("weights", "at least one detector is required"));
        }
        if self.etas.len() != n || self.nus.len() != n {
            return Err(Error::invalid("etas/nus", "must have one entry per detector"));
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(Error::invalid("mu", format!("must be finite and >= 0, got {}", self.mu)));
        }
        if self.etas.iter().any(|e| !(0.0..=1.0).contains(e)) {
            return Err(Error::invalid("etas", "efficiencies must lie in [0, 1]"));
        }
        if self.nus.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::invalid("nus", "dark exponents must be >= 0"));
        }
        if self.weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::invalid("weights", "branch weights must be >= 0"));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::invalid("weights", format!("must sum to 1, got {total}")));
        }
        Ok(())
    }

    /// Every detector's click probability.
    pub fn click_probabilities(&self) -> Vec<f64> {
        (0..self.detector_count()).map(|i| click_probability(i, self)).collect()
    }
}

/// `p_i = 1 - exp(-η_i |u_i|² μ - ν_i)`.
pub fn click_probability(i: usize, params: &ClickModelParams) -> f64 {
    let exponent = params.etas[i] * params.weights[i] * params.mu + params.nus[i];
    if exponent.is_infinite() {
        return 1.0;
    }
    -(-exponent).exp_m1()
}

/// Probability of exactly `k` clicks, `k = 0..=N`.
pub fn click_distribution(params: &ClickModelParams) -> Vec<f64> {
    multiplicity_from_probabilities(&params.click_probabilities())
}

/// Poisson-binomial multiplicity law by sequential convolution over detectors.
pub fn multiplicity_from_probabilities(probs: &[f64]) -> Vec<f64> {
    let mut dist = Vec::with_capacity(probs.len() + 1);
    dist.push(1.0);
    for &p in probs {
        dist.push(0.0);
        for k in (0..dist.len()).rev() {
            let stay = dist[k] * (1.0 - p);
            let moved = if k > 0 { dist[k - 1] * p } else { 0.0 };
            dist[k] = stay + moved;
        }
    }
    dist
}

/// Probability of every click pattern, indexed by mask (bit `i` = detector `i`).
pub fn pattern_distribution(params: &ClickModelParams) -> Result<Vec<f64>> {
    pattern_from_probabilities(&params.click_probabilities())
}

pub fn pattern_from_probabilities(probs: &[f64]) -> Result<Vec<f64>> {
    if probs.len() > MAX_PATTERN_DETECTORS {
        return Err(Error::invalid(
            "detector_count",
            format!("pattern tables are limited to {MAX_PATTERN_DETECTORS} detectors"),
        ));
    }
    let mut table = vec![1.0];
    for (i, &p) in probs.iter().enumerate() {
        // entries for masks with bit i set are appended after the existing ones
        let half = 1usize << i;
        table.resize(2 * half, 0.0);
        for m in 0..half {
            table[m | half] = table[m] * p;
            table[m] *= 1.0 - p;
        }
    }
    Ok(table)
}

/// Photon-number law `P(0), ..., P(N-1), P(N+)` with the tail folded into the last bin.
#[derive(Debug, Clone, PartialEq)]
pub struct PhotonDistribution {
    pub probs: Vec<f64>,
}

impl PhotonDistribution {
    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }
}

pub fn poisson_reconstruction(mu: f64, bins: usize) -> Result<PhotonDistribution> {
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(Error::invalid("mu", format!("must be finite and >= 0, got {mu}")));
    }
    if bins == 0 {
        return Err(Error::invalid("bins", "must be >= 1"));
    }
    let mut probs = Vec::with_capacity(bins + 1);
    let mut term = (-mu).exp();
    for n in 0..bins {
        probs.push(term);
        term *= mu / (n + 1) as f64;
    }
    let head: f64 = probs.iter().sum();
    probs.push((1.0 - head).max(0.0));
    Ok(PhotonDistribution { probs })
}
