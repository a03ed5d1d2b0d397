//! Classical stochastic-field detector model.
//!
//! A coherent amplitude `α` is split across `N` arms with amplitudes `u_i`.
//! Each arm carries a horizontal mode `u_i α + σ z_H` and an empty vertical
//! mode `σ z_V`, where `σ = 1/√2` and `z` are standard complex Gaussians
//! (`E|z|² = 1`). A detector clicks when either mode's magnitude exceeds its
//! threshold `γ`, then stays dead for its dead time.

use std::f64::consts::FRAC_1_SQRT_2;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::marcum::marcum_q1;
use crate::rng::{detector_rng, SimRng};

/// Vacuum standard deviation of each field mode.
pub const VACUUM_SIGMA: f64 = FRAC_1_SQRT_2;

const UNITARITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherentSource {
    /// Mean photon number per slot, `|α|²`.
    pub alpha_sq: f64,
    /// Seconds.
    pub coherence_time: f64,
    /// Watts; bookkeeping only.
    pub nominal_power: f64,
    /// `alpha_sq` per watt of nominal power.
    pub power_to_alpha_sq: f64,
}

impl CoherentSource {
    pub const DEFAULT_COHERENCE_TIME: f64 = 2e-12;

    pub fn new(alpha_sq: f64, coherence_time: f64) -> Result<Self> {
        let source = CoherentSource {
            alpha_sq,
            coherence_time,
            nominal_power: 0.0,
            power_to_alpha_sq: 0.0,
        };
        source.validate()?;
        Ok(source)
    }

    pub fn from_power(power: f64, power_to_alpha_sq: f64, coherence_time: f64) -> Result<Self> {
        let source = CoherentSource {
            alpha_sq: power * power_to_alpha_sq,
            coherence_time,
            nominal_power: power,
            power_to_alpha_sq,
        };
        source.validate()?;
        Ok(source)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_sq >= 0.0 && self.alpha_sq.is_finite()) {
            return Err(Error::invalid("alpha_sq", format!("must be finite and >= 0, got {}", self.alpha_sq)));
        }
        if !(self.coherence_time > 0.0) {
            return Err(Error::invalid("coherence_time", format!("must be > 0, got {}", self.coherence_time)));
        }
        Ok(())
    }

    /// The coherent amplitude, taken real since only magnitudes matter.
    pub fn alpha(&self) -> Complex64 {
        Complex64::new(self.alpha_sq.sqrt(), 0.0)
    }
}

/// Beamsplitter network with one complex amplitude per output arm.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitterNetwork {
    weights: Vec<Complex64>,
}

impl SplitterNetwork {
    pub fn new(weights: Vec<Complex64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::invalid("network.weights", "at least one arm is required"));
        }
        let norm: f64 = weights.iter().map(|u| u.norm_sqr()).sum();
        if (norm - 1.0).abs() > UNITARITY_TOL {
            return Err(Error::invalid(
                "network.weights",
                format!("sum of |u_i|^2 must be 1, got {norm}"),
            ));
        }
        Ok(SplitterNetwork { weights })
    }

    pub fn uniform(arms: usize) -> Result<Self> {
        if arms == 0 {
            return Err(Error::invalid("network.weights", "at least one arm is required"));
        }
        let u = Complex64::new(1.0 / (arms as f64).sqrt(), 0.0);
        Ok(SplitterNetwork {
            weights: vec![u; arms],
        })
    }

    /// Builds real amplitudes from (unnormalized) intensity fractions.
    pub fn from_intensities(fractions: &[f64]) -> Result<Self> {
        if fractions.iter().any(|f| !(*f >= 0.0 && f.is_finite())) {
            return Err(Error::invalid("network.intensities", "fractions must be finite and >= 0"));
        }
        let total: f64 = fractions.iter().sum();
        if !(total > 0.0) {
            return Err(Error::invalid("network.intensities", "fractions must not all be zero"));
        }
        let weights = fractions
            .iter()
            .map(|f| Complex64::new((f / total).sqrt(), 0.0))
            .collect();
        Ok(SplitterNetwork { weights })
    }

    pub fn arms(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[Complex64] {
        &self.weights
    }

    /// `|u_i|²` per arm.
    pub fn intensities(&self) -> Vec<f64> {
        self.weights.iter().map(|u| u.norm_sqr()).collect()
    }

    /// Mean photon number delivered to each arm, `|u_i|² |α|²`.
    pub fn arm_alpha_sq(&self, source: &CoherentSource) -> Vec<f64> {
        self.intensities().iter().map(|w| w * source.alpha_sq).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorSpec {
    /// Amplitude threshold `γ`.
    pub threshold: f64,
    /// Seconds.
    pub dead_time: f64,
    /// Additive dark-count rate in counts per second, on top of vacuum crossings.
    pub dark_rate: f64,
    /// Multiplier on the arm's mean amplitude.
    pub efficiency_scale: f64,
}

impl DetectorSpec {
    pub const DEFAULT_DEAD_TIME: f64 = 2e-6;
    pub const ALT_DEAD_TIME: f64 = 1e-6;
    pub const DEFAULT_INTRINSIC_DARK_RATE: f64 = 300.0;

    pub fn new(threshold: f64, dead_time: f64) -> Result<Self> {
        let spec = DetectorSpec {
            threshold,
            dead_time,
            dark_rate: 0.0,
            efficiency_scale: 1.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold.is_finite()) {
            return Err(Error::invalid("threshold", format!("must be > 0, got {}", self.threshold)));
        }
        if !(self.dead_time >= 0.0 && self.dead_time.is_finite()) {
            return Err(Error::invalid("dead_time", format!("must be >= 0, got {}", self.dead_time)));
        }
        if !(self.dark_rate >= 0.0 && self.dark_rate.is_finite()) {
            return Err(Error::invalid("dark_rate", format!("must be >= 0, got {}", self.dark_rate)));
        }
        if !(0.0..=1.0).contains(&self.efficiency_scale) {
            return Err(Error::invalid(
                "efficiency_scale",
                format!("must lie in [0, 1], got {}", self.efficiency_scale),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// Explicit Gaussian field samples per detector-slot.
    GaussianDraw,
    /// Bernoulli clicks with the analytic threshold-crossing probability.
    #[default]
    AnalyticBernoulli,
}

impl FromStr for SamplingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian_draw" => Ok(SamplingMode::GaussianDraw),
            "analytic_bernoulli" => Ok(SamplingMode::AnalyticBernoulli),
            other => Err(Error::config(
                "sim.mode",
                format!("expected gaussian_draw or analytic_bernoulli, got `{other}`"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Field-sample granularity in seconds.
    pub slot_duration: f64,
    /// Total simulated time in seconds.
    pub duration: f64,
    /// Gate period in seconds; 0 disables gating.
    pub gate_time: f64,
    /// Timestamp resolution in seconds.
    pub tick_duration: f64,
    pub seed: u64,
    pub sampling_mode: SamplingMode,
    /// Maximum number of slots a run may cover.
    pub slot_cap: u64,
    /// Maximum number of records a run may emit.
    pub record_cap: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            slot_duration: 1e-9,
            duration: 0.2,
            gate_time: 2e-3,
            tick_duration: 1e-9,
            seed: 0,
            sampling_mode: SamplingMode::AnalyticBernoulli,
            slot_cap: 1 << 40,
            record_cap: 50_000_000,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.slot_duration > 0.0 && self.slot_duration.is_finite()) {
            return Err(Error::invalid("slot_duration", "must be > 0"));
        }
        if !(self.duration >= self.slot_duration && self.duration.is_finite()) {
            return Err(Error::invalid("duration", "must be at least one slot"));
        }
        if !(self.tick_duration > 0.0 && self.tick_duration.is_finite()) {
            return Err(Error::invalid("tick_duration", "must be > 0"));
        }
        if self.gate_time < 0.0 || integral_ratio(self.gate_time, self.slot_duration).is_none() {
            return Err(Error::invalid(
                "gate_time",
                "must be a non-negative integer multiple of slot_duration",
            ));
        }
        Ok(())
    }

    pub fn slot_count(&self) -> u64 {
        (self.duration / self.slot_duration * (1.0 + 1e-12)).floor() as u64
    }

    pub fn gate_ticks(&self) -> u64 {
        (self.gate_time / self.tick_duration).round() as u64
    }
}

/// One time-tagged detection event; bit `i` of `mask` is detector `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TagRecord {
    pub timestamp: u64,
    pub mask: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeTagStream {
    pub records: Vec<TagRecord>,
    /// Seconds per tick.
    pub tick_duration: f64,
    pub detector_count: usize,
    /// Gate period in ticks, 0 when ungated.
    pub gate_ticks: u64,
    /// Number of ticks covered by the acquisition, starting at tick 0.
    pub span_ticks: u64,
    pub seed: u64,
}

impl TimeTagStream {
    pub fn empty(detector_count: usize, tick_duration: f64, span_ticks: u64) -> Self {
        TimeTagStream {
            records: Vec::new(),
            tick_duration,
            detector_count,
            gate_ticks: 0,
            span_ticks,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.detector_count == 0 || self.detector_count > 64 {
            return Err(Error::invalid("detector_count", "must lie in 1..=64"));
        }
        let allowed = full_mask(self.detector_count);
        let mut prev = 0u64;
        for (index, r) in self.records.iter().enumerate() {
            if r.timestamp < prev {
                return Err(Error::UnsortedStream { index });
            }
            if r.mask == 0 || r.mask & !allowed != 0 {
                return Err(Error::InvalidMask {
                    index,
                    mask: r.mask,
                    detectors: self.detector_count,
                });
            }
            prev = r.timestamp;
        }
        Ok(())
    }

    /// Number of records in which each detector fired.
    pub fn detector_counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.detector_count];
        for r in &self.records {
            let mut m = r.mask;
            while m != 0 {
                counts[m.trailing_zeros() as usize] += 1;
                m &= m - 1;
            }
        }
        counts
    }

    pub fn duration_s(&self) -> f64 {
        self.span_ticks as f64 * self.tick_duration
    }

    /// Mean count rate of each detector over the acquisition span.
    pub fn detector_rates(&self) -> Vec<f64> {
        let t = self.duration_s();
        self.detector_counts()
            .into_iter()
            .map(|c| if t > 0.0 { c as f64 / t } else { 0.0 })
            .collect()
    }
}

pub(crate) fn full_mask(detectors: usize) -> u64 {
    if detectors >= 64 {
        u64::MAX
    } else {
        (1u64 << detectors) - 1
    }
}

/// Returns `x / unit` if it is (numerically) a non-negative integer.
fn integral_ratio(x: f64, unit: f64) -> Option<u64> {
    let r = x / unit;
    let n = r.round();
    if n >= 0.0 && (r - n).abs() <= 1e-9 * n.max(1.0) {
        Some(n as u64)
    } else {
        None
    }
}

/// Draws the horizontal-mode amplitude `u α + σ z` of one arm.
pub fn sample_arm_amplitude<R: Rng + ?Sized>(u: Complex64, alpha: Complex64, rng: &mut R) -> Complex64 {
    u * alpha + VACUUM_SIGMA * standard_complex_gaussian(rng)
}

/// Draws the (horizontal, vertical) mode pair of one arm.
pub fn sample_arm_modes<R: Rng + ?Sized>(u: Complex64, alpha: Complex64, rng: &mut R) -> (Complex64, Complex64) {
    let h = sample_arm_amplitude(u, alpha, rng);
    let v = sample_arm_amplitude(Complex64::new(0.0, 0.0), alpha, rng);
    (h, v)
}

/// Complex Gaussian with `E|z|² = 1`.
fn standard_complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * FRAC_1_SQRT_2
}

/// Probability that either mode of an arm with mean horizontal amplitude
/// `mean_amp` exceeds `threshold` in magnitude.
///
/// Each quadrature has standard deviation 1/2, so after rescaling by 2 the
/// horizontal magnitude is a unit Rice variable and the vertical one a unit
/// Rayleigh variable.
pub fn detection_probability(mean_amp: f64, threshold: f64) -> Result<f64> {
    if !(threshold > 0.0) {
        return Err(Error::invalid("threshold", format!("must be > 0, got {threshold}")));
    }
    if !(mean_amp >= 0.0 && mean_amp.is_finite()) {
        return Err(Error::invalid("mean_amp", format!("must be finite and >= 0, got {mean_amp}")));
    }
    let q_h = marcum_q1(2.0 * mean_amp, 2.0 * threshold);
    let q_v = (-2.0 * threshold * threshold).exp();
    // 1 - (1 - q_h)(1 - q_v), arranged to keep precision when both are tiny
    Ok((q_h + q_v - q_h * q_v).clamp(0.0, 1.0))
}

/// Finds the threshold whose vacuum-only crossing rate equals `target_dark_rate`.
pub fn calibrate_threshold(target_dark_rate: f64, slot_duration: f64) -> Result<f64> {
    if !(slot_duration > 0.0) {
        return Err(Error::invalid("slot_duration", "must be > 0"));
    }
    let p_target = target_dark_rate * slot_duration;
    if !(p_target > 0.0 && p_target < 1.0) {
        return Err(Error::Unattainable(format!(
            "{target_dark_rate} cps with {slot_duration} s slots needs a per-slot probability in (0, 1), got {p_target}"
        )));
    }
    let vacuum = |g: f64| {
        let e = (-2.0 * g * g).exp();
        e * (2.0 - e)
    };
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while vacuum(hi) > p_target {
        hi *= 2.0;
        if hi > 1e3 {
            return Err(Error::Unattainable(format!("no threshold reaches {target_dark_rate} cps")));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if vacuum(mid) > p_target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Runs the detector model over `cfg.duration` and returns the merged tag stream.
pub fn simulate_stream(
    source: &CoherentSource,
    net: &SplitterNetwork,
    dets: &[DetectorSpec],
    cfg: &SimConfig,
) -> Result<TimeTagStream> {
    source.validate()?;
    cfg.validate()?;
    for d in dets {
        d.validate()?;
    }
    if dets.len() != net.arms() {
        return Err(Error::invalid(
            "detectors",
            format!("{} detectors for {} splitter arms", dets.len(), net.arms()),
        ));
    }
    if dets.len() > 64 {
        return Err(Error::invalid("detectors", "at most 64 detectors are supported"));
    }
    let slots = cfg.slot_count();
    if slots > cfg.slot_cap {
        return Err(Error::SlotBudget {
            slots,
            cap: cfg.slot_cap,
        });
    }

    let alpha = source.alpha();
    let per_detector: Vec<Vec<u64>> = dets
        .par_iter()
        .zip(net.weights().par_iter())
        .enumerate()
        .map(|(i, (det, &u))| {
            let mut rng = detector_rng(cfg.seed, i);
            let arm = ArmRun {
                slots,
                dead_slots: dead_slots(det.dead_time, cfg.slot_duration),
                p_dark: (det.dark_rate * cfg.slot_duration).min(1.0),
                record_cap: cfg.record_cap,
            };
            let u_eff = u * det.efficiency_scale;
            match cfg.sampling_mode {
                SamplingMode::AnalyticBernoulli => {
                    let mean_amp = (u_eff * alpha).norm();
                    let p_threshold = detection_probability(mean_amp, det.threshold)?;
                    arm.run_bernoulli(p_threshold, &mut rng)
                }
                SamplingMode::GaussianDraw => arm.run_gaussian(u_eff, alpha, det.threshold, &mut rng),
            }
        })
        .collect::<Result<_>>()?;

    let ticks = TickMap::new(cfg.slot_duration, cfg.tick_duration);
    let total: usize = per_detector.iter().map(Vec::len).sum();
    if total as u64 > cfg.record_cap {
        return Err(Error::RecordCap { cap: cfg.record_cap });
    }
    let mut events: Vec<(u64, u64)> = Vec::with_capacity(total);
    for (i, slots) in per_detector.iter().enumerate() {
        events.extend(slots.iter().map(|&s| (ticks.tick(s), 1u64 << i)));
    }
    events.sort_unstable();

    let mut records: Vec<TagRecord> = Vec::with_capacity(events.len());
    for (timestamp, bit) in events {
        match records.last_mut() {
            Some(last) if last.timestamp == timestamp => last.mask |= bit,
            _ => records.push(TagRecord { timestamp, mask: bit }),
        }
    }

    Ok(TimeTagStream {
        records,
        tick_duration: cfg.tick_duration,
        detector_count: dets.len(),
        gate_ticks: cfg.gate_ticks(),
        span_ticks: ticks.span(slots),
        seed: cfg.seed,
    })
}

/// Slots a detector stays unavailable after firing, counting the firing slot.
fn dead_slots(dead_time: f64, slot_duration: f64) -> u64 {
    let r = dead_time / slot_duration;
    let n = r.round();
    let whole = if (r - n).abs() <= 1e-9 * n.max(1.0) { n } else { r.ceil() };
    (whole as u64).max(1)
}

struct ArmRun {
    slots: u64,
    dead_slots: u64,
    p_dark: f64,
    record_cap: u64,
}

impl ArmRun {
    /// Per-slot Bernoulli trials, sampled as geometric waiting times between
    /// live-slot successes.
    fn run_bernoulli(&self, p_threshold: f64, rng: &mut SimRng) -> Result<Vec<u64>> {
        let p = 1.0 - (1.0 - p_threshold) * (1.0 - self.p_dark);
        let mut out = Vec::new();
        if !(p > 0.0) {
            return Ok(out);
        }
        let ln_miss = (-p).ln_1p();
        let mut slot = 0u64;
        loop {
            let gap = if p >= 1.0 {
                0
            } else {
                let u: f64 = rng.random();
                ((1.0 - u).ln() / ln_miss).floor() as u64
            };
            slot = match slot.checked_add(gap) {
                Some(s) if s < self.slots => s,
                _ => break,
            };
            out.push(slot);
            if out.len() as u64 > self.record_cap {
                return Err(Error::RecordCap { cap: self.record_cap });
            }
            slot = slot.saturating_add(self.dead_slots);
        }
        Ok(out)
    }

    fn run_gaussian(&self, u: Complex64, alpha: Complex64, threshold: f64, rng: &mut SimRng) -> Result<Vec<u64>> {
        let mut out = Vec::new();
        let gamma_sq = threshold * threshold;
        let mut slot = 0u64;
        while slot < self.slots {
            let (h, v) = sample_arm_modes(u, alpha, rng);
            let mut fired = h.norm_sqr() > gamma_sq || v.norm_sqr() > gamma_sq;
            if self.p_dark > 0.0 && rng.random::<f64>() < self.p_dark {
                fired = true;
            }
            if fired {
                out.push(slot);
                if out.len() as u64 > self.record_cap {
                    return Err(Error::RecordCap { cap: self.record_cap });
                }
                slot = slot.saturating_add(self.dead_slots);
            } else {
                slot += 1;
            }
        }
        Ok(out)
    }
}

/// Maps slot indices to tick timestamps at the slot start.
struct TickMap {
    ratio: f64,
    whole: Option<u64>,
}

impl TickMap {
    fn new(slot_duration: f64, tick_duration: f64) -> Self {
        let ratio = slot_duration / tick_duration;
        let whole = integral_ratio(slot_duration, tick_duration).filter(|&n| n >= 1);
        TickMap { ratio, whole }
    }

    fn tick(&self, slot: u64) -> u64 {
        match self.whole {
            Some(n) => slot * n,
            None => (slot as f64 * self.ratio).floor() as u64,
        }
    }

    fn span(&self, slots: u64) -> u64 {
        match self.whole {
            Some(n) => slots * n,
            None => (slots as f64 * self.ratio - 1e-9).ceil().max(1.0) as u64,
        }
    }
}
