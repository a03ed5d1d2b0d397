//! Fixed-schedule coincidence aggregation.
//!
//! Windows tile the acquisition from `origin_tick`; when gating is active each
//! gate restarts the grid and the tail of a gate that cannot hold a full
//! window is dropped. A window's pattern is the OR of every record mask inside
//! it, so repeated firings of one detector count once.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field_model::{full_mask, TagRecord, TimeTagStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSchedule {
    pub window_ticks: u64,
    pub origin_tick: u64,
    /// Gate period in ticks, 0 for no gating.
    pub gate_ticks: u64,
}

impl WindowSchedule {
    pub fn new(window_ticks: u64) -> Self {
        WindowSchedule {
            window_ticks,
            origin_tick: 0,
            gate_ticks: 0,
        }
    }

    pub fn gated(window_ticks: u64, gate_ticks: u64) -> Self {
        WindowSchedule {
            window_ticks,
            origin_tick: 0,
            gate_ticks,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_ticks == 0 {
            return Err(Error::invalid("window_ticks", "must be >= 1"));
        }
        if self.gate_ticks != 0 && self.gate_ticks < self.window_ticks {
            return Err(Error::WindowExceedsGate {
                window: self.window_ticks,
                gate: self.gate_ticks,
            });
        }
        Ok(())
    }

    fn windows_per_gate(&self) -> u64 {
        self.gate_ticks / self.window_ticks
    }

    /// Total number of complete windows inside `[origin, span_ticks)`.
    pub fn window_total(&self, span_ticks: u64) -> u64 {
        let covered = span_ticks.saturating_sub(self.origin_tick);
        if self.gate_ticks == 0 {
            covered / self.window_ticks
        } else {
            let full_gates = covered / self.gate_ticks;
            let rest = covered % self.gate_ticks;
            full_gates * self.windows_per_gate() + rest / self.window_ticks
        }
    }

    /// Index of the window holding `tick`, or `None` if the tick falls
    /// before the origin or in a discarded gate tail.
    pub fn window_of(&self, tick: u64) -> Option<u64> {
        let rel = tick.checked_sub(self.origin_tick)?;
        if self.gate_ticks == 0 {
            return Some(rel / self.window_ticks);
        }
        let gate = rel / self.gate_ticks;
        let within = (rel % self.gate_ticks) / self.window_ticks;
        let per_gate = self.windows_per_gate();
        (within < per_gate).then_some(gate * per_gate + within)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClickHistogram {
    /// Windows per observed pattern; mask 0 holds the empty windows.
    pub pattern_counts: BTreeMap<u64, u64>,
    /// Windows per click multiplicity `k = 0..=N`.
    pub multiplicity_counts: Vec<u64>,
    pub window_count: u64,
    pub detector_count: usize,
}

impl ClickHistogram {
    pub fn empty(detector_count: usize) -> Self {
        ClickHistogram {
            pattern_counts: BTreeMap::new(),
            multiplicity_counts: vec![0; detector_count + 1],
            window_count: 0,
            detector_count,
        }
    }

    /// Builds a histogram from per-pattern counts, deriving multiplicities.
    pub fn from_pattern_counts(detector_count: usize, pattern_counts: BTreeMap<u64, u64>) -> Result<Self> {
        let allowed = full_mask(detector_count);
        let mut hist = ClickHistogram::empty(detector_count);
        for (&mask, &count) in &pattern_counts {
            if mask & !allowed != 0 {
                return Err(Error::InvalidMask {
                    index: 0,
                    mask,
                    detectors: detector_count,
                });
            }
            hist.multiplicity_counts[mask.count_ones() as usize] += count;
            hist.window_count += count;
        }
        hist.pattern_counts = pattern_counts.into_iter().filter(|&(_, c)| c > 0).collect();
        Ok(hist)
    }

    /// Empirical multiplicity frequencies.
    pub fn frequencies(&self) -> Vec<f64> {
        let n = self.window_count.max(1) as f64;
        self.multiplicity_counts.iter().map(|&c| c as f64 / n).collect()
    }

    pub fn mean_clicks(&self) -> f64 {
        self.click_mass() as f64 / self.window_count.max(1) as f64
    }

    /// `Σ_k k · multiplicity_counts[k]`.
    pub fn click_mass(&self) -> u64 {
        self.multiplicity_counts
            .iter()
            .enumerate()
            .map(|(k, &c)| k as u64 * c)
            .sum()
    }

    /// Adds another histogram over the same detectors.
    pub fn merge(&mut self, other: &ClickHistogram) {
        debug_assert_eq!(self.detector_count, other.detector_count);
        for (&mask, &count) in &other.pattern_counts {
            *self.pattern_counts.entry(mask).or_insert(0) += count;
        }
        for (a, b) in self.multiplicity_counts.iter_mut().zip(&other.multiplicity_counts) {
            *a += b;
        }
        self.window_count += other.window_count;
    }

    pub fn check_invariants(&self) -> Result<()> {
        let total: u64 = self.multiplicity_counts.iter().sum();
        if total != self.window_count {
            return Err(Error::Numerical(format!(
                "multiplicity counts sum to {total}, window count is {}",
                self.window_count
            )));
        }
        let mut by_k = vec![0u64; self.detector_count + 1];
        for (&mask, &count) in &self.pattern_counts {
            let k = mask.count_ones() as usize;
            if k > self.detector_count {
                return Err(Error::Numerical(format!("pattern {mask:#x} exceeds detector count")));
            }
            by_k[k] += count;
        }
        if by_k != self.multiplicity_counts {
            return Err(Error::Numerical("pattern counts disagree with multiplicities".into()));
        }
        Ok(())
    }
}

/// Incremental aggregation over records delivered in timestamp order.
#[derive(Debug, Clone)]
pub struct Aggregator {
    schedule: WindowSchedule,
    detector_count: usize,
    allowed: u64,
    total: u64,
    current: Option<(u64, u64)>,
    last_tick: u64,
    seen: usize,
    patterns: BTreeMap<u64, u64>,
    occupied: u64,
}

impl Aggregator {
    /// `span_ticks` closes the acquisition; windows reaching past it are dropped.
    pub fn new(schedule: WindowSchedule, detector_count: usize, span_ticks: u64) -> Result<Self> {
        schedule.validate()?;
        if detector_count == 0 || detector_count > 64 {
            return Err(Error::invalid("detector_count", "must lie in 1..=64"));
        }
        Ok(Aggregator {
            schedule,
            detector_count,
            allowed: full_mask(detector_count),
            total: schedule.window_total(span_ticks),
            current: None,
            last_tick: 0,
            seen: 0,
            patterns: BTreeMap::new(),
            occupied: 0,
        })
    }

    pub fn push(&mut self, record: TagRecord) -> Result<()> {
        let index = self.seen;
        self.seen += 1;
        if record.timestamp < self.last_tick {
            return Err(Error::UnsortedStream { index });
        }
        if record.mask == 0 || record.mask & !self.allowed != 0 {
            return Err(Error::InvalidMask {
                index,
                mask: record.mask,
                detectors: self.detector_count,
            });
        }
        self.last_tick = record.timestamp;
        let Some(w) = self.schedule.window_of(record.timestamp).filter(|&w| w < self.total) else {
            return Ok(());
        };
        match &mut self.current {
            Some((cw, mask)) if *cw == w => *mask |= record.mask,
            _ => {
                self.flush();
                self.current = Some((w, record.mask));
            }
        }
        Ok(())
    }

    fn flush(&mut self) {
        if let Some((_, mask)) = self.current.take() {
            *self.patterns.entry(mask).or_insert(0) += 1;
            self.occupied += 1;
        }
    }

    pub fn finish(mut self) -> ClickHistogram {
        self.flush();
        if self.total > self.occupied {
            *self.patterns.entry(0).or_insert(0) += self.total - self.occupied;
        }
        let mut multiplicity_counts = vec![0u64; self.detector_count + 1];
        for (&mask, &count) in &self.patterns {
            multiplicity_counts[mask.count_ones() as usize] += count;
        }
        ClickHistogram {
            pattern_counts: self.patterns,
            multiplicity_counts,
            window_count: self.total,
            detector_count: self.detector_count,
        }
    }
}

/// Aggregates a whole stream under one window schedule.
pub fn aggregate(stream: &TimeTagStream, sched: &WindowSchedule) -> Result<ClickHistogram> {
    let mut agg = Aggregator::new(*sched, stream.detector_count, stream.span_ticks)?;
    for r in &stream.records {
        agg.push(*r)?;
    }
    Ok(agg.finish())
}

/// Aggregates the same stream once per window length, using the stream's gate.
pub fn aggregate_sweep(stream: &TimeTagStream, windows: &[u64]) -> Result<Vec<ClickHistogram>> {
    if windows.is_empty() {
        return Err(Error::invalid("windows", "window list must not be empty"));
    }
    windows
        .par_iter()
        .map(|&w| aggregate(stream, &WindowSchedule::gated(w, stream.gate_ticks)))
        .collect()
}
