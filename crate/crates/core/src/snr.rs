//! Signal-to-noise scaling of N-detector intensity interferometers.
//!
//! `SNR ~ (N(N-1)/2) · (rΔt)^{N/2} · (Δτ/Δt) · √(T/Δt)`, always evaluated as a
//! sum of logarithms so that large `N` never underflows.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Linear SNR whose decibel value is 3.
const THREE_DB_LOG10: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnrParams {
    pub n_detectors: usize,
    /// Detection rate in counts per second.
    pub rate: f64,
    /// Coincidence window in seconds.
    pub window: f64,
    /// Source coherence time in seconds.
    pub coherence: f64,
    /// Integration time in seconds.
    pub integration: f64,
}

impl SnrParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_detectors == 0 {
            return Err(Error::invalid("n", "must be >= 1"));
        }
        for (name, v) in [
            ("rate", self.rate),
            ("window", self.window),
            ("coherence", self.coherence),
            ("integration", self.integration),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, format!("must be positive and finite, got {v}")));
            }
        }
        Ok(())
    }

    /// `log10` of the linear SNR; `-inf` for a single detector.
    pub fn log10_snr(&self) -> Result<f64> {
        self.validate()?;
        let n = self.n_detectors as f64;
        if self.n_detectors == 1 {
            return Ok(f64::NEG_INFINITY);
        }
        let pairs = (n * (n - 1.0) / 2.0).log10();
        let occupancy = 0.5 * n * (self.rate * self.window).log10();
        let coherence = self.coherence.log10() - self.window.log10();
        let averaging = 0.5 * (self.integration.log10() - self.window.log10());
        Ok(pairs + occupancy + coherence + averaging)
    }
}

/// SNR in decibels; a single detector gives `f64::NEG_INFINITY`.
pub fn snr_db(p: &SnrParams) -> Result<f64> {
    Ok(10.0 * p.log10_snr()?)
}

/// Detector count `rΔt` past which the array no longer resolves photon number.
pub fn saturation_boundary(rate: f64, window: f64) -> f64 {
    rate * window
}

/// True when `N ≤ rΔt`: more photons arrive per window than there are detectors.
pub fn is_saturated(n_detectors: usize, rate: f64, window: f64) -> bool {
    n_detectors as f64 <= saturation_boundary(rate, window)
}

/// Accidental N-fold coincidence rate `r_1···r_N · Δt^{N-1} · g`.
pub fn coincidence_rate(rates: &[f64], window: f64, g: f64) -> f64 {
    if rates.is_empty() {
        return 0.0;
    }
    let product: f64 = rates.iter().product();
    product * window.powi(rates.len() as i32 - 1) * g
}

/// Window at which the SNR equals 3 dB with all other parameters held.
///
/// The SNR scales as `Δt^{(N-3)/2}`, so `N = 3` has no crossing and `N = 1` never
/// reaches it.
pub fn three_db_crossing(n_detectors: usize, rate: f64, coherence: f64, integration: f64) -> Result<Option<f64>> {
    let probe = SnrParams {
        n_detectors,
        rate,
        window: 1.0,
        coherence,
        integration,
    };
    let at_unit = probe.log10_snr()?;
    if n_detectors == 1 || n_detectors == 3 {
        return Ok(None);
    }
    let slope = (n_detectors as f64 - 3.0) / 2.0;
    Ok(Some(10f64.powf((THREE_DB_LOG10 - at_unit) / slope)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnrSurface {
    pub n_values: Vec<usize>,
    pub windows: Vec<f64>,
    pub rate: f64,
    pub coherence: f64,
    pub integration: f64,
    /// Row-major decibels, one row per detector count.
    pub db: Vec<f64>,
    /// Row-major saturation flags aligned with `db`; set cells are inaccessible.
    pub saturated: Vec<bool>,
    /// 3-dB window per detector count.
    pub contour: Vec<(usize, Option<f64>)>,
}

impl SnrSurface {
    pub fn at(&self, n_index: usize, window_index: usize) -> f64 {
        self.db[n_index * self.windows.len() + window_index]
    }
}

pub fn snr_surface(
    n_values: &[usize],
    windows: &[f64],
    rate: f64,
    coherence: f64,
    integration: f64,
) -> Result<SnrSurface> {
    if n_values.is_empty() || windows.is_empty() {
        return Err(Error::invalid("snr grid", "detector and window ranges must be non-empty"));
    }
    let mut db = Vec::with_capacity(n_values.len() * windows.len());
    let mut saturated = Vec::with_capacity(db.capacity());
    let mut contour = Vec::with_capacity(n_values.len());
    for &n in n_values {
        for &w in windows {
            db.push(snr_db(&SnrParams {
                n_detectors: n,
                rate,
                window: w,
                coherence,
                integration,
            })?);
            saturated.push(is_saturated(n, rate, w));
        }
        contour.push((n, three_db_crossing(n, rate, coherence, integration)?));
    }
    Ok(SnrSurface {
        n_values: n_values.to_vec(),
        windows: windows.to_vec(),
        rate,
        coherence,
        integration,
        db,
        saturated,
        contour,
    })
}

/// One device row of a survey table.
#[derive(Debug, Clone, PartialEq)]
pub struct SurveyDevice {
    pub name: String,
    pub rate: f64,
    pub window: f64,
    pub coherence: f64,
    pub integration: f64,
    pub n_max: usize,
}

impl SurveyDevice {
    /// SNR in decibels for `N = 1..=n_max`.
    pub fn curve(&self) -> Result<Vec<(usize, f64)>> {
        (1..=self.n_max)
            .map(|n| {
                let db = snr_db(&SnrParams {
                    n_detectors: n,
                    rate: self.rate,
                    window: self.window,
                    coherence: self.coherence,
                    integration: self.integration,
                })?;
                Ok((n, db))
            })
            .collect()
    }
}

const SURVEY_COLUMNS: [&str; 6] = ["name", "rate_cps", "window_s", "coherence_s", "integration_s", "n"];

/// Parses a comma- or tab-delimited survey table with a header row.
///
/// Blank lines and lines starting with `#` are skipped. Columns may appear in
/// any order; all six are required.
pub fn parse_survey(text: &str, path: &str) -> Result<Vec<SurveyDevice>> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_string(),
        line,
        message,
    };
    let split = |l: &str| -> Vec<String> {
        let sep = if l.contains('\t') { '\t' } else { ',' };
        l.split(sep).map(|f| f.trim().to_string()).collect()
    };
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (header_line, header) = lines.next().ok_or_else(|| parse_err(1, "missing header row".into()))?;
    let header = split(header);
    let mut col = [0usize; 6];
    for (slot, want) in col.iter_mut().zip(SURVEY_COLUMNS) {
        *slot = header
            .iter()
            .position(|h| h == want)
            .ok_or_else(|| parse_err(header_line, format!("missing column `{want}`")))?;
    }

    let mut devices = Vec::new();
    for (line, l) in lines {
        let fields = split(l);
        if fields.len() != header.len() {
            return Err(parse_err(line, format!("expected {} fields, found {}", header.len(), fields.len())));
        }
        let num = |c: usize| -> Result<f64> {
            fields[col[c]]
                .parse::<f64>()
                .map_err(|_| parse_err(line, format!("`{}` is not a number in column {}", fields[col[c]], SURVEY_COLUMNS[c])))
        };
        let n_max: usize = fields[col[5]]
            .parse()
            .map_err(|_| parse_err(line, format!("`{}` is not a detector count", fields[col[5]])))?;
        let dev = SurveyDevice {
            name: fields[col[0]].clone(),
            rate: num(1)?,
            window: num(2)?,
            coherence: num(3)?,
            integration: num(4)?,
            n_max,
        };
        SnrParams {
            n_detectors: n_max,
            rate: dev.rate,
            window: dev.window,
            coherence: dev.coherence,
            integration: dev.integration,
        }
        .validate()
        .map_err(|e| parse_err(line, e.to_string()))?;
        devices.push(dev);
    }
    Ok(devices)
}
