//! Fitted-surface files: `PNRSURF` header, then
//! `<window_s>,<power_or_alpha_sq>,<mu>,<chi_squared>,<converged>` per grid cell.

use std::io::{BufRead, Write};
use std::path::Path;

use super::{create_writer, header_text, open_reader, parse_error, Header};
use crate::error::{Error, Result};
use crate::fitter::FitGrid;

pub const MAGIC: &str = "PNRSURF";

/// What the second column holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LevelAxis {
    AlphaSq,
    /// Source power in watts.
    Power,
}

impl LevelAxis {
    fn name(self) -> &'static str {
        match self {
            LevelAxis::AlphaSq => "alpha_sq",
            LevelAxis::Power => "power_w",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceRow {
    pub window_s: f64,
    pub level: f64,
    /// NaN marks a failed cell.
    pub mu: f64,
    pub chi_squared: f64,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct SurfaceFile {
    pub axis: LevelAxis,
    pub windows: Vec<f64>,
    pub levels: Vec<f64>,
    pub smoothing: bool,
    pub detector_count: usize,
    /// Row-major by window, then level.
    pub rows: Vec<SurfaceRow>,
}

impl PartialEq for SurfaceFile {
    /// Bitwise on floats so NaN cells compare equal to themselves.
    fn eq(&self, other: &Self) -> bool {
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        let row_bits = |r: &SurfaceRow| {
            (
                r.window_s.to_bits(),
                r.level.to_bits(),
                r.mu.to_bits(),
                r.chi_squared.to_bits(),
                r.converged,
            )
        };
        self.axis == other.axis
            && bits(&self.windows) == bits(&other.windows)
            && bits(&self.levels) == bits(&other.levels)
            && self.smoothing == other.smoothing
            && self.detector_count == other.detector_count
            && self.rows.len() == other.rows.len()
            && self.rows.iter().zip(&other.rows).all(|(a, b)| row_bits(a) == row_bits(b))
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(";")
}

impl SurfaceFile {
    /// Assembles rows from a fitted grid; `mu` is the smoothed value when smoothing ran.
    pub fn from_grid(grid: &FitGrid, windows: &[f64], levels: &[f64], axis: LevelAxis, detector_count: usize) -> Self {
        let mu = grid.mu_surface();
        let mut rows = Vec::with_capacity(grid.cells.len());
        for (r, &w) in windows.iter().enumerate() {
            for (c, &l) in levels.iter().enumerate() {
                let (chi, conv) = match grid.cell(r, c) {
                    Ok(f) => (f.chi_squared, f.converged),
                    Err(_) => (f64::NAN, false),
                };
                rows.push(SurfaceRow {
                    window_s: w,
                    level: l,
                    mu: mu[r * levels.len() + c],
                    chi_squared: chi,
                    converged: conv,
                });
            }
        }
        SurfaceFile {
            axis,
            windows: windows.to_vec(),
            levels: levels.to_vec(),
            smoothing: grid.smoothed_mu.is_some(),
            detector_count,
            rows,
        }
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let fields = [
            ("rows", "window_s".to_string()),
            ("columns", self.axis.name().to_string()),
            ("windows_s", join(&self.windows)),
            ("levels", join(&self.levels)),
            ("smoothing", u8::from(self.smoothing).to_string()),
            ("detector_count", self.detector_count.to_string()),
        ];
        w.write_all(header_text(MAGIC, &fields).as_bytes())?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{}",
                r.window_s,
                r.level,
                r.mu,
                r.chi_squared,
                u8::from(r.converged)
            )?;
        }
        w.flush()
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        let w = create_writer(path)?;
        self.write(w).map_err(|e| Error::io(path, e))
    }

    pub fn read<R: BufRead>(mut reader: R, path: &str) -> Result<Self> {
        let h = Header::read(&mut reader, MAGIC, path)?;
        let axis = match h.raw("columns") {
            Some("alpha_sq") => LevelAxis::AlphaSq,
            Some("power_w") => LevelAxis::Power,
            other => return Err(parse_error(path, h.end_line, format!("unknown columns axis {other:?}"))),
        };
        let list = |key: &str| -> Result<Vec<f64>> {
            let raw = h.raw(key).ok_or_else(|| parse_error(path, h.end_line, format!("missing `{key}`")))?;
            raw.split(';')
                .map(|v| v.parse().map_err(|_| parse_error(path, h.end_line, format!("bad `{key}` entry `{v}`"))))
                .collect()
        };
        let windows = list("windows_s")?;
        let levels = list("levels")?;
        let smoothing = h.required::<u8>("smoothing")? == 1;
        let detector_count = h.required("detector_count")?;
        let mut rows = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line_no = h.end_line + 1 + i;
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.trim_end().split(',').collect();
            let err = |m: String| parse_error(path, line_no, m);
            if f.len() != 5 {
                return Err(err(format!("expected 5 fields, found {}", f.len())));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| err(format!("bad number `{s}`")));
            rows.push(SurfaceRow {
                window_s: num(f[0])?,
                level: num(f[1])?,
                mu: num(f[2])?,
                chi_squared: num(f[3])?,
                converged: match f[4] {
                    "1" => true,
                    "0" => false,
                    other => return Err(err(format!("bad converged flag `{other}`"))),
                },
            });
        }
        if rows.len() != windows.len() * levels.len() {
            return Err(parse_error(
                path,
                h.end_line,
                format!("{} rows for a {}x{} grid", rows.len(), windows.len(), levels.len()),
            ));
        }
        Ok(SurfaceFile {
            axis,
            windows,
            levels,
            smoothing,
            detector_count,
            rows,
        })
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        Self::read(open_reader(path)?, &path.display().to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn sample() -> SurfaceFile {
        let windows = vec![1e-8, 5e-7];
        let levels = vec![0.001, 0.1];
        let mut rows = Vec::new();
        for (i, &w) in windows.iter().enumerate() {
            for (j, &l) in levels.iter().enumerate() {
                let failed = i == 1 && j == 0;
                rows.push(SurfaceRow {
                    window_s: w,
                    level: l,
                    mu: if failed { f64::NAN } else { 0.1 * (i + j) as f64 + 1.0 / 3.0 },
                    chi_squared: if failed { f64::NAN } else { 2.5 },
                    converged: !failed,
                });
            }
        }
        SurfaceFile {
            axis: LevelAxis::AlphaSq,
            windows,
            levels,
            smoothing: true,
            detector_count: 4,
            rows,
        }
    }

    #[test]
    fn round_trip_with_failed_cells() {
        let s = sample();
        let mut buf = Vec::new();
        s.write(&mut buf).unwrap();
        let text = std::str::from_utf8(&buf).unwrap();
        assert!(text.contains("\n0.0000005,0.001,NaN,NaN,0\n"), "{text}");
        assert_eq!(SurfaceFile::read(Cursor::new(buf), "m").unwrap(), s);
    }

    #[test]
    fn incomplete_grid_rejected() {
        let mut buf = Vec::new();
        sample().write(&mut buf).unwrap();
        let mut text = String::from_utf8(buf).unwrap();
        text.truncate(text.trim_end().rfind('\n').unwrap() + 1);
        assert!(SurfaceFile::read(Cursor::new(text), "m").is_err());
    }
}
