//! Click-histogram files: `PNRHIST` header, then `<mask_hex>,<count>` per observed pattern.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use super::{create_writer, header_text, ns_text, open_reader, parse_error, parse_hex, Header};
use crate::coincidence::{ClickHistogram, WindowSchedule};
use crate::error::{Error, Result};

pub const MAGIC: &str = "PNRHIST";

#[derive(Debug, Clone, PartialEq)]
pub struct HistogramFile {
    pub schedule: WindowSchedule,
    pub tick_duration: f64,
    pub alpha_sq: Option<f64>,
    pub hist: ClickHistogram,
}

impl HistogramFile {
    pub fn window_seconds(&self) -> f64 {
        self.schedule.window_ticks as f64 * self.tick_duration
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut fields = vec![
            ("window_ticks", self.schedule.window_ticks.to_string()),
            ("window_count", self.hist.window_count.to_string()),
            ("detector_count", self.hist.detector_count.to_string()),
            ("tick_duration_ns", ns_text(self.tick_duration)),
            ("origin_tick", self.schedule.origin_tick.to_string()),
            ("gate_ticks", self.schedule.gate_ticks.to_string()),
        ];
        if let Some(a) = self.alpha_sq {
            fields.push(("alpha_sq", a.to_string()));
        }
        w.write_all(header_text(MAGIC, &fields).as_bytes())?;
        for (mask, count) in &self.hist.pattern_counts {
            writeln!(w, "{mask:x},{count}")?;
        }
        w.flush()
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        let w = create_writer(path)?;
        self.write(w).map_err(|e| Error::io(path, e))
    }

    pub fn read<R: BufRead>(mut reader: R, path: &str) -> Result<Self> {
        let h = Header::read(&mut reader, MAGIC, path)?;
        let detector_count: usize = h.required("detector_count")?;
        let window_count: u64 = h.required("window_count")?;
        let tick_ns: f64 = h.required("tick_duration_ns")?;
        if detector_count == 0 || detector_count > 64 {
            return Err(parse_error(path, h.end_line, "detector_count must be in 1..=64"));
        }
        if !(tick_ns > 0.0 && tick_ns.is_finite()) {
            return Err(parse_error(path, h.end_line, "tick_duration_ns must be positive"));
        }
        let schedule = WindowSchedule {
            window_ticks: h.required("window_ticks")?,
            origin_tick: h.required("origin_tick")?,
            gate_ticks: h.required("gate_ticks")?,
        };
        schedule
            .validate()
            .map_err(|e| parse_error(path, h.end_line, e.to_string()))?;

        let mut patterns = BTreeMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line_no = h.end_line + 1 + i;
            let line = line.map_err(|e| Error::io(path, e))?;
            let line = line.trim_end();
            if line.is_empty() {
                continue;
            }
            let err = |m: String| parse_error(path, line_no, m);
            let (mask, count) = line
                .split_once(',')
                .ok_or_else(|| err(format!("expected `<mask_hex>,<count>`, found `{line}`")))?;
            let mask = parse_hex(mask).ok_or_else(|| err(format!("bad mask `{mask}`")))?;
            let count: u64 = count.parse().map_err(|_| err(format!("bad count `{count}`")))?;
            if patterns.insert(mask, count).is_some() {
                return Err(err(format!("pattern {mask:x} listed twice")));
            }
        }
        let hist = ClickHistogram::from_pattern_counts(detector_count, patterns)
            .map_err(|e| parse_error(path, h.end_line, e.to_string()))?;
        if hist.window_count != window_count {
            return Err(parse_error(
                path,
                h.end_line,
                format!("pattern counts sum to {}, header says {window_count}", hist.window_count),
            ));
        }
        Ok(HistogramFile {
            schedule,
            tick_duration: tick_ns / 1e9,
            alpha_sq: h.optional("alpha_sq")?,
            hist,
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

    fn sample() -> HistogramFile {
        let patterns = BTreeMap::from([(0, 5), (1, 3), (3, 2)]);
        HistogramFile {
            schedule: WindowSchedule::gated(10, 2000),
            tick_duration: 1e-9,
            alpha_sq: Some(1.5e-3),
            hist: ClickHistogram::from_pattern_counts(2, patterns).unwrap(),
        }
    }

    #[test]
    fn round_trip() {
        let f = sample();
        let mut buf = Vec::new();
        f.write(&mut buf).unwrap();
        let text = std::str::from_utf8(&buf).unwrap();
        assert!(text.ends_with("---\n0,5\n1,3\n3,2\n"));
        assert_eq!(HistogramFile::read(Cursor::new(buf.clone()), "m").unwrap(), f);
        assert!((f.window_seconds() - 1e-8).abs() < 1e-20);
    }

    #[test]
    fn inconsistent_files_rejected() {
        let mut buf = Vec::new();
        sample().write(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        for bad in [
            text.replace("window_count=10", "window_count=11"),
            text.replace("3,2", "7,2"),
            text.replace("3,2", "3,x"),
            format!("{text}1,1\n"),
        ] {
            assert!(matches!(HistogramFile::read(Cursor::new(bad), "m"), Err(Error::Parse { .. })));
        }
    }
}
