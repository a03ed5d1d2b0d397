//! Time-tag files: `PNRTAGS` header, then one `<timestamp_ticks>,<mask_hex>` line per record.

use std::io::{BufRead, Write};
use std::path::Path;

use super::{create_writer, header_text, ns_text, open_reader, parse_error, parse_hex, Header};
use crate::coincidence::{Aggregator, ClickHistogram, WindowSchedule};
use crate::error::{Error, Result};
use crate::field_model::{full_mask, TagRecord, TimeTagStream};

pub const MAGIC: &str = "PNRTAGS";

/// Everything in a time-tag file except the records.
#[derive(Debug, Clone, PartialEq)]
pub struct TagHeader {
    pub tick_duration: f64,
    pub detector_count: usize,
    pub gate_ticks: u64,
    pub seed: u64,
    pub span_ticks: u64,
    /// Mean photon number per slot that produced the stream, when known.
    pub alpha_sq: Option<f64>,
}

impl TagHeader {
    pub fn of(stream: &TimeTagStream, alpha_sq: Option<f64>) -> Self {
        TagHeader {
            tick_duration: stream.tick_duration,
            detector_count: stream.detector_count,
            gate_ticks: stream.gate_ticks,
            seed: stream.seed,
            span_ticks: stream.span_ticks,
            alpha_sq,
        }
    }

    fn text(&self) -> String {
        let mut fields = vec![
            ("tick_duration_ns", ns_text(self.tick_duration)),
            ("detector_count", self.detector_count.to_string()),
            ("gate_ticks", self.gate_ticks.to_string()),
            ("seed", self.seed.to_string()),
            ("span_ticks", self.span_ticks.to_string()),
        ];
        if let Some(a) = self.alpha_sq {
            fields.push(("alpha_sq", a.to_string()));
        }
        header_text(MAGIC, &fields)
    }
}

pub fn write_tags<W: Write>(mut w: W, stream: &TimeTagStream, alpha_sq: Option<f64>) -> std::io::Result<()> {
    w.write_all(TagHeader::of(stream, alpha_sq).text().as_bytes())?;
    for r in &stream.records {
        writeln!(w, "{},{:x}", r.timestamp, r.mask)?;
    }
    w.flush()
}

pub fn write_tags_file(path: &Path, stream: &TimeTagStream, alpha_sq: Option<f64>) -> Result<()> {
    let w = create_writer(path)?;
    write_tags(w, stream, alpha_sq).map_err(|e| Error::io(path, e))
}

/// Streaming reader; records are validated as they are yielded.
pub struct TagReader<R> {
    reader: R,
    path: String,
    pub header: TagHeader,
    line_no: usize,
    last: Option<u64>,
    allowed: u64,
    buf: String,
}

impl<R: BufRead> TagReader<R> {
    pub fn new(mut reader: R, path: &str) -> Result<Self> {
        let h = Header::read(&mut reader, MAGIC, path)?;
        let tick_ns: f64 = h.required("tick_duration_ns")?;
        let detector_count: usize = h.required("detector_count")?;
        if !(tick_ns > 0.0 && tick_ns.is_finite()) {
            return Err(parse_error(path, h.end_line, "tick_duration_ns must be positive"));
        }
        if detector_count == 0 || detector_count > 64 {
            return Err(parse_error(path, h.end_line, "detector_count must be in 1..=64"));
        }
        let header = TagHeader {
            tick_duration: tick_ns / 1e9,
            detector_count,
            gate_ticks: h.required("gate_ticks")?,
            seed: h.required("seed")?,
            span_ticks: h.required("span_ticks")?,
            alpha_sq: h.optional("alpha_sq")?,
        };
        Ok(TagReader {
            reader,
            path: path.to_string(),
            line_no: h.end_line,
            last: None,
            allowed: full_mask(detector_count),
            header,
            buf: String::new(),
        })
    }

    fn next_record(&mut self) -> Result<Option<TagRecord>> {
        loop {
            self.buf.clear();
            self.line_no += 1;
            let n = self.reader.read_line(&mut self.buf).map_err(|e| Error::io(&self.path, e))?;
            if n == 0 {
                return Ok(None);
            }
            let line = self.buf.trim_end();
            if line.is_empty() {
                continue;
            }
            let err = |m: String| parse_error(&self.path, self.line_no, m);
            let (ts, mask) = line
                .split_once(',')
                .ok_or_else(|| err(format!("expected `<timestamp>,<mask_hex>`, found `{line}`")))?;
            let timestamp: u64 = ts.parse().map_err(|_| err(format!("bad timestamp `{ts}`")))?;
            let mask = parse_hex(mask).ok_or_else(|| err(format!("bad mask `{mask}`")))?;
            if mask == 0 || mask & !self.allowed != 0 {
                return Err(err(format!(
                    "mask {mask:x} does not fit {} detectors",
                    self.header.detector_count
                )));
            }
            if self.last.is_some_and(|t| timestamp < t) {
                return Err(err(format!("timestamp {timestamp} is earlier than its predecessor")));
            }
            if timestamp >= self.header.span_ticks {
                return Err(err(format!("timestamp {timestamp} beyond span_ticks {}", self.header.span_ticks)));
            }
            self.last = Some(timestamp);
            return Ok(Some(TagRecord { timestamp, mask }));
        }
    }
}

impl<R: BufRead> Iterator for TagReader<R> {
    type Item = Result<TagRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_record().transpose()
    }
}

/// Reads a whole file into memory.
pub fn read_tags_file(path: &Path) -> Result<(TagHeader, TimeTagStream)> {
    let reader = TagReader::new(open_reader(path)?, &path.display().to_string())?;
    let header = reader.header.clone();
    let records = reader.collect::<Result<Vec<_>>>()?;
    let stream = TimeTagStream {
        records,
        tick_duration: header.tick_duration,
        detector_count: header.detector_count,
        gate_ticks: header.gate_ticks,
        span_ticks: header.span_ticks,
        seed: header.seed,
    };
    Ok((header, stream))
}

/// Aggregates a file for several windows in one streaming pass.
pub fn aggregate_tags_file(path: &Path, windows: &[u64]) -> Result<(TagHeader, Vec<ClickHistogram>)> {
    if windows.is_empty() {
        return Err(Error::invalid("windows", "list must not be empty"));
    }
    let reader = TagReader::new(open_reader(path)?, &path.display().to_string())?;
    let header = reader.header.clone();
    let mut aggs = windows
        .iter()
        .map(|&w| {
            Aggregator::new(
                WindowSchedule::gated(w, header.gate_ticks),
                header.detector_count,
                header.span_ticks,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    for rec in reader {
        let rec = rec?;
        for a in &mut aggs {
            a.push(rec)?;
        }
    }
    Ok((header, aggs.into_iter().map(Aggregator::finish).collect()))
}
