//! SNR grid (`PNRSNR`), 3-dB contour and survey-curve outputs.

use std::io::{BufRead, Write};
use std::path::Path;

use super::{create_writer, header_text, open_reader, parse_error, Header};
use crate::error::{Error, Result};
use crate::snr::{SnrSurface, SurveyDevice};

pub const MAGIC: &str = "PNRSNR";

/// Body lines `<n>,<window_s>,<db>,<saturated>`, rows ordered by `n` then window.
pub fn write_surface<W: Write>(mut w: W, s: &SnrSurface) -> std::io::Result<()> {
    let fields = [
        ("rate_cps", s.rate.to_string()),
        ("coherence_s", s.coherence.to_string()),
        ("integration_s", s.integration.to_string()),
        ("n_count", s.n_values.len().to_string()),
        ("window_count", s.windows.len().to_string()),
    ];
    w.write_all(header_text(MAGIC, &fields).as_bytes())?;
    for (i, &n) in s.n_values.iter().enumerate() {
        for (j, &win) in s.windows.iter().enumerate() {
            let k = i * s.windows.len() + j;
            writeln!(w, "{n},{win},{},{}", s.db[k], u8::from(s.saturated[k]))?;
        }
    }
    w.flush()
}

pub fn read_surface<R: BufRead>(mut reader: R, path: &str) -> Result<SnrSurface> {
    let h = Header::read(&mut reader, MAGIC, path)?;
    let n_count: usize = h.required("n_count")?;
    let window_count: usize = h.required("window_count")?;
    let mut s = SnrSurface {
        n_values: Vec::with_capacity(n_count),
        windows: Vec::with_capacity(window_count),
        rate: h.required("rate_cps")?,
        coherence: h.required("coherence_s")?,
        integration: h.required("integration_s")?,
        db: Vec::new(),
        saturated: Vec::new(),
        contour: Vec::new(),
    };
    for (i, line) in reader.lines().enumerate() {
        let line_no = h.end_line + 1 + i;
        let line = line.map_err(|e| Error::io(path, e))?;
        let f: Vec<&str> = line.trim_end().split(',').collect();
        let err = |m: &str| parse_error(path, line_no, m);
        if f.len() != 4 {
            return Err(err("expected `<n>,<window_s>,<db>,<saturated>`"));
        }
        let n: usize = f[0].parse().map_err(|_| err("bad detector count"))?;
        let win: f64 = f[1].parse().map_err(|_| err("bad window"))?;
        let k = s.db.len();
        if k % window_count == 0 {
            s.n_values.push(n);
        }
        if k < window_count {
            s.windows.push(win);
        }
        s.db.push(f[2].parse().map_err(|_| err("bad decibel value"))?);
        s.saturated.push(f[3] == "1");
    }
    if s.db.len() != n_count * window_count {
        return Err(parse_error(path, h.end_line, "row count does not match grid size"));
    }
    Ok(s)
}

/// Lines `<n>,<window_s>` with `none` when no crossing exists.
pub fn write_contour<W: Write>(mut w: W, s: &SnrSurface) -> std::io::Result<()> {
    writeln!(w, "n,window_3db_s")?;
    for (n, c) in &s.contour {
        match c {
            Some(v) => writeln!(w, "{n},{v}")?,
            None => writeln!(w, "{n},none")?,
        }
    }
    w.flush()
}

/// Lines `<name>,<n>,<db>` for every device and detector count.
pub fn write_survey<W: Write>(mut w: W, devices: &[SurveyDevice]) -> Result<()> {
    let io = |e| Error::io("<survey output>", e);
    writeln!(w, "name,n,snr_db").map_err(io)?;
    for d in devices {
        for (n, db) in d.curve()? {
            writeln!(w, "{},{n},{db}", d.name).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

pub fn write_surface_files(dir: &Path, s: &SnrSurface) -> Result<()> {
    let grid = dir.join("snr_grid.txt");
    write_surface(create_writer(&grid)?, s).map_err(|e| Error::io(&grid, e))?;
    let contour = dir.join("snr_contour.csv");
    write_contour(create_writer(&contour)?, s).map_err(|e| Error::io(&contour, e))
}

pub fn read_surface_file(path: &Path) -> Result<SnrSurface> {
    read_surface(open_reader(path)?, &path.display().to_string())
}
