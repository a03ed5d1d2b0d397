//! Line-oriented text formats and run configuration.
//!
//! Every data file starts with a magic line, then `key=value` header lines,
//! then a `---` separator and comma-delimited body lines. Floats are written
//! in Rust's shortest round-trip form, so `parse(serialize(x)) == x`.

pub mod config;
pub mod histogram;
pub mod snr_files;
pub mod surface;
pub mod tags;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
const SEPARATOR: &str = "---";

pub(crate) fn open_reader(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

pub(crate) fn create_writer(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

/// Header key-value pairs with the line each came from.
pub(crate) struct Header {
    path: String,
    fields: BTreeMap<String, (usize, String)>,
    /// Line number of the separator.
    pub end_line: usize,
}

impl Header {
    /// Reads the magic line and header up to the separator.
    pub fn read<R: BufRead>(reader: &mut R, magic: &str, path: &str) -> Result<Header> {
        let mut line_no = 0usize;
        let mut line = String::new();
        let mut next = |line: &mut String, line_no: &mut usize| -> Result<bool> {
            line.clear();
            *line_no += 1;
            let n = reader.read_line(line).map_err(|e| Error::io(path, e))?;
            Ok(n > 0)
        };
        if !next(&mut line, &mut line_no)? || line.trim_end() != magic {
            return Err(parse_error(path, 1, format!("expected magic line `{magic}`")));
        }
        let mut fields = BTreeMap::new();
        loop {
            if !next(&mut line, &mut line_no)? {
                return Err(parse_error(path, line_no, format!("missing `{SEPARATOR}` separator")));
            }
            let l = line.trim_end();
            if l == SEPARATOR {
                break;
            }
            let (k, v) = l
                .split_once('=')
                .ok_or_else(|| parse_error(path, line_no, format!("expected key=value, found `{l}`")))?;
            if fields.insert(k.to_string(), (line_no, v.to_string())).is_some() {
                return Err(parse_error(path, line_no, format!("duplicate header key `{k}`")));
            }
        }
        let header = Header {
            path: path.to_string(),
            fields,
            end_line: line_no,
        };
        let version: u32 = header.required("version")?;
        if version != FORMAT_VERSION {
            return Err(parse_error(path, header.line_of("version"), format!("unsupported version {version}")));
        }
        Ok(header)
    }

    fn line_of(&self, key: &str) -> usize {
        self.fields.get(key).map(|f| f.0).unwrap_or(1)
    }

    pub fn optional<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.fields.get(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse()
                .map(Some)
                .map_err(|_| parse_error(&self.path, *line, format!("bad value `{v}` for `{key}`"))),
        }
    }

    pub fn required<T: FromStr>(&self, key: &str) -> Result<T> {
        self.optional(key)?
            .ok_or_else(|| parse_error(&self.path, self.end_line, format!("missing header key `{key}`")))
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.fields.get(key).map(|f| f.1.as_str())
    }
}

/// Writes `magic`, the version line and `key=value` pairs, then the separator.
pub(crate) fn header_text(magic: &str, fields: &[(&str, String)]) -> String {
    let mut s = format!("{magic}\nversion={FORMAT_VERSION}\n");
    for (k, v) in fields {
        s.push_str(k);
        s.push('=');
        s.push_str(v);
        s.push('\n');
    }
    s.push_str(SEPARATOR);
    s.push('\n');
    s
}

pub(crate) fn parse_error(path: &str, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_string(),
        line,
        message: message.into(),
    }
}

pub(crate) fn parse_hex(s: &str) -> Option<u64> {
    if s.is_empty() || s.starts_with('+') {
        return None;
    }
    u64::from_str_radix(s, 16).ok()
}

/// Tick duration written in nanoseconds.
pub(crate) fn ns_text(seconds: f64) -> String {
    format!("{}", seconds * 1e9)
}
