//! Binary grid dumps: one JSON header line, then little-endian `f64` values,
//! slices in time order and each slice in row-major grid order.

use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::Path;

use sasaki_core::{PotentialPath, SpatialField};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const VERSION: u32 = 1;
const ORDER: &str = "t-major-then-row-major";

#[derive(Debug, Error)]
pub enum DumpError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("malformed header: {0}")]
    Header(String),
    #[error("unsupported dump version {0} (expected {VERSION})")]
    UnsupportedVersion(u32),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("trailing data after {expected} payload bytes")]
    Trailing { expected: usize },
    #[error("grid {found:?} does not match the configured grid {expected:?}")]
    GridMismatch { expected: Vec<usize>, found: Vec<usize> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub version: u32,
    pub nt: usize,
    pub grid: Vec<usize>,
    pub dtype: String,
    pub order: String,
}

impl Header {
    fn values(&self) -> usize {
        (self.nt + 1) * self.grid.iter().product::<usize>()
    }
}

/// A decoded dump: the header and `nt + 1` slices.
#[derive(Clone, Debug, PartialEq)]
pub struct Dump {
    pub header: Header,
    pub slices: Vec<SpatialField>,
}

pub fn write_slices<W: Write>(mut w: W, slices: &[SpatialField], grid: &[usize]) -> Result<(), DumpError> {
    let header = Header {
        version: VERSION,
        nt: slices.len().saturating_sub(1),
        grid: grid.to_vec(),
        dtype: "f64".into(),
        order: ORDER.into(),
    };
    let line = serde_json::to_string(&header).map_err(|e| DumpError::Header(e.to_string()))?;
    w.write_all(line.as_bytes())?;
    w.write_all(b"\n")?;
    for s in slices {
        for v in s.values() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_path<W: Write>(w: W, path: &PotentialPath, grid: &[usize]) -> Result<(), DumpError> {
    write_slices(w, path.slices(), grid)
}

pub fn read<R: Read>(r: R) -> Result<Dump, DumpError> {
    let mut r = BufReader::new(r);
    let mut line = Vec::new();
    r.read_until(b'\n', &mut line)?;
    if line.last() != Some(&b'\n') {
        return Err(DumpError::Header("missing header line".into()));
    }
    // Check the version before the full schema so newer files get a clear message.
    let raw: serde_json::Value = serde_json::from_slice(&line).map_err(|e| DumpError::Header(e.to_string()))?;
    match raw.get("version").and_then(|v| v.as_u64()) {
        Some(v) if v == u64::from(VERSION) => {}
        Some(v) => return Err(DumpError::UnsupportedVersion(v as u32)),
        None => return Err(DumpError::Header("missing version".into())),
    }
    let header: Header = serde_json::from_value(raw).map_err(|e| DumpError::Header(e.to_string()))?;
    if header.dtype != "f64" {
        return Err(DumpError::Header(format!("unsupported dtype {:?}", header.dtype)));
    }
    if header.order != ORDER {
        return Err(DumpError::Header(format!("unsupported order {:?}", header.order)));
    }
    if header.grid.is_empty() || header.grid.contains(&0) {
        return Err(DumpError::Header(format!("invalid grid {:?}", header.grid)));
    }
    let expected = header.values() * 8;
    let mut payload = Vec::with_capacity(expected);
    r.read_to_end(&mut payload)?;
    if payload.len() < expected {
        return Err(DumpError::Truncated { expected, found: payload.len() });
    }
    if payload.len() > expected {
        return Err(DumpError::Trailing { expected });
    }
    let per_slice = header.grid.iter().product::<usize>();
    let values: Vec<f64> = payload.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
    let slices = values.chunks(per_slice).map(|c| SpatialField::new(c.to_vec())).collect();
    Ok(Dump { header, slices })
}

pub fn read_file(path: &Path) -> Result<Dump, DumpError> {
    read(std::fs::File::open(path)?)
}

/// Reads a single-slice dump (`nt = 0`, or the first slice otherwise) on `grid`.
pub fn read_field(path: &Path, grid: &[usize]) -> Result<SpatialField, DumpError> {
    let dump = read_file(path)?;
    if dump.header.grid != grid {
        return Err(DumpError::GridMismatch { expected: grid.to_vec(), found: dump.header.grid });
    }
    Ok(dump.slices.into_iter().next().expect("at least one slice"))
}
