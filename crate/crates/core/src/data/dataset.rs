//! Dataset container shared by `gen`, `train` and `eval`.
//!
//! Layout:
//!
//! ```text
//! <JSON header>\n
//! record 0, record 1, ...
//! ```
//!
//! The header is a single line of JSON with the fields of [`DatasetHeader`].
//! Each record is `dim` label entries, then `window * dim` feature entries
//! (row-major, one sample per row), then `dim * dim` truth entries when
//! `has_truth` is set. Every entry is two little-endian IEEE-754 `f64`
//! values, real part first.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::WindowPair;
use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, C64};

pub const DATASET_FORMAT: &str = "ssce-dataset";
pub const DATASET_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetHeader {
    pub format: String,
    pub version: u32,
    pub dim: usize,
    pub window: usize,
    pub count: usize,
    pub has_truth: bool,
    /// Resolved generator configuration, echoed verbatim.
    pub config: serde_json::Value,
}

impl DatasetHeader {
    fn record_entries(&self) -> usize {
        let d = self.dim;
        d + self.window * d + if self.has_truth { d * d } else { 0 }
    }
}

pub fn write_dataset(path: &Path, config: serde_json::Value, pairs: &[WindowPair]) -> Result<DatasetHeader> {
    let mut out = BufWriter::new(File::create(path)?);
    let header = write_dataset_to(&mut out, config, pairs)?;
    out.flush()?;
    Ok(header)
}

pub fn write_dataset_to(out: &mut impl Write, config: serde_json::Value, pairs: &[WindowPair]) -> Result<DatasetHeader> {
    let first = pairs.first().ok_or_else(|| Error::InvalidConfig("cannot write an empty dataset".into()))?;
    let header = DatasetHeader {
        format: DATASET_FORMAT.into(),
        version: DATASET_VERSION,
        dim: first.dim(),
        window: first.window_size(),
        count: pairs.len(),
        has_truth: first.truth.is_some(),
        config,
    };
    for (i, p) in pairs.iter().enumerate() {
        if p.dim() != header.dim || p.window_size() != header.window || p.truth.is_some() != header.has_truth {
            return Err(Error::at(i, Error::ShapeMismatch("dataset records must share one shape".into())));
        }
    }
    let line = serde_json::to_string(&header).map_err(|e| Error::Io(e.to_string()))?;
    out.write_all(line.as_bytes())?;
    out.write_all(b"\n")?;
    for p in pairs {
        write_entries(out, &p.label)?;
        write_entries(out, p.features.as_slice())?;
        if let Some(t) = &p.truth {
            write_entries(out, t.as_slice())?;
        }
    }
    Ok(header)
}

pub(crate) fn write_entries(out: &mut impl Write, entries: &[C64]) -> Result<()> {
    let mut buf = Vec::with_capacity(entries.len() * 16);
    for z in entries {
        buf.extend_from_slice(&z.re.to_le_bytes());
        buf.extend_from_slice(&z.im.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<(DatasetHeader, Vec<WindowPair>)> {
    let mut input = BufReader::new(File::open(path)?);
    read_dataset_from(&mut input)
}

pub fn read_dataset_from(input: &mut impl Read) -> Result<(DatasetHeader, Vec<WindowPair>)> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let (header, offset): (DatasetHeader, usize) = parse_header_line(&bytes)?;
    if header.format != DATASET_FORMAT || header.version != DATASET_VERSION {
        return Err(Error::parse(
            "byte 0",
            format!("unsupported dataset format {} v{}", header.format, header.version),
        ));
    }
    let per_record = header.record_entries() * 16;
    let expected = offset + per_record * header.count;
    if bytes.len() != expected {
        return Err(Error::parse(
            format!("byte {}", bytes.len().min(expected)),
            format!("payload holds {} bytes, header implies {}", bytes.len(), expected),
        ));
    }
    let d = header.dim;
    let mut cursor = EntryCursor { bytes: &bytes, pos: offset };
    let mut pairs = Vec::with_capacity(header.count);
    for i in 0..header.count {
        let at = cursor.pos;
        let label = cursor.take(d)?;
        let features = ComplexMatrix::new(header.window, d, cursor.take(header.window * d)?);
        let truth = if header.has_truth { Some(ComplexMatrix::new(d, d, cursor.take(d * d)?)) } else { None };
        let wrap = |e: Error| Error::parse(format!("byte {at} (record {i})"), e.to_string());
        let features = features.map_err(wrap)?;
        let truth = truth.transpose().map_err(wrap)?;
        pairs.push(WindowPair::new(label, features, truth).map_err(wrap)?);
    }
    Ok((header, pairs))
}

/// Splits off a leading `\n`-terminated JSON header.
pub(crate) fn parse_header_line<T: for<'de> Deserialize<'de>>(bytes: &[u8]) -> Result<(T, usize)> {
    let end = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::parse(format!("byte {}", bytes.len()), "missing header line"))?;
    let header = serde_json::from_slice(&bytes[..end]).map_err(|e| Error::parse("byte 0", format!("header: {e}")))?;
    Ok((header, end + 1))
}

pub(crate) struct EntryCursor<'a> {
    pub bytes: &'a [u8],
    pub pos: usize,
}

impl EntryCursor<'_> {
    pub fn take(&mut self, n: usize) -> Result<Vec<C64>> {
        let need = n * 16;
        if self.pos + need > self.bytes.len() {
            return Err(Error::parse(format!("byte {}", self.bytes.len()), "truncated payload"));
        }
        let out = self.bytes[self.pos..self.pos + need]
            .chunks_exact(16)
            .map(|c| {
                let re = f64::from_le_bytes(c[..8].try_into().expect("8 bytes"));
                let im = f64::from_le_bytes(c[8..].try_into().expect("8 bytes"));
                C64::new(re, im)
            })
            .collect();
        self.pos += need;
        Ok(out)
    }
}
