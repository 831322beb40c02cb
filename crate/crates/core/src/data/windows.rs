//! Sliding-window extraction of label/feature pairs from range-time maps.
//!
//! For a test cell at range `r` and time `t`, the label is the `d` samples
//! `map[r, t..t+d]`. The features are the same time slice taken at the
//! `half_width` range cells on each side of `r`, skipping `guard` cells
//! adjacent to it.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dataset::{parse_header_line, write_entries, EntryCursor};
use super::WindowPair;
use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, C64};

pub const MAP_FORMAT: &str = "ssce-map";
pub const MAP_VERSION: u32 = 1;

/// Complex range x time map stored range-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DataMap {
    n_range: usize,
    n_time: usize,
    entries: Vec<C64>,
}

impl DataMap {
    pub fn new(n_range: usize, n_time: usize, entries: Vec<C64>) -> Result<Self> {
        if entries.len() != n_range * n_time {
            return Err(Error::ShapeMismatch(format!(
                "{} entries for a {n_range}x{n_time} map",
                entries.len()
            )));
        }
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFiniteValue("data map entry".into()));
        }
        Ok(Self { n_range, n_time, entries })
    }

    pub fn from_fn(n_range: usize, n_time: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let entries = (0..n_range).flat_map(|r| (0..n_time).map(move |t| (r, t))).map(|(r, t)| f(r, t)).collect();
        Self { n_range, n_time, entries }
    }

    pub fn n_range(&self) -> usize {
        self.n_range
    }

    pub fn n_time(&self) -> usize {
        self.n_time
    }

    pub fn get(&self, r: usize, t: usize) -> C64 {
        self.entries[r * self.n_time + t]
    }

    pub fn entries(&self) -> &[C64] {
        &self.entries
    }

    fn slice(&self, r: usize, t: usize, d: usize) -> &[C64] {
        let start = r * self.n_time + t;
        &self.entries[start..start + d]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindowSpec {
    pub d: usize,
    pub guard: usize,
    pub half_width: usize,
    pub stride_time: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self { d: 8, guard: 1, half_width: 8, stride_time: 8 }
    }
}

impl WindowSpec {
    /// `d` samples in time, one guard cell and `d` neighbours per side.
    pub fn with_dim(d: usize) -> Self {
        Self { d, guard: 1, half_width: d, stride_time: d }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 1 || self.half_width < 1 || self.stride_time < 1 {
            return Err(Error::InvalidConfig("window d, half_width and stride_time must be at least 1".into()));
        }
        Ok(())
    }

    fn reach(&self) -> usize {
        self.guard + self.half_width
    }

    /// Range cells used as features for the test cell at `r`, ascending.
    pub fn feature_cells(&self, r: usize) -> Vec<usize> {
        let left = (r - self.reach())..(r - self.guard);
        let right = (r + self.guard + 1)..=(r + self.reach());
        left.chain(right).collect()
    }
}

/// One `(range, time)` test cell and its pair.
#[derive(Clone, Debug, PartialEq)]
pub struct ExtractedPair {
    pub range: usize,
    pub time: usize,
    pub pair: WindowPair,
}

/// Every complete window, range-major then time.
pub fn extract(map: &DataMap, spec: &WindowSpec) -> Result<Vec<ExtractedPair>> {
    spec.validate()?;
    let reach = spec.reach();
    if map.n_time < spec.d || map.n_range < 2 * reach + 1 {
        return Err(Error::MapTooSmall(format!(
            "{}x{} map, window needs at least {}x{}",
            map.n_range,
            map.n_time,
            2 * reach + 1,
            spec.d
        )));
    }
    let mut out = Vec::new();
    for r in reach..map.n_range - reach {
        let cells = spec.feature_cells(r);
        let mut t = 0;
        while t + spec.d <= map.n_time {
            let label = map.slice(r, t, spec.d).to_vec();
            let mut rows = Vec::with_capacity(cells.len() * spec.d);
            for &c in &cells {
                rows.extend_from_slice(map.slice(c, t, spec.d));
            }
            let features = ComplexMatrix::new(cells.len(), spec.d, rows)?;
            out.push(ExtractedPair { range: r, time: t, pair: WindowPair::new(label, features, None)? });
            t += spec.stride_time;
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MapFormat {
    ComplexBinary,
    Csv,
}

impl MapFormat {
    /// `.csv` is CSV; anything else is the binary container.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => MapFormat::Csv,
            _ => MapFormat::ComplexBinary,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MapHeader {
    format: String,
    version: u32,
    n_range: usize,
    n_time: usize,
    endianness: String,
}

pub fn load_map(path: &Path, format: MapFormat) -> Result<DataMap> {
    let bytes = fs::read(path)?;
    match format {
        MapFormat::ComplexBinary => parse_binary_map(&bytes),
        MapFormat::Csv => parse_csv_map(&bytes),
    }
}

pub fn parse_binary_map(bytes: &[u8]) -> Result<DataMap> {
    let (header, offset): (MapHeader, usize) = parse_header_line(bytes)?;
    if header.format != MAP_FORMAT || header.version != MAP_VERSION || header.endianness != "little" {
        return Err(Error::parse(
            "byte 0",
            format!("unsupported map {} v{} ({})", header.format, header.version, header.endianness),
        ));
    }
    let n = header.n_range * header.n_time;
    let expected = offset + 16 * n;
    if bytes.len() != expected {
        return Err(Error::parse(
            format!("byte {}", bytes.len().min(expected)),
            format!("payload holds {} bytes, header implies {expected}", bytes.len()),
        ));
    }
    let entries = EntryCursor { bytes, pos: offset }.take(n)?;
    DataMap::new(header.n_range, header.n_time, entries).map_err(|e| Error::parse(format!("byte {offset}"), e.to_string()))
}

pub fn parse_csv_map(bytes: &[u8]) -> Result<DataMap> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let headers = reader.headers().map_err(|e| Error::parse("line 1", e.to_string()))?.clone();
    if headers.len() % 2 != 0 || headers.is_empty() {
        return Err(Error::parse("line 1", "header must list re_t,im_t pairs"));
    }
    for (k, h) in headers.iter().enumerate() {
        let expected = format!("{}_{}", if k % 2 == 0 { "re" } else { "im" }, k / 2);
        if h.trim() != expected {
            return Err(Error::parse("line 1", format!("column {k} is '{h}', expected '{expected}'")));
        }
    }
    let n_time = headers.len() / 2;
    let mut entries = Vec::new();
    let mut n_range = 0;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::parse(format!("line {line}"), e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != headers.len() {
            return Err(Error::parse(format!("line {line}"), "wrong number of fields"));
        }
        let values: Vec<f64> = record
            .iter()
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::parse(format!("line {line}"), e.to_string()))?;
        entries.extend(values.chunks_exact(2).map(|p| C64::new(p[0], p[1])));
        n_range += 1;
    }
    DataMap::new(n_range, n_time, entries)
}

pub fn write_map(path: &Path, map: &DataMap, format: MapFormat) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    match format {
        MapFormat::ComplexBinary => {
            let header = MapHeader {
                format: MAP_FORMAT.into(),
                version: MAP_VERSION,
                n_range: map.n_range,
                n_time: map.n_time,
                endianness: "little".into(),
            };
            let line = serde_json::to_string(&header).map_err(|e| Error::Io(e.to_string()))?;
            out.write_all(line.as_bytes())?;
            out.write_all(b"\n")?;
            write_entries(&mut out, &map.entries)?;
        }
        MapFormat::Csv => {
            let mut w = csv::Writer::from_writer(&mut out);
            let header: Vec<String> =
                (0..map.n_time).flat_map(|t| [format!("re_{t}"), format!("im_{t}")]).collect();
            w.write_record(&header).map_err(|e| Error::Io(e.to_string()))?;
            for r in 0..map.n_range {
                let row: Vec<String> = map
                    .slice(r, 0, map.n_time)
                    .iter()
                    .flat_map(|z| [format!("{:?}", z.re), format!("{:?}", z.im)])
                    .collect();
                w.write_record(&row).map_err(|e| Error::Io(e.to_string()))?;
            }
            w.flush()?;
        }
    }
    out.flush()?;
    Ok(())
}
