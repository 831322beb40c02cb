//! Checkpoint container.
//!
//! Layout:
//!
//! ```text
//! <JSON header>\n
//! parameters, then (if optimizer state is present) first moments, then
//! second moments
//! ```
//!
//! The header carries the model config, seed, iteration count, format
//! version and the shape of every parameter array in declared order. Each
//! array is stored row-major as little-endian `f64` pairs (real part
//! first). Optimizer moments are stored with the same shapes, the moment of
//! the real part in the real slot and that of the imaginary part in the
//! imaginary slot.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AnyModel, KaModel, Model, ModelConfig, SsceModel};
use crate::data::dataset::{parse_header_line, write_entries, EntryCursor};
use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;

pub const CHECKPOINT_FORMAT: &str = "ssce-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Adaptive-moment state, one moment array per parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    pub first: Vec<ComplexMatrix>,
    pub second: Vec<ComplexMatrix>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: AnyModel,
    pub seed: u64,
    pub iteration: u64,
    pub optimizer: Option<OptimizerState>,
    /// Resolved run configuration, echoed verbatim.
    pub run_config: serde_json::Value,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    version: u32,
    model: ModelConfig,
    seed: u64,
    iteration: u64,
    shapes: Vec<(usize, usize)>,
    optimizer_step: Option<u64>,
    run_config: serde_json::Value,
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_checkpoint_to(&mut out, ckpt)?;
    out.flush()?;
    Ok(())
}

pub fn write_checkpoint_to(out: &mut impl Write, ckpt: &Checkpoint) -> Result<()> {
    let params = ckpt.model.params();
    let header = Header {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        model: ckpt.model.config(),
        seed: ckpt.seed,
        iteration: ckpt.iteration,
        shapes: params.iter().map(|p| p.shape()).collect(),
        optimizer_step: ckpt.optimizer.as_ref().map(|o| o.step),
        run_config: ckpt.run_config.clone(),
    };
    let line = serde_json::to_string(&header).map_err(|e| Error::Io(e.to_string()))?;
    out.write_all(line.as_bytes())?;
    out.write_all(b"\n")?;
    for p in &params {
        write_entries(out, p.as_slice())?;
    }
    if let Some(opt) = &ckpt.optimizer {
        if opt.first.len() != params.len() || opt.second.len() != params.len() {
            return Err(Error::ShapeMismatch("optimizer state does not match the parameters".into()));
        }
        for m in opt.first.iter().chain(&opt.second) {
            write_entries(out, m.as_slice())?;
        }
    }
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    parse_checkpoint(&bytes)
}

pub fn parse_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let (header, offset): (Header, usize) = parse_header_line(bytes)?;
    if header.format != CHECKPOINT_FORMAT || header.version != CHECKPOINT_VERSION {
        return Err(Error::parse("byte 0", format!("unsupported checkpoint {} v{}", header.format, header.version)));
    }
    let entries: usize = header.shapes.iter().map(|(r, c)| r * c).sum();
    let copies = if header.optimizer_step.is_some() { 3 } else { 1 };
    let expected = offset + 16 * entries * copies;
    if bytes.len() != expected {
        return Err(Error::parse(
            format!("byte {}", bytes.len().min(expected)),
            format!("payload holds {} bytes, header implies {expected}", bytes.len()),
        ));
    }
    let mut cursor = EntryCursor { bytes, pos: offset };
    let read_arrays = |cursor: &mut EntryCursor| -> Result<Vec<ComplexMatrix>> {
        header
            .shapes
            .iter()
            .map(|&(r, c)| {
                let at = cursor.pos;
                ComplexMatrix::new(r, c, cursor.take(r * c)?).map_err(|e| Error::parse(format!("byte {at}"), e.to_string()))
            })
            .collect()
    };
    let params = read_arrays(&mut cursor)?;
    let optimizer = match header.optimizer_step {
        Some(step) => {
            let first = read_arrays(&mut cursor)?;
            let second = read_arrays(&mut cursor)?;
            Some(OptimizerState { step, first, second })
        }
        None => None,
    };
    let model = match header.model {
        ModelConfig::Ssce(c) => AnyModel::Ssce(SsceModel::from_params(c, params)?),
        ModelConfig::Ka(c) => AnyModel::Ka(KaModel::from_params(c, params)?),
    };
    Ok(Checkpoint { model, seed: header.seed, iteration: header.iteration, optimizer, run_config: header.run_config })
}
