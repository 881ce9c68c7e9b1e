//! The `TSCN` checkpoint file.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! bytes 0..4    magic "TSCN"
//! bytes 4..8    u32 format version (currently 1)
//! bytes 8..16   u64 header byte length H
//! bytes 16..16+H   header: one JSON document (layer specs, input shape,
//!                  freeze mask, stage label, seed)
//! bytes 16+H..  payload: all parameters as f32, in layer-declaration
//!               order, weights then bias per layer
//! ```
//!
//! The payload length must equal the parameter count times four; save,
//! load, save again is bit-identical.

use std::path::Path;

use serde::{Deserialize, Serialize};

use tscn_core::encoder::{EncoderParams, EncoderSpec, LayerSpec, ParamTensors, Shape};

use crate::error::{CliError, Result};

const MAGIC: &[u8; 4] = b"TSCN";
const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct ShapeHeader {
    c: usize,
    h: usize,
    w: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    layers: Vec<LayerSpec>,
    input: ShapeHeader,
    freeze: Vec<bool>,
    stage: String,
    seed: u64,
}

/// Write a checkpoint; parameters are stored as f32.
pub fn save(path: &Path, params: &EncoderParams<f32>, stage: &str, seed: u64) -> Result<()> {
    let spec = params.spec();
    let input = spec.input_shape();
    let header = Header {
        layers: spec.layers().to_vec(),
        input: ShapeHeader { c: input.c, h: input.h, w: input.w },
        freeze: params.freeze_mask().to_vec(),
        stage: stage.to_string(),
        seed,
    };
    let header_bytes = serde_json::to_vec(&header)
        .map_err(|e| CliError::Checkpoint { path: path.into(), reason: e.to_string() })?;

    let mut out = Vec::with_capacity(16 + header_bytes.len() + params.param_count() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_bytes);
    for i in 0..spec.layers().len() {
        if let Some(p) = params.layer(i) {
            for v in p.w.iter().chain(&p.b) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    std::fs::write(path, out).map_err(|e| CliError::io(path, e))
}

/// Read a checkpoint back; every byte is validated.
pub fn load(path: &Path) -> Result<(EncoderParams<f32>, String, u64)> {
    let bad = |reason: &str| CliError::Checkpoint { path: path.into(), reason: reason.into() };
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    if bytes.len() < 16 {
        return Err(bad("file shorter than the fixed header"));
    }
    if &bytes[0..4] != MAGIC {
        return Err(bad("bad magic"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    if bytes.len() < 16 + header_len {
        return Err(bad("declared header length exceeds the file"));
    }
    let header: Header = serde_json::from_slice(&bytes[16..16 + header_len])
        .map_err(|e| bad(&format!("header: {e}")))?;

    let spec = EncoderSpec::new(
        Shape::new(header.input.c, header.input.h, header.input.w),
        header.layers,
    )?;

    let payload = &bytes[16 + header_len..];
    let mut offset = 0usize;
    let mut tensors: Vec<Option<ParamTensors<f32>>> = Vec::new();
    let mut take = |n: usize| -> Result<Vec<f32>> {
        let need = n * 4;
        if offset + need > payload.len() {
            return Err(bad("payload shorter than the declared layers"));
        }
        let vals = payload[offset..offset + need]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        offset += need;
        Ok(vals)
    };
    for layer in spec.layers() {
        let sizes = match *layer {
            LayerSpec::Conv { in_channels, out_channels } => {
                Some((out_channels * in_channels * 9, out_channels))
            }
            LayerSpec::Dense { in_units, out_units } => Some((out_units * in_units, out_units)),
            _ => None,
        };
        tensors.push(match sizes {
            Some((w_len, b_len)) => {
                Some(ParamTensors { w: take(w_len)?, b: take(b_len)? })
            }
            None => None,
        });
    }
    if offset != payload.len() {
        return Err(bad(&format!(
            "payload has {} bytes, parameters need {}",
            payload.len(),
            offset
        )));
    }
    let params = EncoderParams::from_tensors(spec, tensors, header.freeze)?;
    Ok((params, header.stage, header.seed))
}
