//! Weight file container.
//!
//! Layout: the 8-byte magic `GPWEIGHT`, a little-endian `u64` header length, a JSON
//! header (format version, config, feature encoding, GRU gate order, tensor names and
//! shapes), then every tensor's values as little-endian `f64` in header order.
//! Optimizer state is not stored.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::AdamState;
use super::model::{ModelConfig, Network, GATE_ORDER, TENSOR_NAMES};
use super::{ModelParams, NnError};
use crate::features::Encoding;

const MAGIC: &[u8; 8] = b"GPWEIGHT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    config: ModelConfig,
    encoding: Encoding,
    gate_order: Vec<String>,
    tensors: Vec<TensorEntry>,
}

pub fn write_weights<W: Write>(params: &ModelParams, mut out: W) -> Result<(), NnError> {
    let header = Header {
        format_version: FORMAT_VERSION,
        config: params.config,
        encoding: params.encoding,
        gate_order: GATE_ORDER.iter().map(|s| s.to_string()).collect(),
        tensors: TENSOR_NAMES
            .iter()
            .zip(params.network.shapes())
            .map(|(name, shape)| TensorEntry {
                name: name.to_string(),
                shape,
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| NnError::WeightFile(e.to_string()))?;
    out.write_all(MAGIC)?;
    out.write_all(&(json.len() as u64).to_le_bytes())?;
    out.write_all(&json)?;
    let mut buf = Vec::new();
    for tensor in params.network.tensors() {
        buf.clear();
        buf.reserve(tensor.len() * 8);
        for v in tensor {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    Ok(())
}

pub fn read_weights<R: Read>(mut input: R) -> Result<ModelParams, NnError> {
    let bad = |m: &str| NnError::WeightFile(m.to_string());
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(bad("not a weight file"));
    }
    let mut len = [0u8; 8];
    input.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len) as usize;
    if len > 1 << 24 {
        return Err(bad("header too large"));
    }
    let mut json = vec![0u8; len];
    input.read_exact(&mut json)?;
    let header: Header =
        serde_json::from_slice(&json).map_err(|e| NnError::WeightFile(e.to_string()))?;
    if header.format_version != FORMAT_VERSION {
        return Err(NnError::WeightFile(format!(
            "unsupported format version {}",
            header.format_version
        )));
    }
    if header.gate_order != GATE_ORDER {
        return Err(NnError::WeightFile(format!(
            "unexpected gate order {:?}",
            header.gate_order
        )));
    }
    header.config.validate()?;
    if header.config.input_dim != header.encoding.dim() {
        return Err(NnError::WeightFile(format!(
            "config expects {} inputs but {} features have {}",
            header.config.input_dim,
            header.encoding,
            header.encoding.dim()
        )));
    }
    let mut network = Network::zeros(&header.config);
    let shapes = network.shapes();
    if header.tensors.len() != TENSOR_NAMES.len() {
        return Err(bad("wrong tensor count"));
    }
    for ((entry, name), shape) in header.tensors.iter().zip(TENSOR_NAMES).zip(&shapes) {
        if entry.name != name || &entry.shape != shape {
            return Err(NnError::WeightFile(format!(
                "tensor {} {:?} does not match config ({name} {shape:?})",
                entry.name, entry.shape
            )));
        }
    }
    let mut raw = [0u8; 8];
    for tensor in network.tensors_mut() {
        for v in tensor.iter_mut() {
            input.read_exact(&mut raw)?;
            *v = f64::from_le_bytes(raw);
        }
    }
    let adam = AdamState::new(&network);
    Ok(ModelParams {
        config: header.config,
        encoding: header.encoding,
        network,
        adam,
    })
}

pub fn save_weights(params: &ModelParams, path: &Path) -> Result<(), NnError> {
    let mut file = std::io::BufWriter::new(fs::File::create(path)?);
    write_weights(params, &mut file)?;
    file.flush()?;
    Ok(())
}

/// Loads weights, refusing files trained for a different feature encoding.
pub fn load_weights(path: &Path, expected: Option<Encoding>) -> Result<ModelParams, NnError> {
    let params = read_weights(std::io::BufReader::new(fs::File::open(path)?))?;
    if let Some(enc) = expected {
        params.expect_encoding(enc)?;
    }
    Ok(params)
}
