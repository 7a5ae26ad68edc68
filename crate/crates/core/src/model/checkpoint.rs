//! JSON checkpoint: configuration plus every parameter as shape and base64
//! little-endian `f64` payload.

use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{InputWidths, Model, ModelConfig, VariantSpec};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: ModelConfig,
    pub inputs: InputWidths,
    pub variant: VariantSpec,
    pub params: Vec<ParamRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamRecord {
    pub name: String,
    pub shape: Vec<usize>,
    /// Base64 of the row-major little-endian `f64` bytes.
    pub data: String,
}

impl Checkpoint {
    pub fn from_model(model: &Model) -> Self {
        let params = model
            .params()
            .iter()
            .map(|(name, t)| {
                let bytes: Vec<u8> = t.data().iter().flat_map(|v| v.to_le_bytes()).collect();
                ParamRecord { name: name.to_string(), shape: t.shape().to_vec(), data: STANDARD.encode(bytes) }
            })
            .collect();
        Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            config: model.config().clone(),
            inputs: model.inputs(),
            variant: model.variant().clone(),
            params,
        }
    }

    /// Rebuilds the model skeleton and loads every parameter by name.
    pub fn into_model(self) -> Result<Model> {
        if self.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Serde(format!(
                "unsupported checkpoint format version {} (expected {CHECKPOINT_FORMAT_VERSION})",
                self.format_version
            )));
        }
        let mut model = Model::new(self.config, self.inputs, self.variant, 0)?;
        if model.params().len() != self.params.len() {
            return Err(Error::Serde(format!(
                "checkpoint holds {} parameters, architecture has {}",
                self.params.len(),
                model.params().len()
            )));
        }
        for rec in self.params {
            let bytes = STANDARD
                .decode(&rec.data)
                .map_err(|e| Error::Serde(format!("parameter {}: {e}", rec.name)))?;
            if bytes.len() % 8 != 0 {
                return Err(Error::Serde(format!("parameter {}: payload is not a multiple of 8 bytes", rec.name)));
            }
            let data = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            model.params_mut().set(&rec.name, Tensor::new(&rec.shape, data)?)?;
        }
        Ok(model)
    }
}

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(&Checkpoint::from_model(model))?;
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ckpt: Checkpoint = serde_json::from_str(&text)?;
    ckpt.into_model()
}
