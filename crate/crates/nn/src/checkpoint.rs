//! Single-file checkpoints: magic bytes, a little-endian u64 header length,
//! a JSON header, then every tensor as little-endian f32 in header order.

use std::io::Write;
use std::path::Path;

use candle_core::{Device, Tensor};
use serde::{Deserialize, Serialize};
use sgt_core::corpus::SplitFingerprints;

use crate::error::{NnError, Result};
use crate::extractor::{ExtractorConfig, FeatureExtractor};
use crate::layers::NamedVars;
use crate::model::{GeneratorModel, ModelConfig, ModelMeta};

pub const MAGIC: &[u8; 8] = b"SGTCKPT\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    /// Offset into the data section, in f32 elements.
    offset: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Header {
    version: u32,
    model: ModelConfig,
    extractor: ExtractorConfig,
    meta: ModelMeta,
    split: Option<SplitFingerprints>,
    training: Option<serde_json::Value>,
    tensors: Vec<TensorEntry>,
}

/// A trained generator together with its FGD feature extractor.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: GeneratorModel,
    pub extractor: FeatureExtractor,
    pub split: Option<SplitFingerprints>,
    /// Training configuration, so evaluation can rebuild the same split.
    pub training: Option<serde_json::Value>,
}

fn corrupt(msg: impl Into<String>) -> NnError {
    NnError::CorruptCheckpoint(msg.into())
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut tensors = Vec::new();
        let mut data: Vec<u8> = Vec::new();
        let mut offset = 0;
        for (name, var) in self.model.vars.iter().chain(&self.extractor.vars) {
            let values = var.as_tensor().flatten_all()?.to_vec1::<f32>()?;
            tensors.push(TensorEntry {
                name: name.clone(),
                shape: var.dims().to_vec(),
                offset,
            });
            offset += values.len();
            for v in values {
                data.extend_from_slice(&v.to_le_bytes());
            }
        }
        let header = Header {
            version: FORMAT_VERSION,
            model: self.model.config.clone(),
            extractor: self.extractor.config.clone(),
            meta: self.model.meta.clone(),
            split: self.split.clone(),
            training: self.training.clone(),
            tensors,
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(16 + json.len() + data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&data);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(corrupt("missing magic bytes"));
        }
        let len = u64::from_le_bytes(bytes[8..16].try_into().expect("eight bytes")) as usize;
        let json = bytes
            .get(16..16usize.saturating_add(len))
            .ok_or_else(|| corrupt("truncated header"))?;
        let probe: serde_json::Value = serde_json::from_slice(json).map_err(|e| corrupt(e.to_string()))?;
        let version = probe.get("version").and_then(|v| v.as_u64()).ok_or_else(|| corrupt("no version"))? as u32;
        if version != FORMAT_VERSION {
            return Err(NnError::VersionMismatch {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let header: Header = serde_json::from_value(probe).map_err(|e| corrupt(e.to_string()))?;
        let data = &bytes[16 + len..];
        if data.len() % 4 != 0 {
            return Err(corrupt("data section is not a whole number of f32 values"));
        }
        let floats: Vec<f32> = data
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("four bytes")))
            .collect();

        let mut model = GeneratorModel::new(header.model, header.meta, 0)?;
        let mut extractor = FeatureExtractor::new(header.extractor)?;
        let expected = model.vars.len() + extractor.vars.len();
        if header.tensors.len() != expected {
            return Err(corrupt(format!("{} tensors, expected {expected}", header.tensors.len())));
        }
        let mut used = 0;
        for vars in [&mut model.vars, &mut extractor.vars] {
            used += restore(vars, &header.tensors, &floats)?;
        }
        if used != floats.len() {
            return Err(corrupt("trailing data after the last tensor"));
        }
        Ok(Self {
            model,
            extractor,
            split: header.split,
            training: header.training,
        })
    }

    /// Writes through a temporary file so a crash never leaves a partial
    /// checkpoint behind.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let tmp = path.with_extension("tmp");
        {
            let mut f = std::fs::File::create(&tmp)?;
            f.write_all(&bytes)?;
            f.sync_all()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn restore(vars: &mut NamedVars, table: &[TensorEntry], floats: &[f32]) -> Result<usize> {
    let mut used = 0;
    for (name, var) in vars.iter() {
        let entry = table
            .iter()
            .find(|e| &e.name == name)
            .ok_or_else(|| corrupt(format!("tensor `{name}` missing")))?;
        if entry.shape != var.dims() {
            return Err(corrupt(format!(
                "tensor `{name}` has shape {:?}, expected {:?}",
                entry.shape,
                var.dims()
            )));
        }
        let n: usize = entry.shape.iter().product();
        let slice = floats
            .get(entry.offset..entry.offset + n)
            .ok_or_else(|| corrupt(format!("tensor `{name}` runs past the data section")))?;
        var.set(&Tensor::from_slice(slice, entry.shape.as_slice(), &Device::Cpu)?)?;
        used += n;
    }
    Ok(used)
}
