//! Checkpoint file.
//!
//! Layout, integers little-endian:
//!
//! ```text
//! "EIDM" | version u16 | header_len u64 | header (UTF-8 JSON)
//! | tensor payloads, f32, in header order | CRC-32 of everything above, u32
//! ```
//!
//! The header holds the architecture, the feature mask, the encoder digest,
//! training metadata and a `name, shape, offset` table for the tensors.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{build_model, ArchitectureSpec, IdsError, IdsModel, Result, TrainConfig};
use crate::autonet::Tensor;
use crate::chisel::SelectionMask;
use crate::data::EncoderState;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"EIDM";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub seed: u64,
    pub epochs_run: usize,
    pub final_loss: Option<f64>,
    pub train_config: Option<TrainConfig>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelCheckpoint {
    pub model: IdsModel,
    pub mask: SelectionMask,
    /// Hex SHA-256 of the encoder JSON the training frame was built with.
    pub encoder_digest: Option<String>,
    pub metadata: TrainingMetadata,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    /// Byte offset from the start of the payload section.
    offset: u64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    architecture: ArchitectureSpec,
    mask: SelectionMask,
    encoder_digest: Option<String>,
    metadata: TrainingMetadata,
    tensors: Vec<TensorEntry>,
}

pub fn encoder_digest(enc: &EncoderState) -> String {
    Sha256::digest(enc.to_json().as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn encode_checkpoint(ckpt: &ModelCheckpoint) -> Vec<u8> {
    let params = ckpt.model.network().params();
    let mut offset = 0u64;
    let tensors = params
        .iter()
        .map(|(name, t)| {
            let e = TensorEntry {
                name: name.clone(),
                shape: t.shape().to_vec(),
                offset,
            };
            offset += 4 * t.len() as u64;
            e
        })
        .collect();
    let header = Header {
        architecture: ckpt.model.spec().clone(),
        mask: ckpt.mask.clone(),
        encoder_digest: ckpt.encoder_digest.clone(),
        metadata: ckpt.metadata.clone(),
        tensors,
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(18 + json.len() + offset as usize);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, t) in &params {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<ModelCheckpoint> {
    if bytes.len() < 4 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(IdsError::BadMagic);
    }
    if bytes.len() < 4 + 2 + 8 + 4 {
        return Err(IdsError::Checksum);
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    if crc32fast::hash(body) != u32::from_le_bytes(tail.try_into().unwrap()) {
        return Err(IdsError::Checksum);
    }
    let version = u16::from_le_bytes([body[4], body[5]]);
    if version != CHECKPOINT_VERSION {
        return Err(IdsError::UnsupportedVersion(version));
    }
    let header_len = u64::from_le_bytes(body[6..14].try_into().unwrap());
    let header_end = usize::try_from(header_len)
        .ok()
        .and_then(|l| l.checked_add(14))
        .filter(|&e| e <= body.len())
        .ok_or_else(|| IdsError::Format("header length exceeds file".into()))?;
    let header: Header = serde_json::from_slice(&body[14..header_end])
        .map_err(|e| IdsError::Format(format!("header: {e}")))?;
    let payload = &body[header_end..];

    if header.mask.k() != header.architecture.input_width {
        return Err(IdsError::Format(format!(
            "mask keeps {} features but the model takes {}",
            header.mask.k(),
            header.architecture.input_width
        )));
    }
    let mut model = build_model(&header.architecture, 0)?;
    let names: Vec<String> = model.network().params().into_iter().map(|(n, _)| n).collect();
    if header.tensors.len() != names.len() {
        return Err(IdsError::Format(format!(
            "{} tensors stored, architecture has {}",
            header.tensors.len(),
            names.len()
        )));
    }
    let mut expected_end = 0usize;
    for (slot, name) in model.network_mut().params_mut().into_iter().zip(&names) {
        let mut found = header.tensors.iter().filter(|e| &e.name == name);
        let entry = found
            .next()
            .ok_or_else(|| IdsError::Format(format!("missing tensor `{name}`")))?;
        if found.next().is_some() {
            return Err(IdsError::Format(format!("tensor `{name}` stored twice")));
        }
        if entry.shape != slot.shape() {
            return Err(IdsError::Format(format!(
                "tensor `{name}` has shape {:?}, architecture needs {:?}",
                entry.shape,
                slot.shape()
            )));
        }
        let start = entry.offset as usize;
        let end = start + 4 * slot.len();
        let raw = payload
            .get(start..end)
            .ok_or_else(|| IdsError::Format(format!("tensor `{name}` runs past the payload")))?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        *slot = Tensor::from_vec(slot.shape(), data)?;
        expected_end = expected_end.max(end);
    }
    if expected_end != payload.len() {
        return Err(IdsError::Format("unreferenced bytes in the payload".into()));
    }
    Ok(ModelCheckpoint {
        model,
        mask: header.mask,
        encoder_digest: header.encoder_digest,
        metadata: header.metadata,
    })
}

pub fn save_checkpoint(ckpt: &ModelCheckpoint, path: &Path) -> Result<()> {
    std::fs::write(path, encode_checkpoint(ckpt)).map_err(|source| IdsError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<ModelCheckpoint> {
    let bytes = std::fs::read(path).map_err(|source| IdsError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_checkpoint(&bytes)
}
