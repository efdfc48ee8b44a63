//! Checkpoint container shared by backbone and prompt files.
//!
//! Layout: the magic line `RPOCKPT`, one line of JSON header (format
//! version, endianness tag, kind, metadata, tensor names and shapes),
//! then every tensor's scalars as little-endian `f64` in header order.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::encoder::{AttentionMode, BackboneWeights, EncoderConfig};
use crate::error::{Result, RpoError};
use crate::rpo::{Modality, ReadOnlyPromptSet};
use crate::tensor_core::Tensor;

const MAGIC: &str = "RPOCKPT";
pub const FORMAT_VERSION: u32 = 1;
const ENDIANNESS: &str = "little";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header<M> {
    format_version: u32,
    endianness: String,
    kind: String,
    meta: M,
    tensors: Vec<TensorEntry>,
}

/// Encodes a container.
pub fn encode<M: Serialize>(kind: &str, meta: &M, tensors: &[(String, &Tensor)]) -> Result<Vec<u8>> {
    let header = Header {
        format_version: FORMAT_VERSION,
        endianness: ENDIANNESS.to_string(),
        kind: kind.to_string(),
        meta,
        tensors: tensors
            .iter()
            .map(|(n, t)| TensorEntry {
                name: n.clone(),
                shape: t.shape().to_vec(),
            })
            .collect(),
    };
    let json = serde_json::to_string(&header)
        .map_err(|e| RpoError::Checkpoint(format!("header: {e}")))?;
    let payload: usize = tensors.iter().map(|(_, t)| t.numel() * 8).sum();
    let mut out = Vec::with_capacity(MAGIC.len() + json.len() + 2 + payload);
    out.extend_from_slice(MAGIC.as_bytes());
    out.push(b'\n');
    out.extend_from_slice(json.as_bytes());
    out.push(b'\n');
    for (_, t) in tensors {
        for x in t.data() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

/// Decodes a container of the expected `kind`.
pub fn decode<M: DeserializeOwned>(kind: &str, bytes: &[u8]) -> Result<(M, Vec<(String, Tensor)>)> {
    let bad = |msg: &str| RpoError::Checkpoint(msg.to_string());
    let rest = bytes
        .strip_prefix(MAGIC.as_bytes())
        .and_then(|r| r.strip_prefix(b"\n"))
        .ok_or_else(|| bad("missing magic line"))?;
    let nl = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| bad("unterminated header"))?;
    let header: Header<M> = serde_json::from_slice(&rest[..nl])
        .map_err(|e| RpoError::Checkpoint(format!("header: {e}")))?;
    if header.format_version != FORMAT_VERSION {
        return Err(RpoError::Checkpoint(format!(
            "unsupported format version {}",
            header.format_version
        )));
    }
    if header.endianness != ENDIANNESS {
        return Err(RpoError::Checkpoint(format!("unsupported endianness {}", header.endianness)));
    }
    if header.kind != kind {
        return Err(RpoError::Checkpoint(format!(
            "expected a {kind} checkpoint, found {}",
            header.kind
        )));
    }
    let mut payload = &rest[nl + 1..];
    let mut tensors = Vec::with_capacity(header.tensors.len());
    for entry in header.tensors {
        let n: usize = entry.shape.iter().product();
        if payload.len() < n * 8 {
            return Err(RpoError::Checkpoint(format!("truncated data for {}", entry.name)));
        }
        let (chunk, tail) = payload.split_at(n * 8);
        payload = tail;
        let data = chunk
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        tensors.push((entry.name, Tensor::new(entry.shape, data)?));
    }
    if !payload.is_empty() {
        return Err(bad("trailing bytes after tensor data"));
    }
    Ok((header.meta, tensors))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BackboneMeta {
    config: EncoderConfig,
    temperature: f64,
    checksum: String,
}

pub fn backbone_to_bytes(w: &BackboneWeights) -> Result<Vec<u8>> {
    let meta = BackboneMeta {
        config: w.config.clone(),
        temperature: w.temperature,
        checksum: w.checksum(),
    };
    encode("backbone", &meta, &w.towers.leaves())
}

pub fn backbone_from_bytes(bytes: &[u8]) -> Result<BackboneWeights> {
    let (meta, tensors): (BackboneMeta, _) = decode("backbone", bytes)?;
    let w = BackboneWeights::from_tensors(meta.config, meta.temperature, tensors)?;
    let found = w.checksum();
    if found != meta.checksum {
        return Err(RpoError::ChecksumMismatch {
            expected: meta.checksum,
            found,
        });
    }
    Ok(w)
}

pub fn save_backbone(w: &BackboneWeights, path: &Path) -> Result<()> {
    write_atomic(path, &backbone_to_bytes(w)?)
}

pub fn load_backbone(path: &Path) -> Result<BackboneWeights> {
    backbone_from_bytes(&read(path)?)
}

/// How a prompt set was initialized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PromptInit {
    SpecialToken { sigma: f64, seed: u64 },
    Random { std: f64, seed: u64 },
}

/// Everything stored next to the prompt tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptMeta {
    pub k: usize,
    pub modality: Modality,
    pub init: PromptInit,
    pub attention: AttentionMode,
    pub backbone_checksum: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptCheckpoint {
    pub meta: PromptMeta,
    pub prompts: ReadOnlyPromptSet,
}

pub fn prompts_to_bytes(ckpt: &PromptCheckpoint) -> Result<Vec<u8>> {
    let p = &ckpt.prompts;
    if ckpt.meta.k != p.k() || ckpt.meta.modality != p.modality() {
        return Err(RpoError::Checkpoint("prompt metadata disagrees with tensors".into()));
    }
    let mut tensors = Vec::new();
    if let Some(v) = &p.visual {
        tensors.push(("visual".to_string(), v));
    }
    tensors.push(("textual".to_string(), &p.textual));
    encode("prompts", &ckpt.meta, &tensors)
}

/// Decodes a prompt checkpoint without checking it against a backbone.
pub fn prompts_from_bytes_unchecked(bytes: &[u8]) -> Result<PromptCheckpoint> {
    let (meta, tensors): (PromptMeta, Vec<(String, Tensor)>) = decode("prompts", bytes)?;
    let mut visual = None;
    let mut textual = None;
    for (name, t) in tensors {
        match name.as_str() {
            "visual" if visual.is_none() => visual = Some(t),
            "textual" if textual.is_none() => textual = Some(t),
            _ => return Err(RpoError::Checkpoint(format!("unexpected tensor {name}"))),
        }
    }
    let textual = textual.ok_or_else(|| RpoError::Checkpoint("missing textual prompts".into()))?;
    let prompts = ReadOnlyPromptSet::new(visual, textual)?;
    if prompts.k() != meta.k || prompts.modality() != meta.modality {
        return Err(RpoError::Checkpoint("prompt metadata disagrees with tensors".into()));
    }
    Ok(PromptCheckpoint { meta, prompts })
}

/// Decodes a prompt checkpoint and requires that it was trained against
/// `backbone`.
pub fn prompts_from_bytes(bytes: &[u8], backbone: &BackboneWeights) -> Result<PromptCheckpoint> {
    let ckpt = prompts_from_bytes_unchecked(bytes)?;
    let found = backbone.checksum();
    if ckpt.meta.backbone_checksum != found {
        return Err(RpoError::ChecksumMismatch {
            expected: ckpt.meta.backbone_checksum,
            found,
        });
    }
    ckpt.prompts.check_against(backbone)?;
    Ok(ckpt)
}

pub fn save_prompts(ckpt: &PromptCheckpoint, path: &Path) -> Result<()> {
    write_atomic(path, &prompts_to_bytes(ckpt)?)
}

pub fn load_prompts(path: &Path, backbone: &BackboneWeights) -> Result<PromptCheckpoint> {
    prompts_from_bytes(&read(path)?, backbone)
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| RpoError::Checkpoint(format!("{}: {e}", path.display())))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("partial");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}
