//! Binary parameter archives.
//!
//! Layout: magic `SEMJCKPT`, format version (u32), manifest length (u64) and
//! JSON manifest, parameter count (u32), then per parameter its name, shape
//! and little-endian `f64` values, and finally the SHA-256 of everything
//! before it.

use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::{Array, ParameterStore};
use crate::encoder::Vocabularies;
use crate::model::Ontology;
use crate::scorers::{Model, ModelConfig, Symbols};
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"SEMJCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    /// `"model"` or `"pruner"`.
    pub kind: String,
    pub version: u32,
    /// Hex SHA-256 of the canonical ontology text.
    pub ontology_hash: String,
    /// Kind-specific configuration and vocabularies.
    pub payload: serde_json::Value,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub manifest: Manifest,
    pub params: Vec<(String, Array)>,
}

pub fn ontology_hash(ontology: &Ontology) -> String {
    hex::encode(Sha256::digest(super::format_ontology(ontology).as_bytes()))
}

fn ck_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Checkpoint {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

pub fn save_checkpoint(store: &ParameterStore, manifest: &Manifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.write_u32::<LittleEndian>(manifest.version)?;
    let json = serde_json::to_vec(manifest).map_err(|e| ck_err(path, e.to_string()))?;
    buf.write_u64::<LittleEndian>(json.len() as u64)?;
    buf.extend_from_slice(&json);
    buf.write_u32::<LittleEndian>(store.len() as u32)?;
    for (name, value) in store.iter() {
        buf.write_u32::<LittleEndian>(name.len() as u32)?;
        buf.extend_from_slice(name.as_bytes());
        buf.write_u32::<LittleEndian>(value.shape().len() as u32)?;
        for &d in value.shape() {
            buf.write_u64::<LittleEndian>(d as u64)?;
        }
        for &v in value.data() {
            buf.write_f64::<LittleEndian>(v)?;
        }
    }
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);
    std::fs::write(path, buf).map_err(|e| super::with_path(e, path))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| super::with_path(e, path))?;
    if bytes.len() < MAGIC.len() + 32 || &bytes[..MAGIC.len()] != MAGIC {
        return Err(ck_err(path, "not a checkpoint (bad magic or truncated)"));
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(ck_err(path, "checksum mismatch (truncated or corrupted)"));
    }
    let short = |_| ck_err(path, "unexpected end of data");
    let mut r = Cursor::new(&body[MAGIC.len()..]);
    let version = r.read_u32::<LittleEndian>().map_err(short)?;
    if version != CHECKPOINT_VERSION {
        return Err(ck_err(path, format!("format version {version}, expected {CHECKPOINT_VERSION}")));
    }
    let len = r.read_u64::<LittleEndian>().map_err(short)? as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json).map_err(short)?;
    let manifest: Manifest = serde_json::from_slice(&json).map_err(|e| ck_err(path, format!("manifest: {e}")))?;
    if manifest.version != version {
        return Err(ck_err(path, "manifest version disagrees with header"));
    }
    let count = r.read_u32::<LittleEndian>().map_err(short)?;
    let mut params = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let n = r.read_u32::<LittleEndian>().map_err(short)? as usize;
        let mut name = vec![0u8; n];
        r.read_exact(&mut name).map_err(short)?;
        let name = String::from_utf8(name).map_err(|_| ck_err(path, "parameter name is not UTF-8"))?;
        let rank = r.read_u32::<LittleEndian>().map_err(short)? as usize;
        let shape = (0..rank)
            .map(|_| r.read_u64::<LittleEndian>().map(|d| d as usize).map_err(short))
            .collect::<Result<Vec<_>>>()?;
        let total: usize = shape.iter().product();
        if total.saturating_mul(8) > body.len() {
            return Err(ck_err(path, format!("parameter `{name}` shape {shape:?} exceeds file size")));
        }
        let data = (0..total)
            .map(|_| r.read_f64::<LittleEndian>().map_err(short))
            .collect::<Result<Vec<_>>>()?;
        let value = Array::new(shape, data).map_err(|e| ck_err(path, format!("parameter `{name}`: {e}")))?;
        params.push((name, value));
    }
    if (r.position() as usize) != body.len() - MAGIC.len() {
        return Err(ck_err(path, "trailing bytes after parameters"));
    }
    Ok(Checkpoint { manifest, params })
}

/// Copies checkpoint parameters into `store`, which must hold exactly the
/// same names and shapes.
pub(crate) fn restore(store: &mut ParameterStore, params: Vec<(String, Array)>, path: &Path) -> Result<()> {
    if params.len() != store.len() {
        return Err(ck_err(
            path,
            format!("{} parameters in file, model expects {}", params.len(), store.len()),
        ));
    }
    for (name, value) in params {
        store.set(&name, value).map_err(|e| ck_err(path, e.to_string()))?;
    }
    Ok(())
}

/// Checks the manifest kind and, when an ontology is supplied, its hash.
/// A hash mismatch is an error unless `allow_mismatch`, in which case it is
/// logged.
pub(crate) fn check_manifest(
    manifest: &Manifest,
    kind: &str,
    ontology: Option<&Ontology>,
    allow_mismatch: bool,
    path: &Path,
) -> Result<()> {
    if manifest.kind != kind {
        return Err(ck_err(path, format!("holds a `{}`, expected a `{kind}`", manifest.kind)));
    }
    if let Some(o) = ontology {
        if !manifest.ontology_hash.is_empty() && ontology_hash(o) != manifest.ontology_hash {
            if allow_mismatch {
                log::warn!("{}: ontology differs from the one used in training", path.display());
            } else {
                return Err(ck_err(path, "ontology differs from the one used in training"));
            }
        }
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct ModelPayload {
    config: ModelConfig,
    vocab: Vocabularies,
    symbols: Symbols,
}

pub fn save_model(model: &Model, ontology: Option<&Ontology>, path: impl AsRef<Path>) -> Result<()> {
    let payload = ModelPayload {
        config: model.config.clone(),
        vocab: model.encoder.vocab.clone(),
        symbols: model.symbols.clone(),
    };
    let manifest = Manifest {
        kind: "model".into(),
        version: CHECKPOINT_VERSION,
        ontology_hash: ontology.map(ontology_hash).unwrap_or_default(),
        payload: serde_json::to_value(payload).map_err(|e| Error::Invalid(e.to_string()))?,
    };
    save_checkpoint(&model.store, &manifest, path)
}

pub fn load_model(path: impl AsRef<Path>, ontology: Option<&Ontology>, allow_mismatch: bool) -> Result<Model> {
    let path = path.as_ref();
    let ck = load_checkpoint(path)?;
    check_manifest(&ck.manifest, "model", ontology, allow_mismatch, path)?;
    let mut payload: ModelPayload = serde_json::from_value(ck.manifest.payload)
        .map_err(|e| ck_err(path, format!("model manifest: {e}")))?;
    payload.vocab.reindex();
    let mut model = Model::new(payload.config, payload.vocab, payload.symbols, 0)?;
    restore(&mut model.store, ck.params, path)?;
    Ok(model)
}
