//! Checkpoint file format.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic   5 bytes  "STAB1"
//! version u32      currently 1
//! meta    u64 length + JSON bytes (experiment config, model config,
//!         data profile, preprocessor, schema, seed, best epoch)
//! count   u64 number of parameter blocks
//! block   u64 name length + name bytes (UTF-8)
//!         u64 rank + rank x u64 extents
//!         product(extents) x f64 scalars
//! ```
//!
//! Save -> load -> save is byte-identical: the JSON field order is fixed by
//! the struct definitions, f64 round-trips exactly, and parameter blocks
//! follow the model's deterministic parameter order.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use stab_core::data::{DatasetSchema, Preprocessor};
use stab_core::model::{DataProfile, ModelConfig, StabModel};
use stab_core::{Param, ParamStore, Result, StabError};

use crate::config::ExperimentConfig;

const MAGIC: &[u8; 5] = b"STAB1";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub experiment: ExperimentConfig,
    pub model: ModelConfig,
    pub profile: DataProfile,
    pub preprocessor: Preprocessor,
    pub schema: DatasetSchema,
    pub seed: u64,
    pub epoch: Option<usize>,
}

pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub params: Vec<Param>,
}

fn chk(msg: impl Into<String>) -> StabError {
    StabError::Checkpoint(msg.into())
}

pub fn save(path: &Path, meta: &CheckpointMeta, model: &StabModel) -> Result<()> {
    let mut out: Vec<u8> = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let meta_bytes = serde_json::to_vec(meta).map_err(|e| chk(format!("meta encode: {e}")))?;
    out.extend_from_slice(&(meta_bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(&meta_bytes);

    let params = model.params();
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for p in params {
        out.extend_from_slice(&(p.name.len() as u64).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.extend_from_slice(&(p.shape.len() as u64).to_le_bytes());
        for &e in &p.shape {
            out.extend_from_slice(&(e as u64).to_le_bytes());
        }
        for v in &p.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&out)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .map_err(|e| chk(format!("{}: {e}", path.display())))?
        .read_to_end(&mut bytes)?;
    let mut at = 0usize;
    let take = |at: &mut usize, n: usize| -> Result<&[u8]> {
        let end = at.checked_add(n).filter(|&e| e <= bytes.len());
        let end = end.ok_or_else(|| chk("truncated checkpoint"))?;
        let s = &bytes[*at..end];
        *at = end;
        Ok(s)
    };
    let u64_at = |at: &mut usize| -> Result<u64> {
        Ok(u64::from_le_bytes(take(at, 8)?.try_into().unwrap()))
    };

    if take(&mut at, 5)? != MAGIC {
        return Err(chk("bad magic: not a STAB checkpoint"));
    }
    let version = u32::from_le_bytes(take(&mut at, 4)?.try_into().unwrap());
    if version != VERSION {
        return Err(chk(format!("unknown format version {version}, expected {VERSION}")));
    }
    let meta_len = u64_at(&mut at)? as usize;
    let meta: CheckpointMeta = serde_json::from_slice(take(&mut at, meta_len)?)
        .map_err(|e| chk(format!("meta decode: {e}")))?;

    let count = u64_at(&mut at)? as usize;
    // lengths are untrusted: cap pre-allocations by the bytes that remain
    let mut params = Vec::with_capacity(count.min(bytes.len() / 8 + 1));
    for _ in 0..count {
        let name_len = u64_at(&mut at)? as usize;
        let name = std::str::from_utf8(take(&mut at, name_len)?)
            .map_err(|_| chk("parameter name is not UTF-8"))?
            .to_string();
        let rank = u64_at(&mut at)? as usize;
        let mut shape = Vec::with_capacity(rank.min(16));
        for _ in 0..rank {
            shape.push(u64_at(&mut at)? as usize);
        }
        let numel: usize = shape.iter().product();
        if numel.checked_mul(8).filter(|&n| at + n <= bytes.len()).is_none() {
            return Err(chk(format!("parameter {name} claims more data than the file holds")));
        }
        let mut data = Vec::with_capacity(numel);
        for _ in 0..numel {
            data.push(f64::from_le_bytes(take(&mut at, 8)?.try_into().unwrap()));
        }
        params.push(Param::new(name, &shape, data));
    }
    if at != bytes.len() {
        return Err(chk(format!("{} trailing bytes after the last block", bytes.len() - at)));
    }
    Ok(Checkpoint { meta, params })
}

/// Rebuild the model a checkpoint was saved from: construct it from the
/// stored configuration, then overwrite every parameter by name.
pub fn restore_model(ckpt: &Checkpoint) -> Result<StabModel> {
    let mut model = StabModel::new(ckpt.meta.model.clone(), ckpt.meta.profile.clone(), ckpt.meta.seed)?;
    let mut used = vec![false; ckpt.params.len()];
    for param in model.params_mut() {
        let i = ckpt
            .params
            .iter()
            .position(|p| p.name == param.name)
            .ok_or_else(|| chk(format!("checkpoint is missing parameter {}", param.name)))?;
        let stored = &ckpt.params[i];
        if stored.shape != param.shape {
            return Err(chk(format!(
                "parameter {} has shape {:?} in the checkpoint, expected {:?}",
                param.name, stored.shape, param.shape
            )));
        }
        param.data = stored.data.clone();
        used[i] = true;
    }
    if let Some(i) = used.iter().position(|u| !u) {
        return Err(chk(format!("checkpoint has an extra parameter {}", ckpt.params[i].name)));
    }
    Ok(model)
}
