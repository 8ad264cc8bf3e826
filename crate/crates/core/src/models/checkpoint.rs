//! Binary checkpoint container.
//!
//! Layout (little-endian):
//!
//! ```text
//! "DISINR01"
//! u64 len, JSON model config
//! u64 len, JSON array of pre-training record ids
//! u32 partition count
//!   u32 len, name (UTF-8)
//!   u8  frozen
//!   u32 tensor count
//!     u8  bytes per value (4 or 8)
//!     u32 ndim, u64 × ndim extents
//!     raw values
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::{Model, ModelConfig, ParameterSet, Partition};
use crate::diffcore::Tensor;
use crate::{Error, Real, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"DISINR01";

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_model(model, &mut buf)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    }
    fs::write(path, buf).map_err(|e| Error::file(path, e))
}

/// Loads a checkpoint; if `expected` is given, the stored config must match it.
pub fn load_checkpoint(path: &Path, expected: Option<&ModelConfig>) -> Result<Model> {
    let bytes = fs::read(path).map_err(|e| Error::file(path, e))?;
    let model = read_model(&mut bytes.as_slice())?;
    if let Some(cfg) = expected {
        if cfg != model.config() {
            return Err(Error::Config(format!(
                "checkpoint {} was written for a different model config",
                path.display()
            )));
        }
    }
    Ok(model)
}

fn write_model(model: &Model, w: &mut impl Write) -> Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    let cfg = serde_json::to_vec(model.config()).map_err(|e| Error::Format(e.to_string()))?;
    write_blob(w, &cfg)?;
    let ids = serde_json::to_vec(&model.record_ids).map_err(|e| Error::Format(e.to_string()))?;
    write_blob(w, &ids)?;
    let parts = model.params.partitions();
    w.write_all(&(parts.len() as u32).to_le_bytes())?;
    for p in parts {
        w.write_all(&(p.name.len() as u32).to_le_bytes())?;
        w.write_all(p.name.as_bytes())?;
        w.write_all(&[p.frozen as u8])?;
        w.write_all(&(p.tensors.len() as u32).to_le_bytes())?;
        for t in &p.tensors {
            write_tensor(w, t)?;
        }
    }
    Ok(())
}

fn write_blob(w: &mut impl Write, b: &[u8]) -> Result<()> {
    w.write_all(&(b.len() as u64).to_le_bytes())?;
    w.write_all(b)?;
    Ok(())
}

fn write_tensor(w: &mut impl Write, t: &Tensor) -> Result<()> {
    w.write_all(&[std::mem::size_of::<Real>() as u8])?;
    w.write_all(&(t.ndim() as u32).to_le_bytes())?;
    for &s in t.shape() {
        w.write_all(&(s as u64).to_le_bytes())?;
    }
    let mut raw = Vec::with_capacity(t.numel() * std::mem::size_of::<Real>());
    for v in t.data() {
        raw.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&raw)?;
    Ok(())
}

fn read_model(r: &mut impl Read) -> Result<Model> {
    let mut magic = [0u8; 8];
    read_exact(r, &mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a DisINR checkpoint (bad magic)".into()));
    }
    let cfg: ModelConfig =
        serde_json::from_slice(&read_blob(r)?).map_err(|e| Error::Format(e.to_string()))?;
    let ids: Vec<String> =
        serde_json::from_slice(&read_blob(r)?).map_err(|e| Error::Format(e.to_string()))?;
    let n = read_u32(r)?;
    let mut params = ParameterSet::new();
    for _ in 0..n {
        let len = read_u32(r)? as usize;
        let mut name = vec![0u8; len];
        read_exact(r, &mut name)?;
        let name = String::from_utf8(name).map_err(|e| Error::Format(e.to_string()))?;
        let mut flag = [0u8; 1];
        read_exact(r, &mut flag)?;
        let count = read_u32(r)?;
        let tensors = (0..count).map(|_| read_tensor(r)).collect::<Result<Vec<_>>>()?;
        let mut p = Partition::new(name, tensors);
        p.frozen = flag[0] != 0;
        params.insert(p);
    }
    let model = Model::from_parts(cfg, params, ids)?;
    check_layout(&model)?;
    Ok(model)
}

/// Every partition must match the tensor shapes its architecture implies.
fn check_layout(model: &Model) -> Result<()> {
    let fresh = Model::new(model.config().clone(), 0, 0)?;
    for p in model.params.partitions() {
        let reference = match fresh.params.get(&p.name) {
            Ok(r) => r.tensors.iter().map(|t| t.shape().to_vec()).collect::<Vec<_>>(),
            Err(_) => {
                let mut probe = fresh.clone();
                probe.spawn_subject(super::SubjectId::Test, 0)?;
                let test = super::subject_partition(model.kind(), super::SubjectId::Test)?;
                probe.params.get(&test)?.tensors.iter().map(|t| t.shape().to_vec()).collect()
            }
        };
        let shapes: Vec<Vec<usize>> = p.tensors.iter().map(|t| t.shape().to_vec()).collect();
        if shapes != reference {
            return Err(Error::Format(format!(
                "partition `{}` does not match the stored config",
                p.name
            )));
        }
    }
    Ok(())
}

fn read_exact(r: &mut impl Read, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::Format("truncated checkpoint".into()))
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_blob(r: &mut impl Read) -> Result<Vec<u8>> {
    let len = read_u64(r)? as usize;
    if len > 1 << 30 {
        return Err(Error::Format("implausible blob length".into()));
    }
    let mut b = vec![0u8; len];
    read_exact(r, &mut b)?;
    Ok(b)
}

fn read_tensor(r: &mut impl Read) -> Result<Tensor> {
    let mut width = [0u8; 1];
    read_exact(r, &mut width)?;
    let ndim = read_u32(r)? as usize;
    let shape = (0..ndim)
        .map(|_| read_u64(r).map(|v| v as usize))
        .collect::<Result<Vec<_>>>()?;
    let n: usize = shape.iter().product();
    let mut raw = vec![0u8; n * width[0] as usize];
    read_exact(r, &mut raw)?;
    let data: Vec<Real> = match width[0] {
        4 => raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as Real)
            .collect(),
        8 => raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()) as Real)
            .collect(),
        w => return Err(Error::Format(format!("unsupported value width {w}"))),
    };
    Tensor::new(shape, data)
}
