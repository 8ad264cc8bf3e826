//! `DINRDAT1` container: a JSON metadata header followed by typed tensor
//! sections, all little-endian.
//!
//! ```text
//! magic "DINRDAT1" | u32 version | u32 meta_len | meta (UTF-8 JSON)
//! u32 sections, then per section:
//!   u8 kind | u16 name_len | name | u8 ndim | u64 dims[ndim] | u8 width | data
//! ```
//!
//! `width` is the float width in bytes (4 in the default build). Complex
//! data carries a trailing axis of length 2.

use std::io::{Read, Write};
use std::path::Path;

use crate::diffcore::Tensor;
use crate::{Error, Real, Result};

pub const CONTAINER_MAGIC: &[u8; 8] = b"DINRDAT1";
const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SectionKind {
    Image = 0,
    Sinogram = 1,
    Kspace = 2,
    Mask = 3,
    CoilMaps = 4,
}

impl SectionKind {
    fn from_u8(v: u8) -> Result<Self> {
        Ok(match v {
            0 => Self::Image,
            1 => Self::Sinogram,
            2 => Self::Kspace,
            3 => Self::Mask,
            4 => Self::CoilMaps,
            _ => return Err(Error::Format(format!("unknown section kind {v}"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Section {
    pub kind: SectionKind,
    pub name: String,
    pub tensor: Tensor,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Container {
    pub meta: serde_json::Value,
    pub sections: Vec<Section>,
}

impl Container {
    pub fn new(meta: serde_json::Value) -> Self {
        Self {
            meta,
            sections: Vec::new(),
        }
    }

    pub fn push(&mut self, kind: SectionKind, name: &str, tensor: Tensor) {
        self.sections.push(Section {
            kind,
            name: name.to_string(),
            tensor,
        });
    }

    pub fn get(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }

    pub fn require(&self, name: &str) -> Result<&Section> {
        self.get(name)
            .ok_or_else(|| Error::Format(format!("container has no `{name}` section")))
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let meta = serde_json::to_vec(&self.meta).map_err(|e| Error::Format(e.to_string()))?;
        w.write_all(CONTAINER_MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(meta.len() as u32).to_le_bytes())?;
        w.write_all(&meta)?;
        w.write_all(&(self.sections.len() as u32).to_le_bytes())?;
        for s in &self.sections {
            w.write_all(&[s.kind as u8])?;
            let name = s.name.as_bytes();
            w.write_all(&(name.len() as u16).to_le_bytes())?;
            w.write_all(name)?;
            w.write_all(&[s.tensor.ndim() as u8])?;
            for &d in s.tensor.shape() {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            w.write_all(&[std::mem::size_of::<Real>() as u8])?;
            let mut buf = Vec::with_capacity(s.tensor.numel() * std::mem::size_of::<Real>());
            for v in s.tensor.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(truncated)?;
        if &magic != CONTAINER_MAGIC {
            return Err(Error::Format("not a DINRDAT1 container".into()));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported container version {version}")));
        }
        let meta_len = read_u32(&mut r)? as usize;
        let meta_bytes = read_vec(&mut r, meta_len)?;
        let meta = serde_json::from_slice(&meta_bytes).map_err(|e| Error::Format(e.to_string()))?;
        let count = read_u32(&mut r)?;
        let mut sections = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let kind = SectionKind::from_u8(read_vec(&mut r, 1)?[0])?;
            let mut len = [0u8; 2];
            r.read_exact(&mut len).map_err(truncated)?;
            let name = String::from_utf8(read_vec(&mut r, u16::from_le_bytes(len) as usize)?)
                .map_err(|_| Error::Format("section name is not UTF-8".into()))?;
            let ndim = read_vec(&mut r, 1)?[0] as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                let mut d = [0u8; 8];
                r.read_exact(&mut d).map_err(truncated)?;
                shape.push(u64::from_le_bytes(d) as usize);
            }
            let width = read_vec(&mut r, 1)?[0] as usize;
            let n: usize = shape.iter().product();
            let raw = read_vec(&mut r, n * width)?;
            let data: Vec<Real> = match width {
                4 => raw
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as Real)
                    .collect(),
                8 => raw
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()) as Real)
                    .collect(),
                _ => return Err(Error::Format(format!("unsupported float width {width}"))),
            };
            let tensor = Tensor::new(shape, data).map_err(|e| Error::Format(e.to_string()))?;
            sections.push(Section { kind, name, tensor });
        }
        Ok(Self { meta, sections })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        std::fs::write(path, buf).map_err(|e| Error::file(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::file(path, e))?;
        Self::read_from(bytes.as_slice())
    }
}

fn truncated(_: std::io::Error) -> Error {
    Error::Format("container is truncated".into())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u32::from_le_bytes(b))
}

fn read_vec(r: &mut impl Read, n: usize) -> Result<Vec<u8>> {
    let mut v = Vec::new();
    r.take(n as u64).read_to_end(&mut v)?;
    if v.len() != n {
        return Err(Error::Format("container is truncated".into()));
    }
    Ok(v)
}
