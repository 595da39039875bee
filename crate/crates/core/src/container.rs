//! Versioned model container: a JSON manifest followed by named blocks of
//! little-endian `f32` parameters.
//!
//! ```text
//! magic    8 bytes   "EDSAMDL\0"
//! version  u32 LE
//! manifest u32 LE length + UTF-8 JSON
//! blocks   u32 LE count, then per block:
//!          u32 LE name length + name, u64 LE element count + f32 LE data
//! ```

use std::io::{Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"EDSAMDL\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub manifest: serde_json::Value,
    pub blocks: Vec<(String, Vec<f32>)>,
}

impl Container {
    pub fn new(manifest: &impl Serialize) -> Result<Self> {
        Ok(Container {
            manifest: serde_json::to_value(manifest)?,
            blocks: Vec::new(),
        })
    }

    /// Append a block, narrowing to `f32`.
    pub fn push(&mut self, name: &str, data: &[f64]) {
        self.blocks
            .push((name.to_string(), data.iter().map(|&v| v as f32).collect()));
    }

    pub fn manifest_as<T: DeserializeOwned>(&self) -> Result<T> {
        Ok(serde_json::from_value(self.manifest.clone())?)
    }

    pub fn block(&self, name: &str) -> Result<&[f32]> {
        self.blocks
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, d)| d.as_slice())
            .ok_or_else(|| Error::Container(format!("missing block {name:?}")))
    }

    /// A block widened to `f64`, checked against the expected length.
    pub fn block_f64(&self, name: &str, expected_len: usize) -> Result<Vec<f64>> {
        let data = self.block(name)?;
        if data.len() != expected_len {
            return Err(Error::Container(format!(
                "block {name:?} has {} values, expected {expected_len}",
                data.len()
            )));
        }
        Ok(data.iter().map(|&v| v as f64).collect())
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let manifest = serde_json::to_vec(&self.manifest).map_err(std::io::Error::other)?;
        out.write_all(MAGIC)?;
        out.write_all(&VERSION.to_le_bytes())?;
        out.write_all(&(manifest.len() as u32).to_le_bytes())?;
        out.write_all(&manifest)?;
        out.write_all(&(self.blocks.len() as u32).to_le_bytes())?;
        for (name, data) in &self.blocks {
            out.write_all(&(name.len() as u32).to_le_bytes())?;
            out.write_all(name.as_bytes())?;
            out.write_all(&(data.len() as u64).to_le_bytes())?;
            let mut buf = Vec::with_capacity(data.len() * 4);
            for v in data {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            out.write_all(&buf)?;
        }
        out.flush()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(std::io::BufWriter::new(file))
            .map_err(|e| Error::io(path, e))
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let bad = |m: &str| Error::Container(m.to_string());
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
        if &magic != MAGIC {
            return Err(bad("not a model container"));
        }
        let version = read_u32(&mut input)?;
        if version != VERSION {
            return Err(Error::Container(format!("unsupported version {version}")));
        }
        let manifest_len = read_u32(&mut input)? as usize;
        let mut manifest = vec![0u8; manifest_len];
        input.read_exact(&mut manifest).map_err(|_| bad("truncated manifest"))?;
        let manifest: serde_json::Value = serde_json::from_slice(&manifest)?;
        let count = read_u32(&mut input)?;
        let mut blocks = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let name_len = read_u32(&mut input)? as usize;
            let mut name = vec![0u8; name_len];
            input.read_exact(&mut name).map_err(|_| bad("truncated block name"))?;
            let name = String::from_utf8(name).map_err(|_| bad("block name not UTF-8"))?;
            let mut len = [0u8; 8];
            input.read_exact(&mut len).map_err(|_| bad("truncated block"))?;
            let len = u64::from_le_bytes(len) as usize;
            let mut raw = vec![0u8; len * 4];
            input.read_exact(&mut raw).map_err(|_| bad("truncated block data"))?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            blocks.push((name, data));
        }
        Ok(Container { manifest, blocks })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Container::read_from(std::io::BufReader::new(file))
    }
}

fn read_u32<R: Read>(input: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    input
        .read_exact(&mut b)
        .map_err(|_| Error::Container("truncated integer".into()))?;
    Ok(u32::from_le_bytes(b))
}
