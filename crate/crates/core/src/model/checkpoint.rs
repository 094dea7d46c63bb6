//! Binary checkpoint container.
//!
//! Layout: 8-byte magic, `u32` format version, `u32` header length, JSON
//! header, then every tensor as `u32` name length, name bytes, `u32` rows,
//! `u32` cols and little-endian `f64` data. All integers little-endian.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::params::ModelParams;
use crate::error::{Error, Result};
use crate::math::Tensor2;
use crate::scene_graph::{ExtractionConfig, RelationType};

const MAGIC: &[u8; 8] = b"SGCKPT\0\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    model: ModelConfig,
    extraction: ExtractionConfig,
    relations: Vec<String>,
    tensors: usize,
}

/// Trained parameters together with the extraction settings their inputs
/// must be produced with.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub extraction: ExtractionConfig,
}

fn relation_names() -> Vec<String> {
    RelationType::all().iter().map(|r| r.name().to_string()).collect()
}

struct Reader<'b> {
    buf: &'b [u8],
    pos: usize,
}

impl<'b> Reader<'b> {
    fn take(&mut self, n: usize) -> Result<&'b [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

impl Checkpoint {
    pub fn new(params: ModelParams, extraction: ExtractionConfig) -> Result<Self> {
        if params.vocab_size != extraction.vocabulary.len() {
            return Err(Error::Checkpoint(format!(
                "model built for {} classes but vocabulary has {}",
                params.vocab_size,
                extraction.vocabulary.len()
            )));
        }
        Ok(Self { params, extraction })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            model: self.params.config.clone(),
            extraction: self.extraction.clone(),
            relations: relation_names(),
            tensors: self.params.store.len(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(16 + json.len() + 8 * self.params.scalar_count() + 64 * header.tensors);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, name, t) in self.params.store.iter() {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.rows() as u32).to_le_bytes());
            out.extend_from_slice(&(t.cols() as u32).to_le_bytes());
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let len = r.u32()? as usize;
        let header: Header = serde_json::from_slice(r.take(len)?)?;
        if header.relations != relation_names() {
            return Err(Error::Checkpoint("relation vocabulary differs from this build".into()));
        }
        header.extraction.validate()?;
        let mut tensors = Vec::with_capacity(header.tensors);
        for _ in 0..header.tensors {
            let n = r.u32()? as usize;
            let name = String::from_utf8(r.take(n)?.to_vec())
                .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            let bytes = r.take(rows.saturating_mul(cols).saturating_mul(8))?;
            let data = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            tensors.push((name, Tensor2::from_vec(rows, cols, data)?));
        }
        if r.pos != buf.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", buf.len() - r.pos)));
        }
        let params = ModelParams::from_named(&header.model, header.extraction.vocabulary.len(), tensors)?;
        Self::new(params, header.extraction)
    }

    pub fn save(&self, path: &Path) -> Result<usize> {
        let bytes = self.to_bytes()?;
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, &bytes)?;
        Ok(bytes.len())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let cfg = ExtractionConfig::default();
        let p = ModelParams::init(&ModelConfig::default(), cfg.vocabulary.len(), 3).unwrap();
        Checkpoint::new(p, cfg).unwrap()
    }

    #[test]
    fn round_trip_and_canonical_bytes() {
        let c = sample();
        let bytes = c.to_bytes().unwrap();
        assert_eq!(bytes, sample().to_bytes().unwrap());
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn default_model_is_under_one_megabyte() {
        assert!(sample().to_bytes().unwrap().len() < 1 << 20);
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let bytes = sample().to_bytes().unwrap();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        assert!(Checkpoint::from_bytes(b"garbage!garbage!").is_err());
        let mut wrong_version = bytes.clone();
        wrong_version[8] = 9;
        assert!(Checkpoint::from_bytes(&wrong_version).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).is_err());
    }
}
