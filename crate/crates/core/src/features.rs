//! Feature-vector files: "FPLV", version, count, dim, then count×dim f32 LE.

use std::path::Path;

use crate::binio::{put_f32, put_u32, Reader};
use crate::error::{invalid, Error, Result};

const MAGIC: &[u8; 4] = b"FPLV";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub dim: usize,
    pub vectors: Vec<Vec<f32>>,
}

impl FeatureSet {
    pub fn new(dim: usize, vectors: Vec<Vec<f32>>) -> Result<Self> {
        if vectors.iter().any(|v| v.len() != dim) {
            return Err(invalid(format!("every feature vector must have length {dim}")));
        }
        Ok(Self { dim, vectors })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(16 + 4 * self.dim * self.vectors.len());
        b.extend_from_slice(MAGIC);
        put_u32(&mut b, VERSION);
        put_u32(&mut b, self.vectors.len() as u32);
        put_u32(&mut b, self.dim as u32);
        for v in &self.vectors {
            for &x in v {
                put_f32(&mut b, x);
            }
        }
        b
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "feature file");
        r.expect_magic(MAGIC, VERSION)?;
        let count = r.u32()? as usize;
        let dim = r.u32()? as usize;
        let total = count
            .checked_mul(dim)
            .ok_or(Error::Truncated { what: "feature file" })?;
        let flat = r.f32s(total)?;
        if !r.at_end() {
            return Err(Error::Data("feature file has trailing bytes".into()));
        }
        let vectors = if dim == 0 {
            vec![Vec::new(); count]
        } else {
            flat.chunks_exact(dim).map(<[f32]>::to_vec).collect()
        };
        Ok(Self { dim, vectors })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        crate::binio::write_atomic(path, &self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
