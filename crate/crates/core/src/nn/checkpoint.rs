//! `FPLM` model checkpoints.
//!
//! Layout (little-endian): magic `FPLM`, version u32, preset id u32,
//! embedding dim u32, then until end of file one record per tensor:
//! name length u32, name bytes, rank u32, dims u32×rank, f32 data.
//! Parameters come first in storage order, followed by each batch-norm
//! layer's `<name>.running_mean` and `<name>.running_var`.

use std::path::Path;

use autodiff::Tensor;

use super::model::{LivenessModel, Preset};
use crate::binio::{put_bytes, put_f32, put_u32, read_all, write_atomic, Reader};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"FPLM";
const VERSION: u32 = 1;

fn put_tensor(out: &mut Vec<u8>, name: &str, shape: &[usize], data: &[f32]) {
    put_bytes(out, name.as_bytes());
    put_u32(out, shape.len() as u32);
    for &d in shape {
        put_u32(out, d as u32);
    }
    for &v in data {
        put_f32(out, v);
    }
}

impl LivenessModel {
    pub fn to_checkpoint(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, VERSION);
        put_u32(&mut out, self.preset().id());
        put_u32(&mut out, self.embedding_dim() as u32);
        for p in self.params() {
            put_tensor(&mut out, &p.name, p.value.shape(), p.value.data());
        }
        for (name, rs) in self.bn_names().iter().zip(self.running_stats()) {
            put_tensor(&mut out, &format!("{name}.running_mean"), &[rs.mean.len()], &rs.mean);
            put_tensor(&mut out, &format!("{name}.running_var"), &[rs.var.len()], &rs.var);
        }
        out
    }

    pub fn from_checkpoint(bytes: &[u8]) -> Result<LivenessModel> {
        let mut r = Reader::new(bytes, "FPLM checkpoint");
        r.expect_magic(MAGIC, VERSION)?;
        let preset = Preset::from_id(r.u32()?)?;
        let dim = r.u32()? as usize;
        let mut model = LivenessModel::build(preset, dim, 0)?;
        let mut seen = vec![false; model.params().len() + 2 * model.running_stats().len()];
        while !r.at_end() {
            let name = r.string()?;
            let rank = r.u32()? as usize;
            let dims = (0..rank)
                .map(|_| r.u32().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let len = dims.iter().product::<usize>();
            let data = r.f32s(len)?;
            let slot = model.assign_tensor(&name, &dims, data)?;
            if std::mem::replace(&mut seen[slot], true) {
                return Err(Error::Data(format!("checkpoint repeats tensor {name}")));
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Data("checkpoint is missing tensors".into()));
        }
        Ok(model)
    }

    fn assign_tensor(&mut self, name: &str, dims: &[usize], data: Vec<f32>) -> Result<usize> {
        let mismatch = || Error::Data(format!("checkpoint tensor {name} has unexpected shape {dims:?}"));
        let n_params = self.params().len();
        if let Some(i) = self.params().iter().position(|p| p.name == name) {
            if self.params()[i].value.shape() != dims {
                return Err(mismatch());
            }
            self.params_mut()[i].value = Tensor::new(dims.to_vec(), data)?;
            return Ok(i);
        }
        for (k, bn) in self.bn_names().to_vec().iter().enumerate() {
            let target = if name == format!("{bn}.running_mean") {
                Some(0)
            } else if name == format!("{bn}.running_var") {
                Some(1)
            } else {
                None
            };
            if let Some(which) = target {
                let rs = &mut self.running_stats_mut()[k];
                let dst = if which == 0 { &mut rs.mean } else { &mut rs.var };
                if dims != [dst.len()] {
                    return Err(mismatch());
                }
                *dst = data;
                return Ok(n_params + 2 * k + which);
            }
        }
        Err(Error::Data(format!("checkpoint has unknown tensor {name}")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_checkpoint())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<LivenessModel> {
        LivenessModel::from_checkpoint(&read_all(path)?)
    }
}
