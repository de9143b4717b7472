//! Per-epoch training log: CSV `epoch,train_loss,train_auc,val_auc,wall_ms`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_auc: f64,
    pub val_auc: f64,
    pub wall_ms: u64,
}

pub fn epoch_log_csv(rows: &[EpochRecord]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record(["epoch", "train_loss", "train_auc", "val_auc", "wall_ms"])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub fn parse_epoch_log(bytes: &[u8]) -> Result<Vec<EpochRecord>> {
    let mut r = csv::Reader::from_reader(bytes);
    let header = r.headers()?;
    if header != vec!["epoch", "train_loss", "train_auc", "val_auc", "wall_ms"] {
        return Err(Error::Data("epoch log header mismatch".into()));
    }
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

pub fn write_epoch_log(path: &Path, rows: &[EpochRecord]) -> Result<()> {
    crate::binio::write_atomic(path, &epoch_log_csv(rows)?)?;
    Ok(())
}

pub fn read_epoch_log(path: &Path) -> Result<Vec<EpochRecord>> {
    parse_epoch_log(&std::fs::read(path)?)
}
