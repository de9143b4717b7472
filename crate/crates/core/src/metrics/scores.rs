//! Score files: CSV `trial_id,type,score[,component scores...]`.

use std::path::Path;

use crate::error::{invalid, Error, Result};
use crate::image::Label;
use crate::metrics::integrated::{ComparisonTrial, TrialKind};
use crate::metrics::pad::PadTrialSet;

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub trial_id: String,
    pub kind: String,
    pub score: f32,
    pub components: Vec<f32>,
}

/// A parsed score file: component column names plus rows.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreFile {
    pub components: Vec<String>,
    pub rows: Vec<ScoreRow>,
}

pub const COMPARISON_COMPONENTS: [&str; 3] = ["match", "compare_liveness", "normal_liveness"];

impl ScoreFile {
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["trial_id".to_string(), "type".into(), "score".into()];
        header.extend(self.components.iter().cloned());
        w.write_record(&header)?;
        for r in &self.rows {
            if r.components.len() != self.components.len() {
                return Err(invalid(format!("score row {}: component count mismatch", r.trial_id)));
            }
            let mut rec = vec![r.trial_id.clone(), r.kind.clone(), r.score.to_string()];
            rec.extend(r.components.iter().map(f32::to_string));
            w.write_record(&rec)?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }

    pub fn from_csv(bytes: &[u8]) -> Result<Self> {
        let mut r = csv::Reader::from_reader(bytes);
        let header = r.headers()?.clone();
        if header.len() < 3 || &header[0] != "trial_id" || &header[1] != "type" || &header[2] != "score" {
            return Err(Error::Data(
                "score file header must start with trial_id,type,score".into(),
            ));
        }
        let components: Vec<String> = header.iter().skip(3).map(str::to_string).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let num = |i: usize| -> Result<f32> {
                rec[i]
                    .parse::<f32>()
                    .map_err(|_| Error::Data(format!("score file: bad number {:?}", &rec[i])))
            };
            rows.push(ScoreRow {
                trial_id: rec[0].to_string(),
                kind: rec[1].to_string(),
                score: num(2)?,
                components: (3..rec.len()).map(num).collect::<Result<_>>()?,
            });
        }
        Ok(Self { components, rows })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        crate::binio::write_atomic(path, &self.to_csv()?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_csv(&std::fs::read(path)?)
    }

    /// PAD scores; `type` is the sample label.
    pub fn from_pad(ids: &[String], trials: &PadTrialSet) -> Self {
        let rows = ids
            .iter()
            .zip(trials.scores().iter().zip(trials.labels()))
            .map(|(id, (&score, label))| ScoreRow {
                trial_id: id.clone(),
                kind: label.to_string(),
                score,
                components: Vec::new(),
            })
            .collect();
        Self {
            components: Vec::new(),
            rows,
        }
    }

    pub fn to_pad(&self) -> Result<PadTrialSet> {
        let labels = self
            .rows
            .iter()
            .map(|r| r.kind.parse::<Label>())
            .collect::<Result<Vec<_>>>()?;
        PadTrialSet::new(self.rows.iter().map(|r| r.score).collect(), labels)
    }

    /// Comparison trials; `score` holds the fused value.
    pub fn from_comparisons(trials: &[ComparisonTrial], fused: &[f32]) -> Self {
        let rows = trials
            .iter()
            .zip(fused)
            .map(|(t, &f)| ScoreRow {
                trial_id: t.trial_id.clone(),
                kind: t.kind.to_string(),
                score: f,
                components: vec![t.match_score, t.compare_liveness, t.normal_liveness],
            })
            .collect();
        Self {
            components: COMPARISON_COMPONENTS.iter().map(|s| s.to_string()).collect(),
            rows,
        }
    }

    pub fn to_comparisons(&self) -> Result<Vec<ComparisonTrial>> {
        if self.components != COMPARISON_COMPONENTS {
            return Err(Error::Data(
                "score file lacks match/compare/normal component columns".into(),
            ));
        }
        self.rows
            .iter()
            .map(|r| {
                Ok(ComparisonTrial {
                    trial_id: r.trial_id.clone(),
                    kind: r.kind.parse::<TrialKind>()?,
                    match_score: r.components[0],
                    compare_liveness: r.components[1],
                    normal_liveness: r.components[2],
                })
            })
            .collect()
    }
}
