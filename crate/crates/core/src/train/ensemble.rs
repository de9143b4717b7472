//! Three-member ensembles and a common interface over single models.

use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::image::Image;
use crate::nn::{Inference, LivenessModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MemberRole {
    Style,
    MutualPeer1,
    MutualPeer2,
}

impl MemberRole {
    pub const ENSEMBLE: [MemberRole; 3] = [MemberRole::Style, MemberRole::MutualPeer1, MemberRole::MutualPeer2];

    pub fn name(self) -> &'static str {
        match self {
            MemberRole::Style => "style",
            MemberRole::MutualPeer1 => "mutual-peer1",
            MemberRole::MutualPeer2 => "mutual-peer2",
        }
    }
}

impl fmt::Display for MemberRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MemberRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MemberRole::ENSEMBLE
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| invalid(format!("unknown ensemble role {s:?}")))
    }
}

/// One style-swap-trained model and two mutual-learning peers.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleModel {
    members: [LivenessModel; 3],
}

impl EnsembleModel {
    /// Members in [`MemberRole::ENSEMBLE`] order.
    pub fn new(style: LivenessModel, peer1: LivenessModel, peer2: LivenessModel) -> Result<Self> {
        let members = [style, peer1, peer2];
        let key = |m: &LivenessModel| (m.input_size(), m.embedding_dim());
        if members.iter().any(|m| key(m) != key(&members[0])) {
            return Err(invalid("ensemble members differ in input size or embedding dimension"));
        }
        Ok(Self { members })
    }

    pub fn members(&self) -> &[LivenessModel; 3] {
        &self.members
    }

    pub fn into_members(self) -> [LivenessModel; 3] {
        self.members
    }

    /// Arithmetic mean of the members' class probabilities per image.
    pub fn predict(&self, images: &[&Image]) -> Result<Vec<[f64; 2]>> {
        let outs = self
            .members
            .iter()
            .map(|m| m.infer(images))
            .collect::<Result<Vec<_>>>()?;
        Ok((0..images.len())
            .map(|i| mean_probs(outs.iter().map(|o| &o[i])))
            .collect())
    }
}

fn mean_probs<'a>(rows: impl Iterator<Item = &'a Inference>) -> [f64; 2] {
    mean_probabilities(&rows.map(|r| r.probs).collect::<Vec<_>>())
}

/// Arithmetic mean of probability rows, accumulated in f64.
pub fn mean_probabilities(rows: &[[f32; 2]]) -> [f64; 2] {
    let mut acc = [0.0f64; 2];
    for r in rows {
        acc[0] += r[0] as f64;
        acc[1] += r[1] as f64;
    }
    let n = rows.len().max(1) as f64;
    [acc[0] / n, acc[1] / n]
}

pub fn ensemble_predict(ensemble: &EnsembleModel, image: &Image) -> Result<[f64; 2]> {
    Ok(ensemble.predict(&[image])?[0])
}

/// Either a single liveness model or a three-member ensemble.
#[derive(Debug, Clone, PartialEq)]
pub enum Classifier {
    Single(LivenessModel),
    Ensemble(EnsembleModel),
}

/// Per-image outputs of a [`Classifier`].
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// Member-mean embedding for ensembles.
    pub embedding: Vec<f32>,
    /// Teacher-style logits: raw logits for a single model, log of the
    /// mean probabilities for an ensemble.
    pub logits: [f32; 2],
    pub probs: [f64; 2],
}

impl Classifier {
    pub fn input_size(&self) -> usize {
        self.primary().input_size()
    }

    pub fn embedding_dim(&self) -> usize {
        self.primary().embedding_dim()
    }

    pub fn primary(&self) -> &LivenessModel {
        match self {
            Classifier::Single(m) => m,
            Classifier::Ensemble(e) => &e.members[0],
        }
    }

    pub fn models(&self) -> Vec<&LivenessModel> {
        match self {
            Classifier::Single(m) => vec![m],
            Classifier::Ensemble(e) => e.members.iter().collect(),
        }
    }

    pub fn predict(&self, images: &[&Image]) -> Result<Vec<Prediction>> {
        match self {
            Classifier::Single(m) => Ok(m
                .infer(images)?
                .into_iter()
                .map(|r| Prediction {
                    probs: [r.probs[0] as f64, r.probs[1] as f64],
                    logits: r.logits,
                    embedding: r.embedding,
                })
                .collect()),
            Classifier::Ensemble(e) => {
                let outs = e.members.iter().map(|m| m.infer(images)).collect::<Result<Vec<_>>>()?;
                let d = e.members[0].embedding_dim();
                Ok((0..images.len())
                    .map(|i| {
                        let probs = mean_probs(outs.iter().map(|o| &o[i]));
                        let mut embedding = vec![0.0f32; d];
                        for o in &outs {
                            for (a, &v) in embedding.iter_mut().zip(&o[i].embedding) {
                                *a += v / outs.len() as f32;
                            }
                        }
                        let logits = [probs[0].max(1e-12).ln() as f32, probs[1].max(1e-12).ln() as f32];
                        Prediction {
                            embedding,
                            logits,
                            probs,
                        }
                    })
                    .collect())
            }
        }
    }

    /// P(live) per image, evaluated in chunks of `batch`.
    pub fn live_scores(&self, images: &[&Image], batch: usize) -> Result<Vec<f32>> {
        let mut out = Vec::with_capacity(images.len());
        for chunk in images.chunks(batch.max(1)) {
            out.extend(self.predict(chunk)?.into_iter().map(|p| p.probs[0] as f32));
        }
        Ok(out)
    }
}
