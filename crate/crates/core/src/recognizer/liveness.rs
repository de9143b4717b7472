//! Compare-liveness: statistics of matched descriptor pairs fed to a
//! logistic classifier.

use std::f32::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::recognizer::matching::MatchedPair;

pub const COMPARE_FEATURES: usize = 16;
const COS_BINS: usize = 8;
/// Score returned when there is nothing to compare.
pub const NEUTRAL_SCORE: f32 = 0.5;

/// Fixed-length summary of matched pairs:
/// mean/max/std of |Δdescriptor|, mean/std/min cosine, an 8-bin cosine
/// histogram over [0,1], the match fraction and the mean orientation gap.
pub fn comparison_features(pairs: &[MatchedPair], keypoints: usize) -> [f32; COMPARE_FEATURES] {
    let mut f = [0.0f32; COMPARE_FEATURES];
    if pairs.is_empty() {
        return f;
    }
    let n = pairs.len() as f64;
    let (mut s, mut s2, mut mx, mut count) = (0.0f64, 0.0f64, 0.0f32, 0usize);
    for p in pairs {
        for (a, b) in p.query.descriptor.iter().zip(&p.template.descriptor) {
            let d = (a - b).abs();
            s += d as f64;
            s2 += (d as f64).powi(2);
            mx = mx.max(d);
            count += 1;
        }
    }
    let mean_d = s / count as f64;
    f[0] = mean_d as f32;
    f[1] = mx;
    f[2] = (s2 / count as f64 - mean_d * mean_d).max(0.0).sqrt() as f32;
    let cos: Vec<f64> = pairs.iter().map(|p| p.cosine as f64).collect();
    let mc = cos.iter().sum::<f64>() / n;
    f[3] = mc as f32;
    f[4] = (cos.iter().map(|c| (c - mc).powi(2)).sum::<f64>() / n).sqrt() as f32;
    f[5] = cos.iter().copied().fold(f64::INFINITY, f64::min) as f32;
    for &c in &cos {
        let bin = ((c.clamp(0.0, 1.0) * COS_BINS as f64) as usize).min(COS_BINS - 1);
        f[6 + bin] += (1.0 / n) as f32;
    }
    f[14] = (n / keypoints.max(1) as f64).min(1.0) as f32;
    let gap: f64 = pairs
        .iter()
        .map(|p| {
            let d = (p.query.theta - p.template.theta).abs() % PI;
            d.min(PI - d) as f64
        })
        .sum::<f64>()
        / n;
    f[15] = (gap / (PI as f64 / 2.0)) as f32;
    f
}

/// Logistic regression over standardized comparison features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareLivenessModel {
    pub mean: Vec<f32>,
    pub scale: Vec<f32>,
    pub weights: Vec<f32>,
    pub bias: f32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompareScore {
    pub score: f32,
    /// No matched pairs: the score is the neutral fallback.
    pub low_confidence: bool,
}

impl CompareLivenessModel {
    /// Uninformative model: every comparison scores 0.5.
    pub fn neutral() -> Self {
        Self {
            mean: vec![0.0; COMPARE_FEATURES],
            scale: vec![1.0; COMPARE_FEATURES],
            weights: vec![0.0; COMPARE_FEATURES],
            bias: 0.0,
        }
    }

    /// Fits by full-batch gradient descent on the mean log-loss with L2
    /// penalty `l2`. `live` marks genuine comparisons (target 1).
    pub fn fit(features: &[[f32; COMPARE_FEATURES]], live: &[bool], l2: f64, iterations: usize) -> Result<Self> {
        if features.len() != live.len() || features.is_empty() {
            return Err(invalid("compare-liveness training needs matching, non-empty inputs"));
        }
        if live.iter().all(|&l| l) || live.iter().all(|&l| !l) {
            return Err(Error::Data(
                "compare-liveness training needs genuine and attack comparisons".into(),
            ));
        }
        let n = features.len() as f64;
        let mut mean = [0.0f64; COMPARE_FEATURES];
        let mut var = [0.0f64; COMPARE_FEATURES];
        for f in features {
            for k in 0..COMPARE_FEATURES {
                mean[k] += f[k] as f64 / n;
            }
        }
        for f in features {
            for k in 0..COMPARE_FEATURES {
                var[k] += (f[k] as f64 - mean[k]).powi(2) / n;
            }
        }
        let scale: Vec<f64> = var.iter().map(|v| 1.0 / v.sqrt().max(1e-6)).collect();
        let xs: Vec<[f64; COMPARE_FEATURES]> = features
            .iter()
            .map(|f| std::array::from_fn(|k| (f[k] as f64 - mean[k]) * scale[k]))
            .collect();
        let mut w = [0.0f64; COMPARE_FEATURES];
        let mut b = 0.0f64;
        let lr = 0.5;
        for _ in 0..iterations {
            let mut gw = [0.0f64; COMPARE_FEATURES];
            let mut gb = 0.0f64;
            for (x, &y) in xs.iter().zip(live) {
                let z = b + x.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>();
                let err = sigmoid(z) - if y { 1.0 } else { 0.0 };
                for k in 0..COMPARE_FEATURES {
                    gw[k] += err * x[k] / n;
                }
                gb += err / n;
            }
            for k in 0..COMPARE_FEATURES {
                w[k] -= lr * (gw[k] + l2 * w[k]);
            }
            b -= lr * gb;
        }
        Ok(Self {
            mean: mean.iter().map(|&v| v as f32).collect(),
            scale: scale.iter().map(|&v| v as f32).collect(),
            weights: w.iter().map(|&v| v as f32).collect(),
            bias: b as f32,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [&self.mean, &self.scale, &self.weights]
            .iter()
            .all(|v| v.len() == COMPARE_FEATURES && v.iter().all(|x| x.is_finite()))
            && self.bias.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Data("compare-liveness model is malformed".into()))
        }
    }

    pub fn probability(&self, features: &[f32; COMPARE_FEATURES]) -> f32 {
        let z = self.bias as f64
            + (0..COMPARE_FEATURES)
                .map(|k| ((features[k] - self.mean[k]) * self.scale[k]) as f64 * self.weights[k] as f64)
                .sum::<f64>();
        sigmoid(z) as f32
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| invalid(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s).map_err(|e| Error::Data(format!("compare-liveness model: {e}")))?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::binio::write_atomic(path, self.to_json()?.as_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// P(live) of a comparison from its matched pairs, or the neutral 0.5
/// flagged low-confidence when nothing matched.
pub fn compare_liveness_score(pairs: &[MatchedPair], keypoints: usize, model: &CompareLivenessModel) -> CompareScore {
    if pairs.is_empty() {
        return CompareScore {
            score: NEUTRAL_SCORE,
            low_confidence: true,
        };
    }
    CompareScore {
        score: model.probability(&comparison_features(pairs, keypoints)),
        low_confidence: false,
    }
}
