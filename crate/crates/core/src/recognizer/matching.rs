//! Descriptor matching within a patch and aggregation across patches.

use crate::error::{Error, Result};
use crate::recognizer::keypoints::KeypointDescriptor;

pub const DEFAULT_RATIO: f32 = 0.8;

#[derive(Debug, Clone, PartialEq)]
pub struct MatchedPair {
    pub query: KeypointDescriptor,
    pub template: KeypointDescriptor,
    pub cosine: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchMatch {
    pub score: f32,
    pub pairs: Vec<MatchedPair>,
    /// `max(|query|, |template|)`, the denominator of the match fraction.
    pub keypoints: usize,
}

fn cosine(a: &[f32], b: &[f32]) -> f32 {
    let dot: f64 = a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum();
    let na: f64 = a.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0) as f32
    }
}

fn dist2(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest and second-nearest (squared distances) of `d` among `pool`.
fn nearest(d: &[f32], pool: &[KeypointDescriptor]) -> (usize, f32, f32) {
    let mut best = (usize::MAX, f32::INFINITY, f32::INFINITY);
    for (j, p) in pool.iter().enumerate() {
        let e = dist2(d, &p.descriptor);
        if e < best.1 {
            best = (j, e, best.1);
        } else if e < best.2 {
            best.2 = e;
        }
    }
    best
}

/// Mutual nearest neighbours that also pass the ratio test
/// `d₁ < ratio·d₂` (distances, not squared). The score is the accepted
/// fraction of `max(|query|, |template|)` times the mean cosine of the
/// accepted pairs, floored at zero.
pub fn match_patch(query: &[KeypointDescriptor], template: &[KeypointDescriptor], ratio: f32) -> PatchMatch {
    let keypoints = query.len().max(template.len());
    let mut pairs = Vec::new();
    if !query.is_empty() && !template.is_empty() {
        for q in query {
            let (j, d1, d2) = nearest(&q.descriptor, template);
            if d2.is_finite() && d1.sqrt() >= ratio * d2.sqrt() {
                continue;
            }
            let back = nearest(&template[j].descriptor, query).0;
            if !std::ptr::eq(&query[back], q) {
                continue;
            }
            let c = cosine(&q.descriptor, &template[j].descriptor);
            pairs.push(MatchedPair {
                query: q.clone(),
                template: template[j].clone(),
                cosine: c,
            });
        }
    }
    let score = if pairs.is_empty() {
        0.0
    } else {
        let mean_cos = pairs.iter().map(|p| p.cosine as f64).sum::<f64>() / pairs.len() as f64;
        (pairs.len() as f64 / keypoints.max(1) as f64 * mean_cos).clamp(0.0, 1.0) as f32
    };
    PatchMatch {
        score,
        pairs,
        keypoints,
    }
}

/// Match: mean of the top `ceil(n/2)` usable patch scores. Compare
/// liveness: mean over usable patches.
pub fn aggregate_patches(match_scores: &[f32], compare_scores: &[f32], usable: &[bool]) -> Result<(f32, f32)> {
    if match_scores.len() != usable.len() || compare_scores.len() != usable.len() {
        return Err(Error::Invalid(
            "aggregate_patches: per-patch lists differ in length".into(),
        ));
    }
    let mut m: Vec<f32> = match_scores
        .iter()
        .zip(usable)
        .filter(|(_, &u)| u)
        .map(|(&s, _)| s)
        .collect();
    if m.is_empty() {
        return Err(Error::LowQuality("no usable patch".into()));
    }
    let c: Vec<f32> = compare_scores
        .iter()
        .zip(usable)
        .filter(|(_, &u)| u)
        .map(|(&s, _)| s)
        .collect();
    m.sort_by(|a, b| b.total_cmp(a));
    let k = m.len().div_ceil(2);
    let mean = |v: &[f32]| (v.iter().map(|&x| x as f64).sum::<f64>() / v.len() as f64) as f32;
    Ok((mean(&m[..k]), mean(&c)))
}
