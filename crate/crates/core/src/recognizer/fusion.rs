//! IM score fusion and the dual-gate decision.

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionWeights {
    pub matching: f32,
    pub compare: f32,
    pub normal: f32,
}

impl Default for FusionWeights {
    fn default() -> Self {
        Self {
            matching: 0.4,
            compare: 0.3,
            normal: 0.3,
        }
    }
}

impl FusionWeights {
    pub fn validate(&self) -> Result<()> {
        let w = [self.matching, self.compare, self.normal];
        if w.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(invalid("fusion weights must be finite and non-negative"));
        }
        let s: f64 = w.iter().map(|&v| v as f64).sum();
        if (s - 1.0).abs() > 1e-6 {
            return Err(invalid(format!("fusion weights sum to {s}, expected 1")));
        }
        Ok(())
    }

    pub fn fuse(&self, matching: f32, compare: f32, normal: f32) -> f32 {
        let f = self.matching as f64 * matching as f64
            + self.compare as f64 * compare as f64
            + self.normal as f64 * normal as f64;
        f.clamp(0.0, 1.0) as f32
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub matching: f32,
    pub im: f32,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { matching: 0.5, im: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Accept,
    Reject,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImScore {
    pub matching: f32,
    pub compare: f32,
    pub normal: f32,
    pub fused: f32,
    pub decision: Decision,
}

/// Weighted-mean fusion; accept iff `match ≥ τ_match` and `fused ≥ τ_im`.
pub fn fuse_im(
    matching: f32,
    compare: f32,
    normal: f32,
    weights: &FusionWeights,
    thresholds: &Thresholds,
) -> Result<ImScore> {
    weights.validate()?;
    for (name, v) in [
        ("match", matching),
        ("compare-liveness", compare),
        ("normal-liveness", normal),
    ] {
        if !(0.0..=1.0).contains(&v) {
            return Err(invalid(format!("{name} score {v} outside [0,1]")));
        }
    }
    let fused = weights.fuse(matching, compare, normal);
    let accept = matching >= thresholds.matching && fused >= thresholds.im;
    Ok(ImScore {
        matching,
        compare,
        normal,
        fused,
        decision: if accept { Decision::Accept } else { Decision::Reject },
    })
}
