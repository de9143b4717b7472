//! Strong augmentation: a randomly permuted list of transforms, each applied
//! independently with a fixed probability.

use autodiff::RngStream;

use super::geometry::{flip_horizontal, flip_vertical, warp, Affine};
use crate::error::{invalid, Result};
use crate::image::{Image, ImageSample};

/// One transform and the range its parameters are drawn from.
#[derive(Debug, Clone, PartialEq)]
pub enum AugmentOp {
    HFlip,
    VFlip,
    /// Shift along each axis, uniform in ±`max_fraction`·side.
    Translate {
        max_fraction: f32,
    },
    /// Square crop keeping an area fraction in `[min_area, 1]`, resized back.
    Crop {
        min_area: f32,
    },
    /// Shear in ±`max_shear` and isotropic scale in `[min_scale, max_scale]`.
    Affine {
        max_shear: f32,
        min_scale: f32,
        max_scale: f32,
    },
    /// Rotation uniform in ±`max_degrees`.
    Rotate {
        max_degrees: f32,
    },
    /// Additive offset uniform in ±`max_delta`.
    Brightness {
        max_delta: f32,
    },
    /// Scale about the image mean, factor uniform in `[min, max]`.
    Contrast {
        min: f32,
        max: f32,
    },
}

impl AugmentOp {
    pub fn name(&self) -> &'static str {
        match self {
            AugmentOp::HFlip => "hflip",
            AugmentOp::VFlip => "vflip",
            AugmentOp::Translate { .. } => "translate",
            AugmentOp::Crop { .. } => "crop",
            AugmentOp::Affine { .. } => "affine",
            AugmentOp::Rotate { .. } => "rotate",
            AugmentOp::Brightness { .. } => "brightness",
            AugmentOp::Contrast { .. } => "contrast",
        }
    }

    /// The default "strong" set.
    pub fn strong_defaults() -> Vec<AugmentOp> {
        vec![
            AugmentOp::HFlip,
            AugmentOp::VFlip,
            AugmentOp::Translate { max_fraction: 0.1 },
            AugmentOp::Crop { min_area: 0.8 },
            AugmentOp::Affine {
                max_shear: 0.15,
                min_scale: 0.9,
                max_scale: 1.1,
            },
            AugmentOp::Rotate { max_degrees: 15.0 },
            AugmentOp::Brightness { max_delta: 0.2 },
            AugmentOp::Contrast { min: 0.8, max: 1.25 },
        ]
    }

    /// The baseline "simple" set: flips only.
    pub fn simple_defaults() -> Vec<AugmentOp> {
        vec![AugmentOp::HFlip, AugmentOp::VFlip]
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            AugmentOp::HFlip | AugmentOp::VFlip => true,
            AugmentOp::Translate { max_fraction } => (0.0..0.5).contains(&max_fraction),
            AugmentOp::Crop { min_area } => min_area > 0.0 && min_area <= 1.0,
            AugmentOp::Affine {
                max_shear,
                min_scale,
                max_scale,
            } => max_shear >= 0.0 && min_scale > 0.0 && min_scale <= max_scale,
            AugmentOp::Rotate { max_degrees } => (0.0..=180.0).contains(&max_degrees),
            AugmentOp::Brightness { max_delta } => (0.0..=1.0).contains(&max_delta),
            AugmentOp::Contrast { min, max } => min > 0.0 && min <= max,
        };
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("augmentation {self:?} has an invalid range")))
        }
    }

    /// Draws parameters and applies the transform.
    fn apply(&self, img: &Image, rng: &mut RngStream) -> (Image, Vec<f32>) {
        let (h, w) = (img.height, img.width);
        match *self {
            AugmentOp::HFlip => (flip_horizontal(img), vec![]),
            AugmentOp::VFlip => (flip_vertical(img), vec![]),
            AugmentOp::Translate { max_fraction } => {
                let dx = rng.range(-max_fraction, max_fraction) * w as f32;
                let dy = rng.range(-max_fraction, max_fraction) * h as f32;
                let map = Affine::about_center([[1.0, 0.0], [0.0, 1.0]], [-dx, -dy], h, w);
                (warp(img, &map), vec![dx, dy])
            }
            AugmentOp::Crop { min_area } => {
                let area = rng.range(min_area, 1.0);
                let side = area.sqrt();
                let (ch, cw) = (side * h as f32, side * w as f32);
                let ox = rng.range(-1.0, 1.0) * (w as f32 - cw) / 2.0;
                let oy = rng.range(-1.0, 1.0) * (h as f32 - ch) / 2.0;
                if ch < 2.0 || cw < 2.0 || !side.is_finite() {
                    return (img.clone(), vec![]);
                }
                let map = Affine::about_center([[side, 0.0], [0.0, side]], [ox, oy], h, w);
                (warp(img, &map), vec![area, ox, oy])
            }
            AugmentOp::Affine {
                max_shear,
                min_scale,
                max_scale,
            } => {
                let shear = rng.range(-max_shear, max_shear);
                let scale = rng.range(min_scale, max_scale);
                let inv = 1.0 / scale;
                let map = Affine::about_center([[inv, -shear * inv], [0.0, inv]], [0.0, 0.0], h, w);
                (warp(img, &map), vec![shear, scale])
            }
            AugmentOp::Rotate { max_degrees } => {
                let deg = rng.range(-max_degrees, max_degrees);
                let (s, c) = deg.to_radians().sin_cos();
                let map = Affine::about_center([[c, s], [-s, c]], [0.0, 0.0], h, w);
                (warp(img, &map), vec![deg])
            }
            AugmentOp::Brightness { max_delta } => {
                let d = rng.range(-max_delta, max_delta);
                let mut out = img.clone();
                out.data.iter_mut().for_each(|v| *v += d);
                (out, vec![d])
            }
            AugmentOp::Contrast { min, max } => {
                let f = rng.range(min, max);
                let mut out = img.clone();
                for c in 0..img.channels {
                    let plane = out.plane_mut(c);
                    let mean = plane.iter().map(|&v| v as f64).sum::<f64>() as f32 / plane.len() as f32;
                    plane.iter_mut().for_each(|v| *v = (*v - mean) * f + mean);
                }
                (out, vec![f])
            }
        }
    }
}

/// A transform that actually ran, with its drawn parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AppliedOp {
    pub name: &'static str,
    pub params: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pipeline {
    pub ops: Vec<AugmentOp>,
    /// Per-op application probability.
    pub probability: f32,
}

impl Pipeline {
    pub fn new(ops: Vec<AugmentOp>) -> Self {
        Self { ops, probability: 0.5 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.probability) {
            return Err(invalid("augmentation probability outside [0,1]"));
        }
        self.ops.iter().try_for_each(AugmentOp::validate)
    }

    /// Shuffles the ops, applies each with `probability`, clamps to [0,1].
    /// Label and metadata pass through untouched.
    pub fn apply(&self, sample: &ImageSample, rng: &mut RngStream) -> (ImageSample, Vec<AppliedOp>) {
        let mut order: Vec<usize> = (0..self.ops.len()).collect();
        rng.shuffle(&mut order);
        let mut img = sample.image.clone();
        let mut log = Vec::new();
        for i in order {
            if !rng.bernoulli(self.probability) {
                continue;
            }
            let (next, params) = self.ops[i].apply(&img, rng);
            img = next;
            log.push(AppliedOp {
                name: self.ops[i].name(),
                params,
            });
        }
        img.clamp01();
        (
            ImageSample {
                image: img,
                label: sample.label,
                meta: sample.meta.clone(),
            },
            log,
        )
    }
}

/// Applies `ops` as a strong-augmentation pipeline (probability 0.5).
pub fn apply_pipeline(sample: &ImageSample, ops: &[AugmentOp], rng: &mut RngStream) -> ImageSample {
    Pipeline::new(ops.to_vec()).apply(sample, rng).0
}
