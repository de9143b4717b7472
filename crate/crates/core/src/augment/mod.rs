//! Geometric/photometric augmentation and FMix.

pub mod fmix;
pub mod geometry;
pub mod pipeline;

pub use fmix::{fmix_mask, fmix_mix, fmix_mix_with_lambda, BinaryMask, FmixConfig, Mixed};
pub use pipeline::{apply_pipeline, AppliedOp, AugmentOp, Pipeline};
