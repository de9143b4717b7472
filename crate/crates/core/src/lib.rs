//! Fingerprint liveness-detection lab.
//!
//! Synthetic fingerprint generation, a small squeeze-and-excitation CNN with
//! its training recipes (strong augmentation, FMix, same-label style
//! swapping, mutual learning, distillation, ensembling), an integrated
//! match-plus-liveness recognizer and ISO presentation-attack metrics.

pub mod augment;
pub(crate) mod binio;
pub mod error;
pub mod features;
pub mod image;
pub mod metrics;
pub mod nn;
pub mod recognizer;
pub mod styleswap;
pub mod synthdata;
pub mod train;

pub use binio::write_atomic;
pub use error::{Error, Result};
pub use image::{Image, ImageSample, Label, Material, SampleMeta, Split};
