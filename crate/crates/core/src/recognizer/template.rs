//! Enrollment templates and their binary file format.

use std::path::Path;

use crate::binio::{put_f32, put_u32, Reader};
use crate::error::{invalid, Error, Result};
use crate::image::Image;
use crate::recognizer::keypoints::{extract_keypoints, KeypointDescriptor, DESCRIPTOR_LEN};
use crate::recognizer::preprocess::{preprocess, split_patches, PatchGrid};
use crate::recognizer::RecognizerConfig;
use crate::train::Classifier;

const MAGIC: &[u8; 4] = b"FPTM";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct PatchTemplate {
    pub keypoints: Vec<KeypointDescriptor>,
}

impl PatchTemplate {
    pub fn usable(&self) -> bool {
        !self.keypoints.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    pub subject: u32,
    pub finger: u32,
    pub grid: PatchGrid,
    /// Row-major over the grid.
    pub patches: Vec<PatchTemplate>,
    pub embedding: Vec<f32>,
}

/// Keypoints of every patch of a preprocessed image.
pub fn patch_keypoints(image: &Image, cfg: &RecognizerConfig) -> Result<Vec<Vec<KeypointDescriptor>>> {
    Ok(split_patches(image, &cfg.grid)?
        .iter()
        .map(|p| extract_keypoints(&p.image, &cfg.keypoints))
        .collect())
}

/// Enrolls one finger: descriptors from the enrollment image with the most
/// keypoints, embedding averaged over all images that are not low-quality.
pub fn enroll(
    images: &[&Image],
    classifier: &Classifier,
    subject: u32,
    finger: u32,
    cfg: &RecognizerConfig,
) -> Result<Template> {
    if images.is_empty() {
        return Err(invalid("enrollment needs at least one image"));
    }
    let mut best: Option<(usize, Vec<Vec<KeypointDescriptor>>)> = None;
    let mut good: Vec<&Image> = Vec::new();
    for &img in images {
        let pre = preprocess(img)?;
        if pre.low_quality {
            continue;
        }
        good.push(img);
        let kps = patch_keypoints(&pre.image, cfg)?;
        let total: usize = kps.iter().map(Vec::len).sum();
        if best.as_ref().is_none_or(|(t, _)| total > *t) {
            best = Some((total, kps));
        }
    }
    let (_, kps) = best.ok_or_else(|| Error::LowQuality("every enrollment image is low-quality".into()))?;
    let preds = classifier.predict(&good)?;
    let d = classifier.embedding_dim();
    let mut embedding = vec![0.0f32; d];
    for p in &preds {
        for (a, &v) in embedding.iter_mut().zip(&p.embedding) {
            *a += v / preds.len() as f32;
        }
    }
    Ok(Template {
        subject,
        finger,
        grid: cfg.grid,
        patches: kps.into_iter().map(|keypoints| PatchTemplate { keypoints }).collect(),
        embedding,
    })
}

impl Template {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(MAGIC);
        put_u32(&mut b, VERSION);
        put_u32(&mut b, self.subject);
        put_u32(&mut b, self.finger);
        put_u32(&mut b, self.grid.rows as u32);
        put_u32(&mut b, self.grid.cols as u32);
        put_f32(&mut b, self.grid.overlap);
        put_u32(&mut b, DESCRIPTOR_LEN as u32);
        for p in &self.patches {
            put_u32(&mut b, p.keypoints.len() as u32);
            for k in &p.keypoints {
                put_f32(&mut b, k.x);
                put_f32(&mut b, k.y);
                put_f32(&mut b, k.theta);
                for &v in &k.descriptor {
                    put_f32(&mut b, v);
                }
            }
        }
        put_u32(&mut b, self.embedding.len() as u32);
        for &v in &self.embedding {
            put_f32(&mut b, v);
        }
        b
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "template");
        r.expect_magic(MAGIC, VERSION)?;
        let subject = r.u32()?;
        let finger = r.u32()?;
        let grid = PatchGrid {
            rows: r.u32()? as usize,
            cols: r.u32()? as usize,
            overlap: r.f32()?,
        };
        grid.validate()?;
        if r.u32()? as usize != DESCRIPTOR_LEN {
            return Err(Error::Data("template descriptor length mismatch".into()));
        }
        let mut patches = Vec::with_capacity(grid.rows * grid.cols);
        for _ in 0..grid.rows * grid.cols {
            let n = r.u32()? as usize;
            let mut keypoints = Vec::with_capacity(n.min(4096));
            for _ in 0..n {
                let (x, y, theta) = (r.f32()?, r.f32()?, r.f32()?);
                let d = r.f32s(DESCRIPTOR_LEN)?;
                keypoints.push(KeypointDescriptor {
                    x,
                    y,
                    theta,
                    descriptor: d.try_into().expect("length checked by reader"),
                });
            }
            patches.push(PatchTemplate { keypoints });
        }
        let dim = r.u32()? as usize;
        let embedding = r.f32s(dim)?;
        if !r.at_end() {
            return Err(Error::Data("template has trailing bytes".into()));
        }
        Ok(Self {
            subject,
            finger,
            grid,
            patches,
            embedding,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::binio::write_atomic(path, &self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
