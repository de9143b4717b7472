//! Dataset generation, train/val splitting and the manifest file.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use autodiff::rng::mix;
use autodiff::RngStream;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{Image, ImageSample, Label, Material, SampleMeta, Split};
use crate::synthdata::identity::{synth_finger_with, FingerIdentity, DEFAULT_RIDGE_FREQUENCY, MASTER_SIZE};
use crate::synthdata::profiles::{MaterialProfile, ScannerProfile};
use crate::synthdata::render::{render_impression, ImpressionInfo};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SplitMode {
    /// Uniform random image-level split; validation gets `floor(n/3)`.
    ImageRandom,
    /// Whole subjects go to validation: `max(1, floor(subjects/3))` of them.
    SubjectDisjoint,
    /// Every image of the listed scanners is validation; the rest train.
    ScannerHoldout(Vec<u32>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub subjects: u32,
    pub fingers_per_subject: u32,
    pub scanners: Vec<u32>,
    pub materials: Vec<Material>,
    /// Impressions per (subject, finger, scanner, material).
    pub impressions: u32,
    pub ridge_frequency: f32,
    pub seed: u64,
    pub split: SplitMode,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            subjects: 50,
            fingers_per_subject: 1,
            scanners: vec![0, 1],
            materials: Material::ALL.to_vec(),
            impressions: 5,
            ridge_frequency: DEFAULT_RIDGE_FREQUENCY,
            seed: 0,
            split: SplitMode::ImageRandom,
        }
    }
}

impl SynthConfig {
    pub fn image_count(&self) -> usize {
        (self.subjects * self.fingers_per_subject * self.impressions) as usize
            * self.scanners.len()
            * self.materials.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.subjects == 0 || self.fingers_per_subject == 0 || self.impressions == 0 {
            return bad("data.subjects, data.fingers and data.impressions must be at least 1");
        }
        if self.scanners.is_empty() || self.materials.is_empty() {
            return bad("at least one scanner and one material are required");
        }
        let uniq: BTreeSet<_> = self.scanners.iter().collect();
        if uniq.len() != self.scanners.len() {
            return bad("scanner ids must be distinct");
        }
        let mats: BTreeSet<_> = self.materials.iter().map(|m| m.name()).collect();
        if mats.len() != self.materials.len() {
            return bad("materials must be distinct");
        }
        if !(self.ridge_frequency > 0.02 && self.ridge_frequency < 0.5) {
            return bad("data.ridge_frequency must lie in (0.02, 0.5)");
        }
        if let SplitMode::ScannerHoldout(held) = &self.split {
            if held.is_empty() || held.iter().any(|s| !self.scanners.contains(s)) {
                return bad("held-out scanners must be a non-empty subset of the configured scanners");
            }
            if held.len() == self.scanners.len() {
                return bad("scanner holdout leaves no training scanner");
            }
        }
        for &s in &self.scanners {
            ScannerProfile::preset(s).validate()?;
        }
        Ok(())
    }

    /// Deterministic seed of one finger identity.
    pub fn identity_seed(&self, subject: u32, finger: u32) -> u64 {
        mix(mix(self.seed, 0x1d), ((subject as u64) << 16) | finger as u64)
    }
}

/// One manifest line.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    /// Relative to the manifest's directory.
    pub path: String,
    pub label: Label,
    pub material: Material,
    pub scanner: u32,
    pub subject: u32,
    pub finger: u32,
    pub split: Split,
}

pub const MANIFEST_HEADER: [&str; 7] = ["path", "label", "material", "scanner", "subject", "finger", "split"];

pub fn manifest_csv(rows: &[ManifestRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(MANIFEST_HEADER)?;
    for r in rows {
        w.write_record([
            r.path.clone(),
            r.label.to_string(),
            r.material.to_string(),
            r.scanner.to_string(),
            r.subject.to_string(),
            r.finger.to_string(),
            r.split.to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub fn parse_manifest(bytes: &[u8]) -> Result<Vec<ManifestRow>> {
    let mut r = csv::Reader::from_reader(bytes);
    if r.headers()? != MANIFEST_HEADER.as_slice() {
        return Err(Error::Data(format!(
            "manifest header must be {}",
            MANIFEST_HEADER.join(",")
        )));
    }
    let num = |s: &str| {
        s.parse::<u32>()
            .map_err(|_| Error::Data(format!("manifest: bad integer {s:?}")))
    };
    r.records()
        .map(|rec| {
            let rec = rec?;
            let row = ManifestRow {
                path: rec[0].to_string(),
                label: rec[1].parse()?,
                material: rec[2].parse()?,
                scanner: num(&rec[3])?,
                subject: num(&rec[4])?,
                finger: num(&rec[5])?,
                split: rec[6].parse()?,
            };
            if row.material.label() != row.label {
                return Err(Error::Data(format!("{}: label contradicts material", row.path)));
            }
            Ok(row)
        })
        .collect()
}

/// Generated samples with their manifest rows (same order).
#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub samples: Vec<ImageSample>,
    pub manifest: Vec<ManifestRow>,
}

impl SynthDataset {
    pub fn split(&self, split: Split) -> Vec<ImageSample> {
        self.samples.iter().filter(|s| s.meta.split == split).cloned().collect()
    }
}

pub fn image_file_name(meta: &SampleMeta) -> String {
    format!(
        "images/s{:04}_f{}_sc{}_{}_i{:03}.pgm",
        meta.subject, meta.finger, meta.scanner, meta.material, meta.impression
    )
}

/// Impression index encoded in a generated file name, if present.
pub fn impression_from_path(path: &str) -> Option<u32> {
    let stem = path.rsplit('/').next()?.strip_suffix(".pgm")?;
    stem.rsplit('_').next()?.strip_prefix('i')?.parse().ok()
}

/// Identities of every configured finger, indexed `subject·fingers + finger`.
pub fn build_identities(cfg: &SynthConfig) -> Vec<FingerIdentity> {
    let f = cfg.fingers_per_subject;
    (0..cfg.subjects * f)
        .into_par_iter()
        .map(|i| synth_finger_with(cfg.identity_seed(i / f, i % f), cfg.ridge_frequency, MASTER_SIZE))
        .collect()
}

/// Renders every impression, assigns splits and, when `out_dir` is given,
/// writes the PGM files and `manifest.csv` there.
pub fn build_dataset(cfg: &SynthConfig, out_dir: Option<&Path>) -> Result<SynthDataset> {
    cfg.validate()?;
    let fingers = build_identities(cfg);
    let mut jobs = Vec::with_capacity(cfg.image_count());
    for subject in 0..cfg.subjects {
        for finger in 0..cfg.fingers_per_subject {
            for &scanner in &cfg.scanners {
                for &material in &cfg.materials {
                    for impression in 0..cfg.impressions {
                        jobs.push((subject, finger, scanner, material, impression));
                    }
                }
            }
        }
    }
    let splits = assign_splits(cfg, &jobs);
    let render_seed = mix(cfg.seed, 0x12e7);
    let samples = jobs
        .par_iter()
        .enumerate()
        .map(|(i, &(subject, finger, scanner, material, impression))| {
            let identity = &fingers[(subject * cfg.fingers_per_subject + finger) as usize];
            let info = ImpressionInfo {
                subject,
                finger,
                impression,
                split: splits[i],
            };
            let mut rng = RngStream::new(render_seed, i as u64);
            render_impression(
                identity,
                &ScannerProfile::preset(scanner),
                &MaterialProfile::preset(material),
                &info,
                &mut rng,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest: Vec<ManifestRow> = samples
        .iter()
        .map(|s| ManifestRow {
            path: image_file_name(&s.meta),
            label: s.label,
            material: s.meta.material,
            scanner: s.meta.scanner,
            subject: s.meta.subject,
            finger: s.meta.finger,
            split: s.meta.split,
        })
        .collect();
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir.join("images"))?;
        samples
            .par_iter()
            .zip(&manifest)
            .try_for_each(|(s, row)| s.image.write_pgm(&dir.join(&row.path)))?;
        crate::binio::write_atomic(&dir.join("manifest.csv"), &manifest_csv(&manifest)?)?;
    }
    Ok(SynthDataset { samples, manifest })
}

type Job = (u32, u32, u32, Material, u32);

fn assign_splits(cfg: &SynthConfig, jobs: &[Job]) -> Vec<Split> {
    let mut rng = RngStream::new(mix(cfg.seed, 0x5b17), 0);
    match &cfg.split {
        SplitMode::ImageRandom => {
            let mut order: Vec<usize> = (0..jobs.len()).collect();
            rng.shuffle(&mut order);
            let n_val = jobs.len() / 3;
            let mut out = vec![Split::Train; jobs.len()];
            for &i in &order[..n_val] {
                out[i] = Split::Val;
            }
            out
        }
        SplitMode::SubjectDisjoint => {
            let mut subjects: Vec<u32> = (0..cfg.subjects).collect();
            rng.shuffle(&mut subjects);
            let n_val = (cfg.subjects as usize / 3).max(1);
            let val: BTreeSet<u32> = subjects[..n_val].iter().copied().collect();
            jobs.iter()
                .map(|j| if val.contains(&j.0) { Split::Val } else { Split::Train })
                .collect()
        }
        SplitMode::ScannerHoldout(held) => jobs
            .iter()
            .map(|j| if held.contains(&j.2) { Split::Val } else { Split::Train })
            .collect(),
    }
}

/// Reads a manifest and the images it lists.
pub fn load_dataset(manifest_path: &Path) -> Result<SynthDataset> {
    let bytes = std::fs::read(manifest_path)
        .map_err(|e| Error::Data(format!("cannot read manifest {}: {e}", manifest_path.display())))?;
    let manifest = parse_manifest(&bytes)?;
    let root: PathBuf = manifest_path.parent().map(Path::to_path_buf).unwrap_or_default();
    let samples = manifest
        .par_iter()
        .map(|row| {
            let image =
                Image::read_pgm(&root.join(&row.path)).map_err(|e| Error::Data(format!("{}: {e}", row.path)))?;
            Ok(ImageSample {
                image,
                label: row.label,
                meta: SampleMeta {
                    subject: row.subject,
                    finger: row.finger,
                    scanner: row.scanner,
                    material: row.material,
                    impression: impression_from_path(&row.path).unwrap_or(0),
                    split: row.split,
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SynthDataset { samples, manifest })
}
