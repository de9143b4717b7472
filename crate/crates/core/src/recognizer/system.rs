//! The integrated pipeline: query scoring against templates, trial
//! protocols, compare-liveness calibration and threshold selection.

use std::collections::BTreeMap;
use std::path::Path;

use autodiff::rng::mix;
use autodiff::RngStream;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{Image, ImageSample, Label, Material};
use crate::metrics::{choose_threshold, AcceptRule, ComparisonTrial, PadTrialSet, ThresholdPolicy, TrialKind};
use crate::recognizer::fusion::{FusionWeights, Thresholds};
use crate::recognizer::keypoints::{KeypointConfig, KeypointDescriptor};
use crate::recognizer::liveness::{
    compare_liveness_score, comparison_features, CompareLivenessModel, COMPARE_FEATURES,
};
use crate::recognizer::matching::{aggregate_patches, match_patch, PatchMatch, DEFAULT_RATIO};
use crate::recognizer::preprocess::{preprocess, PatchGrid};
use crate::recognizer::template::{enroll, patch_keypoints, Template};
use crate::train::Classifier;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecognizerConfig {
    pub grid: PatchGrid,
    pub keypoints: KeypointConfig,
    pub ratio: f32,
    pub weights: FusionWeights,
}

impl Default for RecognizerConfig {
    fn default() -> Self {
        Self {
            grid: PatchGrid::default(),
            keypoints: KeypointConfig::default(),
            ratio: DEFAULT_RATIO,
            weights: FusionWeights::default(),
        }
    }
}

impl RecognizerConfig {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.weights.validate()?;
        if !(self.ratio > 0.0 && self.ratio <= 1.0) {
            return Err(Error::Config(format!("match ratio {} outside (0,1]", self.ratio)));
        }
        if self.keypoints.max_keypoints == 0 {
            return Err(Error::Config("keypoint budget must be positive".into()));
        }
        Ok(())
    }
}

/// A query reduced to what matching needs.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedQuery {
    pub low_quality: bool,
    pub patches: Vec<Vec<KeypointDescriptor>>,
}

pub fn prepare_query(image: &Image, cfg: &RecognizerConfig) -> Result<PreparedQuery> {
    let pre = preprocess(image)?;
    Ok(PreparedQuery {
        low_quality: pre.low_quality,
        patches: patch_keypoints(&pre.image, cfg)?,
    })
}

/// Patch-by-patch matches of a query against a template; a patch is usable
/// when both sides have keypoints.
pub fn match_patches(
    query: &PreparedQuery,
    template: &Template,
    cfg: &RecognizerConfig,
) -> Result<Vec<(PatchMatch, bool)>> {
    if query.patches.len() != template.patches.len() {
        return Err(Error::Invalid("query and template use different patch grids".into()));
    }
    Ok(query
        .patches
        .iter()
        .zip(&template.patches)
        .map(|(q, t)| (match_patch(q, &t.keypoints, cfg.ratio), !q.is_empty() && t.usable()))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueryScores {
    pub matching: f32,
    pub compare: f32,
    pub compare_low_confidence: bool,
}

/// Match and compare-liveness of a prepared query. Low-quality queries and
/// queries without a usable patch are a quality error.
pub fn score_patches(
    query: &PreparedQuery,
    template: &Template,
    compare_model: &CompareLivenessModel,
    cfg: &RecognizerConfig,
) -> Result<QueryScores> {
    if query.low_quality {
        return Err(Error::LowQuality("query image has no structure".into()));
    }
    let matches = match_patches(query, template, cfg)?;
    let mut m = Vec::with_capacity(matches.len());
    let mut c = Vec::with_capacity(matches.len());
    let mut usable = Vec::with_capacity(matches.len());
    let mut confident = false;
    for (pm, u) in &matches {
        let cs = compare_liveness_score(&pm.pairs, pm.keypoints, compare_model);
        confident |= *u && !cs.low_confidence;
        m.push(pm.score);
        c.push(cs.score);
        usable.push(*u);
    }
    let (matching, compare) = aggregate_patches(&m, &c, &usable)?;
    Ok(QueryScores {
        matching,
        compare,
        compare_low_confidence: !confident,
    })
}

/// Dual-gate accept rule over comparison trials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualGate {
    pub weights: FusionWeights,
    pub thresholds: Thresholds,
}

impl DualGate {
    pub fn fused(&self, t: &ComparisonTrial) -> f32 {
        self.weights.fuse(t.match_score, t.compare_liveness, t.normal_liveness)
    }
}

impl AcceptRule for DualGate {
    fn accept(&self, t: &ComparisonTrial) -> bool {
        t.match_score >= self.thresholds.matching && self.fused(t) >= self.thresholds.im
    }
}

// ---------------------------------------------------------------------------
// protocols

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolRow {
    pub trial_id: String,
    pub query_path: String,
    pub template_id: String,
    pub kind: TrialKind,
}

pub const PROTOCOL_HEADER: [&str; 4] = ["trial_id", "query_path", "template_id", "type"];

pub fn protocol_csv(rows: &[ProtocolRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(PROTOCOL_HEADER)?;
    for r in rows {
        w.write_record([&r.trial_id, &r.query_path, &r.template_id, r.kind.name()])?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub fn parse_protocol(bytes: &[u8]) -> Result<Vec<ProtocolRow>> {
    let mut r = csv::Reader::from_reader(bytes);
    if r.headers()? != PROTOCOL_HEADER.as_slice() {
        return Err(Error::Data(format!(
            "trial protocol header must be {}",
            PROTOCOL_HEADER.join(",")
        )));
    }
    r.records()
        .map(|rec| {
            let rec = rec?;
            Ok(ProtocolRow {
                trial_id: rec[0].to_string(),
                query_path: rec[1].to_string(),
                template_id: rec[2].to_string(),
                kind: rec[3].parse()?,
            })
        })
        .collect()
}

pub fn read_protocol(path: &Path) -> Result<Vec<ProtocolRow>> {
    parse_protocol(&std::fs::read(path)?)
}

pub fn template_id(subject: u32, finger: u32, scanner: u32) -> String {
    format!("s{subject:04}_f{finger}_sc{scanner}")
}

/// Templates (by id, enrollment sample index) and trials (row, query
/// sample index) derived from a set of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialDesign {
    pub templates: BTreeMap<String, usize>,
    pub trials: Vec<(ProtocolRow, usize)>,
}

/// Enrolls the lowest-numbered live impression of every (subject, finger,
/// scanner). Genuine trials are its other live impressions, attack trials
/// the spoof impressions of the same finger and scanner, and each genuine
/// query is also presented to one randomly chosen other finger's template
/// from the same scanner as an impostor trial. At most `max_per_type`
/// trials of each kind are kept (seeded choice).
pub fn design_trials(
    samples: &[ImageSample],
    paths: &[String],
    max_per_type: Option<usize>,
    seed: u64,
) -> Result<TrialDesign> {
    if paths.len() != samples.len() {
        return Err(Error::Invalid("one path per sample required".into()));
    }
    let key = |s: &ImageSample| (s.meta.subject, s.meta.finger, s.meta.scanner);
    let mut templates: BTreeMap<(u32, u32, u32), usize> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        if s.label != Label::Live {
            continue;
        }
        let e = templates.entry(key(s)).or_insert(i);
        if s.meta.impression < samples[*e].meta.impression {
            *e = i;
        }
    }
    let mut rng = RngStream::new(mix(seed, 0x7a1), 0);
    let mut by_kind: [Vec<(String, usize)>; 3] = Default::default();
    for (i, s) in samples.iter().enumerate() {
        let k = key(s);
        let Some(&enrolled) = templates.get(&k) else { continue };
        if enrolled == i {
            continue;
        }
        if s.label == Label::Live {
            by_kind[TrialKind::Genuine as usize].push((template_id(k.0, k.1, k.2), i));
            let others: Vec<&(u32, u32, u32)> = templates
                .keys()
                .filter(|o| o.2 == k.2 && (o.0, o.1) != (k.0, k.1))
                .collect();
            if !others.is_empty() {
                let o = others[rng.below(others.len())];
                by_kind[TrialKind::Impostor as usize].push((template_id(o.0, o.1, o.2), i));
            }
        } else {
            by_kind[TrialKind::Attack as usize].push((template_id(k.0, k.1, k.2), i));
        }
    }
    let mut trials = Vec::new();
    for kind in TrialKind::ALL {
        let mut list = std::mem::take(&mut by_kind[kind as usize]);
        if let Some(cap) = max_per_type {
            if list.len() > cap {
                rng.shuffle(&mut list);
                list.truncate(cap);
                list.sort_by_key(|(_, i)| *i);
            }
        }
        for (n, (tid, i)) in list.into_iter().enumerate() {
            trials.push((
                ProtocolRow {
                    trial_id: format!("{}-{n:05}", kind.name()),
                    query_path: paths[i].clone(),
                    template_id: tid,
                    kind,
                },
                i,
            ));
        }
    }
    Ok(TrialDesign {
        templates: templates
            .into_iter()
            .map(|(k, i)| (template_id(k.0, k.1, k.2), i))
            .collect(),
        trials,
    })
}

/// Resolves a protocol against samples addressed by path.
pub fn design_from_protocol(rows: &[ProtocolRow], samples: &[ImageSample], paths: &[String]) -> Result<TrialDesign> {
    let index: BTreeMap<&str, usize> = paths.iter().enumerate().map(|(i, p)| (p.as_str(), i)).collect();
    let mut templates = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        if s.label != Label::Live {
            continue;
        }
        let id = template_id(s.meta.subject, s.meta.finger, s.meta.scanner);
        let e = templates.entry(id).or_insert(i);
        if s.meta.impression < samples[*e].meta.impression {
            *e = i;
        }
    }
    let mut trials = Vec::with_capacity(rows.len());
    let mut used = BTreeMap::new();
    for r in rows {
        let &q = index
            .get(r.query_path.as_str())
            .ok_or_else(|| Error::Data(format!("trial {}: unknown query {}", r.trial_id, r.query_path)))?;
        let &t = templates
            .get(&r.template_id)
            .ok_or_else(|| Error::Data(format!("trial {}: unknown template {}", r.trial_id, r.template_id)))?;
        used.insert(r.template_id.clone(), t);
        trials.push((r.clone(), q));
    }
    Ok(TrialDesign {
        templates: used,
        trials,
    })
}

/// Everything needed to score trials.
pub struct TrialContext<'a> {
    pub samples: &'a [ImageSample],
    pub classifier: &'a Classifier,
    pub cfg: &'a RecognizerConfig,
}

impl TrialContext<'_> {
    pub fn enroll_all(&self, design: &TrialDesign) -> Result<BTreeMap<String, Template>> {
        design
            .templates
            .par_iter()
            .map(|(id, &i)| {
                let s = &self.samples[i];
                let t = enroll(&[&s.image], self.classifier, s.meta.subject, s.meta.finger, self.cfg)?;
                Ok((id.clone(), t))
            })
            .collect()
    }

    fn prepared(&self, design: &TrialDesign) -> Result<BTreeMap<usize, PreparedQuery>> {
        let mut idx: Vec<usize> = design.trials.iter().map(|(_, i)| *i).collect();
        idx.sort_unstable();
        idx.dedup();
        idx.par_iter()
            .map(|&i| Ok((i, prepare_query(&self.samples[i].image, self.cfg)?)))
            .collect()
    }

    /// Per-patch comparison features of genuine (live) and attack trials.
    pub fn compare_training_set(
        &self,
        design: &TrialDesign,
        templates: &BTreeMap<String, Template>,
    ) -> Result<(Vec<[f32; COMPARE_FEATURES]>, Vec<bool>)> {
        let queries = self.prepared(design)?;
        let mut feats = Vec::new();
        let mut live = Vec::new();
        for (row, qi) in &design.trials {
            if row.kind == TrialKind::Impostor {
                continue;
            }
            let t = &templates[&row.template_id];
            for (pm, usable) in match_patches(&queries[qi], t, self.cfg)? {
                if usable && !pm.pairs.is_empty() {
                    feats.push(comparison_features(&pm.pairs, pm.keypoints));
                    live.push(row.kind == TrialKind::Genuine);
                }
            }
        }
        Ok((feats, live))
    }

    /// Scores every trial. Quality failures become match 0, neutral
    /// compare-liveness, which the match gate rejects.
    pub fn run(
        &self,
        design: &TrialDesign,
        templates: &BTreeMap<String, Template>,
        compare_model: &CompareLivenessModel,
    ) -> Result<Vec<ComparisonTrial>> {
        let queries = self.prepared(design)?;
        let order: Vec<usize> = queries.keys().copied().collect();
        let images: Vec<&Image> = order.iter().map(|&i| &self.samples[i].image).collect();
        let normal: BTreeMap<usize, f32> = order
            .iter()
            .copied()
            .zip(self.classifier.live_scores(&images, 64)?)
            .collect();
        design
            .trials
            .par_iter()
            .map(|(row, qi)| {
                let t = templates
                    .get(&row.template_id)
                    .ok_or_else(|| Error::Data(format!("template {} not enrolled", row.template_id)))?;
                let s = match score_patches(&queries[qi], t, compare_model, self.cfg) {
                    Ok(s) => s,
                    Err(Error::LowQuality(_)) => QueryScores {
                        matching: 0.0,
                        compare: 0.5,
                        compare_low_confidence: true,
                    },
                    Err(e) => return Err(e),
                };
                Ok(ComparisonTrial {
                    trial_id: row.trial_id.clone(),
                    kind: row.kind,
                    match_score: s.matching,
                    compare_liveness: s.compare,
                    normal_liveness: normal[qi],
                })
            })
            .collect()
    }
}

/// Trial scores as a PAD-style set: `positive` kinds count as live.
pub fn trial_score_set(
    trials: &[ComparisonTrial],
    score: impl Fn(&ComparisonTrial) -> f32,
    positive: TrialKind,
    negative: TrialKind,
) -> Result<PadTrialSet> {
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for t in trials {
        if t.kind == positive || t.kind == negative {
            scores.push(score(t));
            labels.push(if t.kind == positive { Label::Live } else { Label::Spoof });
        }
    }
    PadTrialSet::new(scores, labels)
}

/// τ_match maximizes genuine-versus-impostor accuracy on match scores; τ_im
/// maximizes genuine-versus-attack accuracy on fused scores.
pub fn choose_thresholds(trials: &[ComparisonTrial], weights: &FusionWeights) -> Result<Thresholds> {
    let m = trial_score_set(trials, |t| t.match_score, TrialKind::Genuine, TrialKind::Impostor)?;
    let f = trial_score_set(
        trials,
        |t| weights.fuse(t.match_score, t.compare_liveness, t.normal_liveness),
        TrialKind::Genuine,
        TrialKind::Attack,
    )?;
    Ok(Thresholds {
        matching: choose_threshold(&m, ThresholdPolicy::MaxAccuracy)?,
        im: choose_threshold(&f, ThresholdPolicy::MaxAccuracy)?,
    })
}

/// Material of a query, for reporting attack breakdowns.
pub fn query_material(samples: &[ImageSample], index: usize) -> Material {
    samples[index].meta.material
}
