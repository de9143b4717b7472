//! Training recipes and the SGD loop shared by all of them.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use autodiff::rng::mix;
use autodiff::{Graph, RngStream, Sgd, TensorError};
use rayon::prelude::*;

use crate::augment::fmix::{apply_mask, fmix_mask};
use crate::augment::{AugmentOp, FmixConfig, Pipeline};
use crate::error::{Error, Result};
use crate::image::{Image, ImageSample, Label};
use crate::metrics::{auc, PadTrialSet};
use crate::nn::{LivenessModel, Preset, DEFAULT_EMBEDDING_DIM};
use crate::styleswap::batch_style_swap;
use crate::train::ensemble::{Classifier, EnsembleModel, MemberRole};
use crate::train::log::{write_epoch_log, EpochRecord};
use crate::train::losses::{
    cross_entropy_graph, distill_objective, mutual_objective, DistillConfig, LossValue, Target,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecipeKind {
    Baseline,
    StrongAug,
    Mutual,
    Style,
    Distill,
    Ensemble,
}

impl RecipeKind {
    pub const ALL: [RecipeKind; 6] = [
        RecipeKind::Baseline,
        RecipeKind::StrongAug,
        RecipeKind::Mutual,
        RecipeKind::Style,
        RecipeKind::Distill,
        RecipeKind::Ensemble,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RecipeKind::Baseline => "baseline",
            RecipeKind::StrongAug => "strong-aug",
            RecipeKind::Mutual => "mutual",
            RecipeKind::Style => "style",
            RecipeKind::Distill => "distill",
            RecipeKind::Ensemble => "ensemble",
        }
    }
}

impl fmt::Display for RecipeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RecipeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RecipeKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown recipe {s:?}")))
    }
}

/// How a technique combines with the others.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecipeMode {
    /// The technique on top of the baseline (flip-only augmentation).
    Standalone,
    /// The technique on top of strong augmentation with FMix.
    Stacked,
}

impl RecipeMode {
    pub fn name(self) -> &'static str {
        match self {
            RecipeMode::Standalone => "standalone",
            RecipeMode::Stacked => "stacked",
        }
    }
}

impl FromStr for RecipeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standalone" => Ok(RecipeMode::Standalone),
            "stacked" => Ok(RecipeMode::Stacked),
            _ => Err(Error::Config(format!("unknown recipe mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub preset: Preset,
    pub embedding_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f32,
    pub momentum: f32,
    pub weight_decay: f32,
    pub seed: u64,
    pub simple_ops: Vec<AugmentOp>,
    pub strong_ops: Vec<AugmentOp>,
    pub augment_probability: f32,
    pub fmix: FmixConfig,
    pub fmix_probability: f32,
    pub style_probability: f32,
    pub distill: DistillConfig,
    pub eval_batch: usize,
    /// When false the log's wall_ms column is written as 0 so that reruns
    /// produce byte-identical logs.
    pub record_wall_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            preset: Preset::Small,
            embedding_dim: DEFAULT_EMBEDDING_DIM,
            epochs: 20,
            batch_size: 32,
            lr: 0.05,
            momentum: 0.9,
            weight_decay: 5e-4,
            seed: 0,
            simple_ops: AugmentOp::simple_defaults(),
            strong_ops: AugmentOp::strong_defaults(),
            augment_probability: 0.5,
            fmix: FmixConfig::default(),
            fmix_probability: 0.5,
            style_probability: 0.5,
            distill: DistillConfig::default(),
            eval_batch: 64,
            record_wall_time: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if self.epochs == 0 {
            return cfg("train.epochs must be at least 1".into());
        }
        if self.batch_size < 2 {
            return cfg("train.batch_size must be at least 2 (batch norm needs two samples)".into());
        }
        if self.embedding_dim == 0 || self.eval_batch == 0 {
            return cfg("embedding dimension and eval batch must be positive".into());
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return cfg(format!("train.lr {} must be finite and non-negative", self.lr));
        }
        if !(0.0..1.0).contains(&self.momentum) || !(self.weight_decay >= 0.0) {
            return cfg("momentum must lie in [0,1) and weight decay be non-negative".into());
        }
        for (name, p) in [
            ("augment.probability", self.augment_probability),
            ("fmix.probability", self.fmix_probability),
            ("style.probability", self.style_probability),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return cfg(format!("{name} {p} outside [0,1]"));
            }
        }
        for op in self.simple_ops.iter().chain(&self.strong_ops) {
            op.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        self.fmix.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.distill.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recipe {
    pub kind: RecipeKind,
    pub mode: RecipeMode,
    pub config: TrainConfig,
}

/// Training and validation samples.
#[derive(Debug, Clone, Default)]
pub struct TrainData {
    pub train: Vec<ImageSample>,
    pub val: Vec<ImageSample>,
}

impl TrainData {
    fn check(&self) -> Result<()> {
        if self.train.len() < 2 {
            return Err(Error::Data(
                "training split is missing or has fewer than two images".into(),
            ));
        }
        if self.val.is_empty() {
            return Err(Error::Data("validation split is missing".into()));
        }
        Ok(())
    }
}

/// The switches a single training run is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Techniques {
    pub strong_aug: bool,
    pub fmix: bool,
    pub style_swap: bool,
    pub mutual: bool,
    pub distill: bool,
}

impl Techniques {
    fn base(mode: RecipeMode) -> Self {
        let strong = mode == RecipeMode::Stacked;
        Self {
            strong_aug: strong,
            fmix: strong,
            style_swap: false,
            mutual: false,
            distill: false,
        }
    }

    pub fn for_recipe(kind: RecipeKind, mode: RecipeMode) -> Self {
        let base = Self::base(mode);
        match kind {
            RecipeKind::Baseline => Self {
                strong_aug: false,
                fmix: false,
                ..base
            },
            RecipeKind::StrongAug => Self {
                strong_aug: true,
                fmix: true,
                ..base
            },
            RecipeKind::Mutual => Self { mutual: true, ..base },
            RecipeKind::Style => Self {
                style_swap: true,
                ..base
            },
            RecipeKind::Distill => Self { distill: true, ..base },
            // the ensemble trains a style run and a mutual run
            RecipeKind::Ensemble => base,
        }
    }
}

/// A persisted member of a recipe's output.
#[derive(Debug, Clone, PartialEq)]
pub struct MemberInfo {
    pub role: String,
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct TrainedArtifacts {
    pub recipe: RecipeKind,
    pub mode: RecipeMode,
    pub classifier: Classifier,
    pub members: Vec<MemberInfo>,
    /// Epoch log of every training run, keyed by run name.
    pub logs: Vec<(String, Vec<EpochRecord>)>,
    pub val_auc: f64,
}

impl TrainedArtifacts {
    /// CSV `role,checkpoint` listing of the members; checkpoint names are
    /// relative to the output directory.
    pub fn members_csv(&self) -> String {
        let mut s = String::from("role,checkpoint\n");
        for m in &self.members {
            let path = m
                .checkpoint
                .as_ref()
                .and_then(|p| p.file_name())
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            s.push_str(&format!("{},{}\n", m.role, path));
        }
        s
    }
}

/// Rebuilds the classifier a recipe saved to `dir`: the three-member
/// ensemble, the first peer of a mutual pair, or the single model.
pub fn load_trained(dir: &Path) -> Result<Classifier> {
    let path = dir.join("members.csv");
    let bytes = std::fs::read(&path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let mut r = csv::Reader::from_reader(bytes.as_slice());
    if r.headers()? != ["role", "checkpoint"].as_slice() {
        return Err(Error::Data(format!(
            "{}: header must be role,checkpoint",
            path.display()
        )));
    }
    let mut members = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec[1].is_empty() {
            return Err(Error::Data(format!("member {} has no checkpoint", &rec[0])));
        }
        members.push((rec[0].to_string(), LivenessModel::load(&dir.join(&rec[1]))?));
    }
    let role = |name: &str| members.iter().position(|(r, _)| r == name);
    if let (Some(s), Some(p1), Some(p2)) = (role("style"), role("mutual-peer1"), role("mutual-peer2")) {
        if members.len() == 3 {
            let take = |i: usize| members[i].1.clone();
            return Ok(Classifier::Ensemble(EnsembleModel::new(take(s), take(p1), take(p2))?));
        }
    }
    match members.len() {
        0 => Err(Error::Data(format!("{}: no members", path.display()))),
        _ => Ok(Classifier::Single(
            members.swap_remove(role("mutual-peer1").unwrap_or(0)).1,
        )),
    }
}

/// Runs a recipe. Checkpoints and logs go to `out_dir` when given; the
/// distillation recipe needs a teacher.
pub fn run_recipe(
    recipe: &Recipe,
    data: &TrainData,
    out_dir: Option<&Path>,
    teacher: Option<&Classifier>,
) -> Result<TrainedArtifacts> {
    recipe.config.validate()?;
    data.check()?;
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
    }
    let cfg = &recipe.config;
    let tech = Techniques::for_recipe(recipe.kind, recipe.mode);
    let ckpt = |name: &str| out_dir.map(|d| d.join(format!("{name}.fplm")));
    let member = |role: &str| MemberInfo {
        role: role.to_string(),
        checkpoint: ckpt(role),
    };

    let (classifier, members, logs) = match recipe.kind {
        RecipeKind::Mutual => {
            let run = TrainRun::new(cfg, tech, "mutual", 2, None)?;
            let (models, log) = run.train(data, out_dir, &["mutual-peer1", "mutual-peer2"])?;
            let mut it = models.into_iter();
            let peer1 = it.next().expect("two peers");
            let _ = it.next();
            (
                Classifier::Single(peer1),
                vec![member("mutual-peer1"), member("mutual-peer2")],
                vec![("mutual".to_string(), log)],
            )
        }
        RecipeKind::Ensemble => {
            let style_cfg = TrainConfig {
                seed: mix(cfg.seed, 1),
                ..cfg.clone()
            };
            let mutual_cfg = TrainConfig {
                seed: mix(cfg.seed, 2),
                ..cfg.clone()
            };
            let style_tech = Techniques {
                style_swap: true,
                ..tech
            };
            let mutual_tech = Techniques { mutual: true, ..tech };
            let (mut style, style_log) =
                TrainRun::new(&style_cfg, style_tech, "style", 1, None)?.train(data, out_dir, &["style"])?;
            let (peers, mutual_log) = TrainRun::new(&mutual_cfg, mutual_tech, "mutual", 2, None)?.train(
                data,
                out_dir,
                &["mutual-peer1", "mutual-peer2"],
            )?;
            let mut peers = peers.into_iter();
            let ensemble = EnsembleModel::new(style.remove(0), peers.next().unwrap(), peers.next().unwrap())?;
            (
                Classifier::Ensemble(ensemble),
                MemberRole::ENSEMBLE.iter().map(|r| member(r.name())).collect(),
                vec![("style".to_string(), style_log), ("mutual".to_string(), mutual_log)],
            )
        }
        kind => {
            let teacher = if tech.distill {
                Some(teacher.ok_or_else(|| Error::Config("the distill recipe needs a teacher model".into()))?)
            } else {
                None
            };
            let name = kind.name();
            let (mut models, log) = TrainRun::new(cfg, tech, name, 1, teacher)?.train(data, out_dir, &[name])?;
            (
                Classifier::Single(models.remove(0)),
                vec![member(name)],
                vec![(name.to_string(), log)],
            )
        }
    };
    let val_auc = evaluate_auc(&classifier, &data.val, cfg.eval_batch)?;
    let artifacts = TrainedArtifacts {
        recipe: recipe.kind,
        mode: recipe.mode,
        classifier,
        members,
        logs,
        val_auc,
    };
    if let Some(dir) = out_dir {
        crate::binio::write_atomic(&dir.join("members.csv"), artifacts.members_csv().as_bytes())?;
    }
    Ok(artifacts)
}

/// Validation AUC of a classifier's P(live) scores.
pub fn evaluate_auc(classifier: &Classifier, samples: &[ImageSample], batch: usize) -> Result<f64> {
    let images: Vec<&Image> = samples.iter().map(|s| &s.image).collect();
    let scores = classifier.live_scores(&images, batch)?;
    auc(&PadTrialSet::new(scores, samples.iter().map(|s| s.label).collect())?)
}

// stream tags
const TAG_SHUFFLE: u64 = 1;
const TAG_AUGMENT: u64 = 2;
const TAG_BATCH: u64 = 3;
const TAG_INIT: u64 = 4;

/// One jointly optimized group of one model (plain or distilled) or two
/// mutual-learning peers.
struct TrainRun<'a> {
    cfg: &'a TrainConfig,
    tech: Techniques,
    name: &'a str,
    models: Vec<LivenessModel>,
    teacher: Option<&'a Classifier>,
}

impl<'a> TrainRun<'a> {
    fn new(
        cfg: &'a TrainConfig,
        tech: Techniques,
        name: &'a str,
        n_models: usize,
        teacher: Option<&'a Classifier>,
    ) -> Result<Self> {
        let models = (0..n_models as u64)
            .map(|i| LivenessModel::build(cfg.preset, cfg.embedding_dim, mix(mix(cfg.seed, TAG_INIT), i)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            cfg,
            tech,
            name,
            models,
            teacher,
        })
    }

    fn train(
        mut self,
        data: &TrainData,
        out_dir: Option<&Path>,
        names: &[&str],
    ) -> Result<(Vec<LivenessModel>, Vec<EpochRecord>)> {
        let cfg = self.cfg;
        let input = data.train[0].image.height;
        for m in &mut self.models {
            m.set_input_size(input)?;
        }
        let n = data.train.len();
        let bs = cfg.batch_size;
        let steps_per_epoch = n / bs + usize::from(n % bs >= 2);
        let total_steps = (steps_per_epoch * cfg.epochs) as f64;
        let mut opts: Vec<Sgd> = self
            .models
            .iter()
            .map(|_| Sgd::new(cfg.lr, cfg.momentum, cfg.weight_decay))
            .collect();
        let pipeline = Pipeline {
            ops: if self.tech.strong_aug {
                cfg.strong_ops.clone()
            } else {
                cfg.simple_ops.clone()
            },
            probability: cfg.augment_probability,
        };
        let mut log = Vec::with_capacity(cfg.epochs);
        let mut step = 0usize;
        for epoch in 1..=cfg.epochs {
            let start = Instant::now();
            let mut order: Vec<usize> = (0..n).collect();
            RngStream::new(mix(cfg.seed, TAG_SHUFFLE), epoch as u64).shuffle(&mut order);
            let epoch_seed = mix(mix(cfg.seed, TAG_AUGMENT), epoch as u64);
            let mut loss_sum = 0.0f64;
            let mut batches = 0usize;
            for (bi, idx) in order.chunks(bs).enumerate() {
                if idx.len() < 2 {
                    continue;
                }
                let lr = 0.5 * cfg.lr as f64 * (1.0 + (std::f64::consts::PI * step as f64 / total_steps).cos());
                for o in &mut opts {
                    o.lr = lr as f32;
                }
                let mut batch_rng = RngStream::new(mix(mix(cfg.seed, TAG_BATCH), epoch as u64), bi as u64);
                let (images, targets) = self.prepare_batch(data, idx, &pipeline, epoch_seed, &mut batch_rng)?;
                let loss = self
                    .step(&images, &targets, &mut opts, &mut batch_rng)
                    .map_err(|e| match e {
                        Error::Tensor(TensorError::NonFinite { op }) => Error::Numerical(format!(
                            "{}: non-finite value in {op} at epoch {epoch}, batch {bi}",
                            self.name
                        )),
                        other => other,
                    })?;
                if !loss.total.is_finite() {
                    return Err(Error::Numerical(format!(
                        "{}: loss is {} at epoch {epoch}, batch {bi}",
                        self.name, loss.total
                    )));
                }
                loss_sum += loss.total as f64;
                batches += 1;
                step += 1;
            }
            let first = Classifier::Single(self.models[0].clone());
            let train_auc = evaluate_auc(&first, &data.train, cfg.eval_batch)?;
            let val_auc = evaluate_auc(&first, &data.val, cfg.eval_batch)?;
            let wall_ms = if cfg.record_wall_time {
                start.elapsed().as_millis() as u64
            } else {
                0
            };
            log.push(EpochRecord {
                epoch,
                train_loss: loss_sum / batches.max(1) as f64,
                train_auc,
                val_auc,
                wall_ms,
            });
            if let Some(dir) = out_dir {
                for (m, name) in self.models.iter().zip(names) {
                    m.save(&dir.join(format!("{name}.fplm")))?;
                }
                write_epoch_log(&dir.join(format!("{}.log.csv", self.name)), &log)?;
            }
        }
        Ok((self.models, log))
    }

    /// Augments the batch (per-sample streams, parallel), then applies
    /// batch-level style swapping and FMix from the batch stream.
    fn prepare_batch(
        &self,
        data: &TrainData,
        idx: &[usize],
        pipeline: &Pipeline,
        epoch_seed: u64,
        batch_rng: &mut RngStream,
    ) -> Result<(Vec<Image>, Vec<Target>)> {
        let augmented: Vec<ImageSample> = idx
            .par_iter()
            .map(|&i| {
                pipeline
                    .apply(&data.train[i], &mut RngStream::new(epoch_seed, i as u64))
                    .0
            })
            .collect();
        let labels: Vec<Label> = augmented.iter().map(|s| s.label).collect();
        let mut images: Vec<Image> = augmented.into_iter().map(|s| s.image).collect();
        let mut targets: Vec<Target> = labels.iter().map(|l| l.one_hot()).collect();
        if self.tech.style_swap {
            batch_style_swap(
                &mut images,
                &labels,
                self.cfg.style_probability,
                &mut batch_rng.derive(1),
            )?;
        }
        if self.tech.fmix && batch_rng.bernoulli(self.cfg.fmix_probability) {
            let mut rng = batch_rng.derive(2);
            let mut perm: Vec<usize> = (0..images.len()).collect();
            rng.shuffle(&mut perm);
            let lambda = self.cfg.fmix.sample_lambda(&mut rng)?;
            let (h, w) = (images[0].height, images[0].width);
            let mask = fmix_mask(h, w, lambda, &self.cfg.fmix, &mut rng)?;
            let lam = mask.fraction();
            let source = images.clone();
            for (i, &j) in perm.iter().enumerate() {
                images[i] = apply_mask(&source[i], &source[j], &mask);
                let (a, b) = (labels[i].one_hot(), labels[j].one_hot());
                targets[i] = [lam * a[0] + (1.0 - lam) * b[0], lam * a[1] + (1.0 - lam) * b[1]];
            }
        }
        Ok((images, targets))
    }

    fn step(
        &mut self,
        images: &[Image],
        targets: &[Target],
        opts: &mut [Sgd],
        batch_rng: &mut RngStream,
    ) -> Result<LossValue> {
        let refs: Vec<&Image> = images.iter().collect();
        let x_tensor = self.models[0].batch_tensor(&refs)?;
        // peers share dropout masks so that equal weights give equal outputs
        let dropout = batch_rng.derive(3);
        let mut g = Graph::new();
        let x = g.constant(x_tensor);
        let mut passes = Vec::with_capacity(self.models.len());
        for m in &mut self.models {
            passes.push(m.forward_train(&mut g, x, &mut dropout.clone())?);
        }
        let (loss_var, value) = if self.tech.mutual {
            let (l1, v1) = mutual_objective(&mut g, passes[0].logits, passes[1].logits, targets)?;
            let (l2, v2) = mutual_objective(&mut g, passes[1].logits, passes[0].logits, targets)?;
            let total = g.add(l1, l2)?;
            let mean = |a: f32, b: f32| 0.5 * (a + b);
            let value = LossValue::from_parts(&[
                (
                    "ce",
                    1.0,
                    mean(v1.component("ce").unwrap(), v2.component("ce").unwrap()),
                ),
                (
                    "kl-mutual",
                    1.0,
                    mean(v1.component("kl-mutual").unwrap(), v2.component("kl-mutual").unwrap()),
                ),
            ]);
            (total, value)
        } else if let (true, Some(teacher)) = (self.tech.distill, self.teacher) {
            let teacher_logits: Vec<f32> = teacher.predict(&refs)?.into_iter().flat_map(|p| p.logits).collect();
            distill_objective(&mut g, passes[0].logits, &teacher_logits, targets, &self.cfg.distill)?
        } else {
            let (l, v) = cross_entropy_graph(&mut g, passes[0].logits, targets)?;
            (l, LossValue::single("ce", v))
        };
        g.backward(loss_var)?;
        for ((m, pass), opt) in self.models.iter_mut().zip(&passes).zip(opts.iter_mut()) {
            m.accumulate_grads(&g, pass)?;
            opt.step(m.params_mut());
        }
        Ok(value)
    }
}

/// One simultaneous mutual-learning update of two peers on a batch.
/// Returns each peer's loss; both use the same dropout stream.
pub fn mutual_step(
    peer1: &mut LivenessModel,
    peer2: &mut LivenessModel,
    images: &[&Image],
    targets: &[Target],
    opt1: &mut Sgd,
    opt2: &mut Sgd,
    rng: &RngStream,
) -> Result<(LossValue, LossValue)> {
    let mut g = Graph::new();
    let x = g.constant(peer1.batch_tensor(images)?);
    let p1 = peer1.forward_train(&mut g, x, &mut rng.clone())?;
    let p2 = peer2.forward_train(&mut g, x, &mut rng.clone())?;
    let (l1, v1) = mutual_objective(&mut g, p1.logits, p2.logits, targets)?;
    let (l2, v2) = mutual_objective(&mut g, p2.logits, p1.logits, targets)?;
    let total = g.add(l1, l2)?;
    g.backward(total)?;
    peer1.accumulate_grads(&g, &p1)?;
    peer2.accumulate_grads(&g, &p2)?;
    opt1.step(peer1.params_mut());
    opt2.step(peer2.params_mut());
    Ok((v1, v2))
}
