//! Experiment configuration: a TOML file of flat dotted keys, each with a
//! default, overridable from the command line.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use fplab::augment::{AugmentOp, FmixConfig};
use fplab::nn::Preset;
use fplab::recognizer::{FusionWeights, KeypointConfig, PatchGrid, RecognizerConfig};
use fplab::synthdata::{SplitMode, SynthConfig};
use fplab::train::{DistillConfig, RecipeKind, RecipeMode, TrainConfig};
use fplab::{Error, Material, Result};
use toml::Value;

/// `(key, default as TOML, description)`.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("output.dir", r#""runs""#, "root directory for every command's outputs"),
    (
        "data.dir",
        r#""data""#,
        "dataset directory holding manifest.csv and images",
    ),
    ("data.subjects", "50", "synthetic subjects"),
    ("data.fingers", "1", "fingers per subject"),
    ("data.scanners", "[0, 1]", "scanner profile ids"),
    (
        "data.materials",
        r#"["live", "silica", "gelatin", "latex"]"#,
        "presentation materials",
    ),
    ("data.impressions", "5", "impressions per finger, scanner and material"),
    ("data.ridge_frequency", "0.11", "ridge frequency in cycles per pixel"),
    ("data.seed", "0", "generator seed"),
    (
        "data.split",
        r#""image-random""#,
        "image-random, subject-disjoint or scanner-holdout",
    ),
    (
        "data.holdout_scanners",
        "[1]",
        "validation scanners for the scanner-holdout split",
    ),
    ("model.preset", r#""small""#, "tiny, small or base"),
    ("model.embedding_dim", "192", "embedding size"),
    (
        "model.dir",
        r#""""#,
        "trained model directory; empty means output.dir/train/<recipe>-<mode>",
    ),
    (
        "train.recipe",
        r#""strong-aug""#,
        "baseline, strong-aug, mutual, style, distill or ensemble",
    ),
    ("train.mode", r#""stacked""#, "standalone or stacked"),
    ("train.epochs", "20", "training epochs"),
    ("train.batch_size", "32", "minibatch size"),
    ("train.lr", "0.05", "SGD learning rate"),
    ("train.momentum", "0.9", "SGD momentum"),
    ("train.weight_decay", "0.0005", "L2 weight decay"),
    ("train.seed", "0", "training seed"),
    ("train.eval_batch", "64", "inference batch size"),
    (
        "train.record_wall_time",
        "true",
        "write wall-clock times into the epoch logs",
    ),
    (
        "train.teacher",
        r#""""#,
        "teacher model directory for distill; empty means the ensemble run",
    ),
    (
        "augment.ops",
        r#"["hflip", "vflip", "translate", "crop", "affine", "rotate", "brightness", "contrast"]"#,
        "strong augmentation ops, permuted per sample",
    ),
    (
        "augment.simple_ops",
        r#"["hflip", "vflip"]"#,
        "baseline augmentation ops",
    ),
    ("augment.probability", "0.5", "probability of applying each op"),
    ("augment.translate", "0.1", "max shift as a fraction of the side"),
    ("augment.crop_min_area", "0.8", "smallest retained crop area"),
    ("augment.shear", "0.15", "max shear"),
    ("augment.scale_min", "0.9", "smallest affine scale"),
    ("augment.scale_max", "1.1", "largest affine scale"),
    ("augment.rotate_degrees", "15.0", "max rotation in degrees"),
    ("augment.brightness", "0.2", "max brightness offset"),
    ("augment.contrast_min", "0.8", "smallest contrast factor"),
    ("augment.contrast_max", "1.25", "largest contrast factor"),
    ("fmix.probability", "0.5", "probability of mixing a batch"),
    ("fmix.alpha", "1.0", "Beta(alpha, alpha) mixing ratio"),
    ("fmix.decay_power", "3.0", "spectral decay power"),
    (
        "style.probability",
        "0.5",
        "probability of pairing a sample for a style swap",
    ),
    ("distill.temperature", "5.0", "softmax temperature"),
    ("distill.alpha", "0.5", "weight of the distillation term"),
    (
        "metrics.apcer_target",
        "0.05",
        "APCER bound for the second operating point",
    ),
    ("eval.split", r#""val""#, "split scored by eval and extract"),
    ("extract.count", "100", "images to extract features from"),
    ("extract.warmup", "10", "untimed extractions before timing"),
    (
        "extract.timed_runs",
        "100",
        "timed single-image extractions (at least 100)",
    ),
    ("recognizer.grid_rows", "3", "patch rows"),
    ("recognizer.grid_cols", "3", "patch columns"),
    ("recognizer.overlap", "0.25", "patch overlap fraction"),
    ("recognizer.keypoints", "16", "keypoints per patch"),
    ("recognizer.nms_radius", "3", "keypoint suppression radius"),
    ("recognizer.harris_k", "0.04", "Harris corner constant"),
    (
        "recognizer.min_response",
        "0.01",
        "keypoint floor relative to the strongest response",
    ),
    ("recognizer.window_radius", "1", "structure tensor smoothing radius"),
    ("recognizer.ratio", "0.8", "nearest-neighbour ratio test"),
    ("recognizer.weight_match", "0.4", "fusion weight of the match score"),
    ("recognizer.weight_compare", "0.3", "fusion weight of compare-liveness"),
    ("recognizer.weight_normal", "0.3", "fusion weight of normal liveness"),
    ("recognizer.max_trials", "0", "cap on trials per type; 0 keeps all"),
    (
        "recognizer.compare_l2",
        "0.001",
        "L2 penalty of the compare-liveness model",
    ),
    ("recognizer.compare_iters", "500", "compare-liveness fitting iterations"),
    ("recognizer.seed", "0", "trial sampling seed"),
];

fn parse_value(literal: &str) -> Option<Value> {
    let t: toml::Table = toml::from_str(&format!("v = {literal}")).ok()?;
    t.get("v").cloned()
}

fn default_of(key: &str) -> Option<Value> {
    KEYS.iter()
        .find(|k| k.0 == key)
        .map(|k| parse_value(k.1).expect("defaults are valid TOML"))
}

fn type_name(v: &Value) -> &'static str {
    v.type_str()
}

/// Coerces `v` to the type of the key's default.
fn conform(key: &str, v: Value) -> Result<Value> {
    let Some(d) = default_of(key) else {
        return Err(Error::Config(format!("unknown key {key:?}")));
    };
    let same = |a: &Value, b: &Value| std::mem::discriminant(a) == std::mem::discriminant(b);
    let v = match (&d, v) {
        (Value::Float(_), Value::Integer(i)) => Value::Float(i as f64),
        (Value::Array(da), Value::Array(va)) => {
            if let Some(first) = da.first() {
                if let Some(bad) = va.iter().find(|x| !same(x, first)) {
                    return Err(Error::Config(format!(
                        "{key}: list elements must be {}, got {}",
                        type_name(first),
                        type_name(bad)
                    )));
                }
            }
            Value::Array(va)
        }
        (_, v) => v,
    };
    if !same(&d, &v) {
        return Err(Error::Config(format!(
            "{key}: expected {}, got {}",
            type_name(&d),
            type_name(&v)
        )));
    }
    Ok(v)
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut Vec<(String, Value)>) {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            v => out.push((key, v.clone())),
        }
    }
}

/// A fully resolved configuration: every known key has a value.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    values: BTreeMap<String, Value>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            values: KEYS
                .iter()
                .map(|k| (k.0.to_string(), default_of(k.0).unwrap()))
                .collect(),
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
        let mut flat = Vec::new();
        flatten("", &table, &mut flat);
        let mut cfg = Config::default();
        for (k, v) in flat {
            cfg.set(&k, v)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn set(&mut self, key: &str, v: Value) -> Result<()> {
        let v = conform(key, v)?;
        self.values.insert(key.to_string(), v);
        Ok(())
    }

    /// Applies `key=value`; values that are not TOML literals are taken as
    /// bare strings.
    pub fn apply_override(&mut self, spec: &str) -> Result<()> {
        let (k, v) = spec
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {spec:?} is not key=value")))?;
        let (k, v) = (k.trim(), v.trim());
        let value = parse_value(v).unwrap_or_else(|| Value::String(v.to_string()));
        self.set(k, value)
    }

    /// The resolved configuration as TOML, one key per line in reference order.
    pub fn to_toml(&self) -> String {
        let mut s = String::new();
        for (k, _, _) in KEYS {
            s.push_str(&format!("{k} = {}\n", self.values[*k]));
        }
        s
    }

    fn get(&self, key: &str) -> &Value {
        self.values.get(key).unwrap_or_else(|| panic!("no config key {key}"))
    }

    pub fn str(&self, key: &str) -> &str {
        self.get(key).as_str().expect("typed at insertion")
    }

    pub fn float(&self, key: &str) -> f64 {
        self.get(key).as_float().expect("typed at insertion")
    }

    pub fn f32(&self, key: &str) -> f32 {
        self.float(key) as f32
    }

    pub fn boolean(&self, key: &str) -> bool {
        self.get(key).as_bool().expect("typed at insertion")
    }

    pub fn int(&self, key: &str) -> Result<u64> {
        let v = self.get(key).as_integer().expect("typed at insertion");
        u64::try_from(v).map_err(|_| Error::Config(format!("{key} must be non-negative, got {v}")))
    }

    pub fn usize(&self, key: &str) -> Result<usize> {
        Ok(self.int(key)? as usize)
    }

    pub fn u32(&self, key: &str) -> Result<u32> {
        u32::try_from(self.int(key)?).map_err(|_| Error::Config(format!("{key} is too large")))
    }

    pub fn u32_list(&self, key: &str) -> Result<Vec<u32>> {
        let arr = self.get(key).as_array().expect("typed at insertion");
        arr.iter()
            .map(|v| {
                v.as_integer()
                    .and_then(|i| u32::try_from(i).ok())
                    .ok_or_else(|| Error::Config(format!("{key}: {v} is not a valid id")))
            })
            .collect()
    }

    pub fn str_list(&self, key: &str) -> Vec<String> {
        let arr = self.get(key).as_array().expect("typed at insertion");
        arr.iter().map(|v| v.as_str().unwrap_or_default().to_string()).collect()
    }
}

/// `config-reference` output: every key with its default and description.
pub fn reference() -> String {
    let mut s = String::from("# fplab configuration reference; every value shown is the default.\n");
    let mut section = "";
    for (k, d, doc) in KEYS {
        let sec = k.split('.').next().unwrap_or_default();
        if sec != section {
            s.push('\n');
            section = sec;
        }
        s.push_str(&format!("# {doc}\n{k} = {d}\n"));
    }
    s
}

fn cfg_err(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

/// Typed settings for every module, validated together.
#[derive(Debug, Clone)]
pub struct Settings {
    pub output: PathBuf,
    pub data_dir: PathBuf,
    pub synth: SynthConfig,
    pub recipe: RecipeKind,
    pub mode: RecipeMode,
    pub train: TrainConfig,
    pub model_dir: PathBuf,
    pub teacher_dir: PathBuf,
    pub apcer_target: f64,
    pub eval_split: fplab::Split,
    pub extract_count: usize,
    pub extract_warmup: usize,
    pub extract_runs: usize,
    pub recognizer: RecognizerConfig,
    pub max_trials: Option<usize>,
    pub compare_l2: f64,
    pub compare_iters: usize,
    pub trial_seed: u64,
}

fn parse_ops(names: &[String], c: &Config) -> Result<Vec<AugmentOp>> {
    names
        .iter()
        .map(|n| {
            Ok(match n.as_str() {
                "hflip" => AugmentOp::HFlip,
                "vflip" => AugmentOp::VFlip,
                "translate" => AugmentOp::Translate {
                    max_fraction: c.f32("augment.translate"),
                },
                "crop" => AugmentOp::Crop {
                    min_area: c.f32("augment.crop_min_area"),
                },
                "affine" => AugmentOp::Affine {
                    max_shear: c.f32("augment.shear"),
                    min_scale: c.f32("augment.scale_min"),
                    max_scale: c.f32("augment.scale_max"),
                },
                "rotate" => AugmentOp::Rotate {
                    max_degrees: c.f32("augment.rotate_degrees"),
                },
                "brightness" => AugmentOp::Brightness {
                    max_delta: c.f32("augment.brightness"),
                },
                "contrast" => AugmentOp::Contrast {
                    min: c.f32("augment.contrast_min"),
                    max: c.f32("augment.contrast_max"),
                },
                other => return Err(Error::Config(format!("unknown augmentation op {other:?}"))),
            })
        })
        .collect()
}

impl Settings {
    pub fn resolve(c: &Config) -> Result<Self> {
        let output = PathBuf::from(c.str("output.dir"));
        let materials = c
            .str_list("data.materials")
            .iter()
            .map(|m| m.parse::<Material>().map_err(cfg_err))
            .collect::<Result<Vec<_>>>()?;
        let split = match c.str("data.split") {
            "image-random" => SplitMode::ImageRandom,
            "subject-disjoint" => SplitMode::SubjectDisjoint,
            "scanner-holdout" => SplitMode::ScannerHoldout(c.u32_list("data.holdout_scanners")?),
            other => return Err(Error::Config(format!("unknown data.split {other:?}"))),
        };
        let synth = SynthConfig {
            subjects: c.u32("data.subjects")?,
            fingers_per_subject: c.u32("data.fingers")?,
            scanners: c.u32_list("data.scanners")?,
            materials,
            impressions: c.u32("data.impressions")?,
            ridge_frequency: c.f32("data.ridge_frequency"),
            seed: c.int("data.seed")?,
            split,
        };
        synth.validate().map_err(cfg_err)?;

        let recipe: RecipeKind = c.str("train.recipe").parse().map_err(cfg_err)?;
        let mode: RecipeMode = c.str("train.mode").parse().map_err(cfg_err)?;
        let preset: Preset = c.str("model.preset").parse().map_err(cfg_err)?;
        let train = TrainConfig {
            preset,
            embedding_dim: c.usize("model.embedding_dim")?,
            epochs: c.usize("train.epochs")?,
            batch_size: c.usize("train.batch_size")?,
            lr: c.f32("train.lr"),
            momentum: c.f32("train.momentum"),
            weight_decay: c.f32("train.weight_decay"),
            seed: c.int("train.seed")?,
            simple_ops: parse_ops(&c.str_list("augment.simple_ops"), c)?,
            strong_ops: parse_ops(&c.str_list("augment.ops"), c)?,
            augment_probability: c.f32("augment.probability"),
            fmix: FmixConfig {
                alpha: c.f32("fmix.alpha"),
                decay_power: c.f32("fmix.decay_power"),
            },
            fmix_probability: c.f32("fmix.probability"),
            style_probability: c.f32("style.probability"),
            distill: DistillConfig {
                temperature: c.f32("distill.temperature"),
                alpha: c.f32("distill.alpha"),
            },
            eval_batch: c.usize("train.eval_batch")?,
            record_wall_time: c.boolean("train.record_wall_time"),
        };
        train.validate().map_err(cfg_err)?;

        let run_dir = output.join("train").join(format!("{}-{}", recipe.name(), mode.name()));
        let model_dir = match c.str("model.dir") {
            "" => run_dir,
            d => PathBuf::from(d),
        };
        let teacher_dir = match c.str("train.teacher") {
            "" => output.join("train").join(format!("ensemble-{}", mode.name())),
            d => PathBuf::from(d),
        };
        let apcer_target = c.float("metrics.apcer_target");
        if !(0.0..=1.0).contains(&apcer_target) {
            return Err(Error::Config(format!(
                "metrics.apcer_target {apcer_target} outside [0,1]"
            )));
        }
        let eval_split: fplab::Split = c.str("eval.split").parse().map_err(cfg_err)?;
        let extract_runs = c.usize("extract.timed_runs")?;
        if extract_runs < 100 {
            return Err(Error::Config(format!(
                "extract.timed_runs must be at least 100, got {extract_runs}"
            )));
        }
        let extract_count = c.usize("extract.count")?;
        if extract_count == 0 {
            return Err(Error::Config("extract.count must be at least 1".into()));
        }

        let recognizer = RecognizerConfig {
            grid: PatchGrid {
                rows: c.usize("recognizer.grid_rows")?,
                cols: c.usize("recognizer.grid_cols")?,
                overlap: c.f32("recognizer.overlap"),
            },
            keypoints: KeypointConfig {
                max_keypoints: c.usize("recognizer.keypoints")?,
                nms_radius: c.usize("recognizer.nms_radius")?,
                harris_k: c.f32("recognizer.harris_k"),
                window_radius: c.usize("recognizer.window_radius")?,
                min_relative_response: c.f32("recognizer.min_response"),
            },
            ratio: c.f32("recognizer.ratio"),
            weights: FusionWeights {
                matching: c.f32("recognizer.weight_match"),
                compare: c.f32("recognizer.weight_compare"),
                normal: c.f32("recognizer.weight_normal"),
            },
        };
        recognizer.validate().map_err(cfg_err)?;
        let max_trials = match c.usize("recognizer.max_trials")? {
            0 => None,
            n => Some(n),
        };
        Ok(Self {
            output,
            data_dir: PathBuf::from(c.str("data.dir")),
            synth,
            recipe,
            mode,
            train,
            model_dir,
            teacher_dir,
            apcer_target,
            eval_split,
            extract_count,
            extract_warmup: c.usize("extract.warmup")?,
            extract_runs,
            recognizer,
            max_trials,
            compare_l2: c.float("recognizer.compare_l2"),
            compare_iters: c.usize("recognizer.compare_iters")?,
            trial_seed: c.int("recognizer.seed")?,
        })
    }

    /// Name of the trained run, `<recipe>-<mode>`.
    pub fn run_name(&self) -> String {
        format!("{}-{}", self.recipe.name(), self.mode.name())
    }
}
