//! The liveness CNN: stride-2 conv stages with squeeze-and-excitation gates,
//! a `D`-dimensional embedding and a two-class head.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use autodiff::{softmax_rows, Graph, Parameter, RngStream, Tensor, Var};

use super::layers::{self, init_tensor, LayerSpec, Mode, RunningStats, SeWeights};
use crate::error::{invalid, Error, Result};
use crate::image::Image;

pub const DEFAULT_EMBEDDING_DIM: usize = 192;
pub const DEFAULT_INPUT_SIZE: usize = 64;
const SE_REDUCTION: usize = 4;
const HEAD_DROPOUT: f32 = 0.1;

/// Capacity presets.
///
/// | preset | stage widths        | extra 3×3 conv in last stage | params (D = 192) |
/// |--------|---------------------|------------------------------|------------------|
/// | tiny   | 8, 16, 32, 48       | no                           | 31 612           |
/// | small  | 16, 32, 64, 112     | no                           | 119 466          |
/// | base   | 24, 48, 96, 160     | yes                          | 472 228          |
///
/// Every stage is conv3×3/s2 → BN → ReLU (→ conv3×3/s1 → BN → ReLU in the
/// extra case) → SE(r = 4); then global-avg-pool → linear(C→D) → ReLU
/// (the embedding) → dropout(0.1) → linear(D→2).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    Tiny,
    Small,
    Base,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Tiny, Preset::Small, Preset::Base];

    pub fn widths(self) -> [usize; 4] {
        match self {
            Preset::Tiny => [8, 16, 32, 48],
            Preset::Small => [16, 32, 64, 112],
            Preset::Base => [24, 48, 96, 160],
        }
    }

    fn extra_last_conv(self) -> bool {
        self == Preset::Base
    }

    pub fn id(self) -> u32 {
        match self {
            Preset::Tiny => 0,
            Preset::Small => 1,
            Preset::Base => 2,
        }
    }

    pub fn from_id(id: u32) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.id() == id)
            .ok_or_else(|| invalid(format!("unknown preset id {id}")))
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::Tiny => "tiny",
            Preset::Small => "small",
            Preset::Base => "base",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown preset {s:?} (expected tiny, small or base)")))
    }
}

/// Graph handles produced by one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub embedding: Var,
    pub logits: Var,
    /// One handle per model parameter, in storage order.
    pub params: Vec<Var>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LivenessModel {
    preset: Preset,
    embedding_dim: usize,
    input_size: usize,
    layers: Vec<LayerSpec>,
    /// Index of the layer whose output is the embedding.
    embedding_layer: usize,
    params: Vec<Parameter>,
    /// First parameter index of each layer.
    param_offsets: Vec<usize>,
    /// One entry per batch-norm layer, in layer order.
    running: Vec<RunningStats>,
    bn_names: Vec<String>,
}

/// Builds the layer list of a preset; returns layers, their name prefixes
/// and the embedding layer index.
fn architecture(preset: Preset, embedding_dim: usize) -> (Vec<LayerSpec>, Vec<String>, usize) {
    let mut layers = Vec::new();
    let mut names = Vec::new();
    let mut push = |l: LayerSpec, n: String| {
        layers.push(l);
        names.push(n);
    };
    let mut in_ch = 1;
    for (s, &w) in preset.widths().iter().enumerate() {
        let stage = format!("stage{}", s + 1);
        push(
            LayerSpec::Conv {
                in_channels: in_ch,
                out_channels: w,
                kernel: 3,
                stride: 2,
                padding: 1,
            },
            format!("{stage}.conv"),
        );
        push(LayerSpec::BatchNorm { channels: w }, format!("{stage}.bn"));
        push(LayerSpec::Relu, format!("{stage}.relu"));
        if s == 3 && preset.extra_last_conv() {
            push(
                LayerSpec::Conv {
                    in_channels: w,
                    out_channels: w,
                    kernel: 3,
                    stride: 1,
                    padding: 1,
                },
                format!("{stage}.conv2"),
            );
            push(LayerSpec::BatchNorm { channels: w }, format!("{stage}.bn2"));
            push(LayerSpec::Relu, format!("{stage}.relu2"));
        }
        push(
            LayerSpec::SqueezeExcite {
                channels: w,
                reduction: SE_REDUCTION,
            },
            format!("{stage}.se"),
        );
        in_ch = w;
    }
    push(LayerSpec::GlobalAvgPool, "pool".into());
    push(
        LayerSpec::Linear {
            in_features: in_ch,
            out_features: embedding_dim,
        },
        "embed".into(),
    );
    push(LayerSpec::Relu, "embed.relu".into());
    push(LayerSpec::Dropout { p: HEAD_DROPOUT }, "head.dropout".into());
    push(
        LayerSpec::Linear {
            in_features: embedding_dim,
            out_features: 2,
        },
        "head".into(),
    );
    let embedding_layer = names.iter().position(|n| n == "embed.relu").unwrap();
    (layers, names, embedding_layer)
}

impl LivenessModel {
    /// Deterministic Kaiming-uniform initialization: parameter `i` draws
    /// from stream `i` of `seed`.
    pub fn build(preset: Preset, embedding_dim: usize, seed: u64) -> Result<Self> {
        if embedding_dim == 0 {
            return Err(invalid("embedding dimension must be positive"));
        }
        let (layers, names, embedding_layer) = architecture(preset, embedding_dim);
        let mut params = Vec::new();
        let mut param_offsets = Vec::with_capacity(layers.len());
        let mut running = Vec::new();
        let mut bn_names = Vec::new();
        for (layer, prefix) in layers.iter().zip(&names) {
            layer.validate()?;
            param_offsets.push(params.len());
            for (suffix, shape, fan_in) in layer.param_shapes() {
                let mut rng = RngStream::new(seed, params.len() as u64);
                let t = init_tensor(suffix, &shape, fan_in, &mut rng);
                params.push(Parameter::new(format!("{prefix}.{suffix}"), t));
            }
            if let LayerSpec::BatchNorm { channels } = layer {
                running.push(RunningStats::new(*channels));
                bn_names.push(prefix.clone());
            }
        }
        Ok(Self {
            preset,
            embedding_dim,
            input_size: DEFAULT_INPUT_SIZE,
            layers,
            embedding_layer,
            params,
            param_offsets,
            running,
            bn_names,
        })
    }

    pub fn preset(&self) -> Preset {
        self.preset
    }

    pub fn embedding_dim(&self) -> usize {
        self.embedding_dim
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn set_input_size(&mut self, size: usize) -> Result<()> {
        if size < 16 {
            return Err(invalid("input size must be at least 16 pixels"));
        }
        self.input_size = size;
        Ok(())
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn params(&self) -> &[Parameter] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Parameter] {
        &mut self.params
    }

    pub fn running_stats(&self) -> &[RunningStats] {
        &self.running
    }

    pub(crate) fn running_stats_mut(&mut self) -> &mut [RunningStats] {
        &mut self.running
    }

    pub(crate) fn bn_names(&self) -> &[String] {
        &self.bn_names
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Builds the forward graph in training mode and folds batch
    /// statistics into the running averages.
    pub fn forward_train(&mut self, g: &mut Graph, x: Var, rng: &mut RngStream) -> Result<ForwardPass> {
        let mut running = std::mem::take(&mut self.running);
        let out = self.forward_impl(g, x, Mode::Train, rng, &mut running, true);
        self.running = running;
        out
    }

    /// Pure inference forward; parameters enter the graph as constants
    /// unless `track_params` is set.
    pub fn forward_eval(&self, g: &mut Graph, x: Var, track_params: bool) -> Result<ForwardPass> {
        let mut running = self.running.clone();
        let mut rng = RngStream::new(0, 0);
        self.forward_impl(g, x, Mode::Eval, &mut rng, &mut running, track_params)
    }

    fn forward_impl(
        &self,
        g: &mut Graph,
        x: Var,
        mode: Mode,
        rng: &mut RngStream,
        running: &mut [RunningStats],
        track_params: bool,
    ) -> Result<ForwardPass> {
        let s = g.shape(x).to_vec();
        if s.len() != 4 || s[1] != 1 || s[2] != self.input_size || s[3] != self.input_size {
            return Err(invalid(format!(
                "model expects [N,1,{0},{0}] input, got {s:?}",
                self.input_size
            )));
        }
        let params: Vec<Var> = self
            .params
            .iter()
            .map(|p| {
                if track_params {
                    g.param(p.value.clone())
                } else {
                    g.constant(p.value.clone())
                }
            })
            .collect();
        let mut h = x;
        let mut bn_index = 0;
        let mut embedding = None;
        for (li, layer) in self.layers.iter().enumerate() {
            let p = &params[self.param_offsets[li]..];
            h = match *layer {
                LayerSpec::Conv { stride, padding, .. } => g.conv2d(h, p[0], stride, padding)?,
                LayerSpec::BatchNorm { .. } => {
                    let y = layers::batchnorm2d(g, h, p[0], p[1], &mut running[bn_index], mode)?;
                    bn_index += 1;
                    y
                }
                LayerSpec::Relu => g.relu(h)?,
                LayerSpec::SqueezeExcite { reduction, .. } => {
                    let w = SeWeights {
                        fc1_w: p[0],
                        fc1_b: p[1],
                        fc2_w: p[2],
                        fc2_b: p[3],
                    };
                    layers::se_block(g, h, &w, reduction)?
                }
                LayerSpec::MaxPool { window, stride } => g.max_pool2d(h, window, stride)?,
                LayerSpec::GlobalAvgPool => g.global_avg_pool(h)?,
                LayerSpec::Linear { .. } => layers::linear(g, h, p[0], p[1])?,
                LayerSpec::Dropout { p } => layers::dropout(g, h, p, mode, rng)?,
            };
            if li == self.embedding_layer {
                embedding = Some(h);
            }
        }
        Ok(ForwardPass {
            embedding: embedding.expect("embedding layer is part of every architecture"),
            logits: h,
            params,
        })
    }

    /// Adds the gradients held by `g` into the parameters' accumulators.
    pub fn accumulate_grads(&mut self, g: &Graph, pass: &ForwardPass) -> Result<()> {
        for (p, &v) in self.params.iter_mut().zip(&pass.params) {
            p.accumulate(g, v)?;
        }
        Ok(())
    }

    /// Stacks images into an `[N,1,S,S]` tensor.
    pub fn batch_tensor(&self, images: &[&Image]) -> Result<Tensor> {
        let n = self.input_size;
        let mut data = Vec::with_capacity(images.len() * n * n);
        for img in images {
            if img.channels != 1 || img.height != n || img.width != n {
                return Err(invalid(format!(
                    "expected 1x{n}x{n} image, got {}x{}x{}",
                    img.channels, img.height, img.width
                )));
            }
            data.extend_from_slice(&img.data);
        }
        Ok(Tensor::new(vec![images.len(), 1, n, n], data)?)
    }

    /// Eval-mode embeddings and class probabilities for a batch.
    pub fn infer(&self, images: &[&Image]) -> Result<Vec<Inference>> {
        let mut g = Graph::new();
        let x = g.constant(self.batch_tensor(images)?);
        let pass = self.forward_eval(&mut g, x, false)?;
        let d = self.embedding_dim;
        let emb = g.value(pass.embedding).data();
        let logits = g.value(pass.logits).data();
        let probs = softmax_rows(logits, 2);
        Ok((0..images.len())
            .map(|i| Inference {
                embedding: emb[i * d..(i + 1) * d].to_vec(),
                logits: [logits[2 * i], logits[2 * i + 1]],
                probs: [probs[2 * i], probs[2 * i + 1]],
            })
            .collect())
    }

    /// P(live) for every image, evaluated in chunks of `batch`.
    pub fn live_scores(&self, images: &[&Image], batch: usize) -> Result<Vec<f32>> {
        let mut out = Vec::with_capacity(images.len());
        for chunk in images.chunks(batch.max(1)) {
            out.extend(self.infer(chunk)?.into_iter().map(|r| r.probs[0]));
        }
        Ok(out)
    }

    /// Pre-head embedding of one image and the wall-clock time it took.
    pub fn extract_feature(&self, image: &Image) -> Result<(Vec<f32>, f64)> {
        let start = Instant::now();
        let mut r = self.infer(&[image])?;
        let ms = start.elapsed().as_secs_f64() * 1e3;
        Ok((r.remove(0).embedding, ms))
    }
}

/// Eval-mode outputs for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    pub embedding: Vec<f32>,
    pub logits: [f32; 2],
    /// Softmax of the logits; index 0 is live.
    pub probs: [f32; 2],
}
