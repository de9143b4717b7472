//! Layer zoo built on the autodiff graph.

use autodiff::{BatchStats, Graph, RngStream, Tensor, Var};

use crate::error::{invalid, Result};

pub const BN_EPS: f32 = 1e-5;
pub const BN_MOMENTUM: f32 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// One layer of a sequential network.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    /// Bias-free 2-D convolution.
    Conv {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    BatchNorm {
        channels: usize,
    },
    Relu,
    /// Squeeze-and-excitation gate with reduction ratio `reduction`.
    SqueezeExcite {
        channels: usize,
        reduction: usize,
    },
    MaxPool {
        window: usize,
        stride: usize,
    },
    GlobalAvgPool,
    Linear {
        in_features: usize,
        out_features: usize,
    },
    Dropout {
        p: f32,
    },
}

impl LayerSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            LayerSpec::SqueezeExcite { channels, reduction } => {
                if reduction == 0 || channels % reduction != 0 {
                    return Err(invalid(format!(
                        "SE block: {channels} channels not divisible by reduction {reduction}"
                    )));
                }
            }
            LayerSpec::Conv { kernel, stride, .. } if kernel == 0 || stride == 0 => {
                return Err(invalid("conv: kernel and stride must be positive"));
            }
            LayerSpec::Dropout { p } if !(0.0..1.0).contains(&p) => {
                return Err(invalid(format!("dropout probability {p} outside [0,1)")));
            }
            _ => {}
        }
        Ok(())
    }

    /// `(suffix, shape, fan_in)` of every trainable tensor, in storage order.
    /// `fan_in == 0` marks tensors that are constant-initialized.
    pub fn param_shapes(&self) -> Vec<(&'static str, Vec<usize>, usize)> {
        match *self {
            LayerSpec::Conv {
                in_channels,
                out_channels,
                kernel,
                ..
            } => vec![(
                "weight",
                vec![out_channels, in_channels, kernel, kernel],
                in_channels * kernel * kernel,
            )],
            LayerSpec::BatchNorm { channels } => vec![("gamma", vec![channels], 0), ("beta", vec![channels], 0)],
            LayerSpec::SqueezeExcite { channels, reduction } => {
                let hidden = channels / reduction;
                vec![
                    ("fc1.weight", vec![channels, hidden], channels),
                    ("fc1.bias", vec![hidden], 0),
                    ("fc2.weight", vec![hidden, channels], hidden),
                    ("fc2.bias", vec![channels], 0),
                ]
            }
            LayerSpec::Linear {
                in_features,
                out_features,
            } => vec![
                ("weight", vec![in_features, out_features], in_features),
                ("bias", vec![out_features], 0),
            ],
            _ => Vec::new(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes()
            .iter()
            .map(|(_, s, _)| s.iter().product::<usize>())
            .sum()
    }

    pub fn short_name(&self) -> &'static str {
        match self {
            LayerSpec::Conv { .. } => "conv",
            LayerSpec::BatchNorm { .. } => "bn",
            LayerSpec::Relu => "relu",
            LayerSpec::SqueezeExcite { .. } => "se",
            LayerSpec::MaxPool { .. } => "maxpool",
            LayerSpec::GlobalAvgPool => "gap",
            LayerSpec::Linear { .. } => "fc",
            LayerSpec::Dropout { .. } => "dropout",
        }
    }
}

/// Kaiming-uniform tensor (`bound = √(6 / fan_in)`), or the constant for
/// `fan_in == 0` tensors (`gamma` → 1, everything else → 0).
pub fn init_tensor(suffix: &str, shape: &[usize], fan_in: usize, rng: &mut RngStream) -> Tensor {
    if fan_in == 0 {
        let v = if suffix == "gamma" { 1.0 } else { 0.0 };
        return Tensor::full(shape.to_vec(), v);
    }
    let bound = (6.0 / fan_in as f32).sqrt();
    Tensor::from_fn(shape.to_vec(), |_| rng.range(-bound, bound))
}

/// Exponential moving averages of batch statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats {
    pub mean: Vec<f32>,
    pub var: Vec<f32>,
}

impl RunningStats {
    pub fn new(channels: usize) -> Self {
        Self {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
        }
    }

    /// Momentum update; the variance uses the unbiased batch estimate.
    pub fn update(&mut self, batch: &BatchStats) {
        let correction = if batch.count > 1 {
            batch.count as f32 / (batch.count - 1) as f32
        } else {
            1.0
        };
        for c in 0..self.mean.len() {
            self.mean[c] = (1.0 - BN_MOMENTUM) * self.mean[c] + BN_MOMENTUM * batch.mean[c];
            self.var[c] = (1.0 - BN_MOMENTUM) * self.var[c] + BN_MOMENTUM * batch.var[c] * correction;
        }
    }
}

/// Batch normalization; in train mode the running statistics absorb the
/// batch statistics.
pub fn batchnorm2d(
    g: &mut Graph,
    x: Var,
    gamma: Var,
    beta: Var,
    running: &mut RunningStats,
    mode: Mode,
) -> Result<Var> {
    match mode {
        Mode::Train => {
            let (y, stats) = g.batch_norm_train(x, gamma, beta, BN_EPS)?;
            running.update(&stats);
            Ok(y)
        }
        Mode::Eval => Ok(g.batch_norm_eval(x, gamma, beta, &running.mean, &running.var, BN_EPS)?),
    }
}

/// `x[N,in] · w[in,out] + b[out]`
pub fn linear(g: &mut Graph, x: Var, w: Var, b: Var) -> Result<Var> {
    let y = g.matmul(x, w)?;
    Ok(g.add_row_bias(y, b)?)
}

/// Trainable tensors of one squeeze-and-excitation block.
#[derive(Debug, Clone, Copy)]
pub struct SeWeights {
    pub fc1_w: Var,
    pub fc1_b: Var,
    pub fc2_w: Var,
    pub fc2_b: Var,
}

/// Channel gate `s = σ(W₂·relu(W₁·gap(x)))`, output `x·s` per channel.
pub fn se_block(g: &mut Graph, x: Var, w: &SeWeights, reduction: usize) -> Result<Var> {
    let channels = g.shape(x).get(1).copied().unwrap_or(0);
    LayerSpec::SqueezeExcite { channels, reduction }.validate()?;
    let squeezed = g.global_avg_pool(x)?;
    let hidden = linear(g, squeezed, w.fc1_w, w.fc1_b)?;
    let hidden = g.relu(hidden)?;
    let gate = linear(g, hidden, w.fc2_w, w.fc2_b)?;
    let gate = g.sigmoid(gate)?;
    Ok(g.scale_channels(x, gate)?)
}

/// Inverted dropout; identity in eval mode.
pub fn dropout(g: &mut Graph, x: Var, p: f32, mode: Mode, rng: &mut RngStream) -> Result<Var> {
    if mode == Mode::Eval || p == 0.0 {
        return Ok(x);
    }
    let keep = 1.0 / (1.0 - p);
    let mask = Tensor::from_fn(g.shape(x).to_vec(), |_| if rng.bernoulli(p) { 0.0 } else { keep });
    let m = g.constant(mask);
    Ok(g.mul(x, m)?)
}
