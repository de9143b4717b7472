//! Independent 64-bit reference implementations and a central
//! finite-difference gradient checker. Compiled for tests and behind the
//! `reference` feature; the graph code never calls into this module.

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::rng::RngStream;
use crate::tensor::Tensor;

/// Flat f64 array with its shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Arr {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Arr {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn from_tensor(t: &Tensor) -> Self {
        Self::new(t.shape().to_vec(), t.data().iter().map(|&v| v as f64).collect())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Arr {
        Arr::new(self.shape.clone(), self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn zip(&self, o: &Arr, f: impl Fn(f64, f64) -> f64) -> Arr {
        if o.data.len() == 1 && self.data.len() != 1 {
            return self.map(|v| f(v, o.data[0]));
        }
        if self.data.len() == 1 && o.data.len() != 1 {
            return o.map(|v| f(self.data[0], v));
        }
        assert_eq!(self.shape, o.shape);
        Arr::new(
            self.shape.clone(),
            self.data.iter().zip(&o.data).map(|(&a, &b)| f(a, b)).collect(),
        )
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn matmul(a: &Arr, b: &Arr) -> Arr {
    let (m, k, n) = (a.shape[0], a.shape[1], b.shape[1]);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[i * n + j] = (0..k).map(|p| a.data[i * k + p] * b.data[p * n + j]).sum();
        }
    }
    Arr::new(vec![m, n], out)
}

pub fn add_row_bias(x: &Arr, b: &Arr) -> Arr {
    let f = x.shape[1];
    Arr::new(
        x.shape.clone(),
        x.data.iter().enumerate().map(|(i, v)| v + b.data[i % f]).collect(),
    )
}

pub fn conv2d(x: &Arr, w: &Arr, stride: usize, pad: usize) -> Arr {
    let (n, c, h, wd) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
    let (f, kh, kw) = (w.shape[0], w.shape[2], w.shape[3]);
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (wd + 2 * pad - kw) / stride + 1;
    let mut out = vec![0.0; n * f * oh * ow];
    for b in 0..n {
        for fi in 0..f {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = 0.0;
                    for ci in 0..c {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < wd {
                                    acc += x.data[((b * c + ci) * h + iy as usize) * wd + ix as usize]
                                        * w.data[((fi * c + ci) * kh + ky) * kw + kx];
                                }
                            }
                        }
                    }
                    out[((b * f + fi) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    Arr::new(vec![n, f, oh, ow], out)
}

fn pool(x: &Arr, window: usize, stride: usize, reduce: impl Fn(&[f64]) -> f64) -> Arr {
    let (n, c, h, w) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
    let oh = (h - window) / stride + 1;
    let ow = (w - window) / stride + 1;
    let mut out = Vec::new();
    for plane in 0..n * c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut win = Vec::new();
                for ky in 0..window {
                    for kx in 0..window {
                        win.push(x.data[plane * h * w + (oy * stride + ky) * w + ox * stride + kx]);
                    }
                }
                out.push(reduce(&win));
            }
        }
    }
    Arr::new(vec![n, c, oh, ow], out)
}

pub fn max_pool(x: &Arr, window: usize, stride: usize) -> Arr {
    pool(x, window, stride, |w| {
        w.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    })
}

pub fn avg_pool(x: &Arr, window: usize, stride: usize) -> Arr {
    pool(x, window, stride, |w| w.iter().sum::<f64>() / w.len() as f64)
}

pub fn global_avg_pool(x: &Arr) -> Arr {
    let hw = x.shape[2] * x.shape[3];
    Arr::new(
        vec![x.shape[0], x.shape[1]],
        x.data.chunks(hw).map(|p| p.iter().sum::<f64>() / hw as f64).collect(),
    )
}

pub fn scale_channels(x: &Arr, s: &Arr) -> Arr {
    let hw = x.shape[2] * x.shape[3];
    Arr::new(
        x.shape.clone(),
        x.data.iter().enumerate().map(|(i, v)| v * s.data[i / hw]).collect(),
    )
}

/// Batch norm; `stats = None` uses the batch's population statistics.
pub fn batch_norm(x: &Arr, gamma: &Arr, beta: &Arr, stats: Option<(&[f64], &[f64])>, eps: f64) -> Arr {
    let (n, c, hw) = (x.shape[0], x.shape[1], x.shape[2] * x.shape[3]);
    let mut out = x.data.clone();
    for ch in 0..c {
        let vals: Vec<f64> = (0..n)
            .flat_map(|b| x.data[(b * c + ch) * hw..(b * c + ch + 1) * hw].to_vec())
            .collect();
        let (mean, var) = match stats {
            Some((m, v)) => (m[ch], v[ch]),
            None => {
                let m = vals.iter().sum::<f64>() / vals.len() as f64;
                (m, vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / vals.len() as f64)
            }
        };
        for b in 0..n {
            for j in (b * c + ch) * hw..(b * c + ch + 1) * hw {
                out[j] = gamma.data[ch] * (x.data[j] - mean) / (var + eps).sqrt() + beta.data[ch];
            }
        }
    }
    Arr::new(x.shape.clone(), out)
}

pub fn log_softmax(x: &Arr) -> Arr {
    let k = x.shape[1];
    let mut out = Vec::new();
    for row in x.data.chunks(k) {
        let lse = row.iter().map(|v| v.exp()).sum::<f64>().ln();
        out.extend(row.iter().map(|v| v - lse));
    }
    Arr::new(x.shape.clone(), out)
}

/// Outcome of one finite-difference comparison.
#[derive(Debug, Clone)]
pub struct GradReport {
    /// Worst per-input relative error ‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖).
    pub max_rel_error: f64,
}

/// Compares graph gradients of `Σ R ∘ f(inputs)` against central
/// differences of the 64-bit `reference`, `R` a fixed random weighting.
pub fn check_gradients(
    inputs: &[Tensor],
    build: impl Fn(&mut Graph, &[Var]) -> Result<Var>,
    reference: impl Fn(&[Arr]) -> Arr,
    h: f64,
    rng: &mut RngStream,
) -> Result<GradReport> {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = build(&mut g, &vars)?;
    let out_shape = g.shape(out).to_vec();
    let weights = Tensor::from_fn(out_shape, |_| rng.range(-1.0, 1.0));
    let wv = g.constant(weights.clone());
    let prod = g.mul(out, wv)?;
    let loss = g.sum(prod)?;
    g.backward(loss)?;

    let weights = Arr::from_tensor(&weights);
    let base: Vec<Arr> = inputs.iter().map(Arr::from_tensor).collect();
    let objective = |args: &[Arr]| -> f64 {
        let y = reference(args);
        y.data.iter().zip(&weights.data).map(|(a, b)| a * b).sum()
    };

    let mut worst = 0.0f64;
    for (idx, var) in vars.iter().enumerate() {
        let analytic = g.grad_or_zeros(*var);
        let mut args = base.clone();
        let mut numeric = Vec::with_capacity(analytic.len());
        for e in 0..args[idx].data.len() {
            let orig = args[idx].data[e];
            args[idx].data[e] = orig + h;
            let plus = objective(&args);
            args[idx].data[e] = orig - h;
            let minus = objective(&args);
            args[idx].data[e] = orig;
            numeric.push((plus - minus) / (2.0 * h));
        }
        let diff: f64 = analytic
            .data()
            .iter()
            .zip(&numeric)
            .map(|(&a, &n)| (a as f64 - n).powi(2))
            .sum::<f64>()
            .sqrt();
        let na = analytic.data().iter().map(|&a| (a as f64).powi(2)).sum::<f64>().sqrt();
        let nn = numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
        let scale = na.max(nn);
        let rel = if scale < 1e-12 { diff } else { diff / scale };
        worst = worst.max(rel);
    }
    Ok(GradReport { max_rel_error: worst })
}
