use crate::error::{invalid, Result, TensorError};
use crate::graph::{Graph, Op, Var};
use crate::tensor::Tensor;

/// Per-channel statistics of a training batch (population variance).
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f32>,
    pub var: Vec<f32>,
    /// Elements per channel the statistics were taken over.
    pub count: usize,
}

impl Graph {
    /// Batch normalization of `x[N,C,H,W]` with the batch's own statistics.
    pub fn batch_norm_train(&mut self, x: Var, gamma: Var, beta: Var, eps: f32) -> Result<(Var, BatchStats)> {
        let [n, c, h, w] = self.bn_dims(x, gamma, beta)?;
        if n < 2 {
            return Err(invalid("batch_norm", "training mode needs a batch of at least 2"));
        }
        let xd = self.value(x).data();
        let hw = h * w;
        let count = n * hw;
        let mut mean = vec![0.0f32; c];
        let mut var = vec![0.0f32; c];
        for ch in 0..c {
            let mut s = 0.0f64;
            for b in 0..n {
                s += xd[(b * c + ch) * hw..(b * c + ch + 1) * hw]
                    .iter()
                    .map(|&v| v as f64)
                    .sum::<f64>();
            }
            let m = s / count as f64;
            let mut ss = 0.0f64;
            for b in 0..n {
                ss += xd[(b * c + ch) * hw..(b * c + ch + 1) * hw]
                    .iter()
                    .map(|&v| (v as f64 - m).powi(2))
                    .sum::<f64>();
            }
            mean[ch] = m as f32;
            var[ch] = (ss / count as f64) as f32;
        }
        let stats = BatchStats { mean, var, count };
        let v = self.normalize(x, gamma, beta, &stats.mean, &stats.var, eps, true)?;
        Ok((v, stats))
    }

    /// Batch normalization with fixed (running) statistics.
    #[allow(clippy::too_many_arguments)]
    pub fn batch_norm_eval(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mean: &[f32],
        var: &[f32],
        eps: f32,
    ) -> Result<Var> {
        let [_, c, _, _] = self.bn_dims(x, gamma, beta)?;
        if mean.len() != c || var.len() != c {
            return Err(invalid("batch_norm", "running statistics do not match channel count"));
        }
        self.normalize(x, gamma, beta, mean, var, eps, false)
    }

    fn bn_dims(&self, x: Var, gamma: Var, beta: Var) -> Result<[usize; 4]> {
        let s = self.shape(x);
        if s.len() != 4 {
            return Err(invalid("batch_norm", format!("expected NCHW, got {s:?}")));
        }
        let c = s[1];
        for p in [gamma, beta] {
            if self.shape(p) != [c] {
                return Err(TensorError::ShapeMismatch {
                    op: "batch_norm",
                    lhs: s.to_vec(),
                    rhs: self.shape(p).to_vec(),
                });
            }
        }
        Ok([s[0], s[1], s[2], s[3]])
    }

    #[allow(clippy::too_many_arguments)]
    fn normalize(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mean: &[f32],
        var: &[f32],
        eps: f32,
        batch_stats: bool,
    ) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let (c, hw) = (shape[1], shape[2] * shape[3]);
        let inv_std: Vec<f32> = var.iter().map(|&v| 1.0 / (v + eps).sqrt()).collect();
        let g = self.value(gamma).data();
        let bt = self.value(beta).data();
        let xd = self.value(x).data();
        let mut xhat = vec![0.0f32; xd.len()];
        let mut out = vec![0.0f32; xd.len()];
        for (i, (&xv, (xh, o))) in xd.iter().zip(xhat.iter_mut().zip(out.iter_mut())).enumerate() {
            let ch = (i / hw) % c;
            *xh = (xv - mean[ch]) * inv_std[ch];
            *o = g[ch] * *xh + bt[ch];
        }
        let out = Tensor::new(shape, out)?;
        self.push(
            "batch_norm",
            out,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            },
            &[x, gamma, beta],
        )
    }

    /// Multiplies every `[H,W]` plane of `x[N,C,H,W]` by `s[N,C]`.
    pub fn scale_channels(&mut self, x: Var, s: Var) -> Result<Var> {
        let (sx, ss) = (self.shape(x).to_vec(), self.shape(s).to_vec());
        if sx.len() != 4 || ss != [sx[0], sx[1]] {
            return Err(TensorError::ShapeMismatch {
                op: "scale_channels",
                lhs: sx,
                rhs: ss,
            });
        }
        let hw = sx[2] * sx[3];
        let sd = self.value(s).data();
        let xd = self.value(x).data();
        let out = Tensor::from_fn(sx.clone(), |i| xd[i] * sd[i / hw]);
        self.push("scale_channels", out, Op::ScaleChannels(x, s), &[x, s])
    }
}
