use crate::error::{invalid, Result};
use crate::graph::{Graph, Op, Var};
use crate::kernels::{conv2d_im2col, ConvGeometry};
use crate::tensor::Tensor;

/// Pooling flavours.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolKind {
    Max,
    Avg,
    GlobalAvg,
}

impl Graph {
    /// Zero-padded cross-correlation of `x[N,C,H,W]` with `w[F,C,kh,kw]`.
    pub fn conv2d(&mut self, x: Var, w: Var, stride: usize, padding: usize) -> Result<Var> {
        let geom = ConvGeometry::new(self.shape(x), self.shape(w), stride, padding)?;
        let (out, cols) = conv2d_im2col(&geom, self.value(x).data(), self.value(w).data());
        let out = Tensor::new(geom.out_shape().to_vec(), out)?;
        self.push("conv2d", out, Op::Conv2d { x, w, geom, cols }, &[x, w])
    }

    /// Pooling over `x[N,C,H,W]`; `window`/`stride` are ignored for global-avg.
    pub fn pool2d(&mut self, kind: PoolKind, x: Var, window: usize, stride: usize) -> Result<Var> {
        match kind {
            PoolKind::Max => self.max_pool2d(x, window, stride),
            PoolKind::Avg => self.avg_pool2d(x, window, stride),
            PoolKind::GlobalAvg => self.global_avg_pool(x),
        }
    }

    fn pool_dims(&self, x: Var, window: usize, stride: usize) -> Result<[usize; 6]> {
        let s = self.shape(x);
        if s.len() != 4 {
            return Err(invalid("pool2d", format!("expected NCHW, got {s:?}")));
        }
        if window == 0 || stride == 0 {
            return Err(invalid("pool2d", "window and stride must be positive"));
        }
        if window > s[2] || window > s[3] {
            return Err(invalid(
                "pool2d",
                format!("window {window} larger than input {}x{}", s[2], s[3]),
            ));
        }
        let oh = (s[2] - window) / stride + 1;
        let ow = (s[3] - window) / stride + 1;
        Ok([s[0], s[1], s[2], s[3], oh, ow])
    }

    pub fn max_pool2d(&mut self, x: Var, window: usize, stride: usize) -> Result<Var> {
        let [n, c, h, w, oh, ow] = self.pool_dims(x, window, stride)?;
        let xd = self.value(x).data();
        let mut out = Vec::with_capacity(n * c * oh * ow);
        let mut argmax = Vec::with_capacity(n * c * oh * ow);
        for plane in 0..n * c {
            let base = plane * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = base + oy * stride * w + ox * stride;
                    for ky in 0..window {
                        for kx in 0..window {
                            let idx = base + (oy * stride + ky) * w + ox * stride + kx;
                            if xd[idx] > xd[best] {
                                best = idx;
                            }
                        }
                    }
                    out.push(xd[best]);
                    argmax.push(best);
                }
            }
        }
        let out = Tensor::new(vec![n, c, oh, ow], out)?;
        self.push("max_pool2d", out, Op::MaxPool2d { x, argmax }, &[x])
    }

    pub fn avg_pool2d(&mut self, x: Var, window: usize, stride: usize) -> Result<Var> {
        let [n, c, h, w, oh, ow] = self.pool_dims(x, window, stride)?;
        let xd = self.value(x).data();
        let norm = 1.0 / (window * window) as f32;
        let mut out = Vec::with_capacity(n * c * oh * ow);
        for plane in 0..n * c {
            let base = plane * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = 0.0;
                    for ky in 0..window {
                        for kx in 0..window {
                            acc += xd[base + (oy * stride + ky) * w + ox * stride + kx];
                        }
                    }
                    out.push(acc * norm);
                }
            }
        }
        let out = Tensor::new(vec![n, c, oh, ow], out)?;
        self.push("avg_pool2d", out, Op::AvgPool2d { x, window, stride }, &[x])
    }

    /// `[N,C,H,W] → [N,C]` spatial mean.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 4 {
            return Err(invalid("global_avg_pool", format!("expected NCHW, got {s:?}")));
        }
        let hw = s[2] * s[3];
        let out: Vec<f32> = self
            .value(x)
            .data()
            .chunks(hw)
            .map(|p| (p.iter().map(|&v| v as f64).sum::<f64>() / hw as f64) as f32)
            .collect();
        let out = Tensor::new(vec![s[0], s[1]], out)?;
        self.push("global_avg_pool", out, Op::GlobalAvgPool(x), &[x])
    }
}
