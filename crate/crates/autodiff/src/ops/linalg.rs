use crate::error::{invalid, Result, TensorError};
use crate::graph::{Graph, Op, Var};
use crate::kernels::gemm_nn;
use crate::tensor::Tensor;

impl Graph {
    /// `[m×k] · [k×n] → [m×n]`
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: sa,
                rhs: sb,
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0f32; m * n];
        gemm_nn(m, k, n, self.value(a).data(), self.value(b).data(), &mut out);
        let out = Tensor::new(vec![m, n], out)?;
        self.push("matmul", out, Op::MatMul(a, b), &[a, b])
    }

    /// Adds `bias[F]` to every row of `x[N,F]`.
    pub fn add_row_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (sx, sb) = (self.shape(x).to_vec(), self.shape(bias).to_vec());
        if sx.len() != 2 || sb.len() != 1 || sb[0] != sx[1] {
            return Err(TensorError::ShapeMismatch {
                op: "add_row_bias",
                lhs: sx,
                rhs: sb,
            });
        }
        let f = sx[1];
        let b = self.value(bias).data().to_vec();
        let xv = self.value(x);
        let out = Tensor::from_fn(sx.clone(), |i| xv.data()[i] + b[i % f]);
        self.push("add_row_bias", out, Op::AddRowBias(x, bias), &[x, bias])
    }

    pub fn reshape(&mut self, x: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let out = self.value(x).reshape(shape)?;
        self.push("reshape", out, Op::Reshape(x), &[x])
    }

    /// Sum of all elements, shape `[1]`.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let total: f64 = self.value(x).data().iter().map(|&v| v as f64).sum();
        self.push("sum", Tensor::scalar(total as f32), Op::Sum(x), &[x])
    }

    /// Mean of all elements, shape `[1]`.
    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        let total: f64 = v.data().iter().map(|&e| e as f64).sum();
        let mean = total / v.len() as f64;
        self.push("mean", Tensor::scalar(mean as f32), Op::Mean(x), &[x])
    }

    /// Row-wise log-softmax of a `[N,K]` matrix, max-shifted.
    pub fn log_softmax(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if shape.len() != 2 {
            return Err(invalid("log_softmax", format!("expected [N,K], got {shape:?}")));
        }
        let out = log_softmax_rows(self.value(x).data(), shape[1]);
        let out = Tensor::new(shape, out)?;
        self.push("log_softmax", out, Op::LogSoftmax(x), &[x])
    }
}

/// Log-softmax of each length-`k` row.
pub fn log_softmax_rows(data: &[f32], k: usize) -> Vec<f32> {
    let mut out = Vec::with_capacity(data.len());
    for row in data.chunks(k) {
        let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let lse = row.iter().map(|&v| ((v - max) as f64).exp()).sum::<f64>().ln() as f32 + max;
        out.extend(row.iter().map(|&v| v - lse));
    }
    out
}

/// Softmax of each length-`k` row.
pub fn softmax_rows(data: &[f32], k: usize) -> Vec<f32> {
    log_softmax_rows(data, k).into_iter().map(f32::exp).collect()
}
