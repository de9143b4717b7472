use crate::error::{Result, TensorError};
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

/// Named trainable tensor with its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape().to_vec());
        Self {
            name: name.into(),
            value,
            grad,
        }
    }

    /// Adds the gradient that `graph` holds for `var` (if any).
    pub fn accumulate(&mut self, graph: &Graph, var: Var) -> Result<()> {
        if let Some(g) = graph.grad(var) {
            if g.shape() != self.value.shape() {
                return Err(TensorError::ShapeMismatch {
                    op: "accumulate",
                    lhs: self.value.shape().to_vec(),
                    rhs: g.shape().to_vec(),
                });
            }
            self.grad.add_assign(g)?;
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

/// Stochastic gradient descent with heavy-ball momentum and L2 decay.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub lr: f32,
    pub momentum: f32,
    pub weight_decay: f32,
    velocity: Vec<Tensor>,
}

impl Sgd {
    pub fn new(lr: f32, momentum: f32, weight_decay: f32) -> Self {
        Self {
            lr,
            momentum,
            weight_decay,
            velocity: Vec::new(),
        }
    }

    /// `v ← μ·v + g + λ·p`, `p ← p − lr·v`, then zeroes every gradient.
    pub fn step(&mut self, params: &mut [Parameter]) {
        if self.velocity.len() != params.len() {
            self.velocity = params.iter().map(|p| Tensor::zeros(p.value.shape().to_vec())).collect();
        }
        for (p, v) in params.iter_mut().zip(&mut self.velocity) {
            let vd = v.data_mut();
            let gd = p.grad.data();
            let pd = p.value.data_mut();
            for j in 0..pd.len() {
                vd[j] = self.momentum * vd[j] + gd[j] + self.weight_decay * pd[j];
                pd[j] -= self.lr * vd[j];
            }
            p.zero_grad();
        }
    }
}
