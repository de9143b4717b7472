use crate::error::{Result, TensorError};
use crate::graph::{Graph, Op, Var};
use crate::tensor::Tensor;

/// Pointwise operation kinds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Elementwise {
    Add,
    Sub,
    Mul,
    Relu,
    Sigmoid,
    Exp,
    Log,
    Scale(f32),
}

impl Elementwise {
    pub fn is_binary(self) -> bool {
        matches!(self, Elementwise::Add | Elementwise::Sub | Elementwise::Mul)
    }
}

/// Output shape of a binary op: equal shapes, or one side a single element.
pub(crate) fn broadcast_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<Vec<usize>> {
    if a.shape() == b.shape() || b.is_scalar() {
        Ok(a.shape().to_vec())
    } else if a.is_scalar() {
        Ok(b.shape().to_vec())
    } else {
        Err(TensorError::ShapeMismatch {
            op,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        })
    }
}

fn zip_with(a: &Tensor, b: &Tensor, shape: Vec<usize>, f: impl Fn(f32, f32) -> f32) -> Tensor {
    let (ad, bd) = (a.data(), b.data());
    let len: usize = shape.iter().product();
    let (sa, sb) = (ad.len() == 1 && len != 1, bd.len() == 1 && len != 1);
    Tensor::from_fn(shape, |i| {
        let x = if sa { ad[0] } else { ad[i] };
        let y = if sb { bd[0] } else { bd[i] };
        f(x, y)
    })
}

impl Graph {
    /// Dispatches a pointwise op; `b` is required exactly for binary kinds.
    pub fn elementwise(&mut self, kind: Elementwise, a: Var, b: Option<Var>) -> Result<Var> {
        match (kind, b) {
            (Elementwise::Add, Some(b)) => self.add(a, b),
            (Elementwise::Sub, Some(b)) => self.sub(a, b),
            (Elementwise::Mul, Some(b)) => self.mul(a, b),
            (Elementwise::Relu, None) => self.relu(a),
            (Elementwise::Sigmoid, None) => self.sigmoid(a),
            (Elementwise::Exp, None) => self.exp(a),
            (Elementwise::Log, None) => self.log(a),
            (Elementwise::Scale(s), None) => self.scale(a, s),
            (kind, _) => Err(crate::error::invalid(
                "elementwise",
                format!("{kind:?} called with the wrong number of operands"),
            )),
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let shape = broadcast_shape("add", self.value(a), self.value(b))?;
        let out = zip_with(self.value(a), self.value(b), shape, |x, y| x + y);
        self.push("add", out, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let shape = broadcast_shape("sub", self.value(a), self.value(b))?;
        let out = zip_with(self.value(a), self.value(b), shape, |x, y| x - y);
        self.push("sub", out, Op::Sub(a, b), &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let shape = broadcast_shape("mul", self.value(a), self.value(b))?;
        let out = zip_with(self.value(a), self.value(b), shape, |x, y| x * y);
        self.push("mul", out, Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&mut self, a: Var, factor: f32) -> Result<Var> {
        let out = self.value(a).map(|x| x * factor);
        self.push("scale", out, Op::Scale(a, factor), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(|x| x.max(0.0));
        self.push("relu", out, Op::Relu(a), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(sigmoid);
        self.push("sigmoid", out, Op::Sigmoid(a), &[a])
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(f32::exp);
        self.push("exp", out, Op::Exp(a), &[a])
    }

    /// Natural log; every input element must be strictly positive.
    pub fn log(&mut self, a: Var) -> Result<Var> {
        if self.value(a).data().iter().any(|&x| x <= 0.0) {
            return Err(TensorError::Domain { op: "log" });
        }
        let out = self.value(a).map(f32::ln);
        self.push("log", out, Op::Log(a), &[a])
    }
}

pub(crate) fn sigmoid(x: f32) -> f32 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
