//! Dense `f32` tensors, a tape-style computation graph with reverse-mode
//! differentiation, and an SGD optimizer.
//!
//! Build a fresh [`Graph`] per step: register parameters with
//! [`Graph::param`], inputs with [`Graph::constant`], compose ops, call
//! [`Graph::backward`] on a scalar loss and read gradients back.

mod backward;
pub mod error;
pub mod graph;
pub mod kernels;
pub mod ops;
pub mod optim;
pub mod rng;
pub mod tensor;

pub use error::{Result, TensorError};
pub use graph::{Graph, Node, Var};
pub use ops::conv::PoolKind;
pub use ops::elementwise::Elementwise;
pub use ops::linalg::{log_softmax_rows, softmax_rows};
pub use ops::norm::BatchStats;
pub use optim::{Parameter, Sgd};
pub use rng::RngStream;
pub use tensor::Tensor;

#[cfg(any(test, feature = "reference"))]
pub mod reference;
