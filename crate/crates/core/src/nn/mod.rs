//! Layers and the liveness model.

mod checkpoint;
pub mod layers;
pub mod model;

pub use layers::{LayerSpec, Mode, RunningStats};
pub use model::{ForwardPass, Inference, LivenessModel, Preset, DEFAULT_EMBEDDING_DIM, DEFAULT_INPUT_SIZE};
