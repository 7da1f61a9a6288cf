//! Decoder-only transformer over layout token sequences: forward and backward
//! passes, incremental decoding, checkpoints and the optimizer.

pub mod checkpoint;
pub mod config;
pub mod decode;
pub mod elem;
pub mod error;
pub mod model;
pub mod optim;
pub mod params;

pub use config::{ModelConfig, INDEX_ROWS};
pub use decode::Decoder;
pub use elem::{Elem, View};
pub use error::ModelError;
pub use model::{softmax_backward, Batch, Model, Tape};
pub use optim::{clip_grad_norm, Adam, AdamConfig};
pub use params::{Init, LayerIx, ParamIndex, TensorSpec};
