//! Minimal differentiable compute: tensors, a recording tape with
//! reverse-mode gradients, plain SGD and a checkpoint container.

pub mod checkpoint;
pub mod crf;
pub mod gradcheck;
pub mod ops;
mod sgd;
mod tape;
mod tensor;

pub use ops::{conv1d_same, dropout, lstm_step, max_pool_time, Mode};
pub use sgd::{sgd_update, DEFAULT_CLIP_NORM};
pub use tape::{NodeId, Tape};
pub use tensor::{Gradients, ParamId, ParamSet, Parameter, Tensor};
