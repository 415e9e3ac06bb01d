//! Dense tensors, a reverse-mode tape, layers, Adam and checkpoints.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod params;
pub mod tape;
pub mod tensor;

pub use adam::{adam_step, AdamState};
pub use checkpoint::Checkpoint;
pub use gradcheck::{check_gradients, GradReport};
pub use layers::{causal_mask, linear, AttentionBlock, Embedding, LayerNorm, Linear};
pub use params::{Gradients, ParamId, ParamStore};
pub use tape::{masked_softmax_rows, Tape, Var};
pub use tensor::Tensor;
