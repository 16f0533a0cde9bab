//! Dense layers, GRU cells, losses and the Adam optimizer, with hand-derived
//! batched backward passes.

pub mod activation;
pub mod adam;
pub mod dense;
pub mod gru;
pub mod loss;
pub mod param;

pub use activation::{elu, hard_sigmoid, sigmoid, softmax, Activation};
pub use adam::{adam_update, AdamConfig, AdamState};
pub use dense::{dense_forward, Dense, DenseCache};
pub use gru::{gru_forward, gru_step, GruCache, GruCell};
pub use loss::{cross_entropy, cross_entropy_index, LOG_FLOOR};
pub use param::{glorot_uniform, ParamArray, Params};
