//! Minimal dense neural-network numerics in `f64`.

pub mod gradcheck;
mod layers;
mod loss;
mod param;
mod tensor;

pub use gradcheck::{finite_difference_gradient, max_grad_error};
pub use layers::{dropout_apply, dropout_mask, xavier_uniform, Embedding, Linear, Mlp, MlpTrace};
pub use loss::{softmax, softmax_cross_entropy};
pub use param::{AdamConfig, AdamState, Module, ParamBlock};
pub use tensor::Tensor;
