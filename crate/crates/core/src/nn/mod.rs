//! Minimal single-sample CPU layers with hand-written backward passes.
//!
//! Every network in the crate is a fixed composition of these pieces, so
//! forward passes return explicit caches and backward passes consume them.

mod adam;
mod conv;
pub mod init;
mod layers;
mod params;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use conv::{Conv2d, ConvCache};
pub use layers::{
    avg_pool2, avg_pool2_backward, column_norm, column_norm_backward, max_pool, max_pool_backward,
    relu, relu_backward, tanh_backward, upsample_nearest, upsample_nearest_backward, ModNormCache,
    Modulation, NORM_EPS,
};
pub use params::{Grads, Param, ParamId, ParamStore};
pub use tensor::Tensor;
