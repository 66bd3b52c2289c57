//! Layer primitives with explicit forward and backward rules.
//!
//! Image tensors are `H x W x C` (or `N x H x W x C` for batches), convolution
//! weights are `3 x 3 x Cin x Cout`, dense weights are `in x out`.

mod activation;
mod adam;
mod conv;
mod dense;
mod dropout;
mod init;
mod loss;
mod pool;
mod stack;

pub use activation::{leaky_relu, leaky_relu_backward, LEAKY_SLOPE};
pub use adam::{adam_step, AdamConfig, AdamState};
pub use conv::{conv2d_backward, conv2d_forward, ConvGrads};
pub use dense::{dense_backward, dense_forward, DenseGrads};
pub use dropout::{dropout_backward, dropout_forward};
pub use init::he_init;
pub use loss::{cross_entropy, softmax, softmax_rows};
pub use pool::{maxpool_backward, maxpool_forward, PoolIndices};
pub use stack::{Layer, LayerStack, Mode, Param};
