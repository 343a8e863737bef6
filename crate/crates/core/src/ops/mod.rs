//! The layer vocabulary: pure functions from tensors to tensors.
//!
//! Convolutions run in parallel over output planes; every output element is
//! accumulated in a fixed order so results do not depend on the thread count.

mod activation;
mod combine;
mod conv;
mod norm;
mod pool;
pub mod reference;

pub use activation::{leaky_relu, relu, softmax};
pub use combine::{concat, eltwise_sum};
pub use conv::{
    conv2d, conv2d_output_shape, deconv2d, deconv2d_output_shape, ConvWeights, SUPPORTED_KERNELS,
};
pub use norm::{batchnorm_inference, fuse_conv_bn, BnParams};
pub use pool::{avgpool, maxpool, PoolSpec};
pub use reference::{reference_conv2d, reference_deconv2d};
