//! Minimal double-precision network substrate: rank-4 tensors, stride-1
//! convolution and transposed convolution with same padding, batch
//! normalization, ReLU, MSE and Adam.

pub mod adam;
pub mod batchnorm;
pub mod checkpoint;
pub mod conv;
pub mod ops;
pub mod tensor;

pub use adam::{adam_step, AdamHyper, AdamState};
pub use batchnorm::{batchnorm_backward, batchnorm_forward, BatchNormCache, BatchNormParams, BnMode};
pub use conv::{conv2d_backward, conv2d_forward, deconv2d_backward, deconv2d_forward, ConvParams};
pub use ops::{mse, mse_grad, relu_backward, relu_forward};
pub use tensor::Tensor4;
