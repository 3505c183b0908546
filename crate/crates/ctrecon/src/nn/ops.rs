//! ReLU and the batch-mean squared error.

use crate::error::{Error, Result};
use crate::nn::tensor::Tensor4;

pub fn relu_forward(x: &Tensor4) -> Tensor4 {
    Tensor4 {
        dims: x.dims,
        data: x.data.iter().map(|&v| v.max(0.0)).collect(),
    }
}

/// Subgradient at 0 is taken as 0: gradient passes only where `x > 0`.
pub fn relu_backward(x: &Tensor4, upstream: &Tensor4) -> Result<Tensor4> {
    if !x.same_shape(upstream) {
        return Err(Error::ShapeMismatch(format!(
            "relu backward: {:?} vs {:?}",
            x.dims, upstream.dims
        )));
    }
    Ok(Tensor4 {
        dims: x.dims,
        data: x
            .data
            .iter()
            .zip(upstream.data.iter())
            .map(|(&v, &u)| if v > 0.0 { u } else { 0.0 })
            .collect(),
    })
}

/// Mean over the batch of per-sample squared Frobenius norms:
/// `(1/B) * sum_b sum_pix (a - b)^2`.
pub fn mse(a: &Tensor4, b: &Tensor4) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::ShapeMismatch(format!(
            "mse: {:?} vs {:?}",
            a.dims, b.dims
        )));
    }
    let batch = a.dims[0] as f64;
    let sum: f64 = a
        .data
        .iter()
        .zip(b.data.iter())
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum();
    Ok(sum / batch)
}

/// Gradient of [`mse`] with respect to `a`.
pub fn mse_grad(a: &Tensor4, b: &Tensor4) -> Result<Tensor4> {
    if !a.same_shape(b) {
        return Err(Error::ShapeMismatch(format!(
            "mse grad: {:?} vs {:?}",
            a.dims, b.dims
        )));
    }
    let batch = a.dims[0] as f64;
    Ok(Tensor4 {
        dims: a.dims,
        data: a
            .data
            .iter()
            .zip(b.data.iter())
            .map(|(&x, &y)| 2.0 * (x - y) / batch)
            .collect(),
    })
}
