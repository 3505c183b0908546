//! Per-channel batch normalization with the full batch-statistics gradient.

use crate::error::{Error, Result};
use crate::nn::tensor::Tensor4;

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormParams {
    pub scale: Vec<f64>,
    pub shift: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub epsilon: f64,
}

impl BatchNormParams {
    pub fn new(channels: usize) -> Self {
        BatchNormParams {
            scale: vec![1.0; channels],
            shift: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            momentum: 0.99,
            epsilon: 1e-3,
        }
    }

    pub fn channels(&self) -> usize {
        self.scale.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    Train,
    Infer,
}

/// State cached by the forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct BatchNormCache {
    pub xhat: Tensor4,
    pub inv_std: Vec<f64>,
}

/// Train mode normalizes by batch statistics and updates the running stats
/// in place; infer mode uses the stored running stats.
pub fn batchnorm_forward(
    x: &Tensor4,
    p: &mut BatchNormParams,
    mode: BnMode,
) -> Result<(Tensor4, BatchNormCache)> {
    let c = x.dims[3];
    if c != p.channels() {
        return Err(Error::ShapeMismatch(format!(
            "batchnorm has {} channels, input has {c}",
            p.channels()
        )));
    }
    let [nb, h, w, _] = x.dims;
    let count = nb * h * w;
    if mode == BnMode::Train && nb < 2 {
        return Err(Error::InvalidArgument(
            "batchnorm train mode needs batch size >= 2".into(),
        ));
    }

    let (mean, var) = match mode {
        BnMode::Train => {
            let mut mean = vec![0.0; c];
            let mut var = vec![0.0; c];
            for chunk in x.data.chunks_exact(c) {
                for (m, &v) in mean.iter_mut().zip(chunk) {
                    *m += v;
                }
            }
            for m in mean.iter_mut() {
                *m /= count as f64;
            }
            for chunk in x.data.chunks_exact(c) {
                for i in 0..c {
                    let d = chunk[i] - mean[i];
                    var[i] += d * d;
                }
            }
            for v in var.iter_mut() {
                *v /= count as f64;
            }
            for i in 0..c {
                p.running_mean[i] = p.momentum * p.running_mean[i] + (1.0 - p.momentum) * mean[i];
                p.running_var[i] = p.momentum * p.running_var[i] + (1.0 - p.momentum) * var[i];
            }
            (mean, var)
        }
        BnMode::Infer => (p.running_mean.clone(), p.running_var.clone()),
    };

    let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / (v + p.epsilon).sqrt()).collect();
    let mut xhat = Tensor4::zeros(x.dims);
    let mut out = Tensor4::zeros(x.dims);
    for (i, chunk) in x.data.chunks_exact(c).enumerate() {
        for j in 0..c {
            let xh = (chunk[j] - mean[j]) * inv_std[j];
            xhat.data[i * c + j] = xh;
            out.data[i * c + j] = p.scale[j] * xh + p.shift[j];
        }
    }
    Ok((out, BatchNormCache { xhat, inv_std }))
}

/// Full train-mode gradient through the batch statistics. Returns
/// `(grad_x, grad_scale, grad_shift)`.
pub fn batchnorm_backward(
    p: &BatchNormParams,
    cache: &BatchNormCache,
    upstream: &Tensor4,
) -> Result<(Tensor4, Vec<f64>, Vec<f64>)> {
    let c = p.channels();
    if upstream.dims != cache.xhat.dims {
        return Err(Error::ShapeMismatch(format!(
            "upstream {:?} vs cached {:?}",
            upstream.dims, cache.xhat.dims
        )));
    }
    let count = (upstream.dims[0] * upstream.dims[1] * upstream.dims[2]) as f64;

    let mut grad_scale = vec![0.0; c];
    let mut grad_shift = vec![0.0; c];
    let mut sum_dxhat = vec![0.0; c];
    let mut sum_dxhat_xhat = vec![0.0; c];

    for (up_chunk, xh_chunk) in upstream
        .data
        .chunks_exact(c)
        .zip(cache.xhat.data.chunks_exact(c))
    {
        for j in 0..c {
            let u = up_chunk[j];
            let xh = xh_chunk[j];
            grad_scale[j] += u * xh;
            grad_shift[j] += u;
            let dxh = u * p.scale[j];
            sum_dxhat[j] += dxh;
            sum_dxhat_xhat[j] += dxh * xh;
        }
    }

    let mut grad_x = Tensor4::zeros(upstream.dims);
    for (i, (up_chunk, xh_chunk)) in upstream
        .data
        .chunks_exact(c)
        .zip(cache.xhat.data.chunks_exact(c))
        .enumerate()
    {
        for j in 0..c {
            let dxh = up_chunk[j] * p.scale[j];
            let g = (count * dxh - sum_dxhat[j] - xh_chunk[j] * sum_dxhat_xhat[j])
                * cache.inv_std[j]
                / count;
            grad_x.data[i * c + j] = g;
        }
    }
    Ok((grad_x, grad_scale, grad_shift))
}
