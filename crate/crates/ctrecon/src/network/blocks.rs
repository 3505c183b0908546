//! The two learned blocks: the residual sinogram denoiser (DnCNN-style,
//! 6 conv layers with an input-output shortcut) and the image
//! encoder/decoder (Red-CNN-style, 5 conv + 5 deconv stages with 3
//! shortcuts).

use crate::error::Result;
use crate::nn::{
    batchnorm_backward, batchnorm_forward, conv2d_backward, conv2d_forward, deconv2d_backward,
    deconv2d_forward, relu_backward, relu_forward, BatchNormCache, BatchNormParams, BnMode,
    ConvParams, Tensor4,
};
use crate::rng::CounterRng;

/// Sinogram block: conv+ReLU, 4x (conv+BN+ReLU), conv, plus the identity
/// shortcut from input to output.
#[derive(Debug, Clone)]
pub struct Sigma1 {
    pub convs: Vec<ConvParams>,
    pub bns: Vec<BatchNormParams>,
}

#[derive(Debug, Clone)]
pub struct Sigma1Grads {
    pub convs: Vec<ConvParams>,
    pub bn_scale: Vec<Vec<f64>>,
    pub bn_shift: Vec<Vec<f64>>,
}

pub struct Sigma1Cache {
    x: Tensor4,
    pre1: Tensor4,
    relus: Vec<Tensor4>,
    bn_pre: Vec<Tensor4>,
    bn_caches: Vec<BatchNormCache>,
}

impl Sigma1 {
    pub fn new(channels: usize, rng: &mut CounterRng) -> Self {
        let mut convs = Vec::with_capacity(6);
        convs.push(ConvParams::he_init(3, 3, 1, channels, rng));
        for _ in 0..4 {
            convs.push(ConvParams::he_init(3, 3, channels, channels, rng));
        }
        convs.push(ConvParams::he_init(3, 3, channels, 1, rng));
        let bns = (0..4).map(|_| BatchNormParams::new(channels)).collect();
        Sigma1 { convs, bns }
    }

    pub fn forward(&mut self, x: &Tensor4, mode: BnMode) -> Result<(Tensor4, Sigma1Cache)> {
        let pre1 = conv2d_forward(x, &self.convs[0])?;
        let mut relus = vec![relu_forward(&pre1)];
        let mut bn_pre = Vec::with_capacity(4);
        let mut bn_caches = Vec::with_capacity(4);
        for k in 0..4 {
            let conv_out = conv2d_forward(relus.last().unwrap(), &self.convs[k + 1])?;
            let (bn_out, cache) = batchnorm_forward(&conv_out, &mut self.bns[k], mode)?;
            bn_pre.push(bn_out.clone());
            bn_caches.push(cache);
            relus.push(relu_forward(&bn_out));
        }
        let residual = conv2d_forward(relus.last().unwrap(), &self.convs[5])?;
        let out = x.add(&residual)?;
        Ok((out, Sigma1Cache { x: x.clone(), pre1, relus, bn_pre, bn_caches }))
    }

    /// Returns `(grad_input, grads)`.
    pub fn backward(
        &self,
        cache: &Sigma1Cache,
        upstream: &Tensor4,
    ) -> Result<(Tensor4, Sigma1Grads)> {
        let mut conv_grads: Vec<Option<ConvParams>> = vec![None; 6];
        let mut bn_scale = vec![Vec::new(); 4];
        let mut bn_shift = vec![Vec::new(); 4];

        let (mut g, gc5) = conv2d_backward(&cache.relus[4], &self.convs[5], upstream)?;
        conv_grads[5] = Some(gc5);
        for k in (0..4).rev() {
            let g_bn_out = relu_backward(&cache.bn_pre[k], &g)?;
            let (g_conv_out, gs, gb) =
                batchnorm_backward(&self.bns[k], &cache.bn_caches[k], &g_bn_out)?;
            bn_scale[k] = gs;
            bn_shift[k] = gb;
            let (g_prev, gc) = conv2d_backward(&cache.relus[k], &self.convs[k + 1], &g_conv_out)?;
            conv_grads[k + 1] = Some(gc);
            g = g_prev;
        }
        let g_pre1 = relu_backward(&cache.pre1, &g)?;
        let (g_x, gc0) = conv2d_backward(&cache.x, &self.convs[0], &g_pre1)?;
        conv_grads[0] = Some(gc0);

        // Identity shortcut: upstream flows to the input unchanged.
        let grad_input = g_x.add(upstream)?;
        Ok((
            grad_input,
            Sigma1Grads {
                convs: conv_grads.into_iter().map(Option::unwrap).collect(),
                bn_scale,
                bn_shift,
            },
        ))
    }
}

/// Image block: 5 conv+ReLU encoder stages, 5 deconv decoder stages, with
/// shortcuts from the FBP input, encoder stage 2 and encoder stage 4 into
/// the decoder, each added before the stage's activation.
#[derive(Debug, Clone)]
pub struct Sigma2 {
    pub convs: Vec<ConvParams>,
    pub deconvs: Vec<ConvParams>,
}

#[derive(Debug, Clone)]
pub struct Sigma2Grads {
    pub convs: Vec<ConvParams>,
    pub deconvs: Vec<ConvParams>,
}

pub struct Sigma2Cache {
    v: Tensor4,
    enc_relu: Vec<Tensor4>,   // e8..e12
    dec_pre: Vec<Tensor4>,    // pre-activation (after shortcut add) of d13..d16
    dec_relu: Vec<Tensor4>,   // d13..d16
    final_pre: Tensor4,       // deconv17(d16) + v
}

impl Sigma2 {
    pub fn new(channels: usize, rng: &mut CounterRng) -> Self {
        let mut convs = Vec::with_capacity(5);
        convs.push(ConvParams::he_init(5, 5, 1, channels, rng));
        for _ in 0..4 {
            convs.push(ConvParams::he_init(5, 5, channels, channels, rng));
        }
        let mut deconvs = Vec::with_capacity(5);
        for _ in 0..4 {
            deconvs.push(ConvParams::he_init(5, 5, channels, channels, rng));
        }
        deconvs.push(ConvParams::he_init(5, 5, channels, 1, rng));
        Sigma2 { convs, deconvs }
    }

    pub fn forward(&self, v: &Tensor4) -> Result<(Tensor4, Sigma2Cache)> {
        let mut enc_relu = Vec::with_capacity(5);
        let mut h = v.clone();
        for c in &self.convs {
            let pre = conv2d_forward(&h, c)?;
            h = relu_forward(&pre);
            enc_relu.push(h.clone());
        }

        let mut dec_pre = Vec::with_capacity(4);
        let mut dec_relu = Vec::with_capacity(4);
        // d13: skip from encoder stage 4 (paper layer 11)
        let pre13 = deconv2d_forward(&enc_relu[4], &self.deconvs[0])?.add(&enc_relu[3])?;
        let d13 = relu_forward(&pre13);
        dec_pre.push(pre13);
        dec_relu.push(d13);
        let pre14 = deconv2d_forward(&dec_relu[0], &self.deconvs[1])?;
        let d14 = relu_forward(&pre14);
        dec_pre.push(pre14);
        dec_relu.push(d14);
        // d15: skip from encoder stage 2 (paper layer 9)
        let pre15 = deconv2d_forward(&dec_relu[1], &self.deconvs[2])?.add(&enc_relu[1])?;
        let d15 = relu_forward(&pre15);
        dec_pre.push(pre15);
        dec_relu.push(d15);
        let pre16 = deconv2d_forward(&dec_relu[2], &self.deconvs[3])?;
        let d16 = relu_forward(&pre16);
        dec_pre.push(pre16);
        dec_relu.push(d16);
        // final stage: deconv to one channel, add the FBP input, ReLU
        let final_pre = deconv2d_forward(&dec_relu[3], &self.deconvs[4])?.add(v)?;
        let out = relu_forward(&final_pre);
        Ok((out, Sigma2Cache { v: v.clone(), enc_relu, dec_pre, dec_relu, final_pre }))
    }

    pub fn backward(
        &self,
        cache: &Sigma2Cache,
        upstream: &Tensor4,
    ) -> Result<(Tensor4, Sigma2Grads)> {
        let g_final_pre = relu_backward(&cache.final_pre, upstream)?;
        let mut grad_v = g_final_pre.clone(); // FBP shortcut

        let (g_d16, gd4) = deconv2d_backward(&cache.dec_relu[3], &self.deconvs[4], &g_final_pre)?;
        let g_pre16 = relu_backward(&cache.dec_pre[3], &g_d16)?;
        let (g_d15, gd3) = deconv2d_backward(&cache.dec_relu[2], &self.deconvs[3], &g_pre16)?;
        let g_pre15 = relu_backward(&cache.dec_pre[2], &g_d15)?;
        // shortcut into encoder stage 2
        let mut g_enc: Vec<Option<Tensor4>> = vec![None; 5];
        g_enc[1] = Some(g_pre15.clone());
        let (g_d14, gd2) = deconv2d_backward(&cache.dec_relu[1], &self.deconvs[2], &g_pre15)?;
        let g_pre14 = relu_backward(&cache.dec_pre[1], &g_d14)?;
        let (g_d13, gd1) = deconv2d_backward(&cache.dec_relu[0], &self.deconvs[1], &g_pre14)?;
        let g_pre13 = relu_backward(&cache.dec_pre[0], &g_d13)?;
        // shortcut into encoder stage 4
        g_enc[3] = Some(g_pre13.clone());
        let (g_e12, gd0) = deconv2d_backward(&cache.enc_relu[4], &self.deconvs[0], &g_pre13)?;
        g_enc[4] = Some(g_e12);

        let mut conv_grads: Vec<Option<ConvParams>> = vec![None; 5];
        let mut g = g_enc[4].take().unwrap();
        for k in (0..5).rev() {
            if let Some(extra) = g_enc[k].take() {
                g = g.add(&extra)?;
            }
            // pre-activation values are not cached for the encoder; ReLU
            // masking against the ReLU output is equivalent (both are > 0 on
            // exactly the same entries).
            let g_pre = relu_backward(&cache.enc_relu[k], &g)?;
            let input = if k == 0 { &cache.v } else { &cache.enc_relu[k - 1] };
            let (g_in, gc) = conv2d_backward(input, &self.convs[k], &g_pre)?;
            conv_grads[k] = Some(gc);
            g = g_in;
        }
        grad_v = grad_v.add(&g)?;

        Ok((
            grad_v,
            Sigma2Grads {
                convs: conv_grads.into_iter().map(Option::unwrap).collect(),
                deconvs: vec![gd0, gd1, gd2, gd3, gd4],
            },
        ))
    }
}
