//! End-to-end network: sinogram block, FBP layer, image block, the
//! dual-domain loss and its full gradient path (including the FBP adjoint
//! route into the sinogram block), plus the training loop.

pub mod blocks;
pub mod train;

pub use blocks::{Sigma1, Sigma1Grads, Sigma2, Sigma2Grads};
pub use train::{history_to_csv, train, HistoryRow, TrainConfig, TrainResult};

use crate::error::{Error, Result};
use crate::fbp::FbpLayer;
use crate::geometry::{Geometry, Image, Sinogram};
use crate::nn::checkpoint::ArrayEntry;
use crate::nn::{mse, mse_grad, BnMode, Tensor4};
use crate::rng::CounterRng;

/// A supervised `(x, y, u)` triple: noisy input sinogram, clean sinogram
/// label (always 180 angles) and CT image label.
#[derive(Debug, Clone)]
pub struct TrainingSample {
    pub x: Sinogram,
    pub y: Sinogram,
    pub u: Image,
}

#[derive(Debug, Clone)]
pub struct DualDomainNetwork {
    pub sigma1: Sigma1,
    pub sigma2: Sigma2,
    pub fbp: FbpLayer,
    /// Sinograms are multiplied by this before entering the sinogram block
    /// (and the sinogram loss term is computed in the scaled domain), so
    /// both loss terms operate on `[0, 255]`-magnitude data.
    pub sino_scale: f64,
    pub sigma1_channels: usize,
    pub sigma2_channels: usize,
    /// Test hook: zero the gradient flowing through the FBP adjoint,
    /// isolating the direct sinogram-loss path.
    pub disable_fbp_vjp: bool,
}

pub struct FullCache {
    pub x_scaled: Tensor4,
    pub s1_cache: blocks::Sigma1Cache,
    pub s1_out_scaled: Tensor4,
    pub fbp_out: Tensor4,
    pub s2_cache: blocks::Sigma2Cache,
    pub ct_out: Tensor4,
}

/// Gradients for every learnable parameter of the network.
pub struct FullGrads {
    pub sigma1: Sigma1Grads,
    pub sigma2: Sigma2Grads,
}

pub fn sinogram_batch_to_tensor(sinos: &[&Sinogram]) -> Tensor4 {
    let m = sinos[0].detector_count();
    let n = sinos[0].num_angles();
    let mut t = Tensor4::zeros([sinos.len(), m, n, 1]);
    for (b, s) in sinos.iter().enumerate() {
        t.data[b * m * n..(b + 1) * m * n].copy_from_slice(&s.samples);
    }
    t
}

pub fn image_batch_to_tensor(images: &[&Image]) -> Tensor4 {
    let m = images[0].size;
    let mut t = Tensor4::zeros([images.len(), m, m, 1]);
    for (b, im) in images.iter().enumerate() {
        t.data[b * m * m..(b + 1) * m * m].copy_from_slice(&im.pixels);
    }
    t
}

pub fn tensor_to_images(t: &Tensor4) -> Vec<Image> {
    let [nb, h, w, c] = t.dims;
    assert_eq!(c, 1);
    assert_eq!(h, w);
    (0..nb)
        .map(|b| Image { size: h, pixels: t.data[b * h * w..(b + 1) * h * w].to_vec() })
        .collect()
}

fn scale_tensor(t: &Tensor4, s: f64) -> Tensor4 {
    Tensor4 { dims: t.dims, data: t.data.iter().map(|&v| v * s).collect() }
}

impl DualDomainNetwork {
    /// Fresh network with He-initialized filters; deterministic per seed.
    pub fn new(
        geom: Geometry,
        sigma1_channels: usize,
        sigma2_channels: usize,
        sino_scale: f64,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = CounterRng::new(seed, 0xC0DE);
        let sigma1 = Sigma1::new(sigma1_channels, &mut rng);
        let sigma2 = Sigma2::new(sigma2_channels, &mut rng);
        let fbp = FbpLayer::new(geom)?;
        Ok(DualDomainNetwork {
            sigma1,
            sigma2,
            fbp,
            sino_scale,
            sigma1_channels,
            sigma2_channels,
            disable_fbp_vjp: false,
        })
    }

    pub fn geometry(&self) -> &Geometry {
        &self.fbp.geom
    }

    /// Applies the FBP layer per batch sample.
    fn fbp_batch(&self, sino_raw: &Tensor4) -> Result<Tensor4> {
        let [nb, m, n, _] = sino_raw.dims;
        let mut out = Tensor4::zeros([nb, m, m, 1]);
        for b in 0..nb {
            let s = Sinogram {
                geom: self.fbp.geom.clone(),
                samples: sino_raw.data[b * m * n..(b + 1) * m * n].to_vec(),
            };
            let img = self.fbp.forward(&s)?;
            out.data[b * m * m..(b + 1) * m * m].copy_from_slice(&img.pixels);
        }
        Ok(out)
    }

    fn fbp_vjp_batch(&self, upstream_img: &Tensor4) -> Result<Tensor4> {
        let [nb, m, _, _] = upstream_img.dims;
        let n = self.fbp.geom.num_angles();
        let mut out = Tensor4::zeros([nb, m, n, 1]);
        for b in 0..nb {
            let g = Image {
                size: m,
                pixels: upstream_img.data[b * m * m..(b + 1) * m * m].to_vec(),
            };
            let s = self.fbp.vjp(&g)?;
            out.data[b * m * n..(b + 1) * m * n].copy_from_slice(&s.samples);
        }
        Ok(out)
    }

    /// Full pipeline on a raw-unit sinogram batch `(B, M, N, 1)`; returns the
    /// cache holding the scaled sinogram-block output and the CT output.
    pub fn forward_full(&mut self, x_raw: &Tensor4, mode: BnMode) -> Result<FullCache> {
        let expect_n = self.fbp.geom.num_angles();
        let m = self.fbp.geom.image_size;
        if x_raw.dims[1] != m || x_raw.dims[2] != expect_n || x_raw.dims[3] != 1 {
            return Err(Error::ShapeMismatch(format!(
                "input sinogram batch {:?}, expected (*, {m}, {expect_n}, 1)",
                x_raw.dims
            )));
        }
        let x_scaled = scale_tensor(x_raw, self.sino_scale);
        let (s1_out_scaled, s1_cache) = self.sigma1.forward(&x_scaled, mode)?;
        let sino_raw = scale_tensor(&s1_out_scaled, 1.0 / self.sino_scale);
        let fbp_out = self.fbp_batch(&sino_raw)?;
        let (ct_out, s2_cache) = self.sigma2.forward(&fbp_out)?;
        Ok(FullCache { x_scaled, s1_cache, s1_out_scaled, fbp_out, s2_cache, ct_out })
    }

    /// Dual-domain loss `lambda * mse_sino + (1 - lambda) * mse_image`, with
    /// the sinogram term in the scaled domain.
    pub fn loss(
        &self,
        cache: &FullCache,
        y_raw: &Tensor4,
        u: &Tensor4,
        lambda: f64,
    ) -> Result<f64> {
        check_lambda(lambda)?;
        let y_scaled = scale_tensor(y_raw, self.sino_scale);
        let sino_term = mse(&cache.s1_out_scaled, &y_scaled)?;
        let image_term = mse(&cache.ct_out, u)?;
        Ok(lambda * sino_term + (1.0 - lambda) * image_term)
    }

    /// Gradients of [`Self::loss`] for every parameter. The gradient into the
    /// sinogram block combines the direct sinogram-loss term with the chained
    /// image-loss term propagated through the FBP adjoint.
    pub fn backward_full(
        &self,
        cache: &FullCache,
        y_raw: &Tensor4,
        u: &Tensor4,
        lambda: f64,
    ) -> Result<FullGrads> {
        check_lambda(lambda)?;
        let y_scaled = scale_tensor(y_raw, self.sino_scale);

        let g_ct = scale_tensor(&mse_grad(&cache.ct_out, u)?, 1.0 - lambda);
        let (g_fbp_out, sigma2_grads) = self.sigma2.backward(&cache.s2_cache, &g_ct)?;

        let g_sino_raw = if self.disable_fbp_vjp {
            Tensor4::zeros(cache.s1_out_scaled.dims)
        } else {
            self.fbp_vjp_batch(&g_fbp_out)?
        };

        let direct = scale_tensor(&mse_grad(&cache.s1_out_scaled, &y_scaled)?, lambda);
        let chained = scale_tensor(&g_sino_raw, 1.0 / self.sino_scale);
        let g_s1_out = direct.add(&chained)?;
        let (_, sigma1_grads) = self.sigma1.backward(&cache.s1_cache, &g_s1_out)?;

        Ok(FullGrads { sigma1: sigma1_grads, sigma2: sigma2_grads })
    }

    /// Every learnable parameter tensor, in checkpoint order.
    pub fn params_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out: Vec<&mut Vec<f64>> = Vec::new();
        for c in self.sigma1.convs.iter_mut() {
            out.push(&mut c.filter);
            out.push(&mut c.bias);
        }
        for b in self.sigma1.bns.iter_mut() {
            out.push(&mut b.scale);
            out.push(&mut b.shift);
        }
        for c in self.sigma2.convs.iter_mut() {
            out.push(&mut c.filter);
            out.push(&mut c.bias);
        }
        for c in self.sigma2.deconvs.iter_mut() {
            out.push(&mut c.filter);
            out.push(&mut c.bias);
        }
        out
    }

    /// Gradient tensors in the same order as [`Self::params_mut`].
    pub fn grads_in_order(grads: &FullGrads) -> Vec<&Vec<f64>> {
        let mut out: Vec<&Vec<f64>> = Vec::new();
        for c in &grads.sigma1.convs {
            out.push(&c.filter);
            out.push(&c.bias);
        }
        for (s, b) in grads.sigma1.bn_scale.iter().zip(&grads.sigma1.bn_shift) {
            out.push(s);
            out.push(b);
        }
        for c in &grads.sigma2.convs {
            out.push(&c.filter);
            out.push(&c.bias);
        }
        for c in &grads.sigma2.deconvs {
            out.push(&c.filter);
            out.push(&c.bias);
        }
        out
    }

    /// Serializes every parameter (including batch-norm running stats) as
    /// named arrays for the checkpoint format.
    pub fn to_entries(&self) -> Vec<ArrayEntry> {
        let mut out = Vec::new();
        let conv_entry = |name: String, c: &crate::nn::ConvParams| {
            vec![
                ArrayEntry::new(
                    format!("{name}/filter"),
                    vec![c.kh, c.kw, c.in_ch, c.out_ch],
                    c.filter.clone(),
                )
                .unwrap(),
                ArrayEntry::new(format!("{name}/bias"), vec![c.out_ch], c.bias.clone()).unwrap(),
            ]
        };
        for (i, c) in self.sigma1.convs.iter().enumerate() {
            out.extend(conv_entry(format!("sigma1/conv{i}"), c));
        }
        for (i, b) in self.sigma1.bns.iter().enumerate() {
            let ch = b.channels();
            out.push(ArrayEntry::new(format!("sigma1/bn{i}/scale"), vec![ch], b.scale.clone()).unwrap());
            out.push(ArrayEntry::new(format!("sigma1/bn{i}/shift"), vec![ch], b.shift.clone()).unwrap());
            out.push(
                ArrayEntry::new(format!("sigma1/bn{i}/running_mean"), vec![ch], b.running_mean.clone())
                    .unwrap(),
            );
            out.push(
                ArrayEntry::new(format!("sigma1/bn{i}/running_var"), vec![ch], b.running_var.clone())
                    .unwrap(),
            );
        }
        for (i, c) in self.sigma2.convs.iter().enumerate() {
            out.extend(conv_entry(format!("sigma2/conv{i}"), c));
        }
        for (i, c) in self.sigma2.deconvs.iter().enumerate() {
            out.extend(conv_entry(format!("sigma2/deconv{i}"), c));
        }
        out.push(ArrayEntry::new("sino_scale", vec![1], vec![self.sino_scale]).unwrap());
        out
    }

    /// Restores parameters from checkpoint entries (shapes must match the
    /// network's configuration).
    pub fn load_entries(&mut self, entries: &[ArrayEntry]) -> Result<()> {
        let find = |name: &str| -> Result<&ArrayEntry> {
            entries
                .iter()
                .find(|e| e.name == name)
                .ok_or_else(|| Error::Checkpoint(format!("missing entry {name}")))
        };
        let load_conv = |c: &mut crate::nn::ConvParams, name: &str| -> Result<()> {
            let f = find(&format!("{name}/filter"))?;
            if f.dims != vec![c.kh, c.kw, c.in_ch, c.out_ch] {
                return Err(Error::Checkpoint(format!(
                    "{name}/filter has dims {:?}, expected {:?}",
                    f.dims,
                    [c.kh, c.kw, c.in_ch, c.out_ch]
                )));
            }
            c.filter.copy_from_slice(&f.data);
            let b = find(&format!("{name}/bias"))?;
            if b.data.len() != c.bias.len() {
                return Err(Error::Checkpoint(format!("{name}/bias length mismatch")));
            }
            c.bias.copy_from_slice(&b.data);
            Ok(())
        };
        for i in 0..self.sigma1.convs.len() {
            let name = format!("sigma1/conv{i}");
            let mut c = self.sigma1.convs[i].clone();
            load_conv(&mut c, &name)?;
            self.sigma1.convs[i] = c;
        }
        for i in 0..self.sigma1.bns.len() {
            let scale = find(&format!("sigma1/bn{i}/scale"))?.data.clone();
            let shift = find(&format!("sigma1/bn{i}/shift"))?.data.clone();
            let rm = find(&format!("sigma1/bn{i}/running_mean"))?.data.clone();
            let rv = find(&format!("sigma1/bn{i}/running_var"))?.data.clone();
            let b = &mut self.sigma1.bns[i];
            if scale.len() != b.channels() {
                return Err(Error::Checkpoint(format!("sigma1/bn{i} channel mismatch")));
            }
            b.scale = scale;
            b.shift = shift;
            b.running_mean = rm;
            b.running_var = rv;
        }
        for i in 0..self.sigma2.convs.len() {
            let name = format!("sigma2/conv{i}");
            let mut c = self.sigma2.convs[i].clone();
            load_conv(&mut c, &name)?;
            self.sigma2.convs[i] = c;
        }
        for i in 0..self.sigma2.deconvs.len() {
            let name = format!("sigma2/deconv{i}");
            let mut c = self.sigma2.deconvs[i].clone();
            load_conv(&mut c, &name)?;
            self.sigma2.deconvs[i] = c;
        }
        self.sino_scale = find("sino_scale")?.data[0];
        Ok(())
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidArgument(format!(
            "lambda must lie in [0, 1], got {lambda}"
        )));
    }
    Ok(())
}
