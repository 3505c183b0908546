//! Adam training of the dual-domain network with deterministic shuffling,
//! a fixed validation split and best-checkpoint tracking.

use crate::error::{Error, Result};
use crate::geometry::Geometry;
use crate::metrics;
use crate::network::{
    image_batch_to_tensor, sinogram_batch_to_tensor, tensor_to_images, DualDomainNetwork,
    TrainingSample,
};
use crate::nn::{adam_step, AdamHyper, AdamState, BnMode};
use crate::rng::CounterRng;
use std::time::Instant;

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub lambda: f64,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub sigma1_channels: usize,
    pub sigma2_channels: usize,
    pub seed: u64,
    /// Fraction of the training pairs held out for validation.
    pub val_fraction: f64,
    /// Report wall-clock as 0.0 in the history so that repeated runs with
    /// the same seed produce bit-identical files.
    pub suppress_timing: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 0.1,
            lr: 1e-3,
            epochs: 10,
            batch_size: 4,
            sigma1_channels: 16,
            sigma2_channels: 24,
            seed: 0,
            val_fraction: 0.1,
            suppress_timing: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_psnr_image: f64,
    pub val_psnr_sino: f64,
    pub wall_seconds: f64,
}

pub fn history_to_csv(history: &[HistoryRow]) -> String {
    let mut out = String::from("epoch,train_loss,val_psnr_image,val_psnr_sino,wall_seconds\n");
    for r in history {
        out.push_str(&format!(
            "{},{:.12e},{:.6},{:.6},{:.3}\n",
            r.epoch, r.train_loss, r.val_psnr_image, r.val_psnr_sino, r.wall_seconds
        ));
    }
    out
}

#[derive(Debug)]
pub struct TrainResult {
    /// Network with the best-validation parameters restored.
    pub network: DualDomainNetwork,
    pub history: Vec<HistoryRow>,
    pub best_val_psnr: f64,
    /// True when a non-finite loss aborted training early; the returned
    /// network is the last finite checkpoint.
    pub diverged: bool,
}

fn deterministic_shuffle(indices: &mut [usize], seed: u64, round: u64) {
    let mut rng = CounterRng::new(seed, 0x5BF0 ^ round);
    for i in (1..indices.len()).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        indices.swap(i, j);
    }
}

/// Validation scores in infer mode: image-domain PSNR of the CT output and
/// sinogram-domain PSNR of the sinogram block's output (scaled domain, peak
/// 255 in both).
fn validate(net: &mut DualDomainNetwork, val: &[&TrainingSample]) -> Result<(f64, f64)> {
    let mut psnr_img = 0.0;
    let mut psnr_sino = 0.0;
    for s in val {
        let x = sinogram_batch_to_tensor(&[&s.x]);
        let cache = net.forward_full(&x, BnMode::Infer)?;
        let ct = &tensor_to_images(&cache.ct_out)[0];
        psnr_img += metrics::psnr(ct, &s.u, 255.0)?.min(99.0);
        let y_scaled: Vec<f64> = s.y.samples.iter().map(|&v| v * net.sino_scale).collect();
        psnr_sino += metrics::psnr_flat(&cache.s1_out_scaled.data, &y_scaled, 255.0)?.min(99.0);
    }
    let n = val.len() as f64;
    Ok((psnr_img / n, psnr_sino / n))
}

/// Optimizes the dual-domain loss with Adam. Single-threaded and fully
/// deterministic for a fixed seed.
pub fn train(
    geom: Geometry,
    samples: &[TrainingSample],
    config: &TrainConfig,
) -> Result<TrainResult> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    if !(0.0..=1.0).contains(&config.lambda) {
        return Err(Error::InvalidArgument(format!(
            "lambda must lie in [0, 1], got {}",
            config.lambda
        )));
    }
    let m = geom.image_size;
    let n = geom.num_angles();
    for s in samples {
        if s.x.detector_count() != m
            || s.x.num_angles() != n
            || s.y.detector_count() != m
            || s.y.num_angles() != n
            || s.u.size != m
        {
            return Err(Error::ShapeMismatch(
                "training sample does not match geometry".into(),
            ));
        }
    }

    // Sinogram scaling: map the training-label maximum to 255.
    let max_y = samples
        .iter()
        .flat_map(|s| s.y.samples.iter().cloned())
        .fold(0.0, f64::max);
    if !(max_y > 0.0) {
        return Err(Error::InvalidArgument("training sinogram labels are all zero".into()));
    }
    let sino_scale = 255.0 / max_y;

    let mut net = DualDomainNetwork::new(
        geom,
        config.sigma1_channels,
        config.sigma2_channels,
        sino_scale,
        config.seed,
    )?;

    // Fixed validation split determined by the seed.
    let mut order: Vec<usize> = (0..samples.len()).collect();
    deterministic_shuffle(&mut order, config.seed, u64::MAX);
    let n_val = ((samples.len() as f64 * config.val_fraction).round() as usize)
        .clamp(1, samples.len().saturating_sub(1).max(1));
    let (val_idx, train_idx) = order.split_at(n_val.min(samples.len() - 1).max(1));
    let val: Vec<&TrainingSample> = val_idx.iter().map(|&i| &samples[i]).collect();
    let train_set: Vec<&TrainingSample> = train_idx.iter().map(|&i| &samples[i]).collect();

    let hyper = AdamHyper { lr: config.lr, ..AdamHyper::default() };
    let mut adam: Vec<AdamState> = net
        .params_mut()
        .iter()
        .map(|p| AdamState::new(p.len(), hyper))
        .collect();

    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, DualDomainNetwork)> = None;
    let mut diverged = false;
    let t0 = Instant::now();

    'epochs: for epoch in 0..config.epochs {
        let mut idx: Vec<usize> = (0..train_set.len()).collect();
        deterministic_shuffle(&mut idx, config.seed, epoch as u64);

        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in idx.chunks(config.batch_size.max(1)) {
            if chunk.len() < 2 {
                // batch norm needs at least 2 samples in train mode
                continue;
            }
            let xs: Vec<&crate::geometry::Sinogram> =
                chunk.iter().map(|&i| &train_set[i].x).collect();
            let ys: Vec<&crate::geometry::Sinogram> =
                chunk.iter().map(|&i| &train_set[i].y).collect();
            let us: Vec<&crate::geometry::Image> = chunk.iter().map(|&i| &train_set[i].u).collect();
            let x = sinogram_batch_to_tensor(&xs);
            let y = sinogram_batch_to_tensor(&ys);
            let u = image_batch_to_tensor(&us);

            let cache = net.forward_full(&x, BnMode::Train)?;
            let loss = net.loss(&cache, &y, &u, config.lambda)?;
            if !loss.is_finite() {
                diverged = true;
                break 'epochs;
            }
            epoch_loss += loss;
            batches += 1;

            let grads = net.backward_full(&cache, &y, &u, config.lambda)?;
            let grad_vecs: Vec<Vec<f64>> = DualDomainNetwork::grads_in_order(&grads)
                .into_iter()
                .cloned()
                .collect();
            for ((p, g), st) in net
                .params_mut()
                .into_iter()
                .zip(grad_vecs.iter())
                .zip(adam.iter_mut())
            {
                adam_step(p, g, st)?;
            }
        }

        let (val_psnr_image, val_psnr_sino) = validate(&mut net, &val)?;
        let train_loss = if batches > 0 { epoch_loss / batches as f64 } else { f64::NAN };
        let wall = if config.suppress_timing { 0.0 } else { t0.elapsed().as_secs_f64() };
        history.push(HistoryRow {
            epoch,
            train_loss,
            val_psnr_image,
            val_psnr_sino,
            wall_seconds: wall,
        });

        if best.as_ref().map_or(true, |(b, _)| val_psnr_image > *b) {
            best = Some((val_psnr_image, net.clone()));
        }
    }

    let (best_val_psnr, network) = match best {
        Some((b, n)) => (b, n),
        None => {
            if diverged {
                return Err(Error::Diverged { epoch: 0, loss: f64::NAN });
            }
            (f64::NEG_INFINITY, net)
        }
    };

    Ok(TrainResult { network, history, best_val_psnr, diverged })
}
