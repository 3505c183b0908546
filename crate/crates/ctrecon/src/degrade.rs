//! Low-dose sinogram degradation and the sparse-view angle protocols.
//!
//! The noise model maps clean line integrals `y` to noisy ones `x` through
//! the transmission domain:
//!
//! ```text
//! y_p = Poisson(b * exp(-y / max(y))) / b
//! y_g ~ Gaussian(0, var)
//! z   = clamp(y_p + y_g, 1e-12, 1)
//! x   = -max(y) * log(z)
//! ```
//!
//! The lower clamp guards the logarithm against Gaussian undershoot; the
//! upper clamp is part of the model. In the noiseless limit (`var = 0`,
//! Poisson replaced by its mean) the map is the identity.

use crate::error::{Error, Result};
use crate::geometry::{Geometry, Sinogram};
use crate::rng::CounterRng;

pub const TRANSMISSION_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseParams {
    /// Photon-count scale of the Poisson term.
    pub b: f64,
    /// Variance of the additive Gaussian term in the transmission domain.
    pub var: f64,
    pub seed: u64,
}

impl NoiseParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.b > 0.0) {
            return Err(Error::InvalidArgument(format!("b must be > 0, got {}", self.b)));
        }
        if !(self.var >= 0.0) {
            return Err(Error::InvalidArgument(format!("var must be >= 0, got {}", self.var)));
        }
        Ok(())
    }
}

/// Sampling mode for [`degrade`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DegradeMode {
    Stochastic,
    /// Replaces the Poisson draw by its mean; used by the noiseless-limit
    /// tests together with `var = 0`.
    DeterministicMean,
}

/// Applies the low-dose degradation model entrywise. Deterministic for a
/// fixed seed; each entry uses its own counter-based stream, so the result
/// does not depend on evaluation order.
pub fn degrade(y: &Sinogram, p: &NoiseParams, mode: DegradeMode) -> Result<Sinogram> {
    p.validate()?;
    if y.samples.iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidArgument("sinogram has negative entries".into()));
    }
    let max_y = y.samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(max_y > 0.0) {
        return Err(Error::InvalidArgument(
            "degrade needs a sinogram with max(y) > 0".into(),
        ));
    }
    let mut out = y.clone();
    for (idx, v) in out.samples.iter_mut().enumerate() {
        let t = (-*v / max_y).exp();
        let mut rng = CounterRng::new(p.seed, idx as u64);
        let y_p = match mode {
            DegradeMode::Stochastic => rng.poisson(p.b * t) / p.b,
            DegradeMode::DeterministicMean => t,
        };
        let y_g = if p.var > 0.0 {
            p.var.sqrt() * rng.normal()
        } else {
            0.0
        };
        let z = (y_p + y_g).clamp(TRANSMISSION_FLOOR, 1.0);
        *v = -max_y * z.ln();
    }
    Ok(out)
}

/// Keeps every `stride`-th angle column (starting at column 0).
pub fn subsample_angles(y: &Sinogram, stride: usize) -> Result<Sinogram> {
    let n = y.num_angles();
    if stride == 0 || n % stride != 0 {
        return Err(Error::InvalidArgument(format!(
            "stride {stride} does not divide angle count {n}"
        )));
    }
    let m = y.detector_count();
    let n_out = n / stride;
    let angles: Vec<f64> = (0..n_out).map(|k| y.geom.angles[k * stride]).collect();
    let geom = Geometry { image_size: y.geom.image_size, angles };
    let mut out = Sinogram::zeros(geom);
    for i in 0..m {
        for k in 0..n_out {
            out.samples[i * n_out + k] = y.samples[i * n + k * stride];
        }
    }
    Ok(out)
}

/// Linearly interpolates each detector row from a uniform source angle grid
/// onto a uniform `target_n` grid over the same `[0, pi)` span. Source
/// columns land exactly on target nodes when `target_n` is a multiple of the
/// source count. The final interval past the last source angle wraps to the
/// angle-0 column with the detector axis reversed (`p(theta + pi, s) =
/// p(theta, -s)`).
pub fn interpolate_angles(y_sub: &Sinogram, target_n: usize) -> Result<Sinogram> {
    let n_src = y_sub.num_angles();
    if target_n < n_src {
        return Err(Error::InvalidArgument(format!(
            "target angle count {target_n} smaller than source {n_src}"
        )));
    }
    let m = y_sub.detector_count();
    let geom = Geometry {
        image_size: y_sub.geom.image_size,
        angles: (0..target_n)
            .map(|k| k as f64 * std::f64::consts::PI / target_n as f64)
            .collect(),
    };
    let mut out = Sinogram::zeros(geom);
    for j in 0..target_n {
        let s = j as f64 * n_src as f64 / target_n as f64;
        let k0 = s.floor() as usize;
        let f = s - k0 as f64;
        for i in 0..m {
            let a = y_sub.samples[i * n_src + k0.min(n_src - 1)];
            let v = if f == 0.0 {
                a
            } else {
                let b = if k0 + 1 < n_src {
                    y_sub.samples[i * n_src + k0 + 1]
                } else {
                    // pi-wraparound neighbor: angle 0, detector flipped.
                    y_sub.samples[(m - 1 - i) * n_src]
                };
                (1.0 - f) * a + f * b
            };
            out.samples[i * target_n + j] = v;
        }
    }
    Ok(out)
}
