//! PSNR and SSIM, evaluated inside the inscribed circle that the FBP
//! pipeline reconstructs.

use crate::error::{Error, Result};
use crate::geometry::Image;

/// Mean squared error over the inscribed-circle mask.
pub fn masked_mse(a: &Image, b: &Image) -> Result<f64> {
    if a.size != b.size {
        return Err(Error::ShapeMismatch(format!(
            "psnr: {} vs {}",
            a.size, b.size
        )));
    }
    let m = a.size;
    let c = (m as f64 - 1.0) / 2.0;
    let r2 = c * c;
    let mut sum = 0.0;
    let mut count = 0usize;
    for y in 0..m {
        let dy = y as f64 - c;
        for x in 0..m {
            let dx = x as f64 - c;
            if dx * dx + dy * dy <= r2 {
                let d = a.get(y, x) - b.get(y, x);
                sum += d * d;
                count += 1;
            }
        }
    }
    Ok(sum / count as f64)
}

/// `10 log10(peak^2 / mse)` inside the circle mask; identical images give
/// `+infinity`.
pub fn psnr(a: &Image, b: &Image, peak: f64) -> Result<f64> {
    if !(peak > 0.0) {
        return Err(Error::InvalidArgument(format!("peak must be > 0, got {peak}")));
    }
    let mse = masked_mse(a, b)?;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

/// PSNR between two raw sample buffers (used for sinogram-domain scores);
/// no mask.
pub fn psnr_flat(a: &[f64], b: &[f64], peak: f64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch(format!(
            "psnr_flat: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let mse: f64 = a
        .iter()
        .zip(b.iter())
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn gaussian_window() -> [f64; SSIM_WINDOW * SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW * SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for y in 0..SSIM_WINDOW {
        for x in 0..SSIM_WINDOW {
            let dy = y as f64 - c;
            let dx = x as f64 - c;
            let v = (-(dx * dx + dy * dy) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
            w[y * SSIM_WINDOW + x] = v;
            sum += v;
        }
    }
    for v in w.iter_mut() {
        *v /= sum;
    }
    w
}

/// Mean local SSIM with an 11x11 Gaussian window (sigma 1.5), averaged over
/// window centers inside the circle mask. Windows are clipped at the image
/// border with weight renormalization.
pub fn ssim(a: &Image, b: &Image, peak: f64) -> Result<f64> {
    if a.size != b.size {
        return Err(Error::ShapeMismatch(format!(
            "ssim: {} vs {}",
            a.size, b.size
        )));
    }
    ssim_general(&a.pixels, &b.pixels, a.size, a.size, peak, true)
}

/// SSIM over a rectangular grid with no circle mask; used for
/// sinogram-domain scores.
pub fn ssim_rect(a: &[f64], b: &[f64], h: usize, w: usize, peak: f64) -> Result<f64> {
    if a.len() != h * w || b.len() != h * w {
        return Err(Error::ShapeMismatch(format!(
            "ssim_rect: buffers {} and {} vs {h}x{w}",
            a.len(),
            b.len()
        )));
    }
    ssim_general(a, b, h, w, peak, false)
}

fn ssim_general(a: &[f64], b: &[f64], h: usize, w: usize, peak: f64, mask: bool) -> Result<f64> {
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::InvalidArgument(format!(
            "image {h}x{w} smaller than SSIM window {SSIM_WINDOW}"
        )));
    }
    if !(peak > 0.0) {
        return Err(Error::InvalidArgument(format!("peak must be > 0, got {peak}")));
    }
    let half = SSIM_WINDOW / 2;
    let win = gaussian_window();
    let c1 = (SSIM_K1 * peak) * (SSIM_K1 * peak);
    let c2 = (SSIM_K2 * peak) * (SSIM_K2 * peak);

    let cm = (h as f64 - 1.0) / 2.0;
    let r2 = cm * cm;

    let mut total = 0.0;
    let mut count = 0usize;
    for py in 0..h {
        let dyc = py as f64 - cm;
        for px in 0..w {
            let dxc = px as f64 - cm;
            if mask && dxc * dxc + dyc * dyc > r2 {
                continue;
            }
            let mut wsum = 0.0;
            let mut ma = 0.0;
            let mut mb = 0.0;
            for wy in 0..SSIM_WINDOW {
                let y = py as i64 + wy as i64 - half as i64;
                if y < 0 || y >= h as i64 {
                    continue;
                }
                for wx in 0..SSIM_WINDOW {
                    let x = px as i64 + wx as i64 - half as i64;
                    if x < 0 || x >= w as i64 {
                        continue;
                    }
                    let wt = win[wy * SSIM_WINDOW + wx];
                    wsum += wt;
                    ma += wt * a[y as usize * w + x as usize];
                    mb += wt * b[y as usize * w + x as usize];
                }
            }
            ma /= wsum;
            mb /= wsum;
            let mut va = 0.0;
            let mut vb = 0.0;
            let mut cov = 0.0;
            for wy in 0..SSIM_WINDOW {
                let y = py as i64 + wy as i64 - half as i64;
                if y < 0 || y >= h as i64 {
                    continue;
                }
                for wx in 0..SSIM_WINDOW {
                    let x = px as i64 + wx as i64 - half as i64;
                    if x < 0 || x >= w as i64 {
                        continue;
                    }
                    let wt = win[wy * SSIM_WINDOW + wx] / wsum;
                    let da = a[y as usize * w + x as usize] - ma;
                    let db = b[y as usize * w + x as usize] - mb;
                    va += wt * da * da;
                    vb += wt * db * db;
                    cov += wt * da * db;
                }
            }
            let s = ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            total += s;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Per-image scores plus aggregate statistics.
#[derive(Debug, Clone, serde::Serialize)]
pub struct MetricReport {
    pub psnr: Vec<f64>,
    pub ssim: Vec<f64>,
    pub psnr_mean: f64,
    pub psnr_std: f64,
    pub ssim_mean: f64,
    pub ssim_std: f64,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl MetricReport {
    pub fn from_pairs(pairs: &[(Image, Image)], peak: f64) -> Result<MetricReport> {
        if pairs.is_empty() {
            return Err(Error::InvalidArgument("no image pairs to score".into()));
        }
        let mut ps = Vec::with_capacity(pairs.len());
        let mut ss = Vec::with_capacity(pairs.len());
        for (a, b) in pairs {
            ps.push(psnr(a, b, peak)?);
            ss.push(ssim(a, b, peak)?);
        }
        let (pm, pstd) = mean_std(&ps);
        let (sm, sstd) = mean_std(&ss);
        Ok(MetricReport {
            psnr: ps,
            ssim: ss,
            psnr_mean: pm,
            psnr_std: pstd,
            ssim_mean: sm,
            ssim_std: sstd,
        })
    }

    /// Per-image rows as CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,psnr,ssim\n");
        for (i, (p, s)) in self.psnr.iter().zip(self.ssim.iter()).enumerate() {
            out.push_str(&format!("{i},{p:.6},{s:.6}\n"));
        }
        out
    }
}
