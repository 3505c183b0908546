//! Parallel-beam projection geometry, the forward Radon transform and the
//! explicit sparse backprojection operator.
//!
//! The backprojector is a pixel-driven operator with linear interpolation on
//! the detector axis: for every pixel inside the inscribed circle and every
//! angle, the pixel's signed offset lands between (at most) two detector bins
//! whose interpolation weights sum to 1. The forward projector is the
//! transpose sampling of the same weights, so the adjoint identity
//! `<radon(u), x> == <u, backproject_unscaled(x)>` holds to round-off.

use crate::error::{Error, Result};

/// Discrete parallel-beam acquisition geometry.
///
/// The detector has exactly `image_size` bins of unit pitch, centered so that
/// bin `k` sits at signed offset `k - (M-1)/2` from the rotation center.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub image_size: usize,
    pub angles: Vec<f64>,
}

/// Angle layout for [`make_geometry`].
#[derive(Debug, Clone)]
pub enum AngleSpec {
    /// `N` angles `k * pi / N`, `k = 0..N-1`.
    Uniform(usize),
    Explicit(Vec<f64>),
}

impl Geometry {
    pub fn num_angles(&self) -> usize {
        self.angles.len()
    }

    pub fn detector_count(&self) -> usize {
        self.image_size
    }

    /// Rotation center coordinate along either axis.
    pub fn center(&self) -> f64 {
        (self.image_size as f64 - 1.0) / 2.0
    }

    /// Radius of the inscribed circle that the FBP pipeline reconstructs.
    pub fn mask_radius(&self) -> f64 {
        (self.image_size as f64 - 1.0) / 2.0
    }
}

pub fn make_geometry(image_size: usize, spec: AngleSpec) -> Result<Geometry> {
    if image_size < 8 {
        return Err(Error::InvalidGeometry(format!(
            "image_size must be >= 8, got {image_size}"
        )));
    }
    let angles = match spec {
        AngleSpec::Uniform(n) => {
            if n == 0 {
                return Err(Error::InvalidGeometry("need at least one angle".into()));
            }
            (0..n).map(|k| k as f64 * std::f64::consts::PI / n as f64).collect()
        }
        AngleSpec::Explicit(angles) => {
            if angles.is_empty() {
                return Err(Error::InvalidGeometry("need at least one angle".into()));
            }
            for w in angles.windows(2) {
                if w[1] <= w[0] {
                    return Err(Error::InvalidGeometry(
                        "angles must be strictly increasing".into(),
                    ));
                }
            }
            let last = *angles.last().unwrap();
            if angles[0] < 0.0 || last >= std::f64::consts::PI {
                return Err(Error::InvalidGeometry(
                    "angles must lie in [0, pi)".into(),
                ));
            }
            angles
        }
    };
    Ok(Geometry { image_size, angles })
}

/// An `M x M` image with row-major pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub size: usize,
    pub pixels: Vec<f64>,
}

impl Image {
    pub fn zeros(size: usize) -> Self {
        Image { size, pixels: vec![0.0; size * size] }
    }

    pub fn from_pixels(size: usize, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != size * size {
            return Err(Error::ShapeMismatch(format!(
                "expected {} pixels, got {}",
                size * size,
                pixels.len()
            )));
        }
        if !pixels.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("image pixels".into()));
        }
        Ok(Image { size, pixels })
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.pixels[y * self.size + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: f64) {
        self.pixels[y * self.size + x] = v;
    }

    /// Zeroes every pixel outside the inscribed circle.
    pub fn masked(&self) -> Image {
        let mut out = self.clone();
        let c = (self.size as f64 - 1.0) / 2.0;
        let r2 = c * c;
        for y in 0..self.size {
            for x in 0..self.size {
                let dx = x as f64 - c;
                let dy = y as f64 - c;
                if dx * dx + dy * dy > r2 {
                    out.set(y, x, 0.0);
                }
            }
        }
        out
    }
}

/// An `M x N` sinogram: `M` detector bins by `N` projection angles,
/// row-major (detector index slow, angle index fast), matching the
/// vectorization used by the sparse backprojector.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    pub geom: Geometry,
    pub samples: Vec<f64>,
}

impl Sinogram {
    pub fn zeros(geom: Geometry) -> Self {
        let n = geom.image_size * geom.num_angles();
        Sinogram { geom, samples: vec![0.0; n] }
    }

    pub fn from_samples(geom: Geometry, samples: Vec<f64>) -> Result<Self> {
        if samples.len() != geom.image_size * geom.num_angles() {
            return Err(Error::ShapeMismatch(format!(
                "expected {}x{} sinogram, got {} samples",
                geom.image_size,
                geom.num_angles(),
                samples.len()
            )));
        }
        if !samples.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("sinogram samples".into()));
        }
        Ok(Sinogram { geom, samples })
    }

    pub fn detector_count(&self) -> usize {
        self.geom.image_size
    }

    pub fn num_angles(&self) -> usize {
        self.geom.num_angles()
    }

    #[inline]
    pub fn get(&self, bin: usize, angle: usize) -> f64 {
        self.samples[bin * self.num_angles() + angle]
    }

    #[inline]
    pub fn set(&mut self, bin: usize, angle: usize, v: f64) {
        let n = self.num_angles();
        self.samples[bin * n + angle] = v;
    }
}

/// The sparse backprojection matrix `B` in CSR form, one row per image pixel.
///
/// Stored weights are the raw interpolation weights; the FBP normalization
/// `pi / N` is kept as a separate scalar and applied by [`backproject`].
#[derive(Debug, Clone)]
pub struct SparseBackprojector {
    pub rows: usize,
    pub cols: usize,
    image_size: usize,
    num_angles: usize,
    angles: Vec<f64>,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    weights: Vec<f64>,
    /// FBP backprojection normalization folded into `B`.
    pub scale: f64,
}

pub fn build_backprojector(geom: &Geometry) -> SparseBackprojector {
    let m = geom.image_size;
    let n = geom.num_angles();
    let c = geom.center();
    let r2 = geom.mask_radius() * geom.mask_radius();

    let trig: Vec<(f64, f64)> = geom.angles.iter().map(|&a| (a.cos(), a.sin())).collect();

    let mut row_ptr = Vec::with_capacity(m * m + 1);
    let mut col_idx: Vec<u32> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    row_ptr.push(0);

    for y in 0..m {
        let dy = y as f64 - c;
        for x in 0..m {
            let dx = x as f64 - c;
            if dx * dx + dy * dy <= r2 {
                for (j, &(cos_a, sin_a)) in trig.iter().enumerate() {
                    // Signed detector offset of this pixel under angle j,
                    // expressed as a continuous bin coordinate.
                    let p = dx * cos_a + dy * sin_a + c;
                    let k0 = p.floor();
                    let f = p - k0;
                    let k0 = k0 as i64;
                    if (1.0 - f) > 0.0 && k0 >= 0 && (k0 as usize) < m {
                        col_idx.push((k0 as usize * n + j) as u32);
                        weights.push(1.0 - f);
                    }
                    let k1 = k0 + 1;
                    if f > 0.0 && k1 >= 0 && (k1 as usize) < m {
                        col_idx.push((k1 as usize * n + j) as u32);
                        weights.push(f);
                    }
                }
            }
            row_ptr.push(col_idx.len());
        }
    }

    SparseBackprojector {
        rows: m * m,
        cols: m * n,
        image_size: m,
        num_angles: n,
        angles: geom.angles.clone(),
        row_ptr,
        col_idx,
        weights,
        scale: std::f64::consts::PI / n as f64,
    }
}

impl SparseBackprojector {
    pub fn nnz(&self) -> usize {
        self.weights.len()
    }

    fn check_sino(&self, x: &Sinogram) -> Result<()> {
        if x.samples.len() != self.cols
            || x.detector_count() != self.image_size
            || x.num_angles() != self.num_angles
        {
            return Err(Error::ShapeMismatch(format!(
                "sinogram {}x{} does not match operator for {}x{}",
                x.detector_count(),
                x.num_angles(),
                self.image_size,
                self.num_angles
            )));
        }
        Ok(())
    }

    /// `reshape(B . vec(x), [M, M])` with the `pi/N` normalization.
    pub fn backproject(&self, x: &Sinogram) -> Result<Image> {
        self.check_sino(x)?;
        Ok(self.apply_vec(&x.samples, self.scale))
    }

    /// Backprojection with unit scale, the true adjoint of [`Self::radon`].
    pub fn backproject_unscaled(&self, x: &Sinogram) -> Result<Image> {
        self.check_sino(x)?;
        Ok(self.apply_vec(&x.samples, 1.0))
    }

    fn apply_vec(&self, sino: &[f64], scale: f64) -> Image {
        let m = self.image_size;
        let mut pixels = vec![0.0; m * m];
        for (row, px) in pixels.iter_mut().enumerate() {
            let lo = self.row_ptr[row];
            let hi = self.row_ptr[row + 1];
            let mut acc = 0.0;
            for k in lo..hi {
                acc += self.weights[k] * sino[self.col_idx[k] as usize];
            }
            *px = acc * scale;
        }
        Image { size: m, pixels }
    }

    /// Forward Radon transform: the transpose sampling of `B` (unit scale).
    /// Pixels outside the inscribed circle have empty rows and so do not
    /// contribute.
    pub fn radon(&self, u: &Image) -> Result<Sinogram> {
        if u.size != self.image_size {
            return Err(Error::ShapeMismatch(format!(
                "image size {} does not match operator size {}",
                u.size, self.image_size
            )));
        }
        let mut samples = vec![0.0; self.cols];
        for row in 0..self.rows {
            let v = u.pixels[row];
            if v == 0.0 {
                continue;
            }
            let lo = self.row_ptr[row];
            let hi = self.row_ptr[row + 1];
            for k in lo..hi {
                samples[self.col_idx[k] as usize] += self.weights[k] * v;
            }
        }
        Ok(Sinogram {
            geom: Geometry {
                image_size: self.image_size,
                angles: self.angles.clone(),
            },
            samples,
        })
    }

    /// Debug export: one `row col weight` line per entry of the scaled `B`,
    /// sorted by (row, col).
    pub fn export_triplets(&self) -> String {
        let mut out = String::new();
        for row in 0..self.rows {
            let lo = self.row_ptr[row];
            let hi = self.row_ptr[row + 1];
            let mut entries: Vec<(u32, f64)> = (lo..hi)
                .map(|k| (self.col_idx[k], self.weights[k] * self.scale))
                .collect();
            entries.sort_by_key(|e| e.0);
            for (col, w) in entries {
                out.push_str(&format!("{row} {col} {w:.17e}\n"));
            }
        }
        out
    }
}

/// Forward Radon transform of `u` under `geom`.
///
/// Convenience wrapper that builds the sparse operator; for repeated
/// projections build it once with [`build_backprojector`] and call
/// [`SparseBackprojector::radon`].
pub fn radon_forward(u: &Image, geom: &Geometry) -> Result<Sinogram> {
    if u.size != geom.image_size {
        return Err(Error::ShapeMismatch(format!(
            "image size {} vs geometry size {}",
            u.size, geom.image_size
        )));
    }
    let b = build_backprojector(geom);
    b.radon(u)
}

/// `reshape(B . vec(x), [M, M])`.
pub fn backproject(b: &SparseBackprojector, x: &Sinogram) -> Result<Image> {
    b.backproject(x)
}
