//! Stride-1, same-padding 2-D convolution (as cross-correlation) and its
//! transposed counterpart, with exact reverse-mode gradients.
//!
//! Filter layout is `(kh, kw, in_ch, out_ch)`, out_ch fastest. The forward
//! map of [`deconv2d_forward`] with filter `f` is the adjoint of
//! [`conv2d_forward`] with the in/out axes of `f` swapped.

use crate::error::{Error, Result};
use crate::nn::tensor::Tensor4;
use crate::rng::CounterRng;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    pub kh: usize,
    pub kw: usize,
    pub in_ch: usize,
    pub out_ch: usize,
    /// `(kh, kw, in_ch, out_ch)` row-major.
    pub filter: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvParams {
    pub fn zeros(kh: usize, kw: usize, in_ch: usize, out_ch: usize) -> Self {
        assert!(kh % 2 == 1 && kw % 2 == 1, "kernel sides must be odd");
        ConvParams {
            kh,
            kw,
            in_ch,
            out_ch,
            filter: vec![0.0; kh * kw * in_ch * out_ch],
            bias: vec![0.0; out_ch],
        }
    }

    /// He-style initialization: zero biases, filter entries from a zero-mean
    /// normal with variance `2 / (kh * kw * in_ch)`.
    pub fn he_init(kh: usize, kw: usize, in_ch: usize, out_ch: usize, rng: &mut CounterRng) -> Self {
        let mut p = Self::zeros(kh, kw, in_ch, out_ch);
        let std = (2.0 / (kh * kw * in_ch) as f64).sqrt();
        for w in p.filter.iter_mut() {
            *w = std * rng.normal();
        }
        p
    }

    #[inline]
    pub fn fidx(&self, ky: usize, kx: usize, ic: usize, oc: usize) -> usize {
        ((ky * self.kw + kx) * self.in_ch + ic) * self.out_ch + oc
    }

    /// Returns a copy with the in/out channel axes swapped; the deconv with
    /// the swapped filter is the adjoint of the conv with the original.
    pub fn swap_io(&self) -> ConvParams {
        let mut out = ConvParams::zeros(self.kh, self.kw, self.out_ch, self.in_ch);
        for ky in 0..self.kh {
            for kx in 0..self.kw {
                for ic in 0..self.in_ch {
                    for oc in 0..self.out_ch {
                        let dst = out.fidx(ky, kx, oc, ic);
                        out.filter[dst] = self.filter[self.fidx(ky, kx, ic, oc)];
                    }
                }
            }
        }
        out
    }
}

fn check_channels(x: &Tensor4, p: &ConvParams) -> Result<()> {
    if x.dims[3] != p.in_ch {
        return Err(Error::ShapeMismatch(format!(
            "input has {} channels, filter expects {}",
            x.dims[3], p.in_ch
        )));
    }
    Ok(())
}

/// Same-padding stride-1 cross-correlation plus bias.
pub fn conv2d_forward(x: &Tensor4, p: &ConvParams) -> Result<Tensor4> {
    check_channels(x, p)?;
    let [nb, h, w, ic] = x.dims;
    let oc = p.out_ch;
    let (ch, cw) = (p.kh / 2, p.kw / 2);
    let mut out = Tensor4::zeros([nb, h, w, oc]);

    for b in 0..nb {
        for oy in 0..h {
            let ky_lo = ch.saturating_sub(oy);
            let ky_hi = p.kh.min(h + ch - oy);
            for ox in 0..w {
                let kx_lo = cw.saturating_sub(ox);
                let kx_hi = p.kw.min(w + cw - ox);
                let out_base = out.idx(b, oy, ox, 0);
                let acc = &mut out.data[out_base..out_base + oc];
                acc.copy_from_slice(&p.bias);
                for ky in ky_lo..ky_hi {
                    let iy = oy + ky - ch;
                    for kx in kx_lo..kx_hi {
                        let ix = ox + kx - cw;
                        let x_base = x.idx(b, iy, ix, 0);
                        let f_base = (ky * p.kw + kx) * ic * oc;
                        for i in 0..ic {
                            let xv = x.data[x_base + i];
                            if xv == 0.0 {
                                continue;
                            }
                            let f_row = &p.filter[f_base + i * oc..f_base + (i + 1) * oc];
                            for (a, &fv) in acc.iter_mut().zip(f_row) {
                                *a += xv * fv;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Gradients of [`conv2d_forward`] given the upstream gradient.
pub fn conv2d_backward(
    x: &Tensor4,
    p: &ConvParams,
    upstream: &Tensor4,
) -> Result<(Tensor4, ConvParams)> {
    check_channels(x, p)?;
    let [nb, h, w, ic] = x.dims;
    if upstream.dims != [nb, h, w, p.out_ch] {
        return Err(Error::ShapeMismatch(format!(
            "upstream {:?} vs expected {:?}",
            upstream.dims,
            [nb, h, w, p.out_ch]
        )));
    }
    let oc = p.out_ch;
    let (ch, cw) = (p.kh / 2, p.kw / 2);
    let mut grad_x = Tensor4::zeros(x.dims);
    let mut grad_p = ConvParams::zeros(p.kh, p.kw, ic, oc);

    // grad_bias: per-channel sum of upstream.
    for b in 0..nb {
        for y in 0..h {
            for xx in 0..w {
                let base = upstream.idx(b, y, xx, 0);
                for o in 0..oc {
                    grad_p.bias[o] += upstream.data[base + o];
                }
            }
        }
    }

    // grad_x[q, i] = sum_d upstream[q - d, o] * f[d, i, o]
    for b in 0..nb {
        for qy in 0..h {
            for qx in 0..w {
                let gx_base = grad_x.idx(b, qy, qx, 0);
                for ky in 0..p.kh {
                    let py = qy + ch;
                    if py < ky || py - ky >= h {
                        continue;
                    }
                    let uy = py - ky;
                    for kx in 0..p.kw {
                        let px = qx + cw;
                        if px < kx || px - kx >= w {
                            continue;
                        }
                        let ux = px - kx;
                        let up_base = upstream.idx(b, uy, ux, 0);
                        let up_row = &upstream.data[up_base..up_base + oc];
                        let f_base = (ky * p.kw + kx) * ic * oc;
                        for i in 0..ic {
                            let f_row = &p.filter[f_base + i * oc..f_base + (i + 1) * oc];
                            let mut acc = 0.0;
                            for (&u, &f) in up_row.iter().zip(f_row) {
                                acc += u * f;
                            }
                            grad_x.data[gx_base + i] += acc;
                        }
                    }
                }
            }
        }
    }

    // grad_f[d, i, o] = sum_p x[p + d, i] * upstream[p, o]
    for b in 0..nb {
        for py in 0..h {
            let ky_lo = ch.saturating_sub(py);
            let ky_hi = p.kh.min(h + ch - py);
            for px in 0..w {
                let kx_lo = cw.saturating_sub(px);
                let kx_hi = p.kw.min(w + cw - px);
                let up_base = upstream.idx(b, py, px, 0);
                let up_row = &upstream.data[up_base..up_base + oc];
                for ky in ky_lo..ky_hi {
                    let iy = py + ky - ch;
                    for kx in kx_lo..kx_hi {
                        let ix = px + kx - cw;
                        let x_base = x.idx(b, iy, ix, 0);
                        let f_base = (ky * p.kw + kx) * ic * oc;
                        for i in 0..ic {
                            let xv = x.data[x_base + i];
                            if xv == 0.0 {
                                continue;
                            }
                            let gf = &mut grad_p.filter[f_base + i * oc..f_base + (i + 1) * oc];
                            for (g, &u) in gf.iter_mut().zip(up_row) {
                                *g += xv * u;
                            }
                        }
                    }
                }
            }
        }
    }

    Ok((grad_x, grad_p))
}

/// Stride-1 transposed convolution with same padding:
/// `out[p, o] = bias[o] + sum_{d, i} x[p - d, i] * f[d, i, o]`
/// with `d` running over centered kernel offsets. Spatial dims are
/// preserved; with the in/out axes of `f` swapped this is the exact adjoint
/// of [`conv2d_forward`] (bias aside).
pub fn deconv2d_forward(x: &Tensor4, p: &ConvParams) -> Result<Tensor4> {
    check_channels(x, p)?;
    let [nb, h, w, ic] = x.dims;
    let oc = p.out_ch;
    let (ch, cw) = (p.kh / 2, p.kw / 2);
    let mut out = Tensor4::zeros([nb, h, w, oc]);

    for b in 0..nb {
        for oy in 0..h {
            for ox in 0..w {
                let out_base = out.idx(b, oy, ox, 0);
                let acc = &mut out.data[out_base..out_base + oc];
                acc.copy_from_slice(&p.bias);
                for ky in 0..p.kh {
                    let sy = oy + ch;
                    if sy < ky || sy - ky >= h {
                        continue;
                    }
                    let iy = sy - ky;
                    for kx in 0..p.kw {
                        let sx = ox + cw;
                        if sx < kx || sx - kx >= w {
                            continue;
                        }
                        let ix = sx - kx;
                        let x_base = x.idx(b, iy, ix, 0);
                        let f_base = (ky * p.kw + kx) * ic * oc;
                        for i in 0..ic {
                            let xv = x.data[x_base + i];
                            if xv == 0.0 {
                                continue;
                            }
                            let f_row = &p.filter[f_base + i * oc..f_base + (i + 1) * oc];
                            for (a, &fv) in acc.iter_mut().zip(f_row) {
                                *a += xv * fv;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Gradients of [`deconv2d_forward`].
pub fn deconv2d_backward(
    x: &Tensor4,
    p: &ConvParams,
    upstream: &Tensor4,
) -> Result<(Tensor4, ConvParams)> {
    check_channels(x, p)?;
    let [nb, h, w, ic] = x.dims;
    if upstream.dims != [nb, h, w, p.out_ch] {
        return Err(Error::ShapeMismatch(format!(
            "upstream {:?} vs expected {:?}",
            upstream.dims,
            [nb, h, w, p.out_ch]
        )));
    }
    let oc = p.out_ch;
    let (ch, cw) = (p.kh / 2, p.kw / 2);
    let mut grad_x = Tensor4::zeros(x.dims);
    let mut grad_p = ConvParams::zeros(p.kh, p.kw, ic, oc);

    for b in 0..nb {
        for y in 0..h {
            for xx in 0..w {
                let base = upstream.idx(b, y, xx, 0);
                for o in 0..oc {
                    grad_p.bias[o] += upstream.data[base + o];
                }
            }
        }
    }

    // out[p] consumed x[p - d]; so grad_x[q, i] = sum_d upstream[q + d, o] f[d, i, o]
    for b in 0..nb {
        for qy in 0..h {
            for qx in 0..w {
                let gx_base = grad_x.idx(b, qy, qx, 0);
                for ky in 0..p.kh {
                    let uy = qy + ky;
                    if uy < ch || uy - ch >= h {
                        continue;
                    }
                    let uy = uy - ch;
                    for kx in 0..p.kw {
                        let ux = qx + kx;
                        if ux < cw || ux - cw >= w {
                            continue;
                        }
                        let ux = ux - cw;
                        let up_base = upstream.idx(b, uy, ux, 0);
                        let up_row = &upstream.data[up_base..up_base + oc];
                        let f_base = (ky * p.kw + kx) * ic * oc;
                        for i in 0..ic {
                            let f_row = &p.filter[f_base + i * oc..f_base + (i + 1) * oc];
                            let mut acc = 0.0;
                            for (&u, &f) in up_row.iter().zip(f_row) {
                                acc += u * f;
                            }
                            grad_x.data[gx_base + i] += acc;
                        }
                    }
                }
            }
        }
    }

    // grad_f[d, i, o] = sum_p x[p - d, i] * upstream[p, o]
    for b in 0..nb {
        for py in 0..h {
            for px in 0..w {
                let up_base = upstream.idx(b, py, px, 0);
                let up_row = &upstream.data[up_base..up_base + oc];
                for ky in 0..p.kh {
                    let sy = py + ch;
                    if sy < ky || sy - ky >= h {
                        continue;
                    }
                    let iy = sy - ky;
                    for kx in 0..p.kw {
                        let sx = px + cw;
                        if sx < kx || sx - kx >= w {
                            continue;
                        }
                        let ix = sx - kx;
                        let x_base = x.idx(b, iy, ix, 0);
                        let f_base = (ky * p.kw + kx) * ic * oc;
                        for i in 0..ic {
                            let xv = x.data[x_base + i];
                            if xv == 0.0 {
                                continue;
                            }
                            let gf = &mut grad_p.filter[f_base + i * oc..f_base + (i + 1) * oc];
                            for (g, &u) in gf.iter_mut().zip(up_row) {
                                *g += xv * u;
                            }
                        }
                    }
                }
            }
        }
    }

    Ok((grad_x, grad_p))
}
