//! Ramp filter and FBP layer tests against naive DFT / convolution /
//! finite-difference oracles.

use ctrecon::fbp::{filter_sinogram, make_ramp_filter, FbpLayer};
use ctrecon::geometry::{make_geometry, radon_forward, AngleSpec, Geometry, Image, Sinogram};
use ctrecon::metrics::psnr;
use ctrecon::phantom::shepp_logan;
use ctrecon::rng::CounterRng;
use std::f64::consts::PI;

fn geom(m: usize, n: usize) -> Geometry {
    make_geometry(m, AngleSpec::Uniform(n)).unwrap()
}

fn random_sinogram(g: &Geometry, seed: u64) -> Sinogram {
    let mut rng = CounterRng::new(seed, 0);
    let len = g.image_size * g.num_angles();
    Sinogram {
        geom: g.clone(),
        samples: (0..len).map(|_| rng.uniform() * 2.0 - 1.0).collect(),
    }
}

fn random_image(m: usize, seed: u64) -> Image {
    let mut rng = CounterRng::new(seed, 1);
    Image {
        size: m,
        pixels: (0..m * m).map(|_| rng.uniform() * 2.0 - 1.0).collect(),
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Naive O(M^2) DFT of the taps; must reproduce |w| on the frequency grid.
#[test]
fn tap_spectrum_is_abs_frequency() {
    for m in [8usize, 64] {
        let h = make_ramp_filter(m).unwrap();
        for k in 0..m {
            let mut re = 0.0;
            let mut im = 0.0;
            for (n, &t) in h.taps.iter().enumerate() {
                let ph = -2.0 * PI * (k * n) as f64 / m as f64;
                re += t * ph.cos();
                im += t * ph.sin();
            }
            let want = k.min(m - k) as f64 / m as f64;
            assert!((re - want).abs() <= 1e-10, "m={m} bin {k}: {re} vs {want}");
            assert!(im.abs() <= 1e-10, "m={m} bin {k}: imag {im}");
        }
    }
}

/// Direct O(M^2) inverse-DFT evaluation of the |w| spectrum for M=8.
#[test]
fn taps_match_naive_inverse_dft() {
    let m = 8;
    let h = make_ramp_filter(m).unwrap();
    for n in 0..m {
        let mut acc = 0.0;
        for k in 0..m {
            let w = k.min(m - k) as f64 / m as f64;
            acc += w * (2.0 * PI * (k * n) as f64 / m as f64).cos();
        }
        acc /= m as f64;
        assert!((h.taps[n] - acc).abs() <= 1e-12, "tap {n}: {} vs {acc}", h.taps[n]);
    }
}

#[test]
fn taps_have_zero_dc_and_even_symmetry() {
    for m in [8usize, 17, 64, 128] {
        let h = make_ramp_filter(m).unwrap();
        let s: f64 = h.taps.iter().sum();
        assert!(s.abs() <= 1e-10, "m={m}: DC gain {s}");
        for k in 1..m {
            assert!(
                (h.taps[k] - h.taps[m - k]).abs() <= 1e-12,
                "m={m}: taps[{k}] != taps[{}]",
                m - k
            );
        }
    }
}

#[test]
fn ramp_filter_rejects_tiny_m() {
    assert!(make_ramp_filter(1).is_err());
    assert!(make_ramp_filter(2).is_ok());
}

#[test]
fn filtering_annihilates_constant_columns() {
    let g = geom(32, 5);
    let c = 7.5;
    let x = Sinogram {
        geom: g.clone(),
        samples: vec![c; 32 * 5],
    };
    let h = make_ramp_filter(32).unwrap();
    let out = filter_sinogram(&x, &h).unwrap();
    for v in &out.samples {
        assert!(v.abs() <= 1e-8 * c.abs());
    }
}

#[test]
fn filtering_impulse_reproduces_taps() {
    let g = geom(16, 3);
    let mut x = Sinogram::zeros(g.clone());
    x.set(0, 1, 1.0);
    let h = make_ramp_filter(16).unwrap();
    let out = filter_sinogram(&x, &h).unwrap();
    for i in 0..16 {
        assert!((out.get(i, 1) - h.taps[i]).abs() <= 1e-15);
        assert_eq!(out.get(i, 0), 0.0);
        assert_eq!(out.get(i, 2), 0.0);
    }
}

/// Independent double-loop circular convolution on a random column.
#[test]
fn filtering_matches_naive_circular_convolution() {
    let m = 16;
    let g = geom(m, 4);
    let x = random_sinogram(&g, 5);
    let h = make_ramp_filter(m).unwrap();
    let out = filter_sinogram(&x, &h).unwrap();
    for j in 0..4 {
        for i in 0..m {
            let mut acc = 0.0;
            for k in 0..m {
                acc += h.taps[k] * x.get((i + m - k) % m, j);
            }
            assert!((out.get(i, j) - acc).abs() <= 1e-12);
        }
    }
}

/// Reversing columns before filtering and un-reversing after changes nothing
/// (even-symmetric taps).
#[test]
fn filter_commutes_with_column_reversal() {
    let m = 24;
    let g = geom(m, 6);
    let x = random_sinogram(&g, 11);
    let h = make_ramp_filter(m).unwrap();
    let direct = filter_sinogram(&x, &h).unwrap();

    let mut rev = Sinogram::zeros(g.clone());
    for j in 0..6 {
        for i in 0..m {
            rev.set(i, j, x.get(m - 1 - i, j));
        }
    }
    let filtered_rev = filter_sinogram(&rev, &h).unwrap();
    for j in 0..6 {
        for i in 0..m {
            // Circular reversal index: un-reverse relative to the same axis.
            let want = filtered_rev.get(m - 1 - i, j);
            assert!(
                (direct.get(i, j) - want).abs() <= 1e-10,
                "({i},{j}): {} vs {want}",
                direct.get(i, j)
            );
        }
    }
}

#[test]
fn fbp_is_linear_and_zero_at_zero() {
    let g = geom(32, 20);
    let layer = FbpLayer::new(g.clone()).unwrap();
    let z = layer.forward(&Sinogram::zeros(g.clone())).unwrap();
    assert!(z.pixels.iter().all(|&v| v == 0.0));

    for seed in 0..10 {
        let x = random_sinogram(&g, 2 * seed);
        let y = random_sinogram(&g, 2 * seed + 1);
        let (a, b) = (1.7, -0.3);
        let mixed = Sinogram {
            geom: g.clone(),
            samples: x
                .samples
                .iter()
                .zip(&y.samples)
                .map(|(&p, &q)| a * p + b * q)
                .collect(),
        };
        let lhs = layer.forward(&mixed).unwrap();
        let fx = layer.forward(&x).unwrap();
        let fy = layer.forward(&y).unwrap();
        let scale: f64 = lhs.pixels.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
        for k in 0..lhs.pixels.len() {
            let want = a * fx.pixels[k] + b * fy.pixels[k];
            assert!(((lhs.pixels[k] - want) / scale).abs() <= 1e-10);
        }
    }
}

#[test]
fn vjp_of_zero_is_zero() {
    let g = geom(32, 45);
    let layer = FbpLayer::new(g).unwrap();
    let out = layer.vjp(&Image::zeros(32)).unwrap();
    assert!(out.samples.iter().all(|&v| v == 0.0));
}

#[test]
fn forward_and_vjp_are_adjoint() {
    let g = geom(32, 45);
    let layer = FbpLayer::new(g.clone()).unwrap();
    for seed in 0..20 {
        let x = random_sinogram(&g, seed);
        let gimg = random_image(32, 500 + seed);
        let lhs = dot(&layer.forward(&x).unwrap().pixels, &gimg.pixels);
        let rhs = dot(&x.samples, &layer.vjp(&gimg).unwrap().samples);
        let denom = lhs.abs().max(rhs.abs()).max(1e-30);
        assert!(((lhs - rhs) / denom).abs() <= 1e-10, "seed {seed}: {lhs} vs {rhs}");
    }
}

/// Entrywise check of the VJP against central finite differences of the
/// forward map at random coordinates.
#[test]
fn vjp_matches_finite_differences() {
    let m = 32;
    let g = geom(m, 45);
    let layer = FbpLayer::new(g.clone()).unwrap();
    let x0 = random_sinogram(&g, 77);
    let gimg = random_image(m, 78);
    let analytic = layer.vjp(&gimg).unwrap();
    let eps = 1e-3;
    let mut rng = CounterRng::new(1234, 0);
    let scale: f64 = analytic.samples.iter().map(|v| v.abs()).fold(0.0, f64::max);
    for _ in 0..50 {
        let k = (rng.uniform() * (m * 45) as f64) as usize;
        let mut plus = x0.clone();
        plus.samples[k] += eps;
        let mut minus = x0.clone();
        minus.samples[k] -= eps;
        let fd = (dot(&layer.forward(&plus).unwrap().pixels, &gimg.pixels)
            - dot(&layer.forward(&minus).unwrap().pixels, &gimg.pixels))
            / (2.0 * eps);
        assert!(
            (fd - analytic.samples[k]).abs() <= 1e-5 * scale.max(1.0),
            "coord {k}: fd {fd} vs vjp {}",
            analytic.samples[k]
        );
    }
}

/// vjp(F(x)) pairs positively with x: the composite operator is PSD.
#[test]
fn vjp_of_forward_is_positive_semidefinite() {
    let g = geom(32, 30);
    let layer = FbpLayer::new(g.clone()).unwrap();
    for seed in 0..10 {
        let x = random_sinogram(&g, 300 + seed);
        let fx = layer.forward(&x).unwrap();
        let q = dot(&x.samples, &layer.vjp(&fx).unwrap().samples);
        assert!(q >= -1e-10, "seed {seed}: quadratic form {q}");
    }
}

#[test]
fn shepp_logan_reconstruction_quality() {
    let m = 128;
    let phantom = shepp_logan(m).unwrap();
    let reference = phantom.masked();
    let mut last = f64::NEG_INFINITY;
    for n in [45usize, 90, 180] {
        let g = geom(m, n);
        let layer = FbpLayer::new(g.clone()).unwrap();
        let sino = radon_forward(&reference, &g).unwrap();
        let recon = layer.forward(&sino).unwrap();
        let p = psnr(&recon, &reference, 255.0).unwrap();
        assert!(p > last, "PSNR not increasing in angle count: {p} after {last}");
        last = p;
        if n == 180 {
            assert!(p >= 25.0, "180-angle Shepp-Logan PSNR {p:.2} < 25 dB");
        }
    }
}
