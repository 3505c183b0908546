//! Counter-based pseudo-random streams for the degradation model.
//!
//! Each sinogram entry gets its own stream keyed by `(seed, counter)`, so
//! sampled noise is independent of evaluation order and thread count.

/// splitmix64 step.
#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// A tiny deterministic stream addressed by a (seed, counter) pair.
#[derive(Debug, Clone)]
pub struct CounterRng {
    state: u64,
}

impl CounterRng {
    pub fn new(seed: u64, counter: u64) -> Self {
        // Mix seed and counter through two splitmix rounds so adjacent
        // counters give uncorrelated streams.
        let mut s = seed ^ 0xA076_1D64_78BD_642F;
        let a = splitmix64(&mut s);
        let mut t = counter.wrapping_mul(0xD6E8_FEB8_6659_FD93) ^ a;
        let b = splitmix64(&mut t);
        CounterRng { state: b }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        splitmix64(&mut self.state)
    }

    /// Uniform in (0, 1); never returns exactly 0.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        let bits = self.next_u64() >> 11; // 53 bits
        (bits as f64 + 0.5) * (1.0 / 9007199254740992.0)
    }

    /// Standard normal via Box-Muller.
    #[inline]
    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Poisson sample: inversion below the documented crossover mean of 30,
    /// rounded Gaussian approximation above (means in this project are either
    /// tiny or in the 1e5..1e7 range where the approximation error is
    /// negligible).
    pub fn poisson(&mut self, mean: f64) -> f64 {
        debug_assert!(mean >= 0.0);
        if mean == 0.0 {
            return 0.0;
        }
        if mean < 30.0 {
            let limit = (-mean).exp();
            let mut k: u64 = 0;
            let mut prod = self.uniform();
            while prod > limit {
                k += 1;
                prod *= self.uniform();
            }
            k as f64
        } else {
            (mean + mean.sqrt() * self.normal()).round().max(0.0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_in_unit_interval() {
        let mut rng = CounterRng::new(7, 0);
        for _ in 0..10_000 {
            let u = rng.uniform();
            assert!(u > 0.0 && u < 1.0);
        }
    }

    #[test]
    fn streams_are_reproducible() {
        let a: Vec<u64> = {
            let mut r = CounterRng::new(42, 3);
            (0..16).map(|_| r.next_u64()).collect()
        };
        let b: Vec<u64> = {
            let mut r = CounterRng::new(42, 3);
            (0..16).map(|_| r.next_u64()).collect()
        };
        assert_eq!(a, b);
        let c: Vec<u64> = {
            let mut r = CounterRng::new(42, 4);
            (0..16).map(|_| r.next_u64()).collect()
        };
        assert_ne!(a, c);
    }

    #[test]
    fn normal_moments() {
        let mut rng = CounterRng::new(1, 0);
        let n = 200_000;
        let mut sum = 0.0;
        let mut sq = 0.0;
        for _ in 0..n {
            let x = rng.normal();
            sum += x;
            sq += x * x;
        }
        let mean = sum / n as f64;
        let var = sq / n as f64 - mean * mean;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }

    #[test]
    fn poisson_moments_small_and_large_mean() {
        for &mean in &[3.0, 2000.0] {
            let mut rng = CounterRng::new(9, 1);
            let n = 100_000;
            let mut sum = 0.0;
            let mut sq = 0.0;
            for _ in 0..n {
                let x = rng.poisson(mean);
                sum += x;
                sq += x * x;
            }
            let m = sum / n as f64;
            let v = sq / n as f64 - m * m;
            assert!((m - mean).abs() / mean < 0.02, "mean {m} vs {mean}");
            assert!((v - mean).abs() / mean < 0.05, "var {v} vs {mean}");
        }
    }
}
