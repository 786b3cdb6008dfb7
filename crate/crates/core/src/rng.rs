//! Deterministic random number generation.
//!
//! All stochastic operations in this crate draw from [`CounterRng`], a keyed
//! SplitMix64 generator run in counter mode: output `i` is the SplitMix64
//! finalizer applied to `key + i * GOLDEN_GAMMA`. The generator is fully
//! determined by `(key, counter)`, so identical seeds produce bit-identical
//! streams on every platform, and independent substreams are obtained by
//! deriving fresh keys with [`derive_seed`] instead of splitting state.
//!
//! Not cryptographically secure; simulation use only.

/// Weyl increment used by SplitMix64.
const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive an independent stream key from a parent seed and a stream tag.
///
/// Used everywhere a computation fans out into indexed sub-computations
/// (per-sample, per-trace, per-trial ...) so that results do not depend on
/// evaluation order or thread schedule.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    mix64(seed ^ mix64(tag.wrapping_add(GOLDEN_GAMMA)))
}

/// Derive a stream key from a parent seed and two tags.
pub fn derive_seed2(seed: u64, tag1: u64, tag2: u64) -> u64 {
    derive_seed(derive_seed(seed, tag1), tag2)
}

/// Keyed SplitMix64 in counter mode.
#[derive(Clone, Debug)]
pub struct CounterRng {
    key: u64,
    counter: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        CounterRng { key: seed, counter: 0 }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let z = self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN_GAMMA));
        self.counter += 1;
        mix64(z)
    }

    /// Uniform double in `[0, 1)` from the top 53 bits.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform double in `[lo, hi)`.
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `[0, n)` by rejection-free multiply-shift.
    pub fn below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }

    /// Standard normal via Box-Muller. Consumes two uniforms per call.
    pub fn normal(&mut self) -> f64 {
        loop {
            let u1 = self.uniform();
            if u1 <= f64::MIN_POSITIVE {
                continue;
            }
            let u2 = self.uniform();
            let r = (-2.0 * u1.ln()).sqrt();
            return r * (2.0 * std::f64::consts::PI * u2).cos();
        }
    }

    /// Gamma(shape, 1) via Marsaglia-Tsang squeeze, with the usual
    /// `U^(1/a)` boost for shape < 1.
    pub fn gamma(&mut self, shape: f64) -> f64 {
        assert!(shape > 0.0, "gamma shape must be positive");
        if shape < 1.0 {
            let g = self.gamma(shape + 1.0);
            let u = loop {
                let u = self.uniform();
                if u > 0.0 {
                    break u;
                }
            };
            return g * u.powf(1.0 / shape);
        }
        let d = shape - 1.0 / 3.0;
        let c = 1.0 / (9.0 * d).sqrt();
        loop {
            let x = self.normal();
            let v = 1.0 + c * x;
            if v <= 0.0 {
                continue;
            }
            let v = v * v * v;
            let u = self.uniform();
            if u < 1.0 - 0.0331 * x.powi(4) {
                return d * v;
            }
            if u > 0.0 && u.ln() < 0.5 * x * x + d * (1.0 - v + v.ln()) {
                return d * v;
            }
        }
    }

    /// Beta(a, b) as a Gamma ratio.
    pub fn beta(&mut self, a: f64, b: f64) -> f64 {
        let x = self.gamma(a);
        let y = self.gamma(b);
        if x + y == 0.0 {
            return 0.5;
        }
        x / (x + y)
    }

    /// Binomial(n, p) by CDF inversion; adequate for the count sizes seen in
    /// trace data (thousands).
    pub fn binomial(&mut self, n: u64, p: f64) -> u64 {
        assert!((0.0..=1.0).contains(&p), "binomial p out of range");
        if n == 0 || p == 0.0 {
            return 0;
        }
        if p == 1.0 {
            return n;
        }
        // Work with the smaller tail for stability.
        if p > 0.5 {
            return n - self.binomial(n, 1.0 - p);
        }
        let u = self.uniform();
        let q = 1.0 - p;
        let ratio = p / q;
        // pmf(0) = q^n, computed in log space to survive large n.
        let mut pmf = (n as f64 * q.ln()).exp();
        let mut cdf = pmf;
        let mut k = 0u64;
        while cdf < u && k < n {
            pmf *= ratio * (n - k) as f64 / (k + 1) as f64;
            cdf += pmf;
            k += 1;
            if pmf < 1e-300 && cdf < u {
                // Degenerate underflow far in the tail; the remaining mass is
                // numerically zero, stop at the current k.
                break;
            }
        }
        k
    }

    /// Sample an index from unnormalised nonnegative weights by inverse CDF
    /// in index order.
    pub fn categorical(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        assert!(total > 0.0, "categorical weights sum to zero");
        let u = self.uniform() * total;
        let mut acc = 0.0;
        for (i, w) in weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return i;
            }
        }
        weights.len() - 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_seeds_identical_streams() {
        let mut a = CounterRng::new(42);
        let mut b = CounterRng::new(42);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn derived_streams_differ() {
        let s1 = derive_seed(7, 0);
        let s2 = derive_seed(7, 1);
        assert_ne!(s1, s2);
        let mut a = CounterRng::new(s1);
        let mut b = CounterRng::new(s2);
        assert_ne!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn uniform_in_unit_interval() {
        let mut rng = CounterRng::new(1);
        for _ in 0..10_000 {
            let u = rng.uniform();
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn beta_mean_matches_closed_form() {
        let mut rng = CounterRng::new(11);
        let n = 100_000;
        let mean: f64 = (0..n).map(|_| rng.beta(4.0, 2.0)).sum::<f64>() / n as f64;
        assert!((mean - 2.0 / 3.0).abs() < 0.005, "mean {mean}");
    }

    #[test]
    fn binomial_moments() {
        let mut rng = CounterRng::new(13);
        let n = 20_000;
        let mean: f64 = (0..n).map(|_| rng.binomial(10, 0.5) as f64).sum::<f64>() / n as f64;
        assert!((mean - 5.0).abs() < 0.05, "mean {mean}");
        let edge = rng.binomial(10, 0.0);
        assert_eq!(edge, 0);
        assert_eq!(rng.binomial(10, 1.0), 10);
    }

    #[test]
    fn normal_moments() {
        let mut rng = CounterRng::new(17);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.03, "var {var}");
    }

    #[test]
    fn categorical_inverse_cdf_order() {
        let mut rng = CounterRng::new(23);
        let mut counts = [0usize; 3];
        for _ in 0..30_000 {
            counts[rng.categorical(&[1.0, 2.0, 1.0])] += 1;
        }
        assert!((counts[1] as f64 / 30_000.0 - 0.5).abs() < 0.02);
    }
}
