use crate::error::{Error, Result};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Seeded SplitMix64 stream.
///
/// Raw output consumption is part of the contract:
/// - [`RandomStream::uniform`] consumes exactly one raw output.
/// - [`RandomStream::gaussian_of`] consumes two raw outputs per pair of draws
///   (Box–Muller); an odd `n` still consumes a full pair for the last draw.
///
/// Reproducible within this implementation only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RandomStream {
    seed: u64,
    counter: u64,
}

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        RandomStream { seed, counter: 0 }
    }

    /// Independent stream keyed by a string label. The derived seed is the
    /// SplitMix finalizer applied to `seed ^ fnv1a(label)`.
    pub fn derive(seed: u64, label: &str) -> Self {
        RandomStream::new(mix(seed ^ fnv1a(label)))
    }

    /// Child stream of this stream's seed (does not advance `self`).
    pub fn substream(&self, label: &str) -> Self {
        RandomStream::derive(self.seed, label)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of raw outputs consumed so far.
    pub fn counter(&self) -> u64 {
        self.counter
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix(self
            .seed
            .wrapping_add(self.counter.wrapping_mul(GOLDEN_GAMMA)))
    }

    /// Uniform in `[0, 1)` with 53 bits of resolution.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `0..n` (`n > 0`), by multiply-shift.
    pub fn below(&mut self, n: usize) -> usize {
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// `n` i.i.d. draws from N(0, sigma²).
    pub fn gaussian_of(&mut self, n: usize, sigma: f64) -> Result<Vec<f64>> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::contract(format!(
                "gaussian sigma must be positive and finite, got {sigma}"
            )));
        }
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let (z0, z1) = self.box_muller();
            out.push(z0 * sigma);
            if out.len() < n {
                out.push(z1 * sigma);
            }
        }
        Ok(out)
    }

    fn box_muller(&mut self) -> (f64, f64) {
        // u1 in (0, 1] keeps the log finite.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        (r * theta.cos(), r * theta.sin())
    }

    /// In-place Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn gaussian_moments() {
        let mut rng = RandomStream::new(7);
        let xs = rng.gaussian_of(100_000, 1.0).unwrap();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let std = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!(mean.abs() <= 0.02, "mean {mean}");
        assert!((std - 1.0).abs() <= 0.02, "std {std}");
    }

    #[test]
    fn gaussian_is_deterministic_and_scales() {
        let a = RandomStream::new(5).gaussian_of(101, 1.0).unwrap();
        let b = RandomStream::new(5).gaussian_of(101, 1.0).unwrap();
        let c = RandomStream::new(5).gaussian_of(101, 2.0).unwrap();
        assert_eq!(a, b);
        for (x, y) in a.iter().zip(&c) {
            assert_eq!(*y, 2.0 * x);
        }
    }

    #[test]
    fn gaussian_consumption_is_documented() {
        let mut rng = RandomStream::new(1);
        rng.gaussian_of(5, 1.0).unwrap();
        assert_eq!(rng.counter(), 6);
        rng.uniform();
        assert_eq!(rng.counter(), 7);
    }

    #[test]
    fn rejects_nonpositive_sigma() {
        let mut rng = RandomStream::new(1);
        assert!(rng.gaussian_of(3, 0.0).is_err());
        assert!(rng.gaussian_of(3, -1.0).is_err());
        assert!(rng.gaussian_of(3, f64::NAN).is_err());
    }

    #[test]
    fn substreams_do_not_collide() {
        const DRAWS: usize = 1 << 20;
        let mut a = RandomStream::derive(42, "train");
        let mut b = RandomStream::derive(42, "noise");
        let mut seen = HashSet::with_capacity(2 * DRAWS);
        for _ in 0..DRAWS {
            assert!(seen.insert(a.next_u64()));
        }
        for _ in 0..DRAWS {
            assert!(seen.insert(b.next_u64()));
        }
    }

    #[test]
    fn below_stays_in_range() {
        let mut rng = RandomStream::new(9);
        for n in 1..50 {
            assert!(rng.below(n) < n);
        }
    }
}
