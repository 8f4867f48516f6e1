//! Deterministic random streams and the small samplers the simulator needs.
//!
//! Every Monte Carlo trial gets its own ChaCha stream keyed by
//! `(seed, stream)` and selected by the trial index, so results do not depend
//! on how trials are spread over worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type SimRng = ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from a parent seed and a label.
pub fn derive_seed(seed: u64, label: u64) -> u64 {
    mix64(seed ^ mix64(label.wrapping_add(0x632B_E59B_D9B4_E019)))
}

/// Stable 64-bit label for a string, for seed derivation.
pub fn label_hash(s: &str) -> u64 {
    // FNV-1a
    s.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3))
}

/// Generator for trial `index` of the stream keyed by `seed`.
pub fn stream_rng(seed: u64, index: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(mix64(seed));
    rng.set_stream(index);
    rng
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Poisson draw. Sequential inversion for means up to 30, which keeps draws
/// cheap and reproducible; larger means defer to `rand_distr`.
pub fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u32 {
    if mean <= 0.0 {
        return 0;
    }
    if mean > 30.0 {
        let d = rand_distr::Poisson::new(mean).expect("finite positive mean");
        return d.sample(rng) as u32;
    }
    let u: f64 = rng.random();
    let mut n = 0u32;
    let mut p = (-mean).exp();
    let mut cdf = p;
    while u > cdf {
        n += 1;
        p *= mean / n as f64;
        cdf += p;
        // cdf can stall just below 1 in floating point
        if p < 1e-300 {
            break;
        }
    }
    n
}

/// Index drawn from a pmf by inversion.
pub fn categorical<R: Rng + ?Sized>(pmf: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in pmf.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // u landed in the rounding gap above the last partial sum
    pmf.iter().rposition(|&p| p > 0.0).unwrap_or(pmf.len() - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map(|_| 0).scan(stream_rng(5, 1), |r, _| Some(r.random())).collect();
        let b: Vec<u64> = (0..4).map(|_| 0).scan(stream_rng(5, 1), |r, _| Some(r.random())).collect();
        let c: Vec<u64> = (0..4).map(|_| 0).scan(stream_rng(5, 2), |r, _| Some(r.random())).collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(derive_seed(1, 2), derive_seed(2, 1));
    }

    #[test]
    fn poisson_moments() {
        let mut rng = stream_rng(1, 0);
        for &mean in &[0.3, 4.0, 12.5] {
            let n = 200_000;
            let xs: Vec<f64> = (0..n).map(|_| poisson(mean, &mut rng) as f64).collect();
            let m = xs.iter().sum::<f64>() / n as f64;
            let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
            let se = (mean / n as f64).sqrt();
            assert!((m - mean).abs() < 5.0 * se, "mean {m} vs {mean}");
            assert!((v / mean - 1.0).abs() < 0.03, "var {v} vs {mean}");
        }
        assert_eq!(poisson(0.0, &mut rng), 0);
    }

    #[test]
    fn categorical_frequencies() {
        let pmf = [0.4, 0.3, 0.0, 0.3];
        let mut rng = stream_rng(2, 0);
        let mut counts = [0usize; 4];
        let n = 100_000;
        for _ in 0..n {
            counts[categorical(&pmf, &mut rng)] += 1;
        }
        assert_eq!(counts[2], 0);
        for (c, p) in counts.iter().zip(pmf) {
            assert!((*c as f64 / n as f64 - p).abs() < 0.01);
        }
    }
}
