//! Per-module random streams.
//!
//! A stream is keyed by a 128-bit SipHash of the module path under the
//! global seed and then runs as a SplitMix64 Weyl sequence: the first half
//! of the hash is the starting state, the second half (mixed into an odd
//! increment) is the gamma. Nothing about the partitioning or construction
//! order enters the key, so a module draws the same numbers whichever
//! logical process it lands on.

use core::hash::Hasher;

use siphasher::sip128::{Hasher128, SipHasher13};

use crate::error::{Error, Result};
use crate::path::ModulePath;
use crate::time::SimTime;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RngStream {
    state: u64,
    gamma: u64,
}

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

// Variant 13 finalizer with the bit-transition fix-up used for split gammas.
fn mix_gamma(z: u64) -> u64 {
    let mut z = (z ^ (z >> 33)).wrapping_mul(0xff51_afd7_ed55_8ccd);
    z = (z ^ (z >> 33)).wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    z = (z ^ (z >> 33)) | 1;
    if (z ^ (z >> 1)).count_ones() < 24 {
        z ^ 0xaaaa_aaaa_aaaa_aaaa
    } else {
        z
    }
}

/// Stream for the module at `path` under `global_seed`.
pub fn derive_stream(global_seed: u64, path: &ModulePath) -> RngStream {
    let mut h = SipHasher13::new_with_keys(global_seed, 0x7061_7273_696d_2d31);
    h.write(path.as_str().as_bytes());
    let hash = h.finish128();
    RngStream {
        state: hash.h1,
        gamma: mix_gamma(hash.h2),
    }
}

impl RngStream {
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(self.gamma);
        mix64(self.state)
    }

    /// Uniform in `[0, 1)` from the top 53 bits.
    pub fn uniform01(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn exponential(&mut self, mean: f64) -> Result<f64> {
        let u = self.uniform01();
        exponential_from_uniform(u, mean)
    }
}

/// Inverse CDF of the exponential distribution: `-mean * ln(1 - u)`.
pub fn exponential_from_uniform(u: f64, mean: f64) -> Result<f64> {
    if !(mean > 0.0) || !mean.is_finite() {
        return Err(Error::Config(alloc::format!(
            "exponential mean must be positive, got {mean}"
        )));
    }
    Ok(-mean * libm::log(1.0 - u))
}

/// Exponential delay rounded to the nearest picosecond.
pub fn exponential_delay(u: f64, mean: SimTime) -> Result<SimTime> {
    let ps = exponential_from_uniform(u, mean.ticks() as f64)?;
    if ps >= i64::MAX as f64 {
        return Err(Error::TimeOverflow { lhs: i64::MAX, rhs: 1 });
    }
    Ok(SimTime::from_ps(libm::round(ps) as i64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    fn path(s: &str) -> ModulePath {
        ModulePath::parse(s).unwrap()
    }

    #[test]
    fn same_key_same_sequence() {
        let mut a = derive_stream(7, &path("net.lan0.host3"));
        let mut b = derive_stream(7, &path("net.lan0.host3"));
        let xa: Vec<u64> = (0..1000).map(|_| a.next_u64()).collect();
        let xb: Vec<u64> = (0..1000).map(|_| b.next_u64()).collect();
        assert_eq!(xa, xb);
    }

    #[test]
    fn different_paths_and_seeds_differ() {
        let mut firsts = Vec::new();
        for seed in 0..4u64 {
            for i in 0..500 {
                let p = path(&alloc::format!("net.lan{}.host{}", i % 57, i));
                firsts.push(derive_stream(seed, &p).next_u64());
            }
        }
        let n = firsts.len();
        firsts.sort_unstable();
        firsts.dedup();
        assert_eq!(firsts.len(), n, "first outputs collide");
        assert_ne!(
            derive_stream(1, &path("a")).next_u64(),
            derive_stream(1, &path("b")).next_u64()
        );
    }

    #[test]
    fn exponential_boundaries() {
        assert_eq!(exponential_from_uniform(0.0, 20.0).unwrap(), 0.0);
        // -20 ln 0.5 = 13.8629...
        let v = exponential_from_uniform(0.5, 20.0).unwrap();
        assert!((v - 13.862_943_611_198_906).abs() < 1e-12);
        assert!(exponential_from_uniform(0.5, 0.0).is_err());
        assert!(exponential_from_uniform(0.5, -1.0).is_err());
        assert_eq!(
            exponential_delay(0.5, SimTime::from_us(20)).unwrap(),
            SimTime::from_ps(13_862_944)
        );
    }

    #[test]
    fn exponential_monotone_and_linear() {
        let mut prev = -1.0;
        for i in 0..100 {
            let u = i as f64 / 100.0;
            let v = exponential_from_uniform(u, 3.0).unwrap();
            assert!(v > prev);
            prev = v;
            let w = exponential_from_uniform(u, 6.0).unwrap();
            assert!((w - 2.0 * v).abs() <= 1e-12 * w.abs().max(1.0));
        }
    }

    #[test]
    fn exponential_sample_mean() {
        let mut s = derive_stream(42, &path("net.test"));
        let n = 1_000_000;
        let sum: f64 = (0..n).map(|_| s.exponential(200.0).unwrap()).sum();
        let mean = sum / n as f64;
        assert!((mean - 200.0).abs() / 200.0 < 0.01, "mean {mean}");
    }

    #[test]
    fn uniform_chi_square_256_buckets() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let mut s = derive_stream(3, &path("net.lan1.host9"));
        let n = 1_000_000u32;
        let mut buckets = [0u32; 256];
        for _ in 0..n {
            let u = s.uniform01();
            assert!((0.0..1.0).contains(&u));
            buckets[(u * 256.0) as usize] += 1;
        }
        let expected = n as f64 / 256.0;
        let chi2: f64 = buckets
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        let critical = ChiSquared::new(255.0).unwrap().inverse_cdf(0.999);
        assert!(chi2 < critical, "chi2 {chi2} >= {critical}");
    }
}
