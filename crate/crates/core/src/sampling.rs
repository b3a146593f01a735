//! Keyed, counter-based randomness.
//!
//! A [`StreamKey`] names one family of random variables by a master seed and
//! an ordered path of 64-bit tags. The `i`-th output of a key is a pure
//! function of `(master_seed, path, i)`, so draws can be made in any order or
//! on any number of threads and still agree bit for bit.
//!
//! Binomial draws made through [`binomial`] are sums of indexed Bernoulli
//! trials: trial `i` always reads output `i` of the key. Two calls with the
//! same key and different trial counts therefore share their common prefix,
//! which is what the coupled degree-chain step relies on.

use rand::RngCore;
use rand_distr::{Binomial, Distribution};

use crate::error::{check_probability, Result};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const SEED_SALT: u64 = 0x6A09_E667_F3BC_C909;
const TAG_SALT: u64 = 0xD1B5_4A32_D192_ED03;

/// 2^-53, the spacing of the uniform grid.
const UNIT: f64 = 1.0 / (1u64 << 53) as f64;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Identifies one stream of random numbers.
///
/// The path is folded into a running hash as tags are appended, so a key is
/// `Copy` and deriving children is allocation-free.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StreamKey {
    master_seed: u64,
    hash: u64,
}

impl StreamKey {
    pub fn new(master_seed: u64) -> Self {
        Self {
            master_seed,
            hash: mix64(master_seed ^ SEED_SALT),
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    /// Appends one tag to the path.
    #[inline]
    pub fn child(&self, tag: u64) -> Self {
        Self {
            master_seed: self.master_seed,
            hash: mix64(self.hash.wrapping_mul(GOLDEN) ^ mix64(tag ^ TAG_SALT)),
        }
    }

    /// Appends `extra_tags` to the path, in order.
    pub fn derive_stream(&self, extra_tags: &[u64]) -> Self {
        extra_tags.iter().fold(*self, |key, &tag| key.child(tag))
    }

    /// Raw 64-bit output at counter position `index`.
    #[inline]
    pub fn bits_at(&self, index: u64) -> u64 {
        let z = self.hash.wrapping_add(index.wrapping_mul(GOLDEN));
        mix64(mix64(z) ^ self.hash.rotate_left(32))
    }

    /// Uniform on `[0, 1)` with 53-bit resolution at counter position `index`.
    #[inline]
    pub fn uniform_at(&self, index: u64) -> f64 {
        (self.bits_at(index) >> 11) as f64 * UNIT
    }

    /// Bernoulli trial number `index` of this key. `p` is not validated.
    #[inline]
    pub fn trial(&self, index: u64, p: f64) -> bool {
        self.uniform_at(index) < p
    }

    /// Sequential reader over this key's outputs, usable with `rand`.
    pub fn stream(&self) -> Stream {
        Stream {
            key: *self,
            counter: 0,
        }
    }
}

/// Sequential view of a [`StreamKey`]'s outputs.
#[derive(Clone, Debug)]
pub struct Stream {
    key: StreamKey,
    counter: u64,
}

impl Stream {
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * UNIT
    }
}

impl RngCore for Stream {
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        let out = self.key.bits_at(self.counter);
        self.counter += 1;
        out
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}

/// Appends `extra_tags` to `key`'s path.
pub fn derive_stream(key: StreamKey, extra_tags: &[u64]) -> StreamKey {
    key.derive_stream(extra_tags)
}

/// One Bernoulli(`p`) draw: the first output of `key` compared against `p`.
pub fn bernoulli(key: StreamKey, p: f64) -> Result<bool> {
    let p = check_probability("p", p)?;
    Ok(key.trial(0, p))
}

/// Binomial(`n`, `p`) as the sum of trials `0..n` of `key`.
///
/// Prefix-consistent: for a fixed key the result is non-decreasing in `n`.
pub fn binomial(key: StreamKey, n: u64, p: f64) -> Result<u64> {
    let p = check_probability("p", p)?;
    Ok(binomial_unchecked(key, n, p))
}

#[inline]
pub(crate) fn binomial_unchecked(key: StreamKey, n: u64, p: f64) -> u64 {
    if p <= 0.0 || n == 0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    (0..n).filter(|&i| key.trial(i, p)).count() as u64
}

/// Binomial(`n`, `p`) by a constant-time method. Not prefix-consistent; use
/// only where no coupling between different `n` is needed.
pub fn binomial_uncoupled(key: StreamKey, n: u64, p: f64) -> Result<u64> {
    let p = check_probability("p", p)?;
    Ok(binomial_uncoupled_unchecked(key, n, p))
}

pub(crate) fn binomial_uncoupled_unchecked(key: StreamKey, n: u64, p: f64) -> u64 {
    if p <= 0.0 || n == 0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    match Binomial::new(n, p) {
        Ok(dist) => dist.sample(&mut key.stream()),
        Err(_) => unreachable!("n and p validated"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_extension_is_identity() {
        let k = StreamKey::new(17).derive_stream(&[1, 2]);
        assert_eq!(derive_stream(k, &[]), k);
    }

    #[test]
    fn distinct_paths_give_distinct_streams() {
        let k = StreamKey::new(5);
        let a = k.derive_stream(&[3]);
        let b = k.derive_stream(&[4]);
        let sa: Vec<u64> = (0..8).map(|i| a.bits_at(i)).collect();
        let sb: Vec<u64> = (0..8).map(|i| b.bits_at(i)).collect();
        assert_ne!(sa, sb);
        // order of tags matters
        assert_ne!(k.derive_stream(&[3, 4]), k.derive_stream(&[4, 3]));
        assert_ne!(k.derive_stream(&[0]), k);
    }

    #[test]
    fn frozen_outputs() {
        // Bit pattern pinned so that any change to the generator is noticed:
        // every seeded run in the repository depends on it.
        let k = StreamKey::new(42).derive_stream(&[7, 1, 2]);
        let first: Vec<u64> = (0..3).map(|i| k.bits_at(i)).collect();
        let again: Vec<u64> = k.stream().take_u64(3);
        assert_eq!(first, again);
        assert_eq!(first, FROZEN.to_vec());
    }

    const FROZEN: [u64; 3] = [11465636928955352276, 8079968970067307938, 10009478101218557224];

    trait TakeU64 {
        fn take_u64(self, n: usize) -> Vec<u64>;
    }
    impl TakeU64 for Stream {
        fn take_u64(mut self, n: usize) -> Vec<u64> {
            (0..n).map(|_| self.next_u64()).collect()
        }
    }

    #[test]
    fn bernoulli_edges() {
        let k = StreamKey::new(1);
        for i in 0..100 {
            let key = k.child(i);
            assert!(!bernoulli(key, 0.0).unwrap());
            assert!(bernoulli(key, 1.0).unwrap());
        }
        assert!(bernoulli(k, 1.5).is_err());
        assert!(bernoulli(k, -0.1).is_err());
        assert!(bernoulli(k, f64::NAN).is_err());
    }

    #[test]
    fn bernoulli_mean() {
        let k = StreamKey::new(2024);
        let n = 1_000_000u64;
        let hits = (0..n).filter(|&i| bernoulli(k.child(i), 0.3).unwrap()).count();
        let mean = hits as f64 / n as f64;
        let sigma = (0.3f64 * 0.7 / n as f64).sqrt();
        assert!((mean - 0.3).abs() < 4.0 * sigma, "mean {mean}");
        assert!((mean - 0.3).abs() < 0.002);
    }

    #[test]
    fn binomial_edges() {
        let k = StreamKey::new(9);
        assert_eq!(binomial(k, 0, 0.4).unwrap(), 0);
        assert_eq!(binomial(k, 7, 1.0).unwrap(), 7);
        assert_eq!(binomial(k, 7, 0.0).unwrap(), 0);
        assert!(binomial(k, 3, 2.0).is_err());
        assert_eq!(binomial_uncoupled(k, 7, 1.0).unwrap(), 7);
        assert!(binomial_uncoupled(k, 3, -1.0).is_err());
    }

    #[test]
    fn binomial_mean() {
        let k = StreamKey::new(77);
        let reps = 100_000u64;
        let total: u64 = (0..reps).map(|r| binomial(k.child(r), 20, 0.25).unwrap()).sum();
        let mean = total as f64 / reps as f64;
        assert!((mean - 5.0).abs() < 0.06, "mean {mean}");
    }

    fn binomial_pmf(n: u64, p: f64, k: u64) -> f64 {
        let mut c = 1.0;
        for i in 0..k {
            c *= (n - i) as f64 / (i + 1) as f64;
        }
        c * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32)
    }

    fn chi_square(counts: &[u64], reps: u64, n: u64, p: f64) -> f64 {
        counts
            .iter()
            .enumerate()
            .map(|(k, &obs)| {
                let exp = reps as f64 * binomial_pmf(n, p, k as u64);
                (obs as f64 - exp).powi(2) / exp
            })
            .sum()
    }

    // Upper 10^-3 quantile of chi-square with 10 degrees of freedom.
    const CHI2_10DF_999: f64 = 29.588;

    #[test]
    fn binomial_goodness_of_fit() {
        let reps = 100_000u64;
        let base = StreamKey::new(31337);
        let mut prefix = [0u64; 11];
        let mut fast = [0u64; 11];
        for r in 0..reps {
            prefix[binomial(base.child(r), 10, 0.3).unwrap() as usize] += 1;
            fast[binomial_uncoupled(base.child(r), 10, 0.3).unwrap() as usize] += 1;
        }
        let stat = chi_square(&prefix, reps, 10, 0.3);
        assert!(stat < CHI2_10DF_999, "prefix chi2 {stat}");
        let stat = chi_square(&fast, reps, 10, 0.3);
        assert!(stat < CHI2_10DF_999, "uncoupled chi2 {stat}");
    }

    #[test]
    fn binomial_is_prefix_monotone() {
        let base = StreamKey::new(3);
        for r in 0..200 {
            let key = base.child(r);
            let mut last = 0;
            for n in 0..60 {
                let b = binomial(key, n, 0.37).unwrap();
                assert!(b >= last && b <= last + 1);
                last = b;
            }
        }
    }

    #[test]
    fn stream_is_thread_independent() {
        let key = StreamKey::new(8).derive_stream(&[1, 2, 3]);
        let here: Vec<u64> = (0..16).map(|i| key.bits_at(i)).collect();
        let there = std::thread::spawn(move || (0..16).map(|i| key.bits_at(i)).collect::<Vec<_>>())
            .join()
            .unwrap();
        assert_eq!(here, there);
    }
}
