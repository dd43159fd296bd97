//! Fixed 64-bit mixing used for all counter-based randomness.
//!
//! Every random decision in the crate is a pure function of integer
//! coordinates pushed through this mixer, never a sequential stream, so
//! results are identical across platforms, runs and worker counts.

/// SplitMix64 finalizer. Bijective on u64; avalanche quality is well
/// established for this constant set.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const STREAM_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

/// Chain a sequence of words through `mix64`, starting from a salted seed.
/// Word order matters; negative coordinates enter as two's complement.
#[inline]
pub fn chain(seed: u64, words: &[u64]) -> u64 {
    let mut h = mix64(seed ^ STREAM_SALT);
    for &w in words {
        h = mix64(h ^ w);
    }
    h
}

/// Map a hash to the unit interval [0, 1).
#[inline]
pub fn unit_f64(h: u64) -> f64 {
    // 53 high bits -> exactly representable dyadic rational
    (h >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0)
}
