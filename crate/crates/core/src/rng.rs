//! Counter-based random numbers.
//!
//! Every variate is a pure function of a seed and a key, so results never
//! depend on evaluation order or on how work is split across threads.

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of stream `index` under `master`.
#[inline]
pub fn derive_seed(master: u64, index: u64) -> u64 {
    mix64(master.wrapping_add(GOLDEN).wrapping_mul(0x2545_f491_4f6c_dd1d) ^ mix64(index.wrapping_add(GOLDEN)))
}

#[inline]
pub fn keyed_u64(seed: u64, key: u64) -> u64 {
    mix64(seed ^ mix64(key.wrapping_mul(GOLDEN).wrapping_add(seed.rotate_left(17))))
}

/// Uniform variate in `[0, 1)` with 53 random bits.
#[inline]
pub fn keyed_uniform(seed: u64, key: u64) -> f64 {
    (keyed_u64(seed, key) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// FNV-1a followed by a SplitMix finalizer.
pub fn stable_hash(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    mix64(h)
}
