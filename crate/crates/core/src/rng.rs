//! Seed plumbing.
//!
//! Every random choice in the crate flows from an explicit `u64` seed.
//! Sub-streams are derived by mixing the parent seed with a stream tag, so
//! that adding or reordering consumers never perturbs unrelated streams.

use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer; good avalanche, stable across platforms.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from a parent seed and a stream tag.
pub fn subseed(seed: u64, tag: u64) -> u64 {
    mix(seed ^ mix(tag))
}

/// Derive a child seed from a parent seed and a string label.
pub fn subseed_str(seed: u64, label: &str) -> u64 {
    // FNV-1a over the label, then mixed with the seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    subseed(seed, h)
}

/// The deterministic RNG used throughout the crate.
pub fn rng(seed: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn subseeds_are_stable_and_distinct() {
        assert_eq!(subseed(42, 1), subseed(42, 1));
        assert_ne!(subseed(42, 1), subseed(42, 2));
        assert_ne!(subseed(42, 1), subseed(43, 1));
        assert_ne!(subseed_str(7, "scenes"), subseed_str(7, "corpus"));
    }

    #[test]
    fn rng_streams_reproduce() {
        let a: Vec<u64> = (0..8).map(|_| rng(9).random()).collect();
        let mut r = rng(9);
        let b: Vec<u64> = (0..8).map(|_| r.random()).collect();
        // A fresh RNG per draw repeats the first value; one RNG advances.
        assert!(a.iter().all(|v| *v == a[0]));
        assert_eq!(b.len(), 8);
        assert_ne!(b[0], b[1]);
    }
}
