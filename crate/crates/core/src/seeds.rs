//! Deterministic seed derivation.
//!
//! Every random draw in a run is keyed by `(master_seed, purpose, index)` so
//! that per-sample work is order-independent: a sample's RNG stream is the
//! same no matter which worker produces it or in which order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// SplitMix64 finalizer; a well-mixed 64-bit permutation.
#[inline]
pub fn mix(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from a master seed and a tag path.
pub fn derive(master: u64, tags: &[u64]) -> u64 {
    let mut s = mix(master ^ 0xA076_1D64_78BD_642F);
    for &t in tags {
        s = mix(s ^ mix(t ^ 0xE703_7ED1_A0B4_28DB));
    }
    s
}

/// RNG for non-keyed (simulation) randomness.
pub fn rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derive_is_stable_and_tag_sensitive() {
        let a = derive(1, &[2, 3]);
        assert_eq!(a, derive(1, &[2, 3]));
        assert_ne!(a, derive(1, &[3, 2]));
        assert_ne!(a, derive(2, &[2, 3]));
        assert_ne!(a, derive(1, &[2]));
        // Frozen values: derivation must never change across releases, or
        // archived run manifests stop being reproducible.
        assert_eq!(derive(0, &[0]), 0x4679_cf64_ffe7_de62);
        assert_eq!(derive(42, &[7, 1]), 0x5ecd_3274_e8da_b1b2);
    }

    #[test]
    fn mix_avalanche_smoke() {
        // flipping one input bit flips roughly half the output bits
        let base = mix(0x1234_5678_9abc_def0);
        let mut total = 0u32;
        for bit in 0..64 {
            let flipped = mix(0x1234_5678_9abc_def0 ^ (1u64 << bit));
            total += (base ^ flipped).count_ones();
        }
        let avg = f64::from(total) / 64.0;
        assert!((avg - 32.0).abs() < 6.0, "weak avalanche: {avg}");
    }
}
