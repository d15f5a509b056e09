//! Seed splitting.
//!
//! Every random draw in the crate comes from a [`Stream`] derived from one
//! root seed, a purpose string and a list of integer indices. The derived
//! seed is a SplitMix64 fold over `root`, the UTF-8 bytes of the purpose
//! (in 8-byte little-endian words, zero padded) and the indices, in that
//! order. Two streams share state only if all three parts are equal, so
//! per-item streams such as `("branch", [t, i])` give the same numbers no
//! matter how work is partitioned across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(root: u64, purpose: &str, indices: &[u64]) -> u64 {
    let mut h = splitmix64(root);
    for chunk in purpose.as_bytes().chunks(8) {
        let mut word = [0u8; 8];
        word[..chunk.len()].copy_from_slice(chunk);
        h = splitmix64(h ^ u64::from_le_bytes(word));
    }
    // length separator so "ab" + [1] and "ab\x01" never collide
    h = splitmix64(h ^ (purpose.len() as u64).rotate_left(32));
    for &i in indices {
        h = splitmix64(h ^ i);
    }
    h
}

pub fn stream(root: u64, purpose: &str, indices: &[u64]) -> Stream {
    ChaCha8Rng::seed_from_u64(derive_seed(root, purpose, indices))
}
