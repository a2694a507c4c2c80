//! Per-purpose seed derivation.
//!
//! Every random stream in an experiment is keyed off one global seed:
//! `derive(parent, purpose, index)` hashes the parent seed, a purpose label
//! and an index with 64-bit FNV-1a and finishes with the SplitMix64 mixer.
//! For example fold `i` of a protocol uses `derive(global, "fold", i)`.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(mut h: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive(parent: u64, purpose: &str, index: u64) -> u64 {
    let mut h = fnv1a(FNV_OFFSET, &parent.to_le_bytes());
    h = fnv1a(h, purpose.as_bytes());
    h = fnv1a(h, &[0xff]);
    h = fnv1a(h, &index.to_le_bytes());
    splitmix64(h)
}

/// The generator used for every random stream in the crate.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
