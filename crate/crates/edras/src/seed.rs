//! Seed derivation: every random stream in a run is derived from the single
//! config seed plus a purpose tag, so runs are reproducible end to end.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Derives a child seed from a master seed and a purpose tag.
///
/// Uses an FNV-1a hash of the tag folded into the master seed with a
/// SplitMix64 finalizer. Stable across platforms.
pub fn derive(master: u64, tag: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in tag.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    splitmix64(master ^ h)
}

/// Derives a child seed with an additional index (e.g. per resample event).
pub fn derive_indexed(master: u64, tag: &str, index: u64) -> u64 {
    splitmix64(derive(master, tag) ^ splitmix64(index.wrapping_add(0x9e3779b97f4a7c15)))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Convenience constructor for the RNG used throughout the crate.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
