//! Keyed deterministic random streams.
//!
//! Every stochastic operation in the workbench draws from a stream derived
//! from `(seed, key parts)`. Streams for distinct keys are independent, so
//! per-utterance work can run on any number of workers and still produce
//! byte-identical output.

use rand_chacha::rand_core::SeedableRng;
pub use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(basis: u64, bytes: &[u8]) -> u64 {
    let mut h = basis;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Deterministic stream for `(seed, parts)`. Stable across platforms and
/// independent of any other stream with a different key.
pub fn stream(seed: u64, parts: &[&str]) -> ChaCha8Rng {
    let mut joined = Vec::new();
    for p in parts {
        joined.extend_from_slice(p.as_bytes());
        joined.push(0x1f); // unit separator so ("ab","c") != ("a","bc")
    }
    let h1 = fnv1a(FNV_OFFSET, &joined);
    let h2 = fnv1a(h1 ^ 0x9e37_79b9_7f4a_7c15, &joined);
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&h1.to_le_bytes());
    key[16..24].copy_from_slice(&h2.to_le_bytes());
    key[24..32].copy_from_slice(&(joined.len() as u64).to_le_bytes());
    ChaCha8Rng::from_seed(key)
}
