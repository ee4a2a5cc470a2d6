//! Deterministic derivation of independent random streams.
//!
//! Sweeps and Monte Carlo batches draw every trajectory from its own stream,
//! derived from a master seed plus a tag path. Results are therefore
//! reproducible for a given seed and independent of how work is split across
//! threads.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// splitmix64 finalizer; scrambles a 64-bit word into a well-mixed one.
fn mix(z: u64) -> u64 {
    let mut z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive an independent ChaCha stream from a master seed and a tag path.
///
/// Distinct tag paths give statistically independent generators; the same
/// path always gives the same one.
pub fn derive_rng(master: u64, tags: &[u64]) -> ChaCha12Rng {
    let mut state = mix(master ^ 0x6a09_e667_f3bc_c908);
    for &tag in tags {
        state = mix(state ^ tag);
    }
    let mut seed = [0u8; 32];
    for (i, chunk) in seed.chunks_exact_mut(8).enumerate() {
        chunk.copy_from_slice(&mix(state ^ i as u64).to_le_bytes());
    }
    ChaCha12Rng::from_seed(seed)
}
