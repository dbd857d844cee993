//! Deterministic seed derivation and RNG streams.
//!
//! Everything stochastic in this crate is driven by ChaCha8 counter streams
//! keyed from explicit 64-bit seeds, so a given (seed, stream) pair produces
//! the same draws on every platform and for any thread count. Work is split
//! into index-addressed units (trial index, batch index); each unit derives
//! its own stream and results are reduced in index order, never in thread
//! completion order.
//!
//! Child seeds come from [`mix_seed`], a fixed SplitMix64-based hash:
//!
//! ```text
//! mix_seed(m, a, b) = finalize(finalize(m + GOLDEN + a·C1) + b·C2)
//! ```
//!
//! where `finalize` is the SplitMix64 output permutation
//! `z ^= z>>30; z *= 0xBF58476D1CE4E5B9; z ^= z>>27; z *= 0x94D049BB133111EB; z ^= z>>31`
//! (all arithmetic wrapping), `GOLDEN = 0x9E3779B97F4A7C15`,
//! `C1 = 0xD1B54A32D192ED03`, `C2 = 0x8CB92BA72F3D8DD7`. The function is
//! part of the reproducibility contract and must not change.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const C1: u64 = 0xD1B5_4A32_D192_ED03;
const C2: u64 = 0x8CB9_2BA7_2F3D_8DD7;

fn finalize(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from a master seed and two indices (for example
/// trial index and sweep point index).
pub fn mix_seed(master: u64, a: u64, b: u64) -> u64 {
    let z = master.wrapping_add(GOLDEN).wrapping_add(a.wrapping_mul(C1));
    finalize(finalize(z).wrapping_add(b.wrapping_mul(C2)))
}

/// ChaCha8 generator on stream `stream` of the cipher keyed by `seed`.
///
/// Distinct streams of one seed are independent; this is how parallel
/// workers get private generators without coordination.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
