//! Seed derivation for independent deterministic random streams.
//!
//! Per-frame noise, sweep trials, and randomized frame orders each need their
//! own stream derived from one user-facing seed, so that results do not depend
//! on execution order or thread count.

/// SplitMix64 output function. Good avalanche behavior, stable across
/// platforms, and cheap enough to call per derivation.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive the seed for sub-stream `stream` of a base seed.
pub fn stream_seed(base: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(base) ^ stream.wrapping_mul(0xa076_1d64_78bd_642f))
}

/// Two-level derivation, e.g. (noise level, trial index).
pub fn stream_seed2(base: u64, a: u64, b: u64) -> u64 {
    stream_seed(stream_seed(base, a), b)
}
