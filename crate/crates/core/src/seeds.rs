//! Seed derivation.
//!
//! One top-level seed reproduces an entire experiment. Sub-seeds are derived
//! with splitmix64: episode base seeds come from `splitmix64(seed + episode)`,
//! and independent per-purpose streams are split off the base with fixed tags.
//! splitmix64 is a bijection on u64, so distinct inputs give distinct seeds.

/// Stream tag for world spawn randomness.
pub const STREAM_SPAWN: u64 = 0x5350_4157_4e00_0001;
/// Stream tag for pendulum initial conditions.
pub const STREAM_PENDULUM: u64 = 0x5045_4e44_0000_0002;

/// splitmix64 finalizer (Steele, Lea & Flood's SplittableRandom mix).
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Base seed of one episode within a condition.
pub fn episode_seed(condition_seed: u64, episode: u64) -> u64 {
    splitmix64(condition_seed.wrapping_add(episode))
}

/// Split a named stream off a base seed.
pub fn stream_seed(base: u64, tag: u64) -> u64 {
    splitmix64(base ^ tag)
}
