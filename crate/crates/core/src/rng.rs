//! Seed derivation and the shared random draws used by both sides of the
//! protocol.
//!
//! Every participant owns independent ChaCha8 streams derived from a base
//! seed and a short label path, so a run is reproducible from its config alone
//! and no stream is ever shared between threads.

use rand::distributions::{Distribution, Open01};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a path of labels into a base seed.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter().fold(mix64(base), |acc, &p| mix64(acc ^ mix64(p)))
}

pub fn stream(base: u64, path: &[u64]) -> Stream {
    ChaCha8Rng::seed_from_u64(derive_seed(base, path))
}

// Stream labels. Kept distinct so that adding a consumer never shifts another.
pub const TAG_TREE: u64 = 0x7472_6565;
pub const TAG_SUBSAMPLE: u64 = 0x7375_6273;
pub const TAG_PROPOSAL: u64 = 0x7072_6f70;
pub const TAG_PERMANENT: u64 = 0x7065_726d;
pub const TAG_INSTANT: u64 = 0x696e_7374;
pub const TAG_LAPLACE: u64 = 0x6c61_706c;
pub const TAG_CLIENT: u64 = 0x636c_6e74;
pub const TAG_SPLIT: u64 = 0x7370_6c74;
pub const TAG_SHARD: u64 = 0x7368_7264;
pub const TAG_REPEAT: u64 = 0x7270_7474;

/// Seed of client `client_id` within a session seeded by `seed`.
pub fn client_seed(seed: u64, client_id: u32) -> u64 {
    derive_seed(seed, &[TAG_CLIENT, u64::from(client_id)])
}

/// Draws a value strictly inside `(lo, hi)`.
///
/// Returns `None` when the interval holds no representable interior value.
pub fn draw_open<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> Option<f64> {
    if !(lo < hi) {
        return None;
    }
    let u: f64 = Open01.sample(rng);
    let v = lo + u * (hi - lo);
    if lo < v && v < hi {
        return Some(v);
    }
    let mid = lo + (hi - lo) / 2.0;
    (lo < mid && mid < hi).then_some(mid)
}
