//! Counter-based random substreams.
//!
//! Every stochastic operation draws from a ChaCha8 stream selected by
//! `(seed, stream)`. ChaCha exposes a 64-bit stream id next to the key, so a
//! row, class or sample index picks an independent sequence without any
//! shared state. Results therefore do not depend on how work is scheduled
//! across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags keep unrelated consumers of the same seed apart.
pub mod tag {
    pub const ROW_PERMUTE: u64 = 0x01;
    pub const CLASS_PERMUTE: u64 = 0x02;
    pub const DESIGN: u64 = 0x10;
    pub const NOISE: u64 = 0x11;
    pub const LABELS: u64 = 0x12;
    pub const GAUSSIAN_T: u64 = 0x20;
    pub const PROJECTION: u64 = 0x21;
    pub const DICHOTOMY: u64 = 0x22;
    pub const INIT: u64 = 0x30;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream `index` of the family `tag` under `seed`.
pub fn substream(seed: u64, tag: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ splitmix64(tag));
    rng.set_stream(index);
    rng
}

/// Two-level index, e.g. (manifold, sample).
pub fn substream2(seed: u64, tag: u64, outer: u64, inner: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ splitmix64(tag) ^ splitmix64(outer.wrapping_add(1) << 1));
    rng.set_stream(inner);
    rng
}
