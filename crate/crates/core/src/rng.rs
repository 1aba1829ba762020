//! Deterministic random substreams.
//!
//! Every path draws from its own ChaCha8 stream keyed by the global seed and a
//! stream id derived from caller-supplied tags (stage, path index, ...), so a
//! path's randomness does not depend on scheduling or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type PathRng = ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stream id for a tag sequence.
pub fn stream_id(tags: &[u64]) -> u64 {
    tags.iter().fold(0x243f_6a88_85a3_08d3, |acc, &t| splitmix(acc ^ splitmix(t)))
}

/// The generator for `(seed, tags)`.
pub fn substream(seed: u64, tags: &[u64]) -> PathRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(tags));
    rng
}
