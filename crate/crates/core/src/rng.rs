//! Deterministic per-stage random substreams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv(tag: &str) -> u64 {
    tag.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3))
}

/// Generator for stage `tag`, item `index` of a run seeded with `seed`.
pub fn substream(seed: u64, tag: &str, index: u64) -> ChaCha8Rng {
    let s = splitmix(splitmix(seed ^ fnv(tag)).wrapping_add(index));
    ChaCha8Rng::seed_from_u64(s)
}
