use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent RNG stream for a (seed, stream id...) tuple.
///
/// Streams are keyed by position in the work (level, pass, row, ...) so that
/// results do not depend on the order in which work items run.
pub(crate) fn stream(seed: u64, ids: &[u64]) -> ChaCha8Rng {
    let mut h = seed ^ 0x9e37_79b9_7f4a_7c15;
    for &id in ids {
        h = mix(h ^ mix(id.wrapping_add(0x632b_e59b_d9b4_e019)));
    }
    ChaCha8Rng::seed_from_u64(h)
}

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
