use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Mixes a base seed with a stream id (splitmix64 finaliser) so that
/// independent consumers of one user seed draw from unrelated streams.
pub(crate) fn derive(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn rng(base: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(base, stream))
}

// Stream ids.
pub(crate) const TEST_SPLIT: u64 = 0x7e57;
pub(crate) const VAL_SPLIT: u64 = 0x0a1;
pub(crate) const EPOCH_SHUFFLE: u64 = 0x5aff1e;
pub(crate) const DROPOUT: u64 = 0xd40;
pub(crate) const HEAD_INIT: u64 = 0x4ead;
