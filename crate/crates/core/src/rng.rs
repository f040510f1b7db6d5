//! Named random substreams derived from one root seed.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// FNV-1a, stable across platforms and compiler versions.
fn stream_id(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in name.bytes() {
        h ^= byte as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Generator for the substream `name` of `root_seed`.
///
/// Streams with different names are independent; the same `(root_seed, name)`
/// always yields the same sequence.
pub fn substream(root_seed: u64, name: &str) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(root_seed);
    rng.set_stream(stream_id(name));
    rng
}
