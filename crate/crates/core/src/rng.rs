//! Counter-based random streams.
//!
//! Every random draw in the crate is taken from a stream keyed by
//! `(master seed, replication index, stream tag)`. The key is expanded into a
//! ChaCha8 key (master seed and tag) and a 64-bit stream id (replication), so a
//! replication's draws never depend on how many workers ran or in which order
//! replications were scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose of a stream. Distinct tags give statistically independent streams
/// for the same `(master, replication)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum StreamTag {
    Field = 1,
    Mixture = 2,
    Path = 3,
    Shift = 4,
    ZSampling = 5,
    Replication = 6,
    Pilot = 7,
}

pub type StreamRng = ChaCha8Rng;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Opens the stream `(master, replication, tag)`.
pub fn stream(master: u64, replication: u64, tag: StreamTag) -> StreamRng {
    let mut state = master ^ (tag as u64).wrapping_mul(0xD1B5_4A32_D192_ED03);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(replication);
    rng
}

/// Derives the 64-bit seed handed to a single replication.
///
/// Replication seeds are what [`crate::fieldsim`] consumes; recording them in
/// output files lets any single replication be regenerated in isolation.
pub fn replication_seed(master: u64, replication: u64) -> u64 {
    use rand::RngCore;
    stream(master, replication, StreamTag::Replication).next_u64()
}
