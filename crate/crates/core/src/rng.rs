//! Counter-based random substreams.
//!
//! Every random decision in a run is drawn from a generator keyed by
//! `(master_seed, purpose, actor, counter)`. Keys are mixed with SplitMix64
//! and fed to ChaCha8, so the stream for client 3 in round 17 does not depend
//! on how many draws any other client made or in which order clients ran.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a substream is used for. Distinct purposes never share a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamPurpose {
    /// Server-side subset sampling on behalf of one client.
    Sampling,
    /// Synthetic data generation.
    Data,
    /// Frozen random-feature draws.
    Features,
    /// Dataset permutation before partitioning.
    Permutation,
}

impl StreamPurpose {
    fn tag(self) -> u64 {
        match self {
            StreamPurpose::Sampling => 0x5341_4d50,
            StreamPurpose::Data => 0x4441_5441,
            StreamPurpose::Features => 0x4645_4154,
            StreamPurpose::Permutation => 0x5045_524d,
        }
    }
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a 32-byte ChaCha key from the stream coordinates.
pub fn substream_key(master_seed: u64, purpose: StreamPurpose, actor: u64, counter: u64) -> [u8; 32] {
    let mut state = splitmix64(master_seed ^ purpose.tag().rotate_left(17));
    state = splitmix64(state ^ actor.wrapping_mul(0xD6E8_FEB8_6659_FD93));
    state = splitmix64(state ^ counter.wrapping_mul(0xA076_1D64_78BD_642F));
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    key
}

/// Generator for one `(purpose, actor, counter)` cell of a run.
pub fn substream(master_seed: u64, purpose: StreamPurpose, actor: u64, counter: u64) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(substream_key(master_seed, purpose, actor, counter))
}

/// Sampling stream used by the server (or, in the noncooperative learner, by
/// the client itself) for client `client` in round `round`.
pub fn sampling_stream(master_seed: u64, client: usize, round: usize) -> ChaCha8Rng {
    substream(master_seed, StreamPurpose::Sampling, client as u64, round as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_coordinates_same_stream() {
        let mut a = sampling_stream(7, 2, 11);
        let mut b = sampling_stream(7, 2, 11);
        for _ in 0..16 {
            assert_eq!(a.random::<u64>(), b.random::<u64>());
        }
    }

    #[test]
    fn neighbouring_coordinates_differ() {
        let base = sampling_stream(7, 2, 11).random::<u64>();
        assert_ne!(base, sampling_stream(7, 3, 11).random::<u64>());
        assert_ne!(base, sampling_stream(7, 2, 12).random::<u64>());
        assert_ne!(base, sampling_stream(8, 2, 11).random::<u64>());
        assert_ne!(base, substream(7, StreamPurpose::Data, 2, 11).random::<u64>());
    }
}
