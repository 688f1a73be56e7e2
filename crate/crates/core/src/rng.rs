//! Counter-based random streams.
//!
//! Every replication of every grid point gets its own ChaCha8 stream: the key is
//! derived from `(seed, point)` and the 64-bit stream id is the replication index.
//! Two runs with the same seed therefore see the same numbers for the same
//! `(point, replication)` no matter how the work was scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator type used throughout the crate.
pub type StreamRng = ChaCha8Rng;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed + grid point id, from which independent replication streams are split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    seed: u64,
    point: u64,
}

impl StreamKey {
    pub fn new(seed: u64, point: u64) -> Self {
        Self { seed, point }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn point(&self) -> u64 {
        self.point
    }

    fn key_bytes(&self) -> [u8; 32] {
        let mut s = self.seed;
        let mut state = splitmix64(&mut s) ^ self.point.wrapping_mul(0xD1B5_4A32_D192_ED03);
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        key
    }

    /// Stream for replication `rep`.
    pub fn stream(&self, rep: u64) -> StreamRng {
        let mut rng = ChaCha8Rng::from_seed(self.key_bytes());
        rng.set_stream(rep);
        rng
    }
}

/// Convenience: a single stream for ad-hoc draws (`point = 0`, `rep = 0`).
pub fn seeded(seed: u64) -> StreamRng {
    StreamKey::new(seed, 0).stream(0)
}
