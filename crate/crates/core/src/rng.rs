//! Counter-based random streams.
//!
//! Every random vector in a simulation is drawn from its own ChaCha stream
//! whose key is a hash of `(seed, hop, user, trial, purpose)`. A draw is
//! therefore a pure function of its coordinates, independent of how trials
//! are scheduled across worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for. Distinct purposes never share a key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    /// Fast-fading vector `z`.
    Fading,
    /// CSIT error vector `q`.
    EstimationError,
    /// Auxiliary draws of the verification suite.
    Verification,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Fading => 0x7a,
            Purpose::EstimationError => 0x71,
            Purpose::Verification => 0x76,
        }
    }
}

/// Coordinates of one random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub seed: u64,
    pub hop: u64,
    pub user: u64,
    pub trial: u64,
    pub purpose: Purpose,
}

impl StreamKey {
    pub fn new(seed: u64, hop: u64, user: usize, trial: usize, purpose: Purpose) -> Self {
        Self {
            seed,
            hop,
            user: user as u64,
            trial: trial as u64,
            purpose,
        }
    }

    /// Opens the stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut state = mix64(self.seed ^ 0x243F_6A88_85A3_08D3);
        for word in [self.hop, self.user, self.trial, self.purpose.tag()] {
            state = mix64(state ^ mix64(word.wrapping_add(0x9E37_79B9_7F4A_7C15)));
        }
        let mut key = [0u8; 32];
        for (i, chunk) in key.chunks_exact_mut(8).enumerate() {
            let word = mix64(state.wrapping_add((i as u64 + 1).wrapping_mul(0xD134_2543_DE82_EF95)));
            chunk.copy_from_slice(&word.to_le_bytes());
        }
        ChaCha8Rng::from_seed(key)
    }
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
