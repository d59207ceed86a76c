//! Deterministic random substreams.
//!
//! Every random draw is keyed by `(master seed, step, purpose, particle)`, so
//! results do not depend on how particles are spread over worker threads.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

/// Generator behind every stream. Seeding is a handful of SplitMix64 steps,
/// which matters because each particle opens fresh streams at every event.
pub type StreamRng = Xoshiro256PlusPlus;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Init = 1,
    Spread = 2,
    Resample = 3,
    Draw = 4,
    Predict = 5,
    Simulate = 6,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Key for a family of per-particle streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Substream {
    key: u64,
}

impl Substream {
    pub fn new(seed: u64, step: u64, purpose: Purpose) -> Self {
        let mut state = seed;
        let a = splitmix64(&mut state);
        let mut state = a ^ step.wrapping_mul(0xD6E8_FEB8_6659_FD93);
        let b = splitmix64(&mut state);
        let mut state = b ^ (purpose as u64).wrapping_mul(0xA076_1D64_78BD_642F);
        Self {
            key: splitmix64(&mut state),
        }
    }

    /// Independent stream for particle (or item) `index`.
    pub fn stream(&self, index: u64) -> StreamRng {
        // distinct indices give distinct SplitMix64 states, hence distinct seeds
        let mut state = self.key ^ index.wrapping_mul(0xE703_7ED1_A0B4_28DB);
        let mut seed = [0u8; 32];
        for chunk in seed.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        StreamRng::from_seed(seed)
    }

    /// The stream used for sequential draws that belong to no particle.
    pub fn shared(&self) -> StreamRng {
        self.stream(u64::MAX)
    }
}
