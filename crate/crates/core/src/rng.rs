//! Seeded, splittable random streams.
//!
//! Every session owns one ChaCha8 key derived from its seed; each try reads
//! from its own stream of that key, so the draws for try `n` do not depend
//! on how many numbers earlier tries consumed. ChaCha output is identical
//! on every platform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream 0 is reserved for session-level draws.
const SESSION_STREAM: u64 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedStream {
    key: [u8; 32],
}

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        Self::from_parts(&[seed])
    }

    /// Key built from several independent seeds, e.g. a behaviour seed and a
    /// session seed.
    pub fn from_parts(parts: &[u64]) -> Self {
        let mut key = [0u8; 32];
        let mut state = 0x243F_6A88_85A3_08D3u64 ^ parts.len() as u64;
        for (i, chunk) in key.chunks_mut(8).enumerate() {
            let part = parts.get(i).copied().unwrap_or(0);
            state = splitmix64(state ^ part);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        // Parts beyond the fourth still perturb the key.
        for &part in parts.iter().skip(4) {
            state = splitmix64(state ^ part);
            key[0..8].copy_from_slice(&state.to_le_bytes());
        }
        Self { key }
    }

    pub fn session(&self) -> ChaCha8Rng {
        self.stream(SESSION_STREAM)
    }

    /// Independent generator for try `try_index`.
    pub fn for_try(&self, try_index: u32) -> ChaCha8Rng {
        self.stream(try_index as u64 + 1)
    }

    fn stream(&self, id: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(id);
        rng
    }
}

/// SplitMix64 finalizer; also used to derive child seeds.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the `index`-th child of `seed` (sessions of a patient, cells of a sweep).
pub fn child_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index.wrapping_add(0xD1B5_4A32_D192_ED03)))
}
