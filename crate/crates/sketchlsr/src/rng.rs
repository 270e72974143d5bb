use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Reproducible RNG handle. The (seed, stream) pair fully determines the
/// draw sequence on every platform; parallel work must use distinct streams.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeededRng {
    pub seed: u64,
    pub stream: u64,
}

impl SeededRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        SeededRng { seed, stream }
    }

    /// Instantiates the generator for this (seed, stream).
    pub fn to_rng(self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }

    pub fn with_stream(self, stream: u64) -> Self {
        SeededRng {
            seed: self.seed,
            stream,
        }
    }

    pub fn offset_stream(self, k: u64) -> Self {
        SeededRng {
            seed: self.seed,
            stream: self.stream.wrapping_add(k),
        }
    }
}
