//! Counter-based random streams.
//!
//! A stream is the pair `(master_seed, stream_index)`; the generator behind
//! it is ChaCha8 keyed by the seed with the index as its stream selector, so
//! every Monte Carlo sample draws from its own stream and results do not
//! depend on how samples are scheduled across workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub master_seed: u64,
    pub stream_index: u64,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        Self {
            master_seed,
            stream_index,
        }
    }

    pub fn generator(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_index);
        rng
    }

    /// Stream `index` of the family derived from this seed and `purpose`.
    ///
    /// Different purposes give unrelated families, so e.g. path sampling and
    /// noise sampling never share a stream.
    pub fn family(master_seed: u64, purpose: u64, index: u64) -> Self {
        Self::new(splitmix64(master_seed ^ splitmix64(purpose)), index)
    }
}

pub(crate) fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stream families used by the estimators.
pub mod purpose {
    pub const PATHS: u64 = 1;
    pub const NOISE: u64 = 2;
    pub const CHAOS: u64 = 3;
    pub const CONDITIONAL: u64 = 4;
}
