//! Reproducible random streams.
//!
//! A stream is addressed by `(master seed, purpose, index)`. Each address maps
//! to its own ChaCha8 stream, so replicate `i` draws the same numbers no
//! matter how replicates are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Purpose tags keep streams used for different jobs disjoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u16)]
pub enum Purpose {
    Strong = 1,
    Weak = 2,
    Subordinator = 3,
    Sampler = 4,
    Prm = 5,
    NestedInner = 6,
    Grid = 7,
    Integration = 8,
    Exponent = 9,
}

const INDEX_BITS: u32 = 48;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Streams {
    seed: u64,
}

impl Streams {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The RNG for replicate `index` of the given purpose.
    pub fn stream(&self, purpose: Purpose, index: u64) -> StreamRng {
        debug_assert!(index < (1u64 << INDEX_BITS));
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(((purpose as u64) << INDEX_BITS) | (index & ((1u64 << INDEX_BITS) - 1)));
        rng
    }

    /// A child family, e.g. one per scenario inside a larger run.
    pub fn child(&self, tag: u64) -> Streams {
        // splitmix64 finaliser
        let mut z = self.seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        Streams::new(z ^ (z >> 31))
    }
}
