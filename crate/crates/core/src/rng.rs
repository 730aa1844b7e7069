//! Seed splitting.
//!
//! Every random draw in the crate descends from one root seed. Children are
//! derived by hashing `(parent, label, index)` through SplitMix64, so a
//! stream's values never depend on how many draws another stream made.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// A node in the seed tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedStream(u64);

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        SeedStream(splitmix(seed))
    }

    pub fn value(self) -> u64 {
        self.0
    }

    pub fn derive(self, label: &str) -> SeedStream {
        SeedStream(splitmix(self.0 ^ splitmix(fnv1a(label))))
    }

    pub fn index(self, i: u64) -> SeedStream {
        SeedStream(splitmix(self.0.wrapping_add(splitmix(i.wrapping_add(GOLDEN)))))
    }

    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}
