//! Deterministic, splittable random streams.
//!
//! Every random decision in the pipeline (splits, negatives, dropout masks,
//! initialization) draws from a [`SeedStream`] derived from the run seed by a
//! fixed path of labels, so results never depend on scheduling or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SeedStream {
    key: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        SeedStream {
            key: splitmix64(seed),
        }
    }

    /// Child stream identified by `label`; distinct labels give independent streams.
    pub fn split(&self, label: u64) -> Self {
        SeedStream {
            key: splitmix64(self.key ^ splitmix64(label.wrapping_mul(0xD1B5_4A32_D192_ED03))),
        }
    }

    /// Child stream keyed by a string label.
    pub fn split_str(&self, label: &str) -> Self {
        // FNV-1a keeps the mapping stable across Rust releases.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in label.bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01B3);
        }
        self.split(h)
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.key)
    }
}
