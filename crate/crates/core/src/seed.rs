//! Seed derivation.
//!
//! Every random stream in the crate is keyed by a 64-bit seed derived from a
//! master seed through a hash chain. Streams therefore depend only on *what*
//! they are for (cell, replication, purpose), never on execution order or on
//! how many worker threads happen to run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used for every stream in the crate.
pub type Stream = ChaCha8Rng;

/// Purpose tags mixed into derived seeds.
pub mod purpose {
    pub const OPTIMUM: u64 = 0x6f70_7469_6d75_6d00;
    pub const DESIGN: u64 = 0x6465_7369_676e_0000;
    pub const CELL: u64 = 0x6365_6c6c_0000_0000;
    pub const SCRAMBLE: u64 = 0x7363_7261_6d62_6c65;
    pub const MIRROR: u64 = 0x6d69_7272_6f72_0000;
    pub const DE_INIT: u64 = 0x6465_5f69_6e69_7400;
    pub const DE_STEP: u64 = 0x6465_5f73_7465_7000;
    pub const SAMPLES: u64 = 0x7361_6d70_6c65_7300;
}

/// SplitMix64 finalizer.
#[inline]
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hash chain over `seed` followed by `parts`.
pub fn derive(seed: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(mix(seed), |h, &p| mix(h ^ mix(p)))
}

/// FNV-1a over the UTF-8 bytes of `s`; stable across platforms and releases.
pub fn tag(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

pub fn stream(seed: u64) -> Stream {
    Stream::seed_from_u64(seed)
}
