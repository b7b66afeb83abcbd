//! Seed derivation. Every random stream in a run is derived from one root
//! `u64` seed: `derive_seed(root, domain, index)` mixes the three with
//! SplitMix64, and streams are ChaCha8 generators seeded from the result.
//!
//! Domains in use:
//! - [`domain::EMISSION`]: inter-arrival gaps of the pair source (index 0)
//! - [`domain::PAIRS`]: per-pair outcome and timing draws (ChaCha stream = pair id)
//! - [`domain::SWEEP`]: one root seed per sweep grid point (index = grid position)
//! - [`domain::SCENARIO`]: sub-runs inside a scenario (index = sub-run)

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub mod domain {
    pub const EMISSION: u64 = 0x454d_4954;
    pub const PAIRS: u64 = 0x5041_4952;
    pub const SWEEP: u64 = 0x5357_4550;
    pub const SCENARIO: u64 = 0x5343_454e;
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(root: u64, domain: u64, index: u64) -> u64 {
    splitmix64(splitmix64(root ^ splitmix64(domain)) ^ index)
}

pub fn stream_rng(root: u64, domain: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, domain, index))
}
