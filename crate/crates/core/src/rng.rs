//! Counter-based seed derivation.
//!
//! Every random stream in the crate is a `ChaCha8Rng` seeded from
//! `derive_seed(master, path)`, where `path` names the stream (a tag plus
//! replicate counters). Streams therefore depend only on their path and
//! never on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream tags. Values are part of the reproducibility contract.
pub mod tag {
    pub const DELTA: u64 = 0x0de1_7a00;
    pub const PANEL: u64 = 0x0ba7_e100;
    pub const BOOT_U3: u64 = 0x0b00_7003;
    pub const BOOT_U4: u64 = 0x0b00_7004;
    pub const BOOT_U5: u64 = 0x0b00_7005;
    pub const BOOT_LS2: u64 = 0x0b00_7152;
    pub const XI_MC: u64 = 0x05c1_3c00;
    pub const CI: u64 = 0x0c1c_1c00;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds `path` into `master` with SplitMix64: `h <- mix(h ^ mix(part))`.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(master), |h, &part| {
        splitmix64(h ^ splitmix64(part))
    })
}

pub fn stream(master: u64, path: &[u64]) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paths_separate_streams() {
        assert_ne!(derive_seed(1, &[2, 3]), derive_seed(1, &[3, 2]));
        assert_ne!(derive_seed(1, &[2]), derive_seed(1, &[2, 0]));
        assert_eq!(derive_seed(7, &[1, 2, 3]), derive_seed(7, &[1, 2, 3]));
    }
}
