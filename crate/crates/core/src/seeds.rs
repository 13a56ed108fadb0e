//! Seed derivation.
//!
//! Every random stream in an experiment is seeded from the master seed by
//! hashing a path of integer tags:
//!
//! ```text
//! s_0 = master
//! s_{j+1} = splitmix64(s_j ^ splitmix64(tag_j))
//! ```
//!
//! The harness uses the paths `[SPLIT]` for fold assignment,
//! `[INIT, fold, learner]` for learner initialisation and `[BOOTSTRAP, fold]`
//! for bagging resamples. The method and its parameter never enter a path, so
//! two methods run under one master seed share data splits and initial weights.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const SPLIT: u64 = 0x0053_504c_4954;
pub const INIT: u64 = 0x494e_4954;
pub const BOOTSTRAP: u64 = 0x424f_4f54;
pub const DATA: u64 = 0x4441_5441;

/// One round of the SplitMix64 finaliser.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(master, |s, &tag| splitmix64(s ^ splitmix64(tag)))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
