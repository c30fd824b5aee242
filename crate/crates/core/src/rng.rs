//! Seeded random streams.
//!
//! Every stream is a ChaCha8 generator (`rand_chacha::ChaCha8Rng`) seeded
//! through `SeedableRng::seed_from_u64`. Uniform variates on the open unit
//! interval are built from the top 53 bits of `next_u64` as
//! `((bits >> 11) + 0.5) * 2^-53`, so they are never exactly 0 or 1.
//!
//! Independent per-cell streams come from [`mix_seed`], which folds the
//! global seed, a cell index and a stage id through the SplitMix64
//! finalizer. Results therefore do not depend on how cells are scheduled
//! across workers.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type CellRng = ChaCha8Rng;

pub trait FromSeedU64 {
    fn from_seed_u64(seed: u64) -> Self;
}

impl FromSeedU64 for ChaCha8Rng {
    fn from_seed_u64(seed: u64) -> Self {
        ChaCha8Rng::seed_from_u64(seed)
    }
}

/// SplitMix64 output function.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `splitmix64(splitmix64(splitmix64(global) ^ cell) ^ stage)`.
pub fn mix_seed(global: u64, cell: u64, stage: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(global) ^ cell) ^ stage)
}

/// Stream for one cell of one pipeline stage.
pub fn cell_rng(global: u64, cell: u64, stage: u64) -> CellRng {
    CellRng::from_seed_u64(mix_seed(global, cell, stage))
}

/// Uniform draw on (0, 1).
#[inline]
pub fn uniform_open<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
    ((rng.next_u64() >> 11) as f64 + 0.5) * SCALE
}
