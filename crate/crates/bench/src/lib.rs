//! Fixed inputs shared by the benchmarks.

use mwcb_core::random::{self, LabRng};
use mwcb_core::{PiecewiseVector, PiecewiseWeight};

pub const SEED: u64 = 7;

pub fn rng() -> LabRng {
    random::rng(SEED)
}

/// A random weight and vector field on the grid of the given level.
pub fn random_pair(level: u32) -> (PiecewiseWeight<f64>, PiecewiseVector<f64>) {
    let mut r = rng();
    (random::weight(&mut r, level, 1e-3), random::vector_field(&mut r, level))
}
