//! Seeded random instances for property checks.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::carleson::CarlesonSequence;
use crate::error::Result;
use crate::mat2::{outer, SymMat2, Vec2};
use crate::weight::{PiecewiseVector, PiecewiseWeight};

pub use rand::SeedableRng;
pub type LabRng = ChaCha8Rng;

pub fn rng(seed: u64) -> LabRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn unit_vector(rng: &mut impl Rng) -> Vec2<f64> {
    let t = rng.gen_range(0.0..std::f64::consts::TAU);
    Vec2::new(t.cos(), t.sin())
}

/// Positive definite with eigenvalues log-uniform in `[min_eig, 1]` and a
/// uniformly random frame.
pub fn psd_matrix(rng: &mut impl Rng, min_eig: f64) -> SymMat2<f64> {
    let a = unit_vector(rng);
    let lo = min_eig.ln();
    let l1 = rng.gen_range(lo..=0.0).exp();
    let l2 = rng.gen_range(lo..=0.0).exp();
    outer(&a).scale(&l1).add(&outer(&a.perp()).scale(&l2))
}

/// PSD of rank at most one with norm in `[0, 1]`.
pub fn rank_one(rng: &mut impl Rng) -> SymMat2<f64> {
    outer(&unit_vector(rng)).scale(&rng.gen_range(0.0..1.0))
}

pub fn weight(rng: &mut impl Rng, level: u32, min_eig: f64) -> PiecewiseWeight<f64> {
    let cells = (0..1u64 << level).map(|_| psd_matrix(rng, min_eig)).collect();
    PiecewiseWeight::new(level, cells).expect("cell count matches the level")
}

pub fn vector_field(rng: &mut impl Rng, level: u32) -> PiecewiseVector<f64> {
    let cells = (0..1u64 << level)
        .map(|_| Vec2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    PiecewiseVector::new(level, cells).expect("cell count matches the level")
}

/// Cellwise multiples of one fixed direction, so all `W_J f_J` are parallel
/// when `W` is scalar.
pub fn scalar_field(rng: &mut impl Rng, level: u32) -> Vec<f64> {
    (0..1u64 << level).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// `A_I = |I| P_I` with random PSD `P_I`.
pub fn carleson_sequence(rng: &mut impl Rng, depth: u32) -> Result<CarlesonSequence<f64>> {
    let levels = (0..=depth)
        .map(|l| {
            (0..1u64 << l)
                .map(|_| psd_matrix(rng, 1e-3).scale(&2f64.powi(-(l as i32))))
                .collect()
        })
        .collect();
    CarlesonSequence::dense(levels)
}
