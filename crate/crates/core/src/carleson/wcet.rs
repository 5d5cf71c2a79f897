//! Brute-force embedding constants on small grids.
//!
//! For `W` constant on the cells of `D^m` the embedding constant is the top
//! eigenvalue of the pencil `(Q, N)` on `R^{2 * 2^m}`, where
//! `Q(f) = sum_I |A_I^{1/2} <phi_I W f>_I|^2` and `N = blockdiag(|J| W_J)`.
//! In convex-body mode the objective is convex in each `phi_I`, so the sup
//! over `phi_I : I -> [-1, 1]` is attained at cellwise signs, and a global
//! sign flip of `phi_I` changes nothing.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use super::CarlesonSequence;
use crate::dyadic::DyadicInterval;
use crate::error::{LabError, Result};
use crate::weight::PiecewiseWeight;

/// Largest number of sign patterns enumerated in convex-body mode.
pub const MAX_PATTERNS: u64 = 1 << 20;
/// Largest grid level for the dense eigenproblem.
pub const MAX_GRID_LEVEL: u32 = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CiiMode {
    /// `phi_I = 1`.
    Plain,
    /// Sup over cellwise signs.
    ConvexBody,
}

/// Blocks `A_I^{1/2} (|J|/|I|) W_J (|J| W_J)^{-1/2}` of one interval, one per
/// cell `J` of `I`, as 2x2 row-major arrays.
fn interval_blocks(
    interval: DyadicInterval,
    a_root: &crate::mat2::SymMat2<f64>,
    weight: &PiecewiseWeight<f64>,
    whiten: &[crate::mat2::SymMat2<f64>],
) -> Vec<(usize, [[f64; 2]; 2])> {
    let m = weight.level();
    let rel = 2f64.powi(interval.level() as i32 - m as i32);
    interval
        .cell_range(m)
        .map(|j| {
            let wj = weight.cell(j);
            // A^{1/2} W_J B_J as a general 2x2 product
            let aw = mul(a_root, wj);
            let g = mul_gen(&aw, &whiten[j as usize]);
            (j as usize, [[g[0][0] * rel, g[0][1] * rel], [g[1][0] * rel, g[1][1] * rel]])
        })
        .collect()
}

fn mul(x: &crate::mat2::SymMat2<f64>, y: &crate::mat2::SymMat2<f64>) -> [[f64; 2]; 2] {
    [
        [x.m11 * y.m11 + x.m12 * y.m12, x.m11 * y.m12 + x.m12 * y.m22],
        [x.m12 * y.m11 + x.m22 * y.m12, x.m12 * y.m12 + x.m22 * y.m22],
    ]
}

fn mul_gen(x: &[[f64; 2]; 2], y: &crate::mat2::SymMat2<f64>) -> [[f64; 2]; 2] {
    [
        [x[0][0] * y.m11 + x[0][1] * y.m12, x[0][0] * y.m12 + x[0][1] * y.m22],
        [x[1][0] * y.m11 + x[1][1] * y.m12, x[1][0] * y.m12 + x[1][1] * y.m22],
    ]
}

/// `G^T G` for the 2 x dim operator `G = sum_j sign_j block_j e_j^T`.
fn gram(blocks: &[(usize, [[f64; 2]; 2])], signs: u64, dim: usize) -> DMatrix<f64> {
    let mut g = DMatrix::<f64>::zeros(2, dim);
    for (k, (j, b)) in blocks.iter().enumerate() {
        let sg = if k > 0 && signs >> (k - 1) & 1 == 1 { -1.0 } else { 1.0 };
        for r in 0..2 {
            for c in 0..2 {
                g[(r, 2 * j + c)] = sg * b[r][c];
            }
        }
    }
    g.transpose() * g
}

fn top_eigenvalue(m: DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m).eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Best constant in `sum_{I in D^{<=depth}} |A_I^{1/2} <phi_I W f>_I|^2 <= c ||f||^2_W`
/// over `f` constant on the cells of the weight's grid.
pub fn brute_force_cii(
    weight: &PiecewiseWeight<f64>,
    a: &CarlesonSequence<f64>,
    depth: u32,
    mode: CiiMode,
) -> Result<f64> {
    let m = weight.level();
    if depth > m || depth > a.depth() {
        return Err(LabError::Range(format!("depth {depth} exceeds the grid level {m} or the sequence")));
    }
    if m > MAX_GRID_LEVEL {
        return Err(LabError::Resource(format!("grid level {m} is above {MAX_GRID_LEVEL} (depth {depth}, {mode:?})")));
    }
    let dim = 2usize << m;
    let whiten = weight
        .cells()
        .iter()
        .enumerate()
        .map(|(j, w)| {
            let at = DyadicInterval::at(m, j as u64);
            w.scale(&2f64.powi(-(m as i32))).psd_sqrt()?.inverse().map_err(|e| e.at(at))
        })
        .collect::<Result<Vec<_>>>()?;
    let intervals: Vec<DyadicInterval> = (0..=depth).flat_map(|l| (0..1u64 << l).map(move |k| DyadicInterval::at(l, k))).collect();
    let blocks = intervals
        .iter()
        .map(|&i| Ok(interval_blocks(i, &a.matrix(i).psd_sqrt()?, weight, &whiten)))
        .collect::<Result<Vec<_>>>()?;
    match mode {
        CiiMode::Plain => {
            let q = blocks.iter().fold(DMatrix::zeros(dim, dim), |acc, b| acc + gram(b, 0, dim));
            Ok(top_eigenvalue(q))
        }
        CiiMode::ConvexBody => {
            // patterns with the first cell of each interval fixed to +
            let mut total: u64 = 1;
            for b in &blocks {
                let bits = b.len() as u32 - 1;
                total = total
                    .checked_mul(1u64 << bits.min(63))
                    .filter(|t| *t <= MAX_PATTERNS)
                    .ok_or_else(|| {
                        LabError::Resource(format!(
                            "convex-body enumeration at depth {depth} needs more than {MAX_PATTERNS} sign patterns"
                        ))
                    })?;
            }
            let grams: Vec<Vec<DMatrix<f64>>> = blocks
                .par_iter()
                .map(|b| (0..1u64 << (b.len() - 1)).map(|s| gram(b, s, dim)).collect())
                .collect();
            let best = (0..total)
                .into_par_iter()
                .map(|mut code| {
                    let mut q = DMatrix::<f64>::zeros(dim, dim);
                    for g in &grams {
                        let radix = g.len() as u64;
                        q += &g[(code % radix) as usize];
                        code /= radix;
                    }
                    top_eigenvalue(q)
                })
                .reduce(|| f64::NEG_INFINITY, f64::max);
            Ok(best)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::carleson::{build_a, testing_constants};
    use crate::mat2::SymMat2;
    use crate::weight::build_counterexample_weight;

    #[test]
    fn identity_single_interval() {
        let w = PiecewiseWeight::constant(0, SymMat2::<f64>::identity());
        let a = CarlesonSequence::dense(vec![vec![SymMat2::identity()]]).unwrap();
        let c = brute_force_cii(&w, &a, 0, CiiMode::Plain).unwrap();
        assert!((c - 1.0).abs() < 1e-14);
        let cb = brute_force_cii(&w, &a, 0, CiiMode::ConvexBody).unwrap();
        assert!((cb - 1.0).abs() < 1e-14);
    }

    #[test]
    fn plain_dominates_testing_on_counterexample() {
        let w = build_counterexample_weight(0.25f64, 3).unwrap();
        let a = build_a(&w, 3).unwrap();
        let wp = w.truncate(3).unwrap();
        let ci = testing_constants(&wp.average_tree(), &a, 3, 3).unwrap().sup;
        let cii = brute_force_cii(&wp, &a, 3, CiiMode::Plain).unwrap();
        assert!(cii >= ci * (1.0 - 1e-12), "{cii} < {ci}");
    }

    #[test]
    fn convex_body_cap() {
        let w = PiecewiseWeight::constant(5, SymMat2::<f64>::identity());
        let a = CarlesonSequence::dense(
            (0..=5).map(|l| vec![SymMat2::identity(); 1 << l]).collect(),
        )
        .unwrap();
        assert!(matches!(brute_force_cii(&w, &a, 5, CiiMode::ConvexBody), Err(LabError::Resource(_))));
        let big = PiecewiseWeight::constant(10, SymMat2::<f64>::identity());
        assert!(matches!(brute_force_cii(&big, &a, 5, CiiMode::Plain), Err(LabError::Resource(_))));
    }

    #[test]
    fn convex_body_at_least_plain() {
        let w = build_counterexample_weight(0.25f64, 2).unwrap();
        let a = build_a(&w, 2).unwrap();
        let wp = w.truncate(2).unwrap();
        let p = brute_force_cii(&wp, &a, 2, CiiMode::Plain).unwrap();
        let c = brute_force_cii(&wp, &a, 2, CiiMode::ConvexBody).unwrap();
        assert!(c >= p * (1.0 - 1e-12));
    }
}
