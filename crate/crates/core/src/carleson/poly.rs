//! Polynomial interpolation and the polynomial lemma check.

use serde::Serialize;

use crate::error::{LabError, Result};
use crate::real::Real;

/// Monomial coefficients (constant term first) of the interpolant through
/// `(nodes[i], values[i])`, via Newton divided differences.
pub fn interpolate<R: Real>(nodes: &[R], values: &[R]) -> Result<Vec<R>> {
    if nodes.is_empty() || nodes.len() != values.len() {
        return Err(LabError::Domain(format!(
            "interpolation needs matching nonempty nodes and values ({} vs {})",
            nodes.len(),
            values.len()
        )));
    }
    for (i, x) in nodes.iter().enumerate() {
        if nodes[..i].iter().any(|y| y == x) {
            return Err(LabError::Domain(format!("repeated interpolation node {:e}", x.to_f64())));
        }
    }
    let n = nodes.len();
    let mut dd = values.to_vec();
    for j in 1..n {
        for i in (j..n).rev() {
            dd[i] = (dd[i].clone() - dd[i - 1].clone()) / (nodes[i].clone() - nodes[i - j].clone());
        }
    }
    // expand c_0 + (x - x_0)(c_1 + (x - x_1)(...)) from the inside out
    let mut coeffs = vec![dd[n - 1].clone()];
    for i in (0..n - 1).rev() {
        let mut next = vec![R::zero(); coeffs.len() + 1];
        for (k, c) in coeffs.iter().enumerate() {
            next[k + 1] = next[k + 1].clone() + c.clone();
            next[k] = next[k].clone() - c.clone() * nodes[i].clone();
        }
        next[0] = next[0].clone() + dd[i].clone();
        coeffs = next;
    }
    Ok(coeffs)
}

/// Horner evaluation.
pub fn horner<R: Real>(coeffs: &[R], x: &R) -> R {
    coeffs.iter().rev().fold(R::zero(), |acc, c| acc * x.clone() + c.clone())
}

/// Fits degree `degree` through the first `degree + 1` nodes and returns the
/// largest relative miss on the remaining ones. Values with modulus below
/// `floor` are compared absolutely against `floor`.
pub fn degree_residual<R: Real>(nodes: &[R], values: &[R], degree: usize, floor: f64) -> Result<f64> {
    let k = degree + 1;
    if nodes.len() <= k {
        return Err(LabError::Domain(format!("{} nodes cannot test degree {degree}", nodes.len())));
    }
    let coeffs = interpolate(&nodes[..k], &values[..k])?;
    Ok(nodes[k..]
        .iter()
        .zip(&values[k..])
        .map(|(x, v)| {
            let miss = (horner(&coeffs, x) - v.clone()).abs().to_f64();
            miss / v.abs().to_f64().max(floor)
        })
        .fold(0.0, f64::max))
}

/// Outcome of testing `|p(s)| <= (1+s)^N / s` on a log grid and, when it
/// holds, `|p(0)| <= e^2 N^2`.
#[derive(Debug, Clone, Serialize)]
pub struct LemmaReport {
    pub n: u32,
    pub grid_points: usize,
    pub hypothesis_holds: bool,
    /// First grid point where the hypothesis fails.
    pub witness: Option<f64>,
    /// Largest `s |p(s)| / (1+s)^N` over the grid.
    pub max_ratio: f64,
    pub p0: f64,
    pub bound: f64,
    pub conclusion_holds: bool,
}

impl LemmaReport {
    pub fn passes(&self) -> bool {
        self.hypothesis_holds && self.conclusion_holds
    }
}

/// Log-spaced grid on `[1e-6, 1e6]`, `per_decade` points per decade.
pub fn lemma_grid(per_decade: usize) -> Vec<f64> {
    let steps = 12 * per_decade;
    (0..=steps).map(|i| 10f64.powf(-6.0 + 12.0 * i as f64 / steps as f64)).collect()
}

pub fn polynomial_lemma_check(coeffs: &[f64], n: u32) -> LemmaReport {
    let grid = lemma_grid(20);
    let mut witness = None;
    let mut max_ratio: f64 = 0.0;
    for &s in &grid {
        let ratio = s * horner(coeffs, &s).abs() / (1.0 + s).powi(n as i32);
        if ratio > 1.0 && witness.is_none() {
            witness = Some(s);
        }
        max_ratio = max_ratio.max(ratio);
    }
    let p0 = coeffs.first().copied().unwrap_or(0.0);
    let bound = std::f64::consts::E.powi(2) * (n * n) as f64;
    LemmaReport {
        n,
        grid_points: grid.len(),
        hypothesis_holds: witness.is_none(),
        witness,
        max_ratio,
        p0,
        bound,
        conclusion_holds: p0.abs() <= bound,
    }
}
