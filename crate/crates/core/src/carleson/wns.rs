//! The perturbed family `W_{n,s}`: the a priori lower bound for the
//! convex-body maximal operator and the rational-function analysis of its
//! terms in `s`.
//!
//! Throughout `f = 1_{I0} a` with `a = e1` and `phi_I = 1_{I+}` on `D_+`, so
//! `<phi_I W_{n,s} f>_I = <W_{n,s}>_{I+} a / 2`.

use rayon::prelude::*;
use serde::Serialize;

use super::poly::{degree_residual, interpolate, polynomial_lemma_check, LemmaReport};
use super::{build_a, counterexample_embedding_sum, pairwise_sum_scalar, CarlesonSequence, PhiPolicy};
use crate::dyadic::{plus_class, DyadicInterval};
use crate::error::{LabError, Result};
use crate::mat2::Vec2;
use crate::real::Real;
use crate::weight::{build_wns, MartingaleWeight};

/// Interpolation nodes for the degree analysis.
pub const NODES: [f64; 7] = [0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0];

/// Per-interval terms `(I, R_{n,I}(s), Q_{n,I}(s))` and `||f||^2_{W_{n,s}}`.
fn wns_terms<R: Real>(
    weight: &MartingaleWeight<R>,
    tilde: &CarlesonSequence<R>,
    n: u32,
    s: &R,
) -> Result<(Vec<(DyadicInterval, R, R)>, R)> {
    if n == 0 {
        return Err(LabError::Range("W_(n,s) needs n >= 1".into()));
    }
    let w = build_wns(weight, tilde, n, s)?;
    let tree = w.average_tree();
    let a = Vec2::e1();
    let half = R::from_f64(0.5);
    let terms = plus_class(n)
        .into_par_iter()
        .map(|i| {
            let m = tree.get(i);
            let u = tree.get(i.plus_child()).apply(&a).scale(&half);
            let v = m.solve(&u).map_err(|e| e.at(i))?;
            Ok((i, tilde.quad(i, &v), m.det()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((terms, tree.get(DyadicInterval::ROOT).quad(&a)))
}

#[derive(Debug, Clone)]
pub struct WnsBound<R> {
    /// `s sum_{I in D_+^{<=n}} R_{n,I}(s)`.
    pub lhs: R,
    /// `||f||^2_{W_{n,s}}`.
    pub fnorm: R,
    pub ratio: R,
}

/// The linearized lower bound for `||M^c_{W_{n,s}}||^2` from the selectors `S_I`.
pub fn wns_bound<R: Real>(
    weight: &MartingaleWeight<R>,
    tilde: &CarlesonSequence<R>,
    n: u32,
    s: &R,
) -> Result<WnsBound<R>> {
    let (terms, fnorm) = wns_terms(weight, tilde, n, s)?;
    let r: Vec<R> = terms.into_iter().map(|t| t.1).collect();
    let lhs = s.clone() * pairwise_sum_scalar(&r);
    let ratio = lhs.clone() / fnorm.clone();
    Ok(WnsBound { lhs, fnorm, ratio })
}

/// Samples of `R_{n,I}` at the nodes with `Q = det <W_{n,s}>_I` and
/// `P = R Q^2`, and what interpolation says about their degrees.
#[derive(Debug, Clone, Serialize)]
pub struct RationalSample {
    pub interval: String,
    pub n: u32,
    pub nodes: Vec<f64>,
    pub r: Vec<f64>,
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    /// Degree-4 interpolant through the first five nodes.
    pub p_coeffs: Vec<f64>,
    /// Degree-2 interpolant through the first three nodes.
    pub q_coeffs: Vec<f64>,
    /// Relative miss of the degree-4 interpolant on the remaining nodes.
    pub p_residual: f64,
    /// Relative miss of the six-point interpolant on the seventh node.
    pub p_residual_six: f64,
    pub q_residual: f64,
    /// `Q(s) <= (1+s)^2 Q(0)` on every node.
    pub q_growth_ok: bool,
    pub p_nonnegative: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct APrioriRow {
    pub s: f64,
    /// `s sum R_{n,I}(s)`.
    pub lhs: f64,
    /// `(1+s)^5 / s * C <<W>_{I0} a, a>`.
    pub bound_quintic: f64,
    /// `(1+s) C <<W>_{I0} a, a>`.
    pub bound_linear: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DegreeAnalysis {
    pub epsilon: f64,
    pub n: u32,
    pub constant: f64,
    pub samples: Vec<RationalSample>,
    /// Coefficients of `p(s) = (C <W a, a>)^{-1} sum_I P_I(s) / Q_I(0)^2`.
    pub aggregate: Vec<f64>,
    pub lemma: LemmaReport,
    pub a_priori: Vec<APrioriRow>,
    /// `sum_{I in D_+^{<=n-1}} R_{n,I}(0)`.
    pub r0_sum: f64,
    /// `C^{-1}` times the half-interval embedding sum over `D_+^{<=n-1}`.
    pub r0_reference: f64,
}

impl DegreeAnalysis {
    pub fn max_p_residual(&self) -> f64 {
        self.samples.iter().map(|s| s.p_residual).fold(0.0, f64::max)
    }

    pub fn max_p_residual_six(&self) -> f64 {
        self.samples.iter().map(|s| s.p_residual_six).fold(0.0, f64::max)
    }

    pub fn max_q_residual(&self) -> f64 {
        self.samples.iter().map(|s| s.q_residual).fold(0.0, f64::max)
    }

    pub fn shapes_hold(&self) -> bool {
        self.samples.iter().all(|s| s.q_growth_ok && s.p_nonnegative)
    }

    pub fn a_priori_quintic_holds(&self) -> bool {
        self.a_priori.iter().all(|r| r.lhs <= r.bound_quintic)
    }

    pub fn r0_relative_gap(&self) -> f64 {
        (self.r0_sum - self.r0_reference).abs() / self.r0_reference.abs().max(f64::MIN_POSITIVE)
    }
}

/// Runs the full degree analysis of `R_{n,I}` for every `I` in `D_+^{<=n}`.
/// `tilde` must be `tilde_a(weight, build_a(weight), c)`.
pub fn degree_analysis<R: Real>(
    weight: &MartingaleWeight<R>,
    tilde: &CarlesonSequence<R>,
    n: u32,
    c: &R,
) -> Result<DegreeAnalysis> {
    let nodes: Vec<R> = NODES.iter().map(|&x| R::from_f64(x)).collect();
    let per_node = nodes
        .iter()
        .map(|s| wns_terms(weight, tilde, n, s))
        .collect::<Result<Vec<_>>>()?;
    let count = per_node[0].0.len();
    let one = R::one();
    let mut samples = Vec::with_capacity(count);
    let mut aggregate = vec![R::zero(); 5];
    for j in 0..count {
        let interval = per_node[0].0[j].0;
        let r: Vec<R> = per_node.iter().map(|t| t.0[j].1.clone()).collect();
        let q: Vec<R> = per_node.iter().map(|t| t.0[j].2.clone()).collect();
        let p: Vec<R> = r.iter().zip(&q).map(|(r, q)| r.clone() * q.square()).collect();
        let p_coeffs = interpolate(&nodes[..5], &p[..5])?;
        let q_coeffs = interpolate(&nodes[..3], &q[..3])?;
        let p_residual = degree_residual(&nodes, &p, 4, f64::MIN_POSITIVE)?;
        let p_residual_six = degree_residual(&nodes, &p, 5, f64::MIN_POSITIVE)?;
        let q_residual = degree_residual(&nodes, &q, 2, f64::MIN_POSITIVE)?;
        let q_growth_ok = nodes
            .iter()
            .zip(&q)
            .all(|(s, qs)| *qs <= (one.clone() + s.clone()).square() * q[0].clone());
        let p_nonnegative = p.iter().all(|x| *x >= R::zero());
        let q0sq = q[0].square();
        for (acc, pc) in aggregate.iter_mut().zip(&p_coeffs) {
            *acc = acc.clone() + pc.clone() / q0sq.clone();
        }
        let f = |v: &[R]| v.iter().map(|x| x.to_f64()).collect::<Vec<f64>>();
        samples.push(RationalSample {
            interval: interval.to_string(),
            n,
            nodes: NODES.to_vec(),
            r: f(&r),
            q: f(&q),
            p: f(&p),
            p_coeffs: f(&p_coeffs),
            q_coeffs: f(&q_coeffs),
            p_residual,
            p_residual_six,
            q_residual,
            q_growth_ok,
            p_nonnegative,
        });
    }
    let wa = weight.spectral(DyadicInterval::ROOT).quad(&Vec2::e1());
    let norm = c.clone() * wa;
    let aggregate: Vec<f64> = aggregate.iter().map(|x| (x.clone() / norm.clone()).to_f64()).collect();
    let lemma = polynomial_lemma_check(&aggregate, 5);

    let a_priori = nodes
        .iter()
        .zip(&per_node)
        .skip(1)
        .map(|(s, (terms, _))| {
            let r: Vec<R> = terms.iter().map(|t| t.1.clone()).collect();
            let lhs = s.clone() * pairwise_sum_scalar(&r);
            let grow = one.clone() + s.clone();
            APrioriRow {
                s: s.to_f64(),
                lhs: lhs.to_f64(),
                bound_quintic: (grow.powi(5) / s.clone() * norm.clone()).to_f64(),
                bound_linear: (grow * norm.clone()).to_f64(),
            }
        })
        .collect();

    let r0: Vec<R> = per_node[0].0.iter().filter(|t| t.0.level() < n).map(|t| t.1.clone()).collect();
    let a = build_a(weight, n)?;
    let half = counterexample_embedding_sum(weight, &a, &PhiPolicy::LeftPlus, n - 1)?;
    Ok(DegreeAnalysis {
        epsilon: weight.epsilon().to_f64(),
        n,
        constant: c.to_f64(),
        samples,
        aggregate,
        lemma,
        a_priori,
        r0_sum: pairwise_sum_scalar(&r0).to_f64(),
        r0_reference: (half.total() / c.clone()).to_f64(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct WnsRow {
    pub n: u32,
    pub s: f64,
    pub lhs: f64,
    pub fnorm: f64,
    pub ratio: f64,
    /// `||f||^2_{W_{n,s}} <= (1+s) <<W>_{I0} a, a>`.
    pub fnorm_bound_ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct WnsScan {
    pub rows: Vec<WnsRow>,
    /// Best row over the s-grid, per `n`.
    pub best: Vec<WnsRow>,
}

impl WnsScan {
    /// Levels `n` whose best ratio falls below the previous level's.
    pub fn best_decreases(&self) -> Vec<u32> {
        self.best.windows(2).filter(|w| w[1].ratio < w[0].ratio).map(|w| w[1].n).collect()
    }
}

/// Geometric grid `2^a, ..., 2^b` with `steps` points.
pub fn geometric_grid(a: f64, b: f64, steps: usize) -> Vec<f64> {
    if steps <= 1 {
        return vec![2f64.powf(a)];
    }
    (0..steps).map(|i| 2f64.powf(a + (b - a) * i as f64 / (steps - 1) as f64)).collect()
}

/// `wns_bound` on every `(n, s)`, in parallel.
pub fn wns_scan<R: Real>(
    weight: &MartingaleWeight<R>,
    tilde: &CarlesonSequence<R>,
    levels: std::ops::RangeInclusive<u32>,
    s_grid: &[f64],
) -> Result<WnsScan> {
    let wa = weight.spectral(DyadicInterval::ROOT).quad(&Vec2::e1());
    let jobs: Vec<(u32, f64)> = levels.flat_map(|n| s_grid.iter().map(move |&s| (n, s))).collect();
    let rows = jobs
        .par_iter()
        .map(|&(n, s)| {
            let sr = R::from_f64(s);
            let b = wns_bound(weight, tilde, n, &sr)?;
            let cap = (R::one() + sr) * wa.clone();
            Ok(WnsRow {
                n,
                s,
                lhs: b.lhs.to_f64(),
                fnorm: b.fnorm.to_f64(),
                ratio: b.ratio.to_f64(),
                fnorm_bound_ok: b.fnorm <= cap,
            })
        })
        .collect::<Result<Vec<WnsRow>>>()?;
    let mut best: Vec<WnsRow> = Vec::new();
    for row in &rows {
        match best.last_mut() {
            Some(b) if b.n == row.n => {
                if row.ratio > b.ratio {
                    *b = row.clone();
                }
            }
            _ => best.push(row.clone()),
        }
    }
    Ok(WnsScan { rows, best })
}

/// A `(n, s)` whose lower bound exceeds `4^k`: the ingredient for gluing
/// rescaled copies into one weight with infinite norm.
#[derive(Debug, Clone, Serialize)]
pub struct GluingWitness {
    pub k: u32,
    pub target: f64,
    pub n: u32,
    pub s: f64,
    pub ratio: f64,
}

/// For `k = 0, 1, ...` the first scanned `(n, s)` with ratio above `4^k`,
/// stopping at the first `k` without a witness.
pub fn gluing_report(scan: &WnsScan) -> Vec<GluingWitness> {
    let mut out = Vec::new();
    for k in 0.. {
        let target = 4f64.powi(k as i32);
        match scan.rows.iter().find(|r| r.ratio > target) {
            Some(r) => out.push(GluingWitness { k, target, n: r.n, s: r.s, ratio: r.ratio }),
            None => break,
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::carleson::tilde_a;
    use crate::real::Ext;

    fn setup(bits: u32, depth: u32) -> (MartingaleWeight<Ext>, CarlesonSequence<Ext>, Ext) {
        let w = MartingaleWeight::build(Ext::with_bits(0.25, bits), depth, depth).unwrap();
        let a = build_a(&w, depth).unwrap();
        let c = Ext::with_bits(1.1, bits);
        let t = tilde_a(&w, &a, &c).unwrap();
        (w, t, c)
    }

    #[test]
    fn zero_s_gives_zero_lhs() {
        let (w, t, _) = setup(160, 5);
        let b = wns_bound(&w, &t, 4, &Ext::with_bits(0.0, 160)).unwrap();
        assert_eq!(b.lhs.to_f64(), 0.0);
        assert!((b.fnorm.to_f64() - 1.0 / (1.0 + 0.0625)).abs() < 1e-15);
    }

    #[test]
    fn fnorm_within_linear_cap() {
        let (w, t, _) = setup(160, 6);
        let scan = wns_scan(&w, &t, 2..=5, &[0.25, 1.0, 4.0]).unwrap();
        assert!(scan.rows.iter().all(|r| r.fnorm_bound_ok));
        assert_eq!(scan.best.len(), 4);
    }

    #[test]
    fn negative_s_is_rejected() {
        let (w, t, _) = setup(128, 3);
        assert!(matches!(wns_bound(&w, &t, 2, &Ext::from_f64(-1.0)), Err(LabError::Domain(_))));
    }

    #[test]
    fn degree_analysis_small() {
        let (w, t, c) = setup(192, 4);
        let d = degree_analysis(&w, &t, 3, &c).unwrap();
        assert_eq!(d.samples.len(), 7);
        assert!(d.max_p_residual() < 1e-8, "{}", d.max_p_residual());
        assert!(d.max_q_residual() < 1e-20);
        assert!(d.shapes_hold());
        assert!(d.r0_relative_gap() < 1e-12, "{} vs {}", d.r0_sum, d.r0_reference);
        assert!(d.lemma.passes());
    }

    #[test]
    fn gluing_finds_first_witness() {
        let scan = WnsScan {
            rows: vec![
                WnsRow { n: 2, s: 1.0, lhs: 0.5, fnorm: 1.0, ratio: 0.5, fnorm_bound_ok: true },
                WnsRow { n: 3, s: 1.0, lhs: 2.0, fnorm: 1.0, ratio: 2.0, fnorm_bound_ok: true },
                WnsRow { n: 4, s: 1.0, lhs: 5.0, fnorm: 1.0, ratio: 5.0, fnorm_bound_ok: true },
            ],
            best: vec![],
        };
        let g = gluing_report(&scan);
        assert_eq!(g.len(), 2);
        assert_eq!((g[0].n, g[1].n), (3, 4));
    }

    #[test]
    fn grid_endpoints() {
        let g = geometric_grid(-6.0, 6.0, 13);
        assert_eq!(g.len(), 13);
        assert_eq!(g[0], 1.0 / 64.0);
        assert_eq!(g[6], 1.0);
        assert_eq!(g[12], 64.0);
    }
}
