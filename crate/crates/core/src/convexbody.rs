//! Convex-body averages as zonotopes and their `A`-norms.

use std::cmp::Ordering;

use crate::dyadic::DyadicInterval;
use crate::error::{LabError, Result};
use crate::mat2::{SymMat2, Vec2};
use crate::real::Real;
use crate::weight::PiecewiseVector;

/// `{ sum_j c_j g_j : c_j in [-1, 1] }`. Zero generators are dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct Zonotope<R> {
    generators: Vec<Vec2<R>>,
}

impl<R: Real> Zonotope<R> {
    pub fn new(generators: Vec<Vec2<R>>) -> Self {
        Zonotope { generators: generators.into_iter().filter(|g| !g.is_zero()).collect() }
    }

    /// The one-point body `{0}`.
    pub fn point() -> Self {
        Zonotope { generators: Vec::new() }
    }

    pub fn generators(&self) -> &[Vec2<R>] {
        &self.generators
    }

    pub fn len(&self) -> usize {
        self.generators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generators.is_empty()
    }

    pub fn minkowski_sum(&self, other: &Self) -> Self {
        let mut g = self.generators.clone();
        g.extend(other.generators.iter().cloned());
        Zonotope { generators: g }
    }

    pub fn scale(&self, t: &R) -> Self {
        let t = t.abs();
        Zonotope::new(self.generators.iter().map(|g| g.scale(&t)).collect())
    }

    /// `h_Z(u) = sum_j |<g_j, u>|`.
    pub fn support(&self, u: &Vec2<R>) -> R {
        self.generators.iter().fold(R::zero(), |acc, g| acc + g.dot(u).abs())
    }

    /// Generators turned into the upper half-plane, sorted by angle, with
    /// near-parallel ones merged.
    fn canonical(&self) -> Vec<Vec2<R>> {
        let mut g: Vec<Vec2<R>> = self
            .generators
            .iter()
            .map(|v| {
                let upper = v.y > R::zero() || (v.y == R::zero() && v.x > R::zero());
                if upper {
                    v.clone()
                } else {
                    v.neg()
                }
            })
            .collect();
        g.sort_by(|a, b| {
            let c = a.cross(b);
            if c > R::zero() {
                Ordering::Less
            } else if c < R::zero() {
                Ordering::Greater
            } else {
                Ordering::Equal
            }
        });
        let bits = g.first().map(|v| v.x.bits()).unwrap_or(53);
        let rel = R::exp2i(-(bits as i32 - 16));
        let mut merged: Vec<Vec2<R>> = Vec::with_capacity(g.len());
        for v in g {
            match merged.last_mut() {
                Some(last) if last.cross(&v).abs() <= rel.clone() * last.norm() * v.norm() => {
                    *last = last.add(&v);
                }
                _ => merged.push(v),
            }
        }
        merged
    }

    /// Half of the boundary: `v_0 = -sum g`, `v_k = v_{k-1} + 2 g_k` in angle
    /// order, ending at `sum g`. The other half is its negative.
    pub fn vertex_chain(&self) -> Vec<Vec2<R>> {
        let g = self.canonical();
        let total = g.iter().fold(Vec2::zero(), |acc, v| acc.add(v));
        let mut out = Vec::with_capacity(g.len() + 1);
        let mut v = total.neg();
        out.push(v.clone());
        for gk in &g {
            v = v.add(&gk.scale(&R::from_f64(2.0)));
            out.push(v.clone());
        }
        out
    }

    /// All `2m` vertices in counterclockwise order (one point for `{0}`).
    pub fn vertices(&self) -> Vec<Vec2<R>> {
        let chain = self.vertex_chain();
        if chain.len() == 1 {
            return chain;
        }
        let m = chain.len() - 1;
        let mut out: Vec<Vec2<R>> = chain[..m].to_vec();
        out.extend(chain[..m].iter().map(|v| v.neg()));
        out
    }

    /// `rho_A(Z) = max_{x in Z} |A^{1/2} x|`, attained at a vertex. The
    /// vertices of `A^{1/2} Z` are the images of those of `Z`, so the walk is
    /// done on `Z` with the quadratic form of `A`.
    pub fn norm_a(&self, a: &SymMat2<R>) -> R {
        max_quad(&self.vertex_chain(), a).sqrt()
    }

    pub fn norm_euclid(&self) -> R {
        self.norm_a(&SymMat2::identity())
    }

    /// `[[gx, gy], ...]`.
    pub fn to_json(&self) -> String {
        let pairs: Vec<[f64; 2]> = self.generators.iter().map(|g| g.to_f64()).collect();
        serde_json::to_string(&pairs).expect("plain numbers serialize")
    }
}

/// `max_v <A v, v>` over a point list.
pub(crate) fn max_quad<R: Real>(points: &[Vec2<R>], a: &SymMat2<R>) -> R {
    points.iter().fold(R::zero(), |acc, v| acc.max_of(a.quad(v)))
}

/// `<<f>>_I` for `f` constant on grid cells: generators `(|J|/|I|) f_J`.
pub fn body_average<R: Real>(f: &PiecewiseVector<R>, interval: DyadicInterval) -> Result<Zonotope<R>> {
    if interval.level() > f.level() {
        return Err(LabError::Range(format!("{interval} is finer than the grid level {}", f.level())));
    }
    let range = interval.cell_range(f.level());
    let w = R::one() / R::from_f64((range.end - range.start) as f64);
    Ok(Zonotope::new(range.map(|j| f.cells()[j as usize].scale(&w)).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn z(g: &[(f64, f64)]) -> Zonotope<f64> {
        Zonotope::new(g.iter().map(|&(x, y)| Vec2::new(x, y)).collect())
    }

    #[test]
    fn norm_examples() {
        assert!((z(&[(3.0, 4.0)]).norm_euclid() - 5.0).abs() < 1e-15);
        assert!((z(&[(1.0, 0.0), (0.0, 1.0)]).norm_euclid() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(z(&[(1.0, 2.0)]).norm_a(&SymMat2::zero()), 0.0);
        assert_eq!(Zonotope::<f64>::point().norm_euclid(), 0.0);
        // rank-one A measures the projection onto one axis
        let a = SymMat2::from_f64(0.0, 0.0, 4.0);
        assert!((z(&[(1.0, 1.0), (1.0, -2.0)]).norm_a(&a) - 6.0).abs() < 1e-14);
    }

    #[test]
    fn body_average_examples() {
        let f = PiecewiseVector::new(1, vec![Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)]).unwrap();
        let b = body_average(&f, DyadicInterval::ROOT).unwrap();
        assert_eq!(b.generators(), &[Vec2::new(0.5, 0.0), Vec2::new(0.0, 0.5)]);
        assert!((b.norm_euclid() - 0.5f64.sqrt()).abs() < 1e-15);
        let c = PiecewiseVector::constant(3, Vec2::new(0.6, 0.8));
        assert!((body_average(&c, DyadicInterval::ROOT).unwrap().norm_euclid() - 1.0).abs() < 1e-15);
        assert!(matches!(body_average(&c, DyadicInterval::new(4, 0).unwrap()), Err(LabError::Range(_))));
    }

    #[test]
    fn refinement_keeps_the_body() {
        let f = PiecewiseVector::new(2, vec![
            Vec2::new(1.0, 0.5),
            Vec2::new(-0.3, 2.0),
            Vec2::new(0.7, -1.0),
            Vec2::new(0.0, 0.25),
        ])
        .unwrap();
        let fine = f.refine(5).unwrap();
        let b1 = body_average(&f, DyadicInterval::ROOT).unwrap();
        let b2 = body_average(&fine, DyadicInterval::ROOT).unwrap();
        for k in 0..64 {
            let t = k as f64 * std::f64::consts::PI / 32.0;
            let u = Vec2::new(t.cos(), t.sin());
            assert!((b1.support(&u) - b2.support(&u)).abs() < 1e-14);
        }
    }

    #[test]
    fn vertices_are_extreme_in_support() {
        let b = z(&[(1.0, 0.2), (-0.5, 1.0), (0.3, -0.7), (2.0, 2.0)]);
        let vs = b.vertices();
        assert_eq!(vs.len(), 8);
        for k in 0..100 {
            let t = k as f64 * 0.0628;
            let u = Vec2::new(t.cos(), t.sin());
            let best = vs.iter().map(|v| v.dot(&u)).fold(f64::NEG_INFINITY, f64::max);
            assert!((best - b.support(&u)).abs() < 1e-12);
        }
    }

    #[test]
    fn parallel_generators_merge() {
        let b = z(&[(1.0, 1.0), (-2.0, -2.0), (0.0, 1.0)]);
        assert_eq!(b.vertex_chain().len(), 3);
        assert!((b.norm_euclid() - (9.0f64 + 16.0).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn json_dump() {
        assert_eq!(z(&[(0.5, -1.0)]).to_json(), "[[0.5,-1.0]]");
    }

    proptest! {
        #[test]
        fn minkowski_and_scaling(
            g1 in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 1..6),
            g2 in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 1..6),
            t in -2.0f64..2.0,
            ang in 0.0f64..6.3,
        ) {
            let (a, b) = (z(&g1), z(&g2));
            let u = Vec2::new(ang.cos(), ang.sin());
            let s = a.minkowski_sum(&b);
            prop_assert!((s.support(&u) - a.support(&u) - b.support(&u)).abs() < 1e-12);
            prop_assert_eq!(a.minkowski_sum(&Zonotope::point()), a.clone());
            prop_assert_eq!(a.scale(&-1.0), a.clone());
            prop_assert!((a.scale(&t).support(&u) - t.abs() * a.support(&u)).abs() < 1e-12);
            // adding a generator never shrinks the norm
            prop_assert!(s.norm_euclid() >= a.norm_euclid() * (1.0 - 1e-14));
        }
    }
}
