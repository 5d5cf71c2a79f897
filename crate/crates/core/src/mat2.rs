//! Two-dimensional vectors and symmetric 2x2 matrices over a [`Real`].

use crate::error::{LabError, Result};
use crate::real::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct Vec2<R> {
    pub x: R,
    pub y: R,
}

impl<R: Real> Vec2<R> {
    pub fn new(x: R, y: R) -> Self {
        Vec2 { x, y }
    }

    pub fn from_f64(x: f64, y: f64) -> Self {
        Vec2 { x: R::from_f64(x), y: R::from_f64(y) }
    }

    pub fn zero() -> Self {
        Vec2 { x: R::zero(), y: R::zero() }
    }

    pub fn e1() -> Self {
        Self::from_f64(1.0, 0.0)
    }

    pub fn e2() -> Self {
        Self::from_f64(0.0, 1.0)
    }

    pub fn dot(&self, other: &Self) -> R {
        self.x.clone() * other.x.clone() + self.y.clone() * other.y.clone()
    }

    /// `x1 * y2 - y1 * x2`.
    pub fn cross(&self, other: &Self) -> R {
        self.x.clone() * other.y.clone() - self.y.clone() * other.x.clone()
    }

    pub fn norm_sq(&self) -> R {
        self.dot(self)
    }

    pub fn norm(&self) -> R {
        self.norm_sq().sqrt()
    }

    /// Counterclockwise quarter turn `(x, y) -> (-y, x)`. `v.dot(&v.perp())`
    /// is exactly zero in floating point.
    pub fn perp(&self) -> Self {
        Vec2 { x: -self.y.clone(), y: self.x.clone() }
    }

    pub fn scale(&self, t: &R) -> Self {
        Vec2 { x: self.x.clone() * t.clone(), y: self.y.clone() * t.clone() }
    }

    pub fn add(&self, other: &Self) -> Self {
        Vec2 { x: self.x.clone() + other.x.clone(), y: self.y.clone() + other.y.clone() }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Vec2 { x: self.x.clone() - other.x.clone(), y: self.y.clone() - other.y.clone() }
    }

    pub fn neg(&self) -> Self {
        Vec2 { x: -self.x.clone(), y: -self.y.clone() }
    }

    pub fn is_zero(&self) -> bool {
        self.x == R::zero() && self.y == R::zero()
    }

    pub fn to_f64(&self) -> [f64; 2] {
        [self.x.to_f64(), self.y.to_f64()]
    }
}

/// `v v*`.
pub fn outer<R: Real>(v: &Vec2<R>) -> SymMat2<R> {
    SymMat2 {
        m11: v.x.square(),
        m12: v.x.clone() * v.y.clone(),
        m22: v.y.square(),
    }
}

/// Symmetric matrix `[[m11, m12], [m12, m22]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMat2<R> {
    pub m11: R,
    pub m12: R,
    pub m22: R,
}

impl<R: Real> SymMat2<R> {
    pub fn new(m11: R, m12: R, m22: R) -> Self {
        SymMat2 { m11, m12, m22 }
    }

    pub fn from_f64(m11: f64, m12: f64, m22: f64) -> Self {
        SymMat2 { m11: R::from_f64(m11), m12: R::from_f64(m12), m22: R::from_f64(m22) }
    }

    pub fn zero() -> Self {
        Self::from_f64(0.0, 0.0, 0.0)
    }

    pub fn identity() -> Self {
        Self::from_f64(1.0, 0.0, 1.0)
    }

    pub fn diag(a: R, b: R) -> Self {
        SymMat2 { m11: a, m12: R::zero(), m22: b }
    }

    pub fn trace(&self) -> R {
        self.m11.clone() + self.m22.clone()
    }

    pub fn det(&self) -> R {
        self.m11.clone() * self.m22.clone() - self.m12.square()
    }

    pub fn add(&self, other: &Self) -> Self {
        SymMat2 {
            m11: self.m11.clone() + other.m11.clone(),
            m12: self.m12.clone() + other.m12.clone(),
            m22: self.m22.clone() + other.m22.clone(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        SymMat2 {
            m11: self.m11.clone() - other.m11.clone(),
            m12: self.m12.clone() - other.m12.clone(),
            m22: self.m22.clone() - other.m22.clone(),
        }
    }

    pub fn scale(&self, t: &R) -> Self {
        SymMat2 {
            m11: self.m11.clone() * t.clone(),
            m12: self.m12.clone() * t.clone(),
            m22: self.m22.clone() * t.clone(),
        }
    }

    /// Mean of two matrices, `(a + b) / 2`.
    pub fn mid(&self, other: &Self) -> Self {
        self.add(other).scale(&R::from_f64(0.5))
    }

    pub fn apply(&self, v: &Vec2<R>) -> Vec2<R> {
        Vec2 {
            x: self.m11.clone() * v.x.clone() + self.m12.clone() * v.y.clone(),
            y: self.m12.clone() * v.x.clone() + self.m22.clone() * v.y.clone(),
        }
    }

    /// `<M v, v>`, i.e. `|M^{1/2} v|^2` for PSD `M`.
    pub fn quad(&self, v: &Vec2<R>) -> R {
        self.m11.clone() * v.x.square()
            + R::from_f64(2.0) * self.m12.clone() * v.x.clone() * v.y.clone()
            + self.m22.clone() * v.y.square()
    }

    /// `self * other * self`.
    pub fn congruence(&self, other: &Self) -> Self {
        // columns of other * self
        let c1 = other.apply(&Vec2::new(self.m11.clone(), self.m12.clone()));
        let c2 = other.apply(&Vec2::new(self.m12.clone(), self.m22.clone()));
        let r1 = Vec2::new(self.m11.clone(), self.m12.clone());
        let r2 = Vec2::new(self.m12.clone(), self.m22.clone());
        SymMat2 { m11: r1.dot(&c1), m12: r1.dot(&c2), m22: r2.dot(&c2) }
    }

    /// Largest entry magnitude.
    pub fn max_abs(&self) -> R {
        self.m11.abs().max_of(self.m12.abs()).max_of(self.m22.abs())
    }

    pub fn max_abs_diff(&self, other: &Self) -> R {
        self.sub(other).max_abs()
    }

    /// Eigenvalues `(alpha, beta)` with `alpha >= beta`.
    pub fn eigenvalues(&self) -> (R, R) {
        if self.m12 == R::zero() {
            let (p, q) = (self.m11.clone(), self.m22.clone());
            return if p >= q { (p, q) } else { (q, p) };
        }
        let two = R::from_f64(2.0);
        let half_diff = (self.m11.clone() - self.m22.clone()) / two.clone();
        let disc = (half_diff.square() + self.m12.square()).sqrt();
        let mean = self.trace() / two;
        let alpha = mean.clone() + disc.clone();
        // for a dominant positive eigenvalue the small one is recovered from
        // the determinant, which avoids cancelling `mean - disc`
        let beta = if alpha > R::zero() && mean > R::zero() {
            self.det() / alpha.clone()
        } else {
            mean - disc
        };
        (alpha, beta)
    }

    /// `alpha a a* + beta b b*` with `alpha >= beta`, `b = perp(a)` and the
    /// first nonzero component of `a` positive. Degenerate spectra get the
    /// frame `(1, 0), (0, 1)`.
    pub fn spectral(&self) -> Spectral<R> {
        let (alpha, beta) = self.eigenvalues();
        let zero = R::zero();
        let a = if self.m12 == zero {
            if self.m11 >= self.m22 {
                Vec2::e1()
            } else {
                Vec2::e2()
            }
        } else {
            let u = Vec2::new(self.m12.clone(), alpha.clone() - self.m11.clone());
            let v = Vec2::new(alpha.clone() - self.m22.clone(), self.m12.clone());
            let w = if u.norm_sq() >= v.norm_sq() { u } else { v };
            let n = w.norm();
            if n == zero {
                Vec2::e1()
            } else {
                canonical_sign(w.scale(&(R::one() / n)))
            }
        };
        Spectral { alpha, beta, a }
    }

    pub fn op_norm(&self) -> R {
        let (alpha, beta) = self.eigenvalues();
        alpha.abs().max_of(beta.abs())
    }

    pub fn is_psd(&self, tol: f64) -> bool {
        let (_, beta) = self.eigenvalues();
        let scale = self.max_abs().to_f64();
        beta.to_f64() >= -tol * scale.max(1.0)
    }

    pub fn inverse(&self) -> Result<Self> {
        let det = self.det();
        if det == R::zero() {
            return Err(LabError::Singular { det: det.to_f64(), at: None });
        }
        Ok(SymMat2 {
            m11: self.m22.clone() / det.clone(),
            m12: -self.m12.clone() / det.clone(),
            m22: self.m11.clone() / det,
        })
    }

    /// `M^{-1} v` through the adjugate.
    pub fn solve(&self, v: &Vec2<R>) -> Result<Vec2<R>> {
        let det = self.det();
        if det == R::zero() {
            return Err(LabError::Singular { det: 0.0, at: None });
        }
        let adj = SymMat2 { m11: self.m22.clone(), m12: -self.m12.clone(), m22: self.m11.clone() };
        Ok(adj.apply(v).scale(&(R::one() / det)))
    }

    /// Principal square root of a PSD matrix.
    pub fn psd_sqrt(&self) -> Result<Self> {
        let sp = self.spectral();
        let tol = sp.alpha.tol(sp.alpha.abs().to_f64());
        if sp.beta.to_f64() < -tol {
            return Err(LabError::Domain(format!(
                "square root of a matrix with eigenvalue {:e}",
                sp.beta.to_f64()
            )));
        }
        Ok(Spectral { alpha: sp.alpha.sqrt(), beta: sp.beta.sqrt(), a: sp.a }.to_mat())
    }
}

fn canonical_sign<R: Real>(v: Vec2<R>) -> Vec2<R> {
    let zero = R::zero();
    if v.x < zero || (v.x == zero && v.y < zero) {
        v.neg()
    } else {
        v
    }
}

/// Spectral form `alpha a a* + beta b b*` with `b = perp(a)`.
///
/// Keeping a matrix in this form preserves the small eigenvalue to full
/// relative precision, which entry-wise storage does not once
/// `beta / alpha` approaches the unit roundoff.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectral<R> {
    pub alpha: R,
    pub beta: R,
    pub a: Vec2<R>,
}

impl<R: Real> Spectral<R> {
    pub fn b(&self) -> Vec2<R> {
        self.a.perp()
    }

    pub fn to_mat(&self) -> SymMat2<R> {
        let b = self.b();
        outer(&self.a).scale(&self.alpha).add(&outer(&b).scale(&self.beta))
    }

    pub fn apply(&self, v: &Vec2<R>) -> Vec2<R> {
        let b = self.b();
        self.a
            .scale(&(self.alpha.clone() * self.a.dot(v)))
            .add(&b.scale(&(self.beta.clone() * b.dot(v))))
    }

    /// `<u, M v>` evaluated through the frame, so the `beta` part keeps
    /// its relative precision when `u` is nearly orthogonal to `a`.
    pub fn bilinear(&self, u: &Vec2<R>, v: &Vec2<R>) -> R {
        let b = self.b();
        self.alpha.clone() * u.dot(&self.a) * self.a.dot(v) + self.beta.clone() * u.dot(&b) * b.dot(v)
    }

    pub fn quad(&self, v: &Vec2<R>) -> R {
        self.alpha.clone() * self.a.dot(v).square() + self.beta.clone() * self.b().dot(v).square()
    }

    pub fn solve(&self, v: &Vec2<R>) -> Result<Vec2<R>> {
        if self.alpha == R::zero() || self.beta == R::zero() {
            return Err(LabError::Singular {
                det: (self.alpha.clone() * self.beta.clone()).to_f64(),
                at: None,
            });
        }
        let b = self.b();
        Ok(self
            .a
            .scale(&(self.a.dot(v) / self.alpha.clone()))
            .add(&b.scale(&(b.dot(v) / self.beta.clone()))))
    }

    pub fn det(&self) -> R {
        self.alpha.clone() * self.beta.clone()
    }

    /// Components `(<S a, a>, <S a, b>, <S b, b>)` of `s` in this frame.
    pub fn frame_components(&self, s: &SymMat2<R>) -> (R, R, R) {
        let b = self.b();
        let sa = s.apply(&self.a);
        (sa.dot(&self.a), sa.dot(&b), s.quad(&b))
    }

    /// Least `c` with `s <= c * self`, i.e. the top eigenvalue of
    /// `M^{-1/2} S M^{-1/2}`, evaluated in the eigenframe of `M`.
    pub fn gen_eig_max(&self, s: &SymMat2<R>) -> Result<R> {
        if !(self.beta > R::zero()) {
            return Err(LabError::Singular { det: self.det().to_f64(), at: None });
        }
        let (saa, sab, sbb) = self.frame_components(s);
        let c = SymMat2 {
            m11: saa / self.alpha.clone(),
            m12: sab / (self.alpha.clone() * self.beta.clone()).sqrt(),
            m22: sbb / self.beta.clone(),
        };
        Ok(c.eigenvalues().0)
    }

    fn whiten(&self, s: &SymMat2<R>) -> SymMat2<R> {
        let (saa, sab, sbb) = self.frame_components(s);
        SymMat2 {
            m11: saa / self.alpha.clone(),
            m12: sab / (self.alpha.clone() * self.beta.clone()).sqrt(),
            m22: sbb / self.beta.clone(),
        }
    }

    /// `gen_eig_max(s + t) - gen_eig_max(s)` without subtracting the two
    /// eigenvalues, so a small `t` keeps its relative precision.
    pub fn gen_eig_increment(&self, s: &SymMat2<R>, t: &SymMat2<R>) -> Result<R> {
        if !(self.beta > R::zero()) {
            return Err(LabError::Singular { det: self.det().to_f64(), at: None });
        }
        let c = self.whiten(s);
        let d = self.whiten(t);
        let two = R::from_f64(2.0);
        let four = R::from_f64(4.0);
        let gap = c.m11.clone() - c.m22.clone();
        let dgap = d.m11.clone() - d.m22.clone();
        let disc0 = gap.clone() * gap.clone() + four.clone() * c.m12.clone() * c.m12.clone();
        let ddisc = dgap.clone() * (two.clone() * gap + dgap) + four * d.m12.clone() * (two.clone() * c.m12.clone() + d.m12.clone());
        let disc1 = disc0.clone() + ddisc.clone();
        let root_sum = disc0.max_of(R::zero()).sqrt() + disc1.max_of(R::zero()).sqrt();
        let moved = if root_sum > R::zero() { ddisc / root_sum } else { R::zero() };
        Ok((d.trace() + moved) / two)
    }
}

/// Least `c >= 0` with `s <= c m`, for `m` positive definite and `s` PSD.
pub fn gen_eig_max<R: Real>(s: &SymMat2<R>, m: &SymMat2<R>) -> Result<R> {
    let sp = m.spectral();
    if !(sp.beta > R::zero()) || m.det() <= R::zero() {
        return Err(LabError::Singular { det: m.det().to_f64(), at: None });
    }
    sp.gen_eig_max(s).map(|c| c.max_of(R::zero()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::real::Ext;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn m(a: f64, b: f64, c: f64) -> SymMat2<f64> {
        SymMat2::from_f64(a, b, c)
    }

    #[test]
    fn increment_matches_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let r = |rng: &mut ChaCha8Rng| rng.gen_range(-1.0..1.0);
            let base = m(2.0 + r(&mut rng), 0.4 * r(&mut rng), 1.5 + r(&mut rng));
            let s = m(1.0 + r(&mut rng), 0.3 * r(&mut rng), 1.0 + r(&mut rng));
            let t = m(0.5 + r(&mut rng), 0.2 * r(&mut rng), 0.5 + r(&mut rng));
            let sp = base.spectral();
            let want = sp.gen_eig_max(&s.add(&t)).unwrap() - sp.gen_eig_max(&s).unwrap();
            let got = sp.gen_eig_increment(&s, &t).unwrap();
            assert!((got - want).abs() < 1e-12, "{got} {want}");
        }
        // a tiny increment keeps its digits
        let sp = m(1.0, 0.0, 1e-6).spectral();
        let s = m(0.9, 0.0, 1e-6);
        let t = m(0.0, 0.0, 1e-30);
        let inc = sp.gen_eig_increment(&s, &t).unwrap();
        assert!((inc / 1e-24 - 1.0).abs() < 1e-12, "{inc}");
    }

    #[test]
    fn outer_examples() {
        assert_eq!(outer(&Vec2::from_f64(1.0, 0.0)), m(1.0, 0.0, 0.0));
        assert_eq!(outer(&Vec2::from_f64(0.0, 1.0)), m(0.0, 0.0, 1.0));
        let o = outer(&Vec2::<f64>::from_f64(3.0, 4.0));
        assert_eq!(o.trace(), 25.0);
        assert_eq!(o.det(), 0.0);
    }

    #[test]
    fn spectral_examples() {
        let s = m(0.8, 0.0, 0.2).spectral();
        assert_eq!((s.alpha, s.beta), (0.8, 0.2));
        assert_eq!(s.a, Vec2::from_f64(1.0, 0.0));
        assert_eq!(s.b(), Vec2::from_f64(0.0, 1.0));

        let id = SymMat2::<f64>::identity().spectral();
        assert_eq!((id.alpha, id.beta), (1.0, 1.0));
        assert_eq!(id.a, Vec2::from_f64(1.0, 0.0));

        let s = m(2.0, 1.0, 2.0).spectral();
        assert!((s.alpha - 3.0).abs() < 1e-15);
        assert!((s.beta - 1.0).abs() < 1e-15);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((s.a.x - r).abs() < 1e-15 && (s.a.y - r).abs() < 1e-15);
    }

    #[test]
    fn sqrt_inverse_norm_examples() {
        assert_eq!(m(4.0, 0.0, 9.0).psd_sqrt().unwrap(), m(2.0, 0.0, 3.0));
        assert_eq!(m(2.0, 0.0, 4.0).inverse().unwrap(), m(0.5, 0.0, 0.25));
        assert!((m(2.0, 1.0, 2.0).op_norm() - 3.0).abs() < 1e-15);
    }

    #[test]
    fn singular_and_domain_errors() {
        match m(1.0, 1.0, 1.0).inverse() {
            Err(LabError::Singular { det, .. }) => assert_eq!(det, 0.0),
            other => panic!("expected singular error, got {other:?}"),
        }
        assert!(matches!(m(1.0, 0.0, -1.0).psd_sqrt(), Err(LabError::Domain(_))));
        assert!(matches!(
            gen_eig_max(&m(1.0, 0.0, 0.0), &m(1.0, 0.0, 0.0)),
            Err(LabError::Singular { .. })
        ));
    }

    #[test]
    fn rank_one_sqrt() {
        let v = Vec2::from_f64(0.6, 0.8);
        let a = outer(&v).scale(&9.0);
        let r = a.psd_sqrt().unwrap();
        let back = r.congruence(&SymMat2::identity());
        assert!(back.max_abs_diff(&a) < 1e-14);
    }

    #[test]
    fn gen_eig_examples() {
        assert!((gen_eig_max(&m(2.0, 0.0, 0.5), &SymMat2::identity()).unwrap() - 2.0).abs() < 1e-15);
        let x = m(0.3, 0.1, 0.7);
        assert!((gen_eig_max(&x, &x).unwrap() - 1.0).abs() < 1e-14);
        assert!((gen_eig_max(&m(1.0, 0.0, 0.0), &m(4.0, 0.0, 1.0)).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn reconstruction_random_double() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let a = m(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let sp = a.spectral();
            assert!(sp.alpha >= sp.beta);
            assert!((sp.a.norm() - 1.0).abs() < 1e-14);
            assert!(sp.to_mat().max_abs_diff(&a) <= 1e-12, "{a:?}");
        }
    }

    #[test]
    fn reconstruction_random_extended() {
        let bits = 160;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let tol = 2f64.powi(-(bits as i32 - 12));
        for _ in 0..300 {
            let e = |r: &mut ChaCha8Rng| Ext::with_bits(r.gen_range(-1.0..1.0), bits);
            let a = SymMat2::new(e(&mut rng), e(&mut rng), e(&mut rng));
            let sp = a.spectral();
            assert!(sp.to_mat().max_abs_diff(&a).to_f64() <= tol);
        }
    }

    #[test]
    fn spectral_keeps_tiny_eigenvalue() {
        // eigenvalue ratio far below double resolution
        let beta = 1e-30;
        let a = Vec2::<f64>::from_f64(0.6, 0.8);
        let sp = Spectral { alpha: 1.0, beta, a };
        let x = sp.b();
        assert!((sp.quad(&x) / beta - 1.0).abs() < 1e-14);
        let y = sp.solve(&sp.b()).unwrap();
        assert!((y.dot(&sp.b()) * beta - 1.0).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn gen_eig_certificate(
            s11 in 0.0f64..2.0, s22 in 0.0f64..2.0, t in -1.0f64..1.0,
            m11 in 0.1f64..3.0, m22 in 0.1f64..3.0, u in -0.9f64..0.9,
        ) {
            let s = m(s11, t * (s11 * s22).sqrt(), s22);
            let mm = m(m11, u * (m11 * m22).sqrt(), m22);
            let c = gen_eig_max(&s, &mm).unwrap();
            let gap = mm.scale(&c).sub(&s);
            let (_, low) = gap.eigenvalues();
            let tol = 1e-10 * (1.0 + c);
            prop_assert!(low.abs() <= tol, "min eig {low} at c = {c}");
        }

        #[test]
        fn sqrt_squares_back(a in 0.0f64..5.0, b in 0.0f64..5.0, t in -1.0f64..1.0) {
            let x = m(a, t * (a * b).sqrt(), b);
            let r = x.psd_sqrt().unwrap();
            let sq = r.congruence(&SymMat2::identity());
            prop_assert!(sq.max_abs_diff(&x) <= 1e-12 * (1.0 + a + b));
        }

        #[test]
        fn inverse_is_inverse(a in 0.5f64..5.0, b in 0.5f64..5.0, t in -0.9f64..0.9) {
            let x = m(a, t * (a * b).sqrt(), b);
            let inv = x.inverse().unwrap();
            let v = Vec2::from_f64(0.3, -1.7);
            let back = x.apply(&inv.apply(&v));
            prop_assert!(back.sub(&v).norm() <= 1e-12 * (1.0 + x.op_norm() * inv.op_norm()));
        }
    }
}
