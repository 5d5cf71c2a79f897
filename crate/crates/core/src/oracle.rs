//! Slow, direct reference implementations used to check the fast paths.
//! Nothing here shares code with the tree-based evaluators beyond the
//! basic 2x2 arithmetic.

use crate::mat2::{SymMat2, Vec2};

/// Scalar weighted maximal functions for `W = w Id`, `f = g e1`, truncated
/// at level `n`, evaluated by direct summation over each ancestor.
/// Returns `(M_w g, M^c_w g)` per leaf:
/// `sqrt(w(x)) |<w g>_I| / <w>_I` and `sqrt(w(x)) <w |g|>_I / <w>_I`.
pub fn scalar_maximal(w: &[f64], g: &[f64], n: u32) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(w.len(), g.len());
    let cells = w.len();
    let m = cells.trailing_zeros();
    assert!(cells.is_power_of_two() && n <= m);
    let mut plain = vec![0.0f64; cells];
    let mut convex = vec![0.0f64; cells];
    for x in 0..cells {
        for l in 0..=n {
            let width = cells >> l;
            let start = (x / width) * width;
            let (mut sw, mut swg, mut swag) = (0.0, 0.0, 0.0);
            for j in start..start + width {
                sw += w[j];
                swg += w[j] * g[j];
                swag += w[j] * g[j].abs();
            }
            let s = w[x].sqrt();
            plain[x] = plain[x].max(s * swg.abs() / sw);
            convex[x] = convex[x].max(s * swag / sw);
        }
    }
    (plain, convex)
}

/// `max over sign patterns |A^{1/2} sum_j s_j g_j|` by enumeration.
pub fn brute_zonotope_norm(gens: &[Vec2<f64>], a: &SymMat2<f64>) -> f64 {
    assert!(gens.len() <= 24, "too many generators to enumerate");
    let mut best: f64 = 0.0;
    for mask in 0u64..1 << gens.len() {
        let mut v = Vec2::new(0.0, 0.0);
        for (j, g) in gens.iter().enumerate() {
            v = if mask >> j & 1 == 1 { v.sub(g) } else { v.add(g) };
        }
        best = best.max(a.quad(&v));
    }
    best.sqrt()
}

fn inverse(m: &SymMat2<f64>) -> SymMat2<f64> {
    let d = m.m11 * m.m22 - m.m12 * m.m12;
    SymMat2::from_f64(m.m22 / d, -m.m12 / d, m.m11 / d)
}

/// Convex-body maximal function by enumerating every sign pattern of every
/// ancestor; `cells.len() <= 16`.
pub fn brute_mcw(w: &[SymMat2<f64>], f: &[Vec2<f64>], n: u32) -> Vec<f64> {
    let cells = w.len();
    assert!(cells <= 16 && cells.is_power_of_two());
    let mut out = vec![0.0f64; cells];
    for l in 0..=n {
        let width = cells >> l;
        for start in (0..cells).step_by(width) {
            let mut avg = SymMat2::from_f64(0.0, 0.0, 0.0);
            for j in start..start + width {
                avg = avg.add(&w[j]);
            }
            let inv = inverse(&avg.scale(&(1.0 / width as f64)));
            let wf: Vec<Vec2<f64>> = (start..start + width).map(|j| w[j].apply(&f[j])).collect();
            for mask in 0u64..1 << width {
                let mut s = Vec2::new(0.0, 0.0);
                for (k, v) in wf.iter().enumerate() {
                    s = if mask >> k & 1 == 1 { s.sub(v) } else { s.add(v) };
                }
                let y = inv.apply(&s.scale(&(1.0 / width as f64)));
                for x in start..start + width {
                    out[x] = out[x].max(w[x].quad(&y).sqrt());
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_scalar_data() {
        let (p, c) = scalar_maximal(&[2.0; 8], &[-3.0; 8], 3);
        for (x, y) in p.iter().zip(&c) {
            assert!((x - 3.0 * 2f64.sqrt()).abs() < 1e-14 && (y - x).abs() < 1e-14);
        }
    }

    #[test]
    fn square_zonotope() {
        let g = [Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)];
        assert!((brute_zonotope_norm(&g, &SymMat2::identity()) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn brute_mcw_sign_choice() {
        let w = vec![SymMat2::identity(); 2];
        let f = vec![Vec2::new(1.0, 0.0), Vec2::new(-1.0, 0.0)];
        // the plain average cancels, flipping one sign does not
        assert_eq!(brute_mcw(&w, &f, 0), vec![1.0, 1.0]);
    }
}
