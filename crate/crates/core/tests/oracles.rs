//! Fast evaluators against the slow reference implementations.

use mwcb_core::maxop::{eval_cg, eval_mcw, eval_mw, linearized_lower_bound, Selector};
use mwcb_core::oracle::{brute_mcw, scalar_maximal};
use mwcb_core::random::{self, rng};
use mwcb_core::weight::{build_counterexample_weight, Phi};
use mwcb_core::{DyadicInterval, Ext, MartingaleWeight, PiecewiseVector, PiecewiseWeight, Real, SymMat2, Vec2};
use rand::Rng;

#[test]
fn mcw_matches_sign_enumeration() {
    let mut r = rng(101);
    for level in 0..=4u32 {
        for _ in 0..25 {
            let w = random::weight(&mut r, level, 1e-3);
            let f = random::vector_field(&mut r, level);
            let n = r.gen_range(0..=level);
            let fast = eval_mcw(&w, &f, n).unwrap();
            let slow = brute_mcw(w.cells(), f.cells(), n);
            for (a, b) in fast.values.iter().zip(&slow) {
                assert!((a - b).abs() <= 1e-10 * b.max(1e-300), "level {level}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn random_test_functions_stay_below_mcw() {
    let mut r = rng(102);
    for _ in 0..20 {
        let w = random::weight(&mut r, 6, 1e-3);
        let f = random::vector_field(&mut r, 6);
        let m = eval_mcw(&w, &f, 6).unwrap();
        let tree = w.average_tree();
        for _ in 0..50 {
            let l = r.gen_range(0..=6u32);
            let i = DyadicInterval::new(l, r.gen_range(0..1u64 << l)).unwrap();
            let cells = 1usize << (6 - l);
            let phi = Phi::Cells((0..cells).map(|_| r.gen_range(-1.0..=1.0)).collect());
            let v = w.average_phi(&f, i, &phi).unwrap();
            let y = tree.get(i).solve(&v).unwrap();
            for x in i.cell_range(6) {
                let val = w.cell(x).quad(&y).sqrt();
                assert!(val <= m.values[x as usize] * (1.0 + 1e-12), "{i}");
            }
        }
    }
}

#[test]
fn scalar_weights_reduce_to_the_scalar_operators() {
    let mut r = rng(103);
    for _ in 0..10 {
        let ws: Vec<f64> = (0..64).map(|_| r.gen_range(-4.0f64..4.0).exp()).collect();
        let g = random::scalar_field(&mut r, 6);
        let n = r.gen_range(0..=6);
        let (plain, convex) = scalar_maximal(&ws, &g, n);
        let w = PiecewiseWeight::new(6, ws.iter().map(|&x| SymMat2::identity().scale(&x)).collect()).unwrap();
        let f = PiecewiseVector::new(6, g.iter().map(|&x| Vec2::new(0.0, x)).collect()).unwrap();
        let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-12 * y.max(1e-300));
        assert!(close(&eval_mw(&w, &f, n).unwrap().values, &plain));
        assert!(close(&eval_mcw(&w, &f, n).unwrap().values, &convex));
        assert!(close(&eval_cg(&w, &f, n).unwrap().values, &convex));
    }
}

#[test]
fn linearization_is_a_lower_bound() {
    let w = build_counterexample_weight(0.25f64, 6).unwrap().truncate(6).unwrap();
    let f = PiecewiseVector::constant(6, Vec2::new(1.0, 0.0));
    let m = eval_mcw(&w, &f, 6).unwrap().l2_norm_sq();
    // every interval selects its leftmost grid cell, which keeps the sets disjoint
    let mut sel = Vec::new();
    for l in 0..=5u32 {
        for k in 0..1u64 << l {
            let i = DyadicInterval::new(l, k).unwrap();
            let leftmost = DyadicInterval::new(6, i.cell_range(6).start).unwrap();
            if sel.iter().all(|s: &Selector<f64>| s.set != leftmost) {
                sel.push(Selector { interval: i, set: leftmost, phi: Phi::PlusHalf });
            }
        }
    }
    let lb = linearized_lower_bound(&w, &f, &sel).unwrap();
    assert!(lb > 0.0 && lb <= m * (1.0 + 1e-12), "{lb} > {m}");
}

#[test]
fn extended_dump_roundtrips_bit_exactly() {
    let eps = Ext::with_bits(0.25, 160);
    let w = MartingaleWeight::build(eps.clone(), 6, 6).unwrap();
    let mut buf = Vec::new();
    assert_eq!(w.write_csv(6, &mut buf).unwrap(), 127);
    let back = MartingaleWeight::read_csv(eps, buf.as_slice(), |s| Ext::parse_with_bits(s, 160)).unwrap();
    for n in 0..=6 {
        assert_eq!(back.level_matrices(n), w.level_matrices(n));
    }
    assert!(back.level_matrices(6)[5].m11.bits() >= 160);
}
