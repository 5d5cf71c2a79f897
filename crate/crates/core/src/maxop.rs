//! Truncated matrix-weighted dyadic maximal operators on finite grids.
//!
//! For `W` and `f` constant on the cells of `D^m`, every operator is
//! constant on leaf cells. The value on a cell `x` is a max over the
//! ancestors `I` of `x` with level at most the truncation:
//!
//! - `M_W`:  `|W(x)^{1/2} <W>_I^{-1} <W f>_I|`
//! - `M^c_W`: `rho_{W(x)}` of the zonotope with generators
//!   `(|J|/|I|) <W>_I^{-1} W_J f_J`
//! - Christ-Goldberg: `|I|^{-1} sum_J |J| |W(x)^{1/2} <W>_I^{-1} W_J f_J|`

use rayon::prelude::*;
use serde::Serialize;

use crate::carleson::pairwise_sum_scalar;
use crate::convexbody::{max_quad, Zonotope};
use crate::dyadic::DyadicInterval;
use crate::error::{LabError, Result};
use crate::mat2::{SymMat2, Vec2};
use crate::real::Real;
use crate::weight::{Phi, PiecewiseVector, PiecewiseWeight};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Operator {
    Mw,
    Mcw,
    Cg,
}

impl std::fmt::Display for Operator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Operator::Mw => "mw",
            Operator::Mcw => "mcw",
            Operator::Cg => "cg",
        })
    }
}

/// Cellwise values of a maximal function on the grid `D^level`.
#[derive(Debug, Clone)]
pub struct MaxField<R> {
    pub operator: Operator,
    pub truncation: u32,
    pub level: u32,
    pub values: Vec<R>,
}

impl<R: Real> MaxField<R> {
    /// `(sum_cells |cell| value^2)^{1/2}`.
    pub fn l2_norm(&self) -> R {
        self.l2_norm_sq().sqrt()
    }

    pub fn l2_norm_sq(&self) -> R {
        let sq: Vec<R> = self.values.iter().map(|v| v.square()).collect();
        pairwise_sum_scalar(&sq) * R::exp2i(-(self.level as i32))
    }

    /// Rows `cell_index<TAB>value`.
    pub fn write_tsv<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        for (k, v) in self.values.iter().enumerate() {
            writeln!(out, "{k}\t{}", v.to_sci_string())?;
        }
        Ok(())
    }

    pub fn sidecar(&self, epsilon: Option<f64>) -> serde_json::Value {
        serde_json::json!({
            "operator": self.operator,
            "truncation": self.truncation,
            "epsilon": epsilon,
            "grid_level": self.level,
            "l2_norm": self.l2_norm().to_f64(),
        })
    }
}

/// `||f||_{L^2_W}`.
pub fn weighted_norm<R: Real>(f: &PiecewiseVector<R>, w: &PiecewiseWeight<R>) -> Result<R> {
    Ok(w.weighted_norm_sq(f)?.sqrt())
}

fn check_inputs<R: Real>(w: &PiecewiseWeight<R>, f: &PiecewiseVector<R>, n: u32) -> Result<()> {
    if w.level() != f.level() {
        return Err(LabError::Range(format!("weight grid {} and function grid {} differ", w.level(), f.level())));
    }
    if n > w.level() {
        return Err(LabError::Range(format!("truncation {n} is finer than the grid level {}", w.level())));
    }
    Ok(())
}

/// `<W>_I^{-1}` for every `I` of level at most `n`, level-major.
fn inverse_averages<R: Real>(w: &PiecewiseWeight<R>, n: u32) -> Result<Vec<Vec<SymMat2<R>>>> {
    let tree = w.average_tree();
    (0..=n)
        .map(|l| {
            tree.level(l)
                .par_iter()
                .enumerate()
                .map(|(k, m)| m.inverse().map_err(|e| e.at(DyadicInterval::at(l, k as u64))))
                .collect()
        })
        .collect()
}

/// Per leaf, the max over ancestors of `score(I, x)`.
fn ancestor_sweep<R: Real>(m: u32, n: u32, score: impl Fn(DyadicInterval, u64) -> R + Sync) -> Vec<R> {
    (0..1u64 << m)
        .into_par_iter()
        .map(|x| {
            (0..=n).fold(R::zero(), |acc, l| acc.max_of(score(DyadicInterval::at(l, x >> (m - l)), x)))
        })
        .collect()
}

pub fn eval_mw<R: Real>(w: &PiecewiseWeight<R>, f: &PiecewiseVector<R>, n: u32) -> Result<MaxField<R>> {
    check_inputs(w, f, n)?;
    let m = w.level();
    let inv = inverse_averages(w, n)?;
    let wf = w.times(f)?.average_tree();
    let y: Vec<Vec<Vec2<R>>> = (0..=n)
        .map(|l| wf.level(l).iter().zip(&inv[l as usize]).map(|(v, i)| i.apply(v)).collect())
        .collect();
    let values = ancestor_sweep(m, n, |i, x| {
        w.cell(x).quad(&y[i.level() as usize][i.index() as usize]).sqrt()
    });
    Ok(MaxField { operator: Operator::Mw, truncation: n, level: m, values })
}

/// Generators `(|J|/|I|) <W>_I^{-1} W_J f_J` of the body for `I`.
fn generators<R: Real>(inv: &SymMat2<R>, wf: &PiecewiseVector<R>, interval: DyadicInterval) -> Vec<Vec2<R>> {
    let range = interval.cell_range(wf.level());
    let rel = R::exp2i(interval.level() as i32 - wf.level() as i32);
    range.map(|j| inv.apply(&wf.cells()[j as usize]).scale(&rel)).collect()
}

pub fn eval_mcw<R: Real>(w: &PiecewiseWeight<R>, f: &PiecewiseVector<R>, n: u32) -> Result<MaxField<R>> {
    check_inputs(w, f, n)?;
    let m = w.level();
    let inv = inverse_averages(w, n)?;
    let wf = w.times(f)?;
    let chains: Vec<Vec<Vec<Vec2<R>>>> = (0..=n)
        .map(|l| {
            (0..1u64 << l)
                .into_par_iter()
                .map(|k| {
                    let i = DyadicInterval::at(l, k);
                    Zonotope::new(generators(&inv[l as usize][k as usize], &wf, i)).vertex_chain()
                })
                .collect()
        })
        .collect();
    let values = ancestor_sweep(m, n, |i, x| {
        max_quad(&chains[i.level() as usize][i.index() as usize], w.cell(x)).sqrt()
    });
    Ok(MaxField { operator: Operator::Mcw, truncation: n, level: m, values })
}

pub fn eval_cg<R: Real>(w: &PiecewiseWeight<R>, f: &PiecewiseVector<R>, n: u32) -> Result<MaxField<R>> {
    check_inputs(w, f, n)?;
    let m = w.level();
    let inv = inverse_averages(w, n)?;
    let wf = w.times(f)?;
    let gens: Vec<Vec<Vec<Vec2<R>>>> = (0..=n)
        .map(|l| {
            (0..1u64 << l)
                .map(|k| generators(&inv[l as usize][k as usize], &wf, DyadicInterval::at(l, k)))
                .collect()
        })
        .collect();
    let values = ancestor_sweep(m, n, |i, x| {
        let wx = w.cell(x);
        let norms: Vec<R> = gens[i.level() as usize][i.index() as usize].iter().map(|g| wx.quad(g).sqrt()).collect();
        pairwise_sum_scalar(&norms)
    });
    Ok(MaxField { operator: Operator::Cg, truncation: n, level: m, values })
}

pub fn eval<R: Real>(op: Operator, w: &PiecewiseWeight<R>, f: &PiecewiseVector<R>, n: u32) -> Result<MaxField<R>> {
    match op {
        Operator::Mw => eval_mw(w, f, n),
        Operator::Mcw => eval_mcw(w, f, n),
        Operator::Cg => eval_cg(w, f, n),
    }
}

/// One term of a linearization: the set `S_I ⊆ I` and the test function on `I`.
#[derive(Debug, Clone)]
pub struct Selector<R> {
    pub interval: DyadicInterval,
    pub set: DyadicInterval,
    pub phi: Phi<R>,
}

/// `sum_I |S_I| |<W>_{S_I}^{1/2} <W>_I^{-1} <phi_I W f>_I|^2`, a lower bound
/// for `||M^c_W f||^2` when the `S_I` are disjoint.
pub fn linearized_lower_bound<R: Real>(
    w: &PiecewiseWeight<R>,
    f: &PiecewiseVector<R>,
    selectors: &[Selector<R>],
) -> Result<R> {
    for s in selectors {
        if !s.interval.contains(&s.set) {
            return Err(LabError::Precondition(format!("selector {} is not inside {}", s.set, s.interval)));
        }
        if s.set.level() > w.level() {
            return Err(LabError::Range(format!("selector {} is finer than the grid", s.set)));
        }
    }
    // disjointness on a common grid
    if let Some(top) = selectors.iter().map(|s| s.set.level()).max() {
        let mut ranges: Vec<(u64, u64, DyadicInterval)> = selectors
            .iter()
            .map(|s| {
                let r = s.set.cell_range(top);
                (r.start, r.end, s.set)
            })
            .collect();
        ranges.sort_by_key(|r| (r.0, r.1));
        for p in ranges.windows(2) {
            if p[1].0 < p[0].1 {
                return Err(LabError::Precondition(format!("selectors {} and {} overlap", p[0].2, p[1].2)));
            }
        }
    }
    let tree = w.average_tree();
    let terms = selectors
        .par_iter()
        .map(|s| {
            let v = w.average_phi(f, s.interval, &s.phi)?;
            let y = tree.get(s.interval).solve(&v).map_err(|e| e.at(s.interval))?;
            Ok(R::exp2i(-(s.set.level() as i32)) * tree.get(s.set).quad(&y))
        })
        .collect::<Result<Vec<R>>>()?;
    Ok(pairwise_sum_scalar(&terms))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weight::build_counterexample_weight;

    #[test]
    fn identity_weight_constant_function() {
        let w = PiecewiseWeight::constant(4, SymMat2::<f64>::identity());
        let f = PiecewiseVector::constant(4, Vec2::new(0.6, 0.8));
        for op in [Operator::Mw, Operator::Mcw, Operator::Cg] {
            let field = eval(op, &w, &f, 4).unwrap();
            assert!(field.values.iter().all(|v| (v - 1.0).abs() < 1e-15), "{op}");
            assert!((field.l2_norm() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn root_only_truncation() {
        let w = build_counterexample_weight(0.25f64, 3).unwrap().truncate(3).unwrap();
        let f = PiecewiseVector::constant(3, Vec2::new(1.0, -0.5));
        let field = eval_mw(&w, &f, 0).unwrap();
        let avg = w.average(DyadicInterval::ROOT).unwrap();
        let y = avg.solve(&w.times(&f).unwrap().average(DyadicInterval::ROOT).unwrap()).unwrap();
        for (x, v) in field.values.iter().enumerate() {
            assert!((v - w.cell(x as u64).quad(&y).sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn linearization_examples() {
        let w = build_counterexample_weight(0.25f64, 4).unwrap().truncate(4).unwrap();
        let f = PiecewiseVector::constant(4, Vec2::e1());
        assert_eq!(linearized_lower_bound(&w, &f, &[]).unwrap(), 0.0);
        let one = Selector { interval: DyadicInterval::ROOT, set: DyadicInterval::ROOT, phi: Phi::One };
        let got = linearized_lower_bound(&w, &f, &[one.clone()]).unwrap();
        let avg = w.average(DyadicInterval::ROOT).unwrap();
        let wf = w.times(&f).unwrap().average(DyadicInterval::ROOT).unwrap();
        // |<W>^{1/2} <W>^{-1} v|^2 = <<W>^{-1} v, v>
        let expect = avg.inverse().unwrap().quad(&wf);
        assert!((got - expect).abs() < 1e-13);
        let inner = Selector { interval: DyadicInterval::new(1, 0).unwrap(), set: DyadicInterval::new(3, 1).unwrap(), phi: Phi::One };
        assert!(matches!(linearized_lower_bound(&w, &f, &[one, inner]), Err(LabError::Precondition(_))));
    }

    #[test]
    fn singular_average_names_interval() {
        let w = PiecewiseWeight::constant(2, SymMat2::<f64>::from_f64(1.0, 0.0, 0.0));
        let f = PiecewiseVector::constant(2, Vec2::e1());
        match eval_mw(&w, &f, 1) {
            Err(LabError::Singular { at: Some(i), .. }) => assert_eq!(i, DyadicInterval::ROOT),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn tsv_and_sidecar() {
        let w = PiecewiseWeight::constant(1, SymMat2::<f64>::identity());
        let f = PiecewiseVector::constant(1, Vec2::new(2.0, 0.0));
        let field = eval_mcw(&w, &f, 1).unwrap();
        let mut buf = Vec::new();
        field.write_tsv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "0\t2.0000000000000000e0\n1\t2.0000000000000000e0\n");
        let j = field.sidecar(Some(0.25));
        assert_eq!(j["operator"], "mcw");
        assert_eq!(j["l2_norm"], 2.0);
    }
}
