//! Carleson sequences, the testing condition and embedding sums.

pub mod blowup;
pub mod poly;
pub mod wcet;
pub mod wns;

use std::sync::Arc;

use rayon::prelude::*;

use crate::dyadic::{DyadicInterval, IntervalClass};
use crate::error::{LabError, Result};
use crate::mat2::{outer, Spectral, SymMat2, Vec2};
use crate::real::Real;
use crate::weight::{AverageTree, MartingaleWeight, Phi, PiecewiseVector, PiecewiseWeight};

/// Source of the averages `<W>_I` in spectral form.
pub trait Averages<R: Real>: Sync {
    fn max_level(&self) -> u32;
    fn spectral(&self, interval: DyadicInterval) -> Spectral<R>;
}

impl<R: Real> Averages<R> for MartingaleWeight<R> {
    fn max_level(&self) -> u32 {
        self.depth()
    }

    fn spectral(&self, interval: DyadicInterval) -> Spectral<R> {
        MartingaleWeight::spectral(self, interval)
    }
}

impl<R: Real> Averages<R> for AverageTree<SymMat2<R>> {
    fn max_level(&self) -> u32 {
        self.depth()
    }

    fn spectral(&self, interval: DyadicInterval) -> Spectral<R> {
        self.get(interval).spectral()
    }
}

#[derive(Clone)]
enum Kind<R> {
    /// `A_I^{1/2} = roots[n] b_I b_I*` with `b_I` from the weight.
    Projections { roots: Vec<R>, weight: MartingaleWeight<R> },
    Dense(Arc<Vec<Vec<SymMat2<R>>>>),
}

/// PSD matrices `A_I` on `D^{<=depth}`.
#[derive(Clone)]
pub struct CarlesonSequence<R> {
    depth: u32,
    kind: Kind<R>,
}

impl<R: Real> std::fmt::Debug for CarlesonSequence<R> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match self.kind {
            Kind::Projections { .. } => "projections",
            Kind::Dense(_) => "dense",
        };
        f.debug_struct("CarlesonSequence").field("depth", &self.depth).field("kind", &kind).finish()
    }
}

impl<R: Real> CarlesonSequence<R> {
    /// Arbitrary per-interval matrices; `levels[n]` has `2^n` entries.
    pub fn dense(levels: Vec<Vec<SymMat2<R>>>) -> Result<Self> {
        if levels.is_empty() {
            return Err(LabError::Range("empty Carleson sequence".into()));
        }
        for (n, l) in levels.iter().enumerate() {
            if l.len() != 1usize << n {
                return Err(LabError::Range(format!("level {n} has {} entries", l.len())));
            }
        }
        Ok(CarlesonSequence { depth: levels.len() as u32 - 1, kind: Kind::Dense(Arc::new(levels)) })
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    /// `(c, b)` with `A_I^{1/2} = c b b*`, for projection-type sequences.
    pub fn root(&self, interval: DyadicInterval) -> Option<(R, Vec2<R>)> {
        match &self.kind {
            Kind::Projections { roots, weight } => {
                Some((roots[interval.level() as usize].clone(), weight.frame(interval).perp()))
            }
            Kind::Dense(_) => None,
        }
    }

    pub fn matrix(&self, interval: DyadicInterval) -> SymMat2<R> {
        match &self.kind {
            Kind::Projections { .. } => {
                let (c, b) = self.root(interval).expect("projection sequence");
                outer(&b).scale(&c.square())
            }
            Kind::Dense(levels) => levels[interval.level() as usize][interval.index() as usize].clone(),
        }
    }

    /// `|A_I^{1/2} v|^2 = <A_I v, v>`.
    pub fn quad(&self, interval: DyadicInterval, v: &Vec2<R>) -> R {
        match self.root(interval) {
            Some((c, b)) => (c * b.dot(v)).square(),
            None => self.matrix(interval).quad(v),
        }
    }

    /// `t^2 |A_I^{1/2} M v|^2`, through the frame of `M` for projections.
    pub fn quad_image(&self, interval: DyadicInterval, m: &Spectral<R>, v: &Vec2<R>, t: &R) -> R {
        match self.root(interval) {
            Some((c, b)) => (c * t.clone() * m.bilinear(&b, v)).square(),
            None => self.matrix(interval).quad(&m.apply(v).scale(t)),
        }
    }

    /// `<W>_I A_I <W>_I`.
    pub fn conjugated(&self, interval: DyadicInterval, w: &Spectral<R>) -> SymMat2<R> {
        match self.root(interval) {
            Some((c, b)) => outer(&w.apply(&b).scale(&c)),
            None => w.to_mat().congruence(&self.matrix(interval)),
        }
    }
}

/// `A_I = |I| r_I^2 b_I b_I*` with `r_n = eps^(-n-1)`.
pub fn build_a<R: Real>(weight: &MartingaleWeight<R>, depth: u32) -> Result<CarlesonSequence<R>> {
    if depth > weight.depth() {
        return Err(LabError::Range(format!("depth {depth} exceeds the weight depth {}", weight.depth())));
    }
    let sch = weight.schedule();
    let roots = (0..=depth)
        .map(|n| R::exp2i(-(n as i32)).sqrt() * sch.r(n))
        .collect();
    Ok(CarlesonSequence { depth, kind: Kind::Projections { roots, weight: weight.clone() } })
}

/// `tilde_A_I = C^{-1} <W>_I A_I <W>_I`. For the counterexample sequence this
/// is the projection `C^{-1} beta_I^2 A_I`, built from the fused product
/// `beta_n r_n`.
pub fn tilde_a<R: Real>(
    weight: &MartingaleWeight<R>,
    a: &CarlesonSequence<R>,
    c: &R,
) -> Result<CarlesonSequence<R>> {
    if !(*c > R::zero()) {
        return Err(LabError::Domain(format!("constant must be positive, got {:e}", c.to_f64())));
    }
    let inv_root = R::one() / c.sqrt();
    let depth = a.depth.min(weight.depth());
    match &a.kind {
        Kind::Projections { .. } => {
            let sch = weight.schedule();
            let roots = (0..=depth)
                .map(|n| R::exp2i(-(n as i32)).sqrt() * sch.r_beta(n) * inv_root.clone())
                .collect();
            Ok(CarlesonSequence { depth, kind: Kind::Projections { roots, weight: weight.clone() } })
        }
        Kind::Dense(_) => {
            let inv = R::one() / c.clone();
            let levels = (0..=depth)
                .map(|n| {
                    (0..1u64 << n)
                        .map(|k| {
                            let i = DyadicInterval::at(n, k);
                            a.conjugated(i, &weight.spectral(i)).scale(&inv)
                        })
                        .collect()
                })
                .collect();
            CarlesonSequence::dense(levels)
        }
    }
}

/// Deterministic pairwise sum of a slice of matrices.
pub(crate) fn pairwise_sum<R: Real>(items: &[SymMat2<R>]) -> SymMat2<R> {
    match items.len() {
        0 => SymMat2::zero(),
        1 => items[0].clone(),
        n => {
            let (l, r) = items.split_at(n / 2);
            pairwise_sum(l).add(&pairwise_sum(r))
        }
    }
}

pub(crate) fn pairwise_sum_scalar<R: Real>(items: &[R]) -> R {
    match items.len() {
        0 => R::zero(),
        1 => items[0].clone(),
        n => {
            let (l, r) = items.split_at(n / 2);
            pairwise_sum_scalar(l) + pairwise_sum_scalar(r)
        }
    }
}

/// Sums `sum_{I in D(K), level(I) <= depth} term(I)` for every `K` inside
/// `top` with level at most `top.level + keep`. Entry `[l][k]` belongs to the
/// `k`-th level-`top.level + l` descendant of `top`.
pub fn subtree_sums<R: Real>(
    top: DyadicInterval,
    depth: u32,
    keep: u32,
    term: impl Fn(DyadicInterval) -> SymMat2<R> + Sync,
) -> Vec<Vec<SymMat2<R>>> {
    let base = top.level();
    let keep_to = (base + keep).min(depth);
    let level_terms = |l: u32| -> Vec<SymMat2<R>> {
        top.cell_range(l).into_par_iter().map(|k| term(DyadicInterval::at(l, k))).collect()
    };
    let mut acc = level_terms(depth);
    let mut kept: Vec<Vec<SymMat2<R>>> = Vec::new();
    if depth <= keep_to {
        kept.push(acc.clone());
    }
    for l in (base..depth).rev() {
        let own = level_terms(l);
        acc = own
            .into_par_iter()
            .enumerate()
            .map(|(j, t)| t.add(&acc[2 * j]).add(&acc[2 * j + 1]))
            .collect();
        if l <= keep_to {
            kept.push(acc.clone());
        }
    }
    kept.reverse();
    kept
}

/// Testing constants `c_K`, least `c` with
/// `|K|^{-1} sum_{I in D(K)} <W>_I A_I <W>_I <= c <W>_K`, for all `K` of
/// level at most `max_k_level`, summing over levels up to `depth`.
#[derive(Debug, Clone)]
pub struct TestingTable<R> {
    pub depth: u32,
    pub constants: Vec<Vec<R>>,
    pub sup: R,
    pub argmax: DyadicInterval,
}

pub fn testing_constants<R: Real, W: Averages<R>>(
    weight: &W,
    a: &CarlesonSequence<R>,
    depth: u32,
    max_k_level: u32,
) -> Result<TestingTable<R>> {
    if depth > a.depth() || depth > weight.max_level() || max_k_level > depth {
        return Err(LabError::Range(format!(
            "testing depth {depth} (K up to level {max_k_level}) exceeds the available data"
        )));
    }
    let sums = subtree_sums(DyadicInterval::ROOT, depth, max_k_level, |i| {
        a.conjugated(i, &weight.spectral(i))
    });
    let constants: Vec<Vec<R>> = sums
        .iter()
        .enumerate()
        .map(|(l, level)| {
            level
                .par_iter()
                .enumerate()
                .map(|(k, s)| {
                    let i = DyadicInterval::at(l as u32, k as u64);
                    let s = s.scale(&R::exp2i(l as i32));
                    weight.spectral(i).gen_eig_max(&s).map_err(|e| e.at(i))
                })
                .collect::<Result<Vec<R>>>()
        })
        .collect::<Result<_>>()?;
    let mut sup = R::zero();
    let mut argmax = DyadicInterval::ROOT;
    for (l, level) in constants.iter().enumerate() {
        for (k, c) in level.iter().enumerate() {
            if *c > sup {
                sup = c.clone();
                argmax = DyadicInterval::at(l as u32, k as u64);
            }
        }
    }
    Ok(TestingTable { depth, constants, sup, argmax })
}

/// Testing constant of one `K` at a given depth.
pub fn testing_constant<R: Real, W: Averages<R>>(
    weight: &W,
    a: &CarlesonSequence<R>,
    k: DyadicInterval,
    depth: u32,
) -> Result<R> {
    if depth < k.level() {
        return Err(LabError::EmptyRange { level: k.level(), max_level: depth });
    }
    let s = subtree_sums(k, depth, 0, |i| a.conjugated(i, &weight.spectral(i)));
    let s = s[0][0].scale(&R::exp2i(k.level() as i32));
    weight.spectral(k).gen_eig_max(&s).map_err(|e| e.at(k))
}

/// `c_K` truncated at every depth `K.level ..= depth`, computed from the
/// per-level totals.
pub fn testing_profile<R: Real, W: Averages<R>>(
    weight: &W,
    a: &CarlesonSequence<R>,
    k: DyadicInterval,
    depth: u32,
) -> Result<Vec<R>> {
    if depth < k.level() {
        return Err(LabError::EmptyRange { level: k.level(), max_level: depth });
    }
    let wk = weight.spectral(k);
    let scale = R::exp2i(k.level() as i32);
    let mut total = SymMat2::zero();
    let mut out = Vec::new();
    for l in k.level()..=depth {
        let terms: Vec<SymMat2<R>> = k
            .cell_range(l)
            .into_par_iter()
            .map(|j| {
                let i = DyadicInterval::at(l, j);
                a.conjugated(i, &weight.spectral(i))
            })
            .collect();
        total = total.add(&pairwise_sum(&terms));
        out.push(wk.gen_eig_max(&total.scale(&scale)).map_err(|e| e.at(k))?);
    }
    Ok(out)
}

/// Depth increments of the testing constants: for every `K` of level at
/// most `max_k_level` and every `d` in `K.level + 1 ..= depth`, the growth
/// of `c_K` when level `d` joins the sum, relative to `eps^(2 (d - K.level))`.
#[derive(Debug, Clone)]
pub struct IncrementReport<R> {
    /// Largest `increment / eps^(2j)` with `j = d - K.level`.
    pub max_ratio: R,
    pub argmax: (DyadicInterval, u32),
    /// Smallest increment seen; negative means `c_K` dropped.
    pub min_increment: R,
}

pub fn testing_increments<R: Real, W: Averages<R>>(
    weight: &W,
    a: &CarlesonSequence<R>,
    eps: &R,
    depth: u32,
    max_k_level: u32,
) -> Result<IncrementReport<R>> {
    if depth > a.depth() || depth > weight.max_level() || max_k_level > depth {
        return Err(LabError::Range(format!(
            "testing depth {depth} (K up to level {max_k_level}) exceeds the available data"
        )));
    }
    let eps2 = eps.clone() * eps.clone();
    let mut cum: Vec<Vec<SymMat2<R>>> = (0..=max_k_level).map(|m| vec![SymMat2::zero(); 1usize << m]).collect();
    let mut report = IncrementReport { max_ratio: R::zero(), argmax: (DyadicInterval::ROOT, 0), min_increment: R::zero() };
    let mut first = true;
    for d in 0..=depth {
        let mut agg: Vec<SymMat2<R>> = (0..1u64 << d)
            .into_par_iter()
            .map(|k| {
                let i = DyadicInterval::at(d, k);
                a.conjugated(i, &weight.spectral(i))
            })
            .collect();
        for m in (0..=d).rev() {
            if m <= max_k_level {
                let scale = R::exp2i(m as i32);
                let bound = eps2.powi((d - m) as i32);
                let incs = cum[m as usize]
                    .par_iter()
                    .zip(agg.par_iter())
                    .enumerate()
                    .map(|(k, (c, t))| {
                        let i = DyadicInterval::at(m, k as u64);
                        weight.spectral(i).gen_eig_increment(&c.scale(&scale), &t.scale(&scale)).map_err(|e| e.at(i))
                    })
                    .collect::<Result<Vec<R>>>()?;
                if d > m {
                    for (k, inc) in incs.into_iter().enumerate() {
                        let ratio = inc.clone() / bound.clone();
                        if first || ratio > report.max_ratio {
                            report.max_ratio = ratio;
                            report.argmax = (DyadicInterval::at(m, k as u64), d);
                        }
                        if first || inc < report.min_increment {
                            report.min_increment = inc;
                        }
                        first = false;
                    }
                }
                for (c, t) in cum[m as usize].iter_mut().zip(&agg) {
                    *c = c.add(t);
                }
            }
            if m > 0 {
                agg = agg.par_chunks(2).map(|p| p[0].add(&p[1])).collect();
            }
        }
    }
    Ok(report)
}

/// Carleson-type check for `tilde_A`: the least `c` with
/// `|K|^{-1} sum_{J in D(K)} tilde_A_J <= c <W>_K`, for every `K` of level at
/// most `max_k_level`. The sup is returned with its interval.
pub fn tilde_carleson_sup<R: Real, W: Averages<R>>(
    weight: &W,
    tilde: &CarlesonSequence<R>,
    depth: u32,
    max_k_level: u32,
) -> Result<(R, DyadicInterval)> {
    let sums = subtree_sums(DyadicInterval::ROOT, depth, max_k_level, |i| tilde.matrix(i));
    let mut best = (R::zero(), DyadicInterval::ROOT);
    for (l, level) in sums.iter().enumerate() {
        let vals: Vec<R> = level
            .par_iter()
            .enumerate()
            .map(|(k, s)| {
                let i = DyadicInterval::at(l as u32, k as u64);
                weight.spectral(i).gen_eig_max(&s.scale(&R::exp2i(l as i32))).map_err(|e| e.at(i))
            })
            .collect::<Result<_>>()?;
        for (k, v) in vals.into_iter().enumerate() {
            if v > best.0 {
                best = (v, DyadicInterval::at(l as u32, k as u64));
            }
        }
    }
    Ok(best)
}

/// Which test functions `phi_I` an embedding sum uses.
#[derive(Clone)]
pub enum PhiPolicy<R> {
    /// `phi_I = 1`.
    Ones,
    /// `phi_I = 1_{I+}`.
    Left,
    /// `phi_I = 1_{I+}` for `I` in `D_+`, zero otherwise.
    LeftPlus,
    Custom(Arc<dyn Fn(DyadicInterval) -> Phi<R> + Send + Sync>),
}

impl<R: Real> std::fmt::Debug for PhiPolicy<R> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PhiPolicy::Ones => "Ones",
            PhiPolicy::Left => "Left",
            PhiPolicy::LeftPlus => "LeftPlus",
            PhiPolicy::Custom(_) => "Custom",
        })
    }
}

impl<R: Real> PhiPolicy<R> {
    pub fn phi(&self, interval: DyadicInterval) -> Phi<R> {
        match self {
            PhiPolicy::Ones => Phi::One,
            PhiPolicy::Left => Phi::PlusHalf,
            PhiPolicy::LeftPlus => {
                if interval.class() == IntervalClass::Plus {
                    Phi::PlusHalf
                } else {
                    Phi::Zero
                }
            }
            PhiPolicy::Custom(f) => f(interval),
        }
    }
}

/// Per-level and cumulative embedding sums `sum |A_I^{1/2} <phi_I W f>_I|^2`.
#[derive(Debug, Clone)]
pub struct EmbeddingSums<R> {
    pub per_level: Vec<R>,
    pub cumulative: Vec<R>,
}

impl<R: Real> EmbeddingSums<R> {
    fn from_levels(per_level: Vec<R>) -> Self {
        let mut acc = R::zero();
        let cumulative = per_level
            .iter()
            .map(|x| {
                acc = acc.clone() + x.clone();
                acc.clone()
            })
            .collect();
        EmbeddingSums { per_level, cumulative }
    }

    pub fn total(&self) -> R {
        self.cumulative.last().cloned().unwrap_or_else(R::zero)
    }
}

/// General embedding sum for piecewise-constant `W` and `f`. Half-interval
/// test functions need `depth < grid level`.
pub fn embedding_sum<R: Real>(
    weight: &PiecewiseWeight<R>,
    a: &CarlesonSequence<R>,
    f: &PiecewiseVector<R>,
    policy: &PhiPolicy<R>,
    depth: u32,
) -> Result<EmbeddingSums<R>> {
    if depth > weight.level() || depth > a.depth() {
        return Err(LabError::Range(format!("embedding depth {depth} exceeds the grid or sequence")));
    }
    let wf = weight.times(f)?;
    let tree = wf.average_tree();
    let per_level = (0..=depth)
        .map(|l| {
            let terms: Vec<R> = (0..1u64 << l)
                .into_par_iter()
                .map(|k| {
                    let i = DyadicInterval::at(l, k);
                    let v = phi_average(&wf, &tree, i, &policy.phi(i))?;
                    Ok(a.quad(i, &v))
                })
                .collect::<Result<_>>()?;
            Ok(pairwise_sum_scalar(&terms))
        })
        .collect::<Result<Vec<R>>>()?;
    Ok(EmbeddingSums::from_levels(per_level))
}

/// `<phi W f>_I` from the cell products `wf = W f` and their average tree.
pub fn phi_average<R: Real>(
    wf: &PiecewiseVector<R>,
    tree: &AverageTree<Vec2<R>>,
    interval: DyadicInterval,
    phi: &Phi<R>,
) -> Result<Vec2<R>> {
    match phi {
        Phi::Zero => Ok(Vec2::zero()),
        Phi::One => Ok(tree.get(interval).clone()),
        Phi::PlusHalf => {
            if interval.level() >= wf.level() {
                return Err(LabError::Range(format!("half of {interval} is finer than the grid")));
            }
            Ok(tree.get(interval.plus_child()).scale(&R::from_f64(0.5)))
        }
        Phi::Cells(_) => {
            let range = interval.cell_range(wf.level());
            let count = (range.end - range.start) as usize;
            let vals = phi.cell_values(count)?;
            let sum = range
                .zip(vals)
                .fold(Vec2::zero(), |acc, (j, w)| acc.add(&wf.cells()[j as usize].scale(&w)));
            Ok(sum.scale(&(R::one() / R::from_f64(count as f64))))
        }
    }
}

/// Embedding sums of the counterexample with `f = 1_{I0} a_{I0}`, evaluated
/// exhaustively from the spectral averages: `<phi_I W f>_I` is `W_I a` for
/// `phi = 1` and `W_{I+} a / 2` for the half-interval test function.
pub fn counterexample_embedding_sum<R: Real>(
    weight: &MartingaleWeight<R>,
    a: &CarlesonSequence<R>,
    policy: &PhiPolicy<R>,
    depth: u32,
) -> Result<EmbeddingSums<R>> {
    if depth > a.depth() || depth > weight.depth() {
        return Err(LabError::Range(format!("embedding depth {depth} exceeds the built depth")));
    }
    let e = Vec2::e1();
    let half = R::from_f64(0.5);
    let per_level = (0..=depth)
        .map(|l| {
            let terms: Vec<R> = (0..1u64 << l)
                .into_par_iter()
                .map(|k| {
                    let i = DyadicInterval::at(l, k);
                    match policy.phi(i) {
                        Phi::Zero => Ok(R::zero()),
                        Phi::One => Ok(a.quad_image(i, &weight.spectral(i), &e, &R::one())),
                        Phi::PlusHalf => {
                            let (ap, _) = weight.child_frames(i);
                            let sp = Spectral {
                                alpha: weight.alpha(l + 1).clone(),
                                beta: weight.beta(l + 1).clone(),
                                a: ap,
                            };
                            Ok(a.quad_image(i, &sp, &e, &half))
                        }
                        Phi::Cells(_) => Err(LabError::Precondition(
                            "cell-valued test functions need the piecewise evaluator".into(),
                        )),
                    }
                })
                .collect::<Result<_>>()?;
            Ok(pairwise_sum_scalar(&terms))
        })
        .collect::<Result<Vec<R>>>()?;
    Ok(EmbeddingSums::from_levels(per_level))
}

/// `eps^2 / (1 - eps^2)`: the closed-form bound on the `phi = 1` embedding
/// sum over `D(I0)` for a unit vector.
pub fn sigma1_bound<R: Real>(eps: &R) -> R {
    let e2 = eps.square();
    e2.clone() / (R::one() - e2)
}

/// The analytic cap `(1 - eps^2)^{-2}` on the testing constant.
pub fn testing_cap<R: Real>(eps: &R) -> R {
    (R::one() - eps.square()).powi(-2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dyadic::descendants;
    use crate::real::Ext;
    use crate::weight::build_counterexample_weight;

    #[test]
    fn increments_track_eps_powers() {
        let w = build_counterexample_weight(0.25f64, 10).unwrap();
        let a = build_a(&w, 10).unwrap();
        let rep = testing_increments(&w, &a, &0.25, 10, 4).unwrap();
        assert!(rep.min_increment > 0.0);
        assert!(rep.max_ratio <= 1.0 + 1e-12, "{}", rep.max_ratio);
        assert!(rep.max_ratio > 0.99);
        // agrees with differences of the profile where those are accurate
        let prof = testing_profile(&w, &a, DyadicInterval::ROOT, 3).unwrap();
        let direct = testing_increments(&w, &a, &0.25, 3, 0).unwrap();
        let inc1 = prof[1] - prof[0];
        assert!(direct.max_ratio >= inc1 / 0.0625 - 1e-12);
    }

    #[test]
    fn build_a_examples() {
        let w = build_counterexample_weight(0.5f64, 6).unwrap();
        let a = build_a(&w, 6).unwrap();
        assert!(a.matrix(DyadicInterval::ROOT).max_abs_diff(&SymMat2::from_f64(0.0, 0.0, 4.0)) < 1e-15);
        for i in descendants(DyadicInterval::ROOT, 6).unwrap() {
            let n = i.level() as i32;
            let expect = 2f64.powi(-n) * 0.5f64.powi(-2 * n - 2);
            assert!((a.matrix(i).trace() / expect - 1.0).abs() < 1e-14);
            let (c, b) = a.root(i).unwrap();
            let root = outer(&b).scale(&c);
            assert!(root.congruence(&SymMat2::identity()).max_abs_diff(&a.matrix(i)) < 1e-12 * expect);
        }
        let sch = w.schedule();
        for n in 0..6 {
            assert!((sch.r(n) * 0.5f64.powi(n as i32 + 1) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn identity_testing_constant_is_one() {
        let w = PiecewiseWeight::constant(0, SymMat2::<f64>::identity());
        let a = CarlesonSequence::dense(vec![vec![SymMat2::identity()]]).unwrap();
        let c = testing_constant(&w.average_tree(), &a, DyadicInterval::ROOT, 0).unwrap();
        assert!((c - 1.0).abs() < 1e-15);
    }

    #[test]
    fn beta_identity_cross_check() {
        // A^{1/2} <W>_I = beta_I A^{1/2}; entrywise matrices need the extended
        // backend once beta_n drops below the double roundoff of alpha_n
        let w = build_counterexample_weight(Ext::with_bits(0.25, 192), 8).unwrap();
        let a = build_a(&w, 8).unwrap();
        for i in descendants(DyadicInterval::ROOT, 8).unwrap() {
            let (c, b) = a.root(i).unwrap();
            let root = outer(&b).scale(&c);
            let wm = w.matrix(i);
            let beta = w.beta(i.level()).clone();
            for v in [Vec2::e1(), Vec2::e2()] {
                let lhs = root.apply(&wm.apply(&v));
                let rhs = root.apply(&v).scale(&beta);
                let err = lhs.sub(&rhs).norm().to_f64();
                assert!(err <= 1e-40 * (c.clone() * beta.clone()).to_f64(), "{i}: {err:e}");
            }
        }
    }

    #[test]
    fn testing_constant_paths_agree() {
        let w = build_counterexample_weight(0.25f64, 10).unwrap();
        let a = build_a(&w, 10).unwrap();
        let table = testing_constants(&w, &a, 10, 3).unwrap();
        for i in descendants(DyadicInterval::ROOT, 3).unwrap() {
            let direct = testing_constant(&w, &a, i, 10).unwrap();
            let t = &table.constants[i.level() as usize][i.index() as usize];
            assert!((direct / t - 1.0).abs() < 1e-13);
            let prof = testing_profile(&w, &a, i, 10).unwrap();
            assert!((prof.last().unwrap() / t - 1.0).abs() < 1e-13);
        }
        assert!(table.sup <= testing_cap(&0.25) + 1e-9);
    }

    #[test]
    fn sigma1_and_beta_terms() {
        let w = build_counterexample_weight(0.25f64, 12).unwrap();
        let a = build_a(&w, 12).unwrap();
        let s = counterexample_embedding_sum(&w, &a, &PhiPolicy::Ones, 12).unwrap();
        assert!(s.total() <= sigma1_bound(&0.25));
        for (n, x) in s.per_level.iter().enumerate() {
            assert!(*x <= 0.25f64.powi(2 * n as i32 + 2) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn piecewise_and_spectral_embedding_agree() {
        let w = build_counterexample_weight(Ext::with_bits(0.25, 192), 9).unwrap();
        let a = build_a(&w, 9).unwrap();
        let wp = w.truncate(9).unwrap();
        let f = PiecewiseVector::constant(9, Vec2::e1());
        for policy in [PhiPolicy::Ones, PhiPolicy::Left, PhiPolicy::LeftPlus] {
            let p = embedding_sum(&wp, &a, &f, &policy, 8).unwrap();
            let q = counterexample_embedding_sum(&w, &a, &policy, 8).unwrap();
            for (x, y) in p.per_level.iter().zip(&q.per_level) {
                let (x, y) = (x.to_f64(), y.to_f64());
                assert!((x - y).abs() <= 1e-20 * y.abs(), "{policy:?}: {x} vs {y}");
            }
        }
        let zero = PiecewiseVector::constant(9, Vec2::zero());
        assert_eq!(embedding_sum(&wp, &a, &zero, &PhiPolicy::Left, 8).unwrap().total().to_f64(), 0.0);
    }

    #[test]
    fn double_embedding_sums_keep_relative_precision() {
        let wd = build_counterexample_weight(0.25f64, 14).unwrap();
        let we = build_counterexample_weight(Ext::with_bits(0.25, 160), 14).unwrap();
        let ad = build_a(&wd, 14).unwrap();
        let ae = build_a(&we, 14).unwrap();
        let d = counterexample_embedding_sum(&wd, &ad, &PhiPolicy::Ones, 14).unwrap();
        let e = counterexample_embedding_sum(&we, &ae, &PhiPolicy::Ones, 14).unwrap();
        for (x, y) in d.per_level.iter().zip(&e.per_level) {
            assert!((x - y.to_f64()).abs() <= 1e-12 * y.to_f64(), "{x:e} vs {y}");
        }
        // the half-interval term reads <b_I, a_{I+}> ~ eps^(n+1) off stored
        // coordinates, so doubles lose about eps^(-n-1) ulps there
        let d = counterexample_embedding_sum(&wd, &ad, &PhiPolicy::Left, 14).unwrap();
        let e = counterexample_embedding_sum(&we, &ae, &PhiPolicy::Left, 14).unwrap();
        for (n, (x, y)) in d.per_level.iter().zip(&e.per_level).enumerate() {
            let tol = 1e-15 * 4f64.powi(n as i32 + 1);
            assert!((x - y.to_f64()).abs() <= tol * y.to_f64(), "{n}: {x:e} vs {y}");
        }
    }

    #[test]
    fn tilde_is_beta_squared_multiple() {
        let w = build_counterexample_weight(0.25f64, 8).unwrap();
        let a = build_a(&w, 8).unwrap();
        let c = 1.1;
        let t = tilde_a(&w, &a, &c).unwrap();
        for i in descendants(DyadicInterval::ROOT, 8).unwrap() {
            let expect = a.matrix(i).scale(&(w.beta(i.level()).powi(2) / c));
            let scale = expect.max_abs();
            assert!(t.matrix(i).max_abs_diff(&expect) <= 1e-13 * scale);
            let conj = a.conjugated(i, &w.spectral(i)).scale(&(1.0 / c));
            assert!(t.matrix(i).max_abs_diff(&conj) <= 1e-12 * scale);
        }
        assert!(matches!(tilde_a(&w, &a, &0.0), Err(LabError::Domain(_))));
    }
}
