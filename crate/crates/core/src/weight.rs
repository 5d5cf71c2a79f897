//! Martingale matrix weights on the dyadic tree.
//!
//! The counterexample weight is stored by its averages: per level, the
//! eigenvalues `(alpha_n, beta_n)` come from a closed-form schedule and the
//! eigenframe `a_I` is obtained from the parent's by a rotation through
//! `+gamma` (plus child) or `-gamma` (minus child). `b_I` is always
//! `perp(a_I)`. Frames are stored densely up to a cutoff level and recomputed
//! along the branch beyond it.

use std::io::{Read, Write};
use std::sync::Arc;

use rayon::prelude::*;

use crate::dyadic::{plus_class, s_interval, DyadicInterval, IntervalClass, MAX_LEVEL};
use crate::error::{LabError, Result};
use crate::mat2::{Spectral, SymMat2, Vec2};
use crate::real::Real;

/// Levels stored densely by default.
pub const DEFAULT_DENSE_LEVELS: u32 = 20;

/// `(alpha_n, beta_n) = (1, eps^(2n+2)) / (1 + eps^(2n+2))`.
pub fn eigen_schedule<R: Real>(eps: &R, n: u32) -> (R, R) {
    let t = eps.powi(2 * n as i32 + 2);
    let d = R::one() + t.clone();
    (R::one() / d.clone(), t / d)
}

/// `delta_n^2 = eps^(2n) (1 - eps^2) / (1 - eps^(4n+2))` for `n >= 1`.
pub fn delta_sq<R: Real>(eps: &R, n: u32) -> R {
    assert!(n >= 1, "delta_n is defined for n >= 1");
    let e2 = eps.square();
    eps.powi(2 * n as i32) * (R::one() - e2) / (R::one() - eps.powi(4 * n as i32 + 2))
}

pub fn delta<R: Real>(eps: &R, n: u32) -> R {
    delta_sq(eps, n).sqrt()
}

/// `(cos gamma_n, sin gamma_n)` with `tan gamma_n = delta_n`.
pub fn gamma_cos_sin<R: Real>(eps: &R, n: u32) -> (R, R) {
    let d2 = delta_sq(eps, n);
    let c = R::one() / (R::one() + d2.clone()).sqrt();
    (c.clone(), d2.sqrt() * c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Plus,
    Minus,
}

/// `a' = (a ± delta b) / sqrt(1 + delta^2)`, `b' = (b ∓ delta a) / sqrt(1 + delta^2)`.
pub fn rotate_frame<R: Real>(
    a: &Vec2<R>,
    b: &Vec2<R>,
    delta: &R,
    side: Side,
) -> Result<(Vec2<R>, Vec2<R>)> {
    let tol = a.x.tol(1.0) * 16.0;
    let dev = (a.norm_sq() - R::one()).to_f64().abs()
        + (b.norm_sq() - R::one()).to_f64().abs()
        + a.dot(b).to_f64().abs();
    if dev > tol {
        return Err(LabError::Domain(format!("frame is not orthonormal (deviation {dev:e})")));
    }
    let c = R::one() / (R::one() + delta.square()).sqrt();
    let d = match side {
        Side::Plus => delta.clone(),
        Side::Minus => -delta.clone(),
    };
    let a2 = a.add(&b.scale(&d)).scale(&c);
    let b2 = b.sub(&a.scale(&d)).scale(&c);
    Ok((a2, b2))
}

/// `cos a ± sin perp(a)`.
fn turn<R: Real>(a: &Vec2<R>, cos: &R, sin: &R, side: Side) -> Vec2<R> {
    let b = a.perp();
    match side {
        Side::Plus => a.scale(cos).add(&b.scale(sin)),
        Side::Minus => a.scale(cos).sub(&b.scale(sin)),
    }
}

/// Per-level constants of the construction, tabulated up to `max_level`.
#[derive(Debug, Clone)]
pub struct Schedule<R> {
    epsilon: R,
    alpha: Vec<R>,
    beta: Vec<R>,
    cos_g: Vec<R>,
    sin_g: Vec<R>,
}

impl<R: Real> Schedule<R> {
    pub fn new(epsilon: R, max_level: u32) -> Self {
        let mut alpha = Vec::with_capacity(max_level as usize + 1);
        let mut beta = Vec::with_capacity(max_level as usize + 1);
        let mut cos_g = vec![R::one()];
        let mut sin_g = vec![R::zero()];
        for n in 0..=max_level {
            let (a, b) = eigen_schedule(&epsilon, n);
            alpha.push(a);
            beta.push(b);
            if n >= 1 {
                let (c, s) = gamma_cos_sin(&epsilon, n);
                cos_g.push(c);
                sin_g.push(s);
            }
        }
        Schedule { epsilon, alpha, beta, cos_g, sin_g }
    }

    pub fn epsilon(&self) -> &R {
        &self.epsilon
    }

    pub fn max_level(&self) -> u32 {
        self.alpha.len() as u32 - 1
    }

    pub fn alpha(&self, n: u32) -> &R {
        &self.alpha[n as usize]
    }

    pub fn beta(&self, n: u32) -> &R {
        &self.beta[n as usize]
    }

    /// `cos gamma_n`; `n = 0` gives 1.
    pub fn cos_gamma(&self, n: u32) -> &R {
        &self.cos_g[n as usize]
    }

    pub fn sin_gamma(&self, n: u32) -> &R {
        &self.sin_g[n as usize]
    }

    /// `r_n = eps^(-n-1)`.
    pub fn r(&self, n: u32) -> R {
        R::one() / self.epsilon.powi(n as i32 + 1)
    }

    /// `r_n sin gamma_{n+1}` as one expression, `sqrt((1-eps^2)/(1-eps^(4n+6))) cos gamma_{n+1}`.
    pub fn r_sin_next(&self, n: u32) -> R {
        let e = &self.epsilon;
        let q = (R::one() - e.square()) / (R::one() - e.powi(4 * n as i32 + 6));
        q.sqrt() * self.cos_gamma(n + 1).clone()
    }

    /// `r_n beta_{n+1} = eps^(n+3) / (1 + eps^(2n+4))`.
    pub fn r_beta_next(&self, n: u32) -> R {
        let e = &self.epsilon;
        e.powi(n as i32 + 3) / (R::one() + e.powi(2 * n as i32 + 4))
    }

    /// `r_n beta_n = eps^(n+1) / (1 + eps^(2n+2))`.
    pub fn r_beta(&self, n: u32) -> R {
        let e = &self.epsilon;
        e.powi(n as i32 + 1) / (R::one() + e.powi(2 * n as i32 + 2))
    }
}

struct Inner<R> {
    depth: u32,
    schedule: Schedule<R>,
    frames: Vec<Vec<Vec2<R>>>,
}

/// The recursive counterexample weight, given by its averages on `D^{<=depth}`.
/// Cloning is cheap.
#[derive(Clone)]
pub struct MartingaleWeight<R> {
    inner: Arc<Inner<R>>,
}

impl<R: Real> std::fmt::Debug for MartingaleWeight<R> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MartingaleWeight")
            .field("epsilon", self.epsilon())
            .field("depth", &self.depth())
            .field("dense_levels", &self.dense_depth())
            .finish()
    }
}

/// Builds the counterexample weight with the default dense storage cutoff.
pub fn build_counterexample_weight<R: Real>(epsilon: R, depth: u32) -> Result<MartingaleWeight<R>> {
    MartingaleWeight::build(epsilon, depth, DEFAULT_DENSE_LEVELS)
}

impl<R: Real> MartingaleWeight<R> {
    /// `depth` levels of averages; frames are stored for levels up to
    /// `min(depth, dense_levels)`. The schedule extends one level past
    /// `depth` so that children of the deepest intervals are available.
    pub fn build(epsilon: R, depth: u32, dense_levels: u32) -> Result<Self> {
        let e = epsilon.to_f64();
        if !(e > 0.0 && e <= 0.5) {
            return Err(LabError::Config(format!("epsilon must lie in (0, 1/2], got {e}")));
        }
        if depth > MAX_LEVEL {
            return Err(LabError::Config(format!("depth {depth} exceeds cap {MAX_LEVEL}")));
        }
        let schedule = Schedule::new(epsilon, depth + 1);
        let dense = depth.min(dense_levels);
        let mut frames: Vec<Vec<Vec2<R>>> = Vec::with_capacity(dense as usize + 1);
        frames.push(vec![Vec2::e1()]);
        for n in 0..dense {
            let c = schedule.cos_gamma(n + 1);
            let s = schedule.sin_gamma(n + 1);
            let next: Vec<Vec2<R>> = frames[n as usize]
                .par_iter()
                .flat_map_iter(|a| [turn(a, c, s, Side::Plus), turn(a, c, s, Side::Minus)])
                .collect();
            frames.push(next);
        }
        Ok(MartingaleWeight { inner: Arc::new(Inner { depth, schedule, frames }) })
    }

    pub fn epsilon(&self) -> &R {
        self.inner.schedule.epsilon()
    }

    pub fn depth(&self) -> u32 {
        self.inner.depth
    }

    pub fn dense_depth(&self) -> u32 {
        self.inner.frames.len() as u32 - 1
    }

    pub fn schedule(&self) -> &Schedule<R> {
        &self.inner.schedule
    }

    pub fn alpha(&self, n: u32) -> &R {
        self.inner.schedule.alpha(n)
    }

    pub fn beta(&self, n: u32) -> &R {
        self.inner.schedule.beta(n)
    }

    /// Dense frames of one level, if stored.
    pub fn level_frames(&self, n: u32) -> Option<&[Vec2<R>]> {
        self.inner.frames.get(n as usize).map(|v| v.as_slice())
    }

    /// `a_I` for any `I` with level up to `depth + 1`.
    pub fn frame(&self, interval: DyadicInterval) -> Vec2<R> {
        let level = interval.level();
        assert!(level <= self.depth() + 1, "interval {interval} below the built depth");
        let dense = self.dense_depth();
        if level <= dense {
            return self.inner.frames[level as usize][interval.index() as usize].clone();
        }
        let top = interval.ancestor_at(dense).expect("dense level is above the interval");
        let mut a = self.inner.frames[dense as usize][top.index() as usize].clone();
        for l in dense + 1..=level {
            let step = interval.ancestor_at(l).expect("ancestor exists");
            let side = if step.index() % 2 == 0 { Side::Plus } else { Side::Minus };
            a = turn(&a, self.schedule().cos_gamma(l), self.schedule().sin_gamma(l), side);
        }
        a
    }

    /// Frames of both children of `interval`.
    pub fn child_frames(&self, interval: DyadicInterval) -> (Vec2<R>, Vec2<R>) {
        let a = self.frame(interval);
        let l = interval.level() + 1;
        let (c, s) = (self.schedule().cos_gamma(l), self.schedule().sin_gamma(l));
        (turn(&a, c, s, Side::Plus), turn(&a, c, s, Side::Minus))
    }

    pub fn spectral(&self, interval: DyadicInterval) -> Spectral<R> {
        let n = interval.level();
        Spectral {
            alpha: self.alpha(n).clone(),
            beta: self.beta(n).clone(),
            a: self.frame(interval),
        }
    }

    pub fn matrix(&self, interval: DyadicInterval) -> SymMat2<R> {
        self.spectral(interval).to_mat()
    }

    /// The averages of one level as matrices.
    pub fn level_matrices(&self, n: u32) -> Vec<SymMat2<R>> {
        let (al, be) = (self.alpha(n).clone(), self.beta(n).clone());
        (0..1u64 << n)
            .into_par_iter()
            .map(|k| {
                Spectral { alpha: al.clone(), beta: be.clone(), a: self.frame(DyadicInterval::at(n, k)) }
                    .to_mat()
            })
            .collect()
    }

    /// `W_n`: the level-`n` averages as a piecewise-constant weight.
    pub fn truncate(&self, n: u32) -> Result<PiecewiseWeight<R>> {
        if n > self.depth() {
            return Err(LabError::Range(format!(
                "truncation level {n} exceeds depth {}",
                self.depth()
            )));
        }
        PiecewiseWeight::new(n, self.level_matrices(n))
    }

    /// Exhaustive invariant check on levels `0..=max_level`.
    pub fn check_invariants(&self, max_level: u32) -> InvariantReport {
        let max_level = max_level.min(self.depth());
        let mut report = InvariantReport::new(self.epsilon().to_f64(), max_level);
        let mut upper = self.level_matrices(0);
        for n in 0..=max_level {
            let lower = if n < max_level { Some(self.level_matrices(n + 1)) } else { None };
            let stats: Vec<NodeStats> = (0..1u64 << n)
                .into_par_iter()
                .map(|k| {
                    let interval = DyadicInterval::at(n, k);
                    let children = lower
                        .as_ref()
                        .map(|l| (&l[2 * k as usize], &l[2 * k as usize + 1]));
                    self.node_stats(interval, &upper[k as usize], children)
                })
                .collect();
            for s in &stats {
                report.absorb(s);
            }
            if let Some(l) = lower {
                upper = l;
            }
        }
        report
    }

    /// Invariant check along the ancestor chains of the given intervals;
    /// reaches levels beyond the dense cutoff.
    pub fn check_branches(&self, leaves: &[DyadicInterval]) -> InvariantReport {
        let max_level = leaves.iter().map(|l| l.level()).max().unwrap_or(0).min(self.depth());
        let mut report = InvariantReport::new(self.epsilon().to_f64(), max_level);
        for leaf in leaves {
            let mut a = Vec2::e1();
            for l in 0..=leaf.level().min(self.depth()) {
                let interval = leaf.ancestor_at(l).expect("ancestor exists");
                if l > 0 {
                    let side =
                        if interval.index() % 2 == 0 { Side::Plus } else { Side::Minus };
                    let sch = self.schedule();
                    a = turn(&a, sch.cos_gamma(l), sch.sin_gamma(l), side);
                }
                let sp = Spectral { alpha: self.alpha(l).clone(), beta: self.beta(l).clone(), a: a.clone() };
                let m = sp.to_mat();
                let children = if l < self.depth() {
                    let sch = self.schedule();
                    let (c, s) = (sch.cos_gamma(l + 1), sch.sin_gamma(l + 1));
                    let mk = |side| {
                        Spectral {
                            alpha: self.alpha(l + 1).clone(),
                            beta: self.beta(l + 1).clone(),
                            a: turn(&a, c, s, side),
                        }
                        .to_mat()
                    };
                    Some((mk(Side::Plus), mk(Side::Minus)))
                } else {
                    None
                };
                let stats =
                    self.node_stats_with(&sp, &m, children.as_ref().map(|(p, q)| (p, q)));
                report.absorb(&stats);
            }
        }
        report
    }

    fn node_stats(
        &self,
        interval: DyadicInterval,
        m: &SymMat2<R>,
        children: Option<(&SymMat2<R>, &SymMat2<R>)>,
    ) -> NodeStats {
        let sp = self.spectral(interval);
        self.node_stats_with(&sp, m, children)
    }

    fn node_stats_with(
        &self,
        sp: &Spectral<R>,
        m: &SymMat2<R>,
        children: Option<(&SymMat2<R>, &SymMat2<R>)>,
    ) -> NodeStats {
        let martingale = children
            .map(|(p, q)| m.max_abs_diff(&p.mid(q)).to_f64())
            .unwrap_or(0.0);
        let trace = (m.trace() - R::one()).to_f64().abs();
        let b = sp.b();
        let frame = (sp.a.norm_sq() - R::one())
            .to_f64()
            .abs()
            .max((b.norm_sq() - R::one()).to_f64().abs())
            .max(sp.a.dot(&b).to_f64().abs());
        let (ev_a, ev_b) = m.eigenvalues();
        let eig = (ev_a - sp.alpha.clone()).to_f64().abs()
            .max((ev_b - sp.beta.clone()).to_f64().abs());
        NodeStats {
            martingale,
            trace,
            frame,
            eigen: eig,
            op_norm: m.op_norm().to_f64(),
            cos_root: sp.a.x.to_f64(),
        }
    }

    /// CSV rows `level,index,m11,m12,m22,alpha,beta,ax,ay` for levels up to
    /// `max_level` (at most the dense depth).
    pub fn write_csv<W: Write>(&self, max_level: u32, out: W) -> Result<usize> {
        let max_level = max_level.min(self.dense_depth());
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["level", "index", "m11", "m12", "m22", "alpha", "beta", "ax", "ay"])?;
        let mut rows = 0;
        for n in 0..=max_level {
            for (k, a) in self.inner.frames[n as usize].iter().enumerate() {
                let sp = Spectral { alpha: self.alpha(n).clone(), beta: self.beta(n).clone(), a: a.clone() };
                let m = sp.to_mat();
                w.write_record([
                    n.to_string(),
                    k.to_string(),
                    m.m11.to_sci_string(),
                    m.m12.to_sci_string(),
                    m.m22.to_sci_string(),
                    sp.alpha.to_sci_string(),
                    sp.beta.to_sci_string(),
                    a.x.to_sci_string(),
                    a.y.to_sci_string(),
                ])?;
                rows += 1;
            }
        }
        w.flush()?;
        Ok(rows)
    }

    /// Reloads a dump written by [`write_csv`](Self::write_csv). Frames are
    /// taken from the file; eigenvalues and matrix entries are checked
    /// against the values recomputed from `epsilon`.
    pub fn read_csv<Rd: Read>(epsilon: R, input: Rd, parse: impl Fn(&str) -> Result<R>) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(input);
        let mut frames: Vec<Vec<Vec2<R>>> = Vec::new();
        let mut rows = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            if rec.len() != 9 {
                return Err(LabError::Parse(format!("expected 9 columns, got {}", rec.len())));
            }
            let level: u32 = rec[0].parse().map_err(|e| LabError::Parse(format!("level: {e}")))?;
            let index: u64 = rec[1].parse().map_err(|e| LabError::Parse(format!("index: {e}")))?;
            let vals: Vec<R> = (2..9).map(|i| parse(&rec[i])).collect::<Result<_>>()?;
            if level as usize == frames.len() {
                frames.push(Vec::new());
            }
            if level as usize + 1 != frames.len() || index as usize != frames[level as usize].len() {
                return Err(LabError::Parse(format!("row {level}:{index} out of order")));
            }
            frames[level as usize].push(Vec2::new(vals[5].clone(), vals[6].clone()));
            rows.push((level, vals));
        }
        if frames.is_empty() {
            return Err(LabError::Parse("empty weight dump".into()));
        }
        let depth = frames.len() as u32 - 1;
        for (n, level) in frames.iter().enumerate() {
            if level.len() != 1usize << n {
                return Err(LabError::Parse(format!("level {n} has {} rows", level.len())));
            }
        }
        let schedule = Schedule::new(epsilon, depth + 1);
        for (level, vals) in &rows {
            if &vals[3] != schedule.alpha(*level) || &vals[4] != schedule.beta(*level) {
                return Err(LabError::Parse(format!("eigenvalues at level {level} disagree with epsilon")));
            }
            let m = Spectral {
                alpha: vals[3].clone(),
                beta: vals[4].clone(),
                a: Vec2::new(vals[5].clone(), vals[6].clone()),
            }
            .to_mat();
            if m.m11 != vals[0] || m.m12 != vals[1] || m.m22 != vals[2] {
                return Err(LabError::Parse(format!("matrix entries at level {level} are inconsistent")));
            }
        }
        Ok(MartingaleWeight { inner: Arc::new(Inner { depth, schedule, frames }) })
    }
}

#[derive(Debug, Clone, Copy)]
struct NodeStats {
    martingale: f64,
    trace: f64,
    frame: f64,
    eigen: f64,
    op_norm: f64,
    cos_root: f64,
}

/// Worst-case deviations from the structural invariants of the weight.
#[derive(Debug, Clone, serde::Serialize)]
pub struct InvariantReport {
    pub epsilon: f64,
    pub max_level: u32,
    pub nodes: u64,
    pub martingale_residual: f64,
    pub trace_deviation: f64,
    pub frame_deviation: f64,
    pub eigen_deviation: f64,
    pub max_op_norm: f64,
    /// Least `<a_{I0}, a_I>` over checked intervals.
    pub min_cos_to_root: f64,
}

impl InvariantReport {
    fn new(epsilon: f64, max_level: u32) -> Self {
        InvariantReport {
            epsilon,
            max_level,
            nodes: 0,
            martingale_residual: 0.0,
            trace_deviation: 0.0,
            frame_deviation: 0.0,
            eigen_deviation: 0.0,
            max_op_norm: 0.0,
            min_cos_to_root: 1.0,
        }
    }

    fn absorb(&mut self, s: &NodeStats) {
        self.nodes += 1;
        self.martingale_residual = self.martingale_residual.max(s.martingale);
        self.trace_deviation = self.trace_deviation.max(s.trace);
        self.frame_deviation = self.frame_deviation.max(s.frame);
        self.eigen_deviation = self.eigen_deviation.max(s.eigen);
        self.max_op_norm = self.max_op_norm.max(s.op_norm);
        self.min_cos_to_root = self.min_cos_to_root.min(s.cos_root);
    }

    /// Cosine of the cumulative rotation bound `eps / (1 - eps)`.
    pub fn rotation_bound_cos(&self) -> f64 {
        (self.epsilon / (1.0 - self.epsilon)).cos()
    }

    /// All invariants within `tol`, plus the rotation bound.
    pub fn passes(&self, tol: f64) -> bool {
        self.martingale_residual <= tol
            && self.trace_deviation <= tol
            && self.frame_deviation <= tol
            && self.eigen_deviation <= tol
            && self.max_op_norm <= 1.0 + tol
            && self.min_cos_to_root >= self.rotation_bound_cos()
    }
}

/// Bottom-up dyadic means of level-`m` cell data: `levels[l][k]` is the
/// average over `(l, k)`.
#[derive(Debug, Clone)]
pub struct AverageTree<T> {
    levels: Vec<Vec<T>>,
}

impl<T> AverageTree<T> {
    pub fn depth(&self) -> u32 {
        self.levels.len() as u32 - 1
    }

    pub fn get(&self, interval: DyadicInterval) -> &T {
        &self.levels[interval.level() as usize][interval.index() as usize]
    }

    pub fn level(&self, n: u32) -> &[T] {
        &self.levels[n as usize]
    }
}

fn build_tree<T: Clone + Send + Sync>(cells: Vec<T>, mid: impl Fn(&T, &T) -> T + Sync) -> AverageTree<T> {
    let mut levels = vec![cells];
    while levels.last().map(|l| l.len()).unwrap_or(0) > 1 {
        let below = levels.last().expect("nonempty");
        let up: Vec<T> = below.par_chunks(2).map(|p| mid(&p[0], &p[1])).collect();
        levels.push(up);
    }
    levels.reverse();
    AverageTree { levels }
}

/// A weight constant on the cells of `D^level`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseWeight<R> {
    level: u32,
    cells: Vec<SymMat2<R>>,
}

impl<R: Real> PiecewiseWeight<R> {
    pub fn new(level: u32, cells: Vec<SymMat2<R>>) -> Result<Self> {
        if level > MAX_LEVEL || cells.len() as u64 != 1u64 << level {
            return Err(LabError::Range(format!(
                "{} cells do not tile level {level}",
                cells.len()
            )));
        }
        Ok(PiecewiseWeight { level, cells })
    }

    pub fn constant(level: u32, value: SymMat2<R>) -> Self {
        PiecewiseWeight { level, cells: vec![value; 1usize << level] }
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn cells(&self) -> &[SymMat2<R>] {
        &self.cells
    }

    pub fn cell(&self, k: u64) -> &SymMat2<R> {
        &self.cells[k as usize]
    }

    /// The same weight on a finer grid.
    pub fn refine(&self, level: u32) -> Result<Self> {
        if level < self.level {
            return Err(LabError::Range(format!("cannot refine level {} to {level}", self.level)));
        }
        let rep = 1usize << (level - self.level);
        let cells = self.cells.iter().flat_map(|c| std::iter::repeat(c.clone()).take(rep)).collect();
        PiecewiseWeight::new(level, cells)
    }

    fn check_level(&self, interval: DyadicInterval) -> Result<()> {
        if interval.level() > self.level {
            return Err(LabError::Range(format!(
                "interval {interval} is finer than the grid level {}",
                self.level
            )));
        }
        Ok(())
    }

    /// Exact dyadic mean over `interval`.
    pub fn average(&self, interval: DyadicInterval) -> Result<SymMat2<R>> {
        self.check_level(interval)?;
        let range = interval.cell_range(self.level);
        let count = R::from_f64((range.end - range.start) as f64);
        let sum = self.cells[range.start as usize..range.end as usize]
            .iter()
            .fold(SymMat2::zero(), |acc, c| acc.add(c));
        Ok(sum.scale(&(R::one() / count)))
    }

    /// Averages over every interval of level at most the grid level.
    pub fn average_tree(&self) -> AverageTree<SymMat2<R>> {
        build_tree(self.cells.clone(), |a, b| a.mid(b))
    }

    pub fn all_psd(&self, tol: f64) -> bool {
        self.cells.iter().all(|c| c.is_psd(tol))
    }

    /// The cellwise products `W_J f_J`.
    pub fn times(&self, f: &PiecewiseVector<R>) -> Result<PiecewiseVector<R>> {
        if f.level != self.level {
            return Err(LabError::Range(format!(
                "weight grid {} and vector grid {} differ",
                self.level, f.level
            )));
        }
        let cells = self.cells.iter().zip(&f.cells).map(|(w, v)| w.apply(v)).collect();
        Ok(PiecewiseVector { level: self.level, cells })
    }

    /// `<phi W f>_I` for a test function `phi` supported on `I`.
    pub fn average_phi(&self, f: &PiecewiseVector<R>, interval: DyadicInterval, phi: &Phi<R>) -> Result<Vec2<R>> {
        self.check_level(interval)?;
        let wf = self.times(f)?;
        let range = interval.cell_range(self.level);
        let count = (range.end - range.start) as usize;
        let weights = phi.cell_values(count)?;
        let mut sum = Vec2::zero();
        for (j, w) in range.zip(weights) {
            if w != R::zero() {
                sum = sum.add(&wf.cells[j as usize].scale(&w));
            }
        }
        Ok(sum.scale(&(R::one() / R::from_f64(count as f64))))
    }

    /// `||f||^2_{L^2_W} = sum_J |J| <W_J f_J, f_J>`.
    pub fn weighted_norm_sq(&self, f: &PiecewiseVector<R>) -> Result<R> {
        if f.level != self.level {
            return Err(LabError::Range("weight and vector grids differ".into()));
        }
        let sum = self
            .cells
            .iter()
            .zip(&f.cells)
            .fold(R::zero(), |acc, (w, v)| acc + w.quad(v));
        Ok(sum * R::exp2i(-(self.level as i32)))
    }
}

/// A vector field constant on the cells of `D^level`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseVector<R> {
    level: u32,
    cells: Vec<Vec2<R>>,
}

impl<R: Real> PiecewiseVector<R> {
    pub fn new(level: u32, cells: Vec<Vec2<R>>) -> Result<Self> {
        if level > MAX_LEVEL || cells.len() as u64 != 1u64 << level {
            return Err(LabError::Range(format!(
                "{} cells do not tile level {level}",
                cells.len()
            )));
        }
        Ok(PiecewiseVector { level, cells })
    }

    pub fn constant(level: u32, v: Vec2<R>) -> Self {
        PiecewiseVector { level, cells: vec![v; 1usize << level] }
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn cells(&self) -> &[Vec2<R>] {
        &self.cells
    }

    pub fn refine(&self, level: u32) -> Result<Self> {
        if level < self.level {
            return Err(LabError::Range(format!("cannot refine level {} to {level}", self.level)));
        }
        let rep = 1usize << (level - self.level);
        let cells = self.cells.iter().flat_map(|c| std::iter::repeat(c.clone()).take(rep)).collect();
        PiecewiseVector::new(level, cells)
    }

    pub fn average(&self, interval: DyadicInterval) -> Result<Vec2<R>> {
        if interval.level() > self.level {
            return Err(LabError::Range(format!("interval {interval} is finer than the grid")));
        }
        let range = interval.cell_range(self.level);
        let count = R::from_f64((range.end - range.start) as f64);
        let sum = self.cells[range.start as usize..range.end as usize]
            .iter()
            .fold(Vec2::zero(), |acc, c| acc.add(c));
        Ok(sum.scale(&(R::one() / count)))
    }

    pub fn average_tree(&self) -> AverageTree<Vec2<R>> {
        build_tree(self.cells.clone(), |a, b| a.add(b).scale(&R::from_f64(0.5)))
    }
}

/// A test function `phi_I : I -> [-1, 1]`, constant on grid cells.
#[derive(Debug, Clone, PartialEq)]
pub enum Phi<R> {
    Zero,
    One,
    /// Indicator of the plus (left) half.
    PlusHalf,
    /// Values on the grid cells of `I`, left to right.
    Cells(Vec<R>),
}

impl<R: Real> Phi<R> {
    /// Values on `count` equal cells of `I`.
    pub fn cell_values(&self, count: usize) -> Result<Vec<R>> {
        Ok(match self {
            Phi::Zero => vec![R::zero(); count],
            Phi::One => vec![R::one(); count],
            Phi::PlusHalf => {
                if count < 2 {
                    return Err(LabError::Range("half-interval test function needs a finer grid".into()));
                }
                (0..count).map(|j| if j < count / 2 { R::one() } else { R::zero() }).collect()
            }
            Phi::Cells(v) => {
                if v.len() != count {
                    return Err(LabError::Precondition(format!(
                        "test function has {} values for {count} cells",
                        v.len()
                    )));
                }
                let one = R::one();
                if v.iter().any(|x| x.abs() > one) {
                    return Err(LabError::Precondition("test function leaves [-1, 1]".into()));
                }
                v.clone()
            }
        })
    }
}

/// `W_{n,s} = W_n + s sum_{I in D_+^{<=n}} |S_I|^{-1} 1_{S_I} tilde_A_I` on the
/// grid `D^{n+1}`.
pub fn build_wns<R: Real>(
    weight: &MartingaleWeight<R>,
    tilde: &crate::carleson::CarlesonSequence<R>,
    n: u32,
    s: &R,
) -> Result<PiecewiseWeight<R>> {
    if *s < R::zero() {
        return Err(LabError::Domain(format!("s must be nonnegative, got {:e}", s.to_f64())));
    }
    if n + 1 > weight.depth() + 1 || n > tilde.depth() {
        return Err(LabError::Range(format!("W_(n,s) with n = {n} exceeds the built depth")));
    }
    let mut cells = weight.truncate(n)?.refine(n + 1)?.cells;
    let bump = s.clone() * R::exp2i(n as i32 + 1);
    for interval in plus_class(n) {
        let sel = s_interval(interval, n)?;
        let add = tilde.matrix(interval).scale(&bump);
        let c = &mut cells[sel.index() as usize];
        *c = c.add(&add);
    }
    PiecewiseWeight::new(n + 1, cells)
}

/// Whether `I` belongs to `D_+`.
pub fn is_plus(interval: DyadicInterval) -> bool {
    interval.class() == IntervalClass::Plus
}
