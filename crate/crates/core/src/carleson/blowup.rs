//! The blow-up of the embedding sum with `phi_I = 1_{I+}` and `f = 1_{I0} a`.
//!
//! For `I` in `D^n` write `theta` for the angle of `a_{I+}` against the root
//! frame. Then, with `r = r_n`,
//!
//! ```text
//! r D_I = alpha_{n+1} (r sin gamma_{n+1}) cos theta
//! r F_I = -(r beta_{n+1}) cos gamma_{n+1} sin theta
//! ```
//!
//! Per level the sum of `|I| (r D_I + r F_I)^2` only needs `E[cos 2 theta]`
//! and `E[sin 2 theta]` over the sign paths, and those factor into products
//! of `cos 2 gamma_k` and one rotation. That gives a closed form for every
//! level independent of the interval-by-interval ledger.
//!
//! `|theta|` is largest on the all-plus branch `(n, 0)`, where `D_I` is
//! smallest and `|F_I|` largest, so that one interval per level certifies
//! both pointwise estimates for the whole level.

use rayon::prelude::*;
use serde::Serialize;

use super::pairwise_sum_scalar;
use crate::dyadic::DyadicInterval;
use crate::error::{LabError, Result};
use crate::mat2::Vec2;
use crate::real::Real;
use crate::weight::{MartingaleWeight, Schedule};

/// `(cos 2 gamma_n, sin 2 gamma_n)`.
fn double_angle<R: Real>(sch: &Schedule<R>, n: u32) -> (R, R) {
    let c = sch.cos_gamma(n).clone();
    let s = sch.sin_gamma(n).clone();
    (c.square() - s.square(), R::from_f64(2.0) * c * s)
}

fn cmul<R: Real>(a: &(R, R), b: &(R, R)) -> (R, R) {
    (
        a.0.clone() * b.0.clone() - a.1.clone() * b.1.clone(),
        a.0.clone() * b.1.clone() + a.1.clone() * b.0.clone(),
    )
}

/// `(X, Y)` with `r D_I + r F_I = X cos theta - Y sin theta` on level `n`.
fn xy<R: Real>(sch: &Schedule<R>, n: u32) -> (R, R) {
    let x = sch.alpha(n + 1).clone() * sch.r_sin_next(n);
    let y = sch.r_beta_next(n) * sch.cos_gamma(n + 1).clone();
    (x, y)
}

fn quarter_mean<R: Real>(x: &R, y: &R, phi: &(R, R)) -> R {
    let half = R::from_f64(0.5);
    let e = half.clone() * (x.square() + y.square())
        + half * (x.square() - y.square()) * phi.0.clone()
        - x.clone() * y.clone() * phi.1.clone();
    e * R::from_f64(0.25)
}

/// Closed-form per-level sums `(full, half)` of `1/4 r^2 |I| (D_I + F_I)^2`
/// over `D^n` and over `D_+^n`, for `n = 0..=depth`.
pub fn closed_form_levels<R: Real>(sch: &Schedule<R>, depth: u32) -> Vec<(R, R)> {
    assert!(depth < sch.max_level(), "schedule too short");
    // running product of cos 2 gamma_k, k <= n
    let mut prod = R::one();
    let mut out = Vec::with_capacity(depth as usize + 1);
    for n in 0..=depth {
        let prev = prod.clone();
        if n >= 1 {
            prod = prod * double_angle(sch, n).0;
        }
        let (x, y) = xy(sch, n);
        let next = double_angle(sch, n + 1);
        let phi = (next.0.clone() * prod.clone(), next.1.clone() * prod.clone());
        let full = quarter_mean(&x, &y, &phi);
        let half = if n == 0 {
            R::zero()
        } else {
            let rot = cmul(&next, &double_angle(sch, n));
            let phi = (rot.0 * prev.clone(), rot.1 * prev);
            quarter_mean(&x, &y, &phi) * R::from_f64(0.5)
        };
        out.push((full, half));
    }
    out
}

/// Closed-form per-level sums of the `phi = 1` embedding sum for `e = a_{I0}`:
/// `(r_n beta_n)^2 E[sin^2 theta_I] = (r_n beta_n)^2 (1 - prod_{k<=n} cos 2 gamma_k) / 2`.
pub fn closed_form_sigma1_levels<R: Real>(sch: &Schedule<R>, depth: u32) -> Vec<R> {
    let mut prod = R::one();
    (0..=depth)
        .map(|n| {
            if n >= 1 {
                prod = prod.clone() * double_angle(sch, n).0;
            }
            sch.r_beta(n).square() * (R::one() - prod.clone()) * R::from_f64(0.5)
        })
        .collect()
}

/// Pointwise data for one interval.
#[derive(Debug, Clone, Serialize)]
pub struct BlowupRecord {
    pub level: u32,
    pub interval: String,
    pub d: f64,
    pub f: f64,
    pub term: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelSummary {
    pub level: u32,
    /// Whether every interval of the level was evaluated.
    pub exhaustive: bool,
    pub sum: f64,
    pub closed_form_sum: f64,
    pub half_sum: f64,
    pub half_closed_form_sum: f64,
    pub cumulative: f64,
    pub half_cumulative: f64,
    /// `r_I D_I` on the extremal interval `(n, 0)`.
    pub extremal_rd: f64,
    /// `|F_I| / D_I` on the extremal interval.
    pub extremal_f_over_d: f64,
    /// Over all intervals when exhaustive, else the extremal values.
    pub min_rd: f64,
    pub max_f_over_d: f64,
    pub violations_f_d: u64,
    pub violations_rd: u64,
    /// Intervals evaluated individually: the whole level when exhaustive,
    /// else a deterministic sample plus both ends.
    pub evaluated: u64,
    /// Sampled intervals that beat the extremal one on either estimate.
    pub extremal_exceptions: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BlowupLedger {
    pub epsilon: f64,
    pub depth: u32,
    pub levels: Vec<LevelSummary>,
    pub records: Vec<BlowupRecord>,
    /// Least-squares slope of the cumulative sum against the level.
    pub slope: f64,
    pub half_slope: f64,
}

impl BlowupLedger {
    pub fn all_estimates_hold(&self) -> bool {
        self.levels.iter().all(|l| {
            l.violations_f_d == 0
                && l.violations_rd == 0
                && l.extremal_exceptions == 0
                && l.min_rd >= 0.125
                && l.max_f_over_d <= 0.5
        })
    }

    pub fn min_level_sum(&self) -> f64 {
        self.levels.iter().map(|l| l.sum).fold(f64::INFINITY, f64::min)
    }

    /// Least half-sum contribution over levels `>= 1` (the root is not in `D_+`).
    pub fn min_half_level_sum(&self) -> f64 {
        self.levels.iter().skip(1).map(|l| l.half_sum).fold(f64::INFINITY, f64::min)
    }

    pub fn total(&self) -> f64 {
        self.levels.last().map(|l| l.cumulative).unwrap_or(0.0)
    }

    /// CSV rows `level,interval,D,F,term,cumulative` for the recorded intervals.
    pub fn write_records_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["level", "interval", "D", "F", "term", "cumulative"])?;
        let mut acc = 0.0;
        for r in &self.records {
            acc += r.term;
            w.write_record([
                r.level.to_string(),
                r.interval.clone(),
                format!("{:.16e}", r.d),
                format!("{:.16e}", r.f),
                format!("{:.16e}", r.term),
                format!("{:.16e}", acc),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Scaled pair `(r D_I, r F_I)` and unscaled `(D_I, F_I)` from the frame of `I+`.
fn pointwise<R: Real>(sch: &Schedule<R>, n: u32, a_plus: &Vec2<R>) -> (R, R, R, R) {
    let (x, y) = xy(sch, n);
    let rd = x * a_plus.x.clone();
    let rf = -(y * a_plus.y.clone());
    let d = sch.alpha(n + 1).clone() * sch.sin_gamma(n + 1).clone() * a_plus.x.clone();
    let f = -(sch.beta(n + 1).clone() * sch.cos_gamma(n + 1).clone() * a_plus.y.clone());
    (rd, rf, d, f)
}

fn slope(ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    if ys.len() < 2 {
        return 0.0;
    }
    let mx = (n - 1.0) / 2.0;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, y) in ys.iter().enumerate() {
        let dx = i as f64 - mx;
        sxy += dx * (y - my);
        sxx += dx * dx;
    }
    sxy / sxx
}

/// Builds the ledger on levels `0..=depth`. Levels up to the weight's dense
/// depth are evaluated interval by interval; deeper ones use the closed form
/// and the extremal branch, and `samples` further intervals per level are
/// checked against the extremal one. Per-interval records are kept for
/// levels up to `record_levels`.
pub fn blowup_ledger<R: Real>(
    weight: &MartingaleWeight<R>,
    depth: u32,
    record_levels: u32,
    samples: u64,
) -> Result<BlowupLedger> {
    if depth > weight.depth() {
        return Err(LabError::Range(format!("ledger depth {depth} exceeds the weight depth {}", weight.depth())));
    }
    let sch = weight.schedule();
    let closed = closed_form_levels(sch, depth);
    let exhaustive_to = weight.dense_depth().min(depth);
    let quarter = R::from_f64(0.25);
    let mut levels = Vec::with_capacity(depth as usize + 1);
    let mut records = Vec::new();
    let (mut cum, mut half_cum) = (0.0, 0.0);
    for n in 0..=depth {
        let extremal = DyadicInterval::at(n, 0);
        let (ap, _) = weight.child_frames(extremal);
        let (erd, erf, _, _) = pointwise(sch, n, &ap);
        let (erd, erf) = (erd.to_f64(), erf.to_f64());
        let (cf, chf) = (closed[n as usize].0.to_f64(), closed[n as usize].1.to_f64());
        let mut summary = LevelSummary {
            level: n,
            exhaustive: false,
            sum: cf,
            closed_form_sum: cf,
            half_sum: chf,
            half_closed_form_sum: chf,
            cumulative: 0.0,
            half_cumulative: 0.0,
            extremal_rd: erd,
            extremal_f_over_d: erf.abs() / erd,
            min_rd: erd,
            max_f_over_d: erf.abs() / erd,
            violations_f_d: 0,
            violations_rd: 0,
            evaluated: 0,
            extremal_exceptions: 0,
        };
        if n <= exhaustive_to {
            let measure = R::exp2i(-(n as i32));
            let rows: Vec<(R, R, f64, f64, u64, u64, Option<BlowupRecord>)> = (0..1u64 << n)
                .into_par_iter()
                .map(|k| {
                    let i = DyadicInterval::at(n, k);
                    let (ap, _) = weight.child_frames(i);
                    let (rd, rf, d, f) = pointwise(sch, n, &ap);
                    let term = quarter.clone() * measure.clone() * (rd.clone() + rf.clone()).square();
                    let half = if n >= 1 && k % 2 == 0 { term.clone() } else { R::zero() };
                    let (rd64, rf64) = (rd.to_f64(), rf.to_f64());
                    let vfd = u64::from(rd64 < 2.0 * rf64.abs());
                    let vrd = u64::from(rd64 < 0.125);
                    let rec = (n <= record_levels).then(|| BlowupRecord {
                        level: n,
                        interval: i.to_string(),
                        d: d.to_f64(),
                        f: f.to_f64(),
                        term: term.to_f64(),
                    });
                    (term, half, rd64, rf64.abs() / rd64, vfd, vrd, rec)
                })
                .collect();
            let terms: Vec<R> = rows.iter().map(|r| r.0.clone()).collect();
            let halves: Vec<R> = rows.iter().map(|r| r.1.clone()).collect();
            summary.exhaustive = true;
            summary.sum = pairwise_sum_scalar(&terms).to_f64();
            summary.half_sum = pairwise_sum_scalar(&halves).to_f64();
            summary.min_rd = rows.iter().map(|r| r.2).fold(f64::INFINITY, f64::min);
            summary.max_f_over_d = rows.iter().map(|r| r.3).fold(0.0, f64::max);
            summary.violations_f_d = rows.iter().map(|r| r.4).sum();
            summary.violations_rd = rows.iter().map(|r| r.5).sum();
            summary.evaluated = rows.len() as u64;
            records.extend(rows.into_iter().filter_map(|r| r.6));
        } else {
            let mask = (1u64 << n) - 1;
            let mut idx: Vec<u64> = (0..samples).map(|j| j.wrapping_mul(0x9E37_79B9_7F4A_7C15) & mask).collect();
            idx.push(mask);
            let pts: Vec<(f64, f64)> = idx
                .par_iter()
                .map(|&k| {
                    let (ap, _) = weight.child_frames(DyadicInterval::at(n, k));
                    let (rd, rf, _, _) = pointwise(sch, n, &ap);
                    (rd.to_f64(), rf.to_f64().abs() / rd.to_f64())
                })
                .collect();
            let ext = (erd, erf.abs() / erd);
            let all = pts.iter().chain(std::iter::once(&ext));
            summary.violations_f_d = all.clone().filter(|p| p.1 > 0.5).count() as u64;
            summary.violations_rd = all.filter(|p| p.0 < 0.125).count() as u64;
            summary.extremal_exceptions = pts
                .iter()
                .filter(|p| p.0 < erd * (1.0 - 1e-12) || p.1 > summary.extremal_f_over_d * (1.0 + 1e-12))
                .count() as u64;
            summary.evaluated = pts.len() as u64 + 1;
        }
        cum += summary.sum;
        half_cum += summary.half_sum;
        summary.cumulative = cum;
        summary.half_cumulative = half_cum;
        levels.push(summary);
    }
    let cums: Vec<f64> = levels.iter().map(|l| l.cumulative).collect();
    let half_cums: Vec<f64> = levels.iter().map(|l| l.half_cumulative).collect();
    Ok(BlowupLedger {
        epsilon: weight.epsilon().to_f64(),
        depth,
        slope: slope(&cums),
        half_slope: slope(&half_cums),
        levels,
        records,
    })
}

/// The sufficient-smallness conditions on `eps`, checked on levels
/// `0..=depth` along the extremal branch.
#[derive(Debug, Clone, Serialize)]
pub struct SmallnessReport {
    pub epsilon: f64,
    pub depth: u32,
    /// Least `<a, a_{I+}>`; the condition is `>= 1/2`.
    pub min_cos_plus: f64,
    /// Least `sin gamma_{n+1} / eps^(n+1)`; the condition is `>= 1/2`.
    pub min_sin_ratio: f64,
    /// Least `alpha_{n+1}`; the condition is `>= 1/2`.
    pub min_alpha: f64,
    pub min_rd: f64,
    pub max_f_over_d: f64,
}

impl SmallnessReport {
    pub fn estimates_hold(&self) -> bool {
        self.min_rd >= 0.125 && self.max_f_over_d <= 0.5
    }

    pub fn all_conditions_hold(&self) -> bool {
        self.estimates_hold() && self.min_cos_plus >= 0.5 && self.min_sin_ratio >= 0.5 && self.min_alpha >= 0.5
    }
}

pub fn smallness_report(epsilon: f64, depth: u32) -> Result<SmallnessReport> {
    let w = MartingaleWeight::build(epsilon, depth, 0)?;
    let sch = w.schedule();
    let mut rep = SmallnessReport {
        epsilon,
        depth,
        min_cos_plus: f64::INFINITY,
        min_sin_ratio: f64::INFINITY,
        min_alpha: f64::INFINITY,
        min_rd: f64::INFINITY,
        max_f_over_d: 0.0,
    };
    // walk the all-plus branch
    let mut a = Vec2::<f64>::e1();
    for n in 0..=depth {
        let (c, s) = (*sch.cos_gamma(n + 1), *sch.sin_gamma(n + 1));
        let ap = a.scale(&c).add(&a.perp().scale(&s));
        let (rd, rf, _, _) = pointwise(sch, n, &ap);
        rep.min_cos_plus = rep.min_cos_plus.min(ap.x);
        rep.min_sin_ratio = rep.min_sin_ratio.min(s / epsilon.powi(n as i32 + 1));
        rep.min_alpha = rep.min_alpha.min(*sch.alpha(n + 1));
        rep.min_rd = rep.min_rd.min(rd);
        rep.max_f_over_d = rep.max_f_over_d.max(rf.abs() / rd);
        a = ap;
    }
    Ok(rep)
}

/// The largest `eps` of `grid` for which both pointwise estimates hold up to
/// `depth`, with the per-`eps` reports.
pub fn admissible_epsilon(grid: &[f64], depth: u32) -> Result<(Option<f64>, Vec<SmallnessReport>)> {
    let reports: Vec<SmallnessReport> =
        grid.iter().map(|&e| smallness_report(e, depth)).collect::<Result<_>>()?;
    let best = reports
        .iter()
        .filter(|r| r.estimates_hold())
        .map(|r| r.epsilon)
        .fold(None, |acc: Option<f64>, e| Some(acc.map_or(e, |a| a.max(e))));
    Ok((best, reports))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::carleson::{build_a, counterexample_embedding_sum, PhiPolicy};
    use crate::real::Ext;
    use crate::weight::build_counterexample_weight;

    #[test]
    fn closed_form_matches_exhaustive_sum() {
        let w = build_counterexample_weight(0.25f64, 14).unwrap();
        let ledger = blowup_ledger(&w, 13, 4, 0).unwrap();
        for l in &ledger.levels {
            assert!(l.exhaustive);
            assert!((l.sum / l.closed_form_sum - 1.0).abs() < 1e-12, "{l:?}");
            if l.level > 0 {
                assert!((l.half_sum / l.half_closed_form_sum - 1.0).abs() < 1e-12, "{l:?}");
            } else {
                assert_eq!(l.half_sum, 0.0);
            }
        }
        assert_eq!(ledger.records.len(), 31);
    }

    #[test]
    fn ledger_matches_embedding_sums() {
        let w = build_counterexample_weight(0.25f64, 12).unwrap();
        let we = build_counterexample_weight(Ext::with_bits(0.25, 160), 12).unwrap();
        let a = build_a(&we, 12).unwrap();
        let ledger = blowup_ledger(&w, 11, 0, 0).unwrap();
        let full = counterexample_embedding_sum(&we, &a, &PhiPolicy::Left, 11).unwrap();
        let half = counterexample_embedding_sum(&we, &a, &PhiPolicy::LeftPlus, 11).unwrap();
        for (n, l) in ledger.levels.iter().enumerate() {
            let f = full.per_level[n].to_f64();
            assert!((l.sum / f - 1.0).abs() < 1e-12, "{n}: {} vs {f}", l.sum);
            if n > 0 {
                assert!((l.half_sum / half.per_level[n].to_f64() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sigma1_closed_form_matches_sum() {
        let w = build_counterexample_weight(0.25f64, 12).unwrap();
        let a = build_a(&w, 12).unwrap();
        let ones = counterexample_embedding_sum(&w, &a, &PhiPolicy::Ones, 12).unwrap();
        let cf = closed_form_sigma1_levels(w.schedule(), 12);
        for (x, y) in ones.per_level.iter().zip(&cf) {
            assert!((x - y).abs() <= 1e-12 * y.max(1e-300), "{x} vs {y}");
        }
    }

    #[test]
    fn extremal_interval_is_worst() {
        let w = build_counterexample_weight(0.25f64, 10).unwrap();
        let ledger = blowup_ledger(&w, 10, 0, 0).unwrap();
        for l in &ledger.levels {
            assert_eq!(l.min_rd, l.extremal_rd);
            assert_eq!(l.max_f_over_d, l.extremal_f_over_d);
        }
    }

    #[test]
    fn sampled_levels_respect_the_extremal_branch() {
        let w = MartingaleWeight::build(0.25f64, 31, 6).unwrap();
        let ledger = blowup_ledger(&w, 30, 0, 512).unwrap();
        assert!(ledger.levels[..=6].iter().all(|l| l.exhaustive));
        for l in &ledger.levels[7..] {
            assert!(!l.exhaustive);
            assert_eq!(l.evaluated, 514);
            assert_eq!(l.extremal_exceptions, 0, "{l:?}");
        }
        assert!(ledger.all_estimates_hold());
    }

    #[test]
    fn f_bounded_by_beta() {
        let w = build_counterexample_weight(0.25f64, 10).unwrap();
        let ledger = blowup_ledger(&w, 10, 10, 0).unwrap();
        for r in &ledger.records {
            assert!(r.f.abs() <= 0.25f64.powi(2 * r.level as i32 + 4));
        }
    }

    #[test]
    fn deep_levels_extended_agree_with_double() {
        let wd = MartingaleWeight::build(0.25f64, 40, 8).unwrap();
        let we = MartingaleWeight::build(Ext::with_bits(0.25, 160), 40, 8).unwrap();
        let cd = closed_form_levels(wd.schedule(), 40);
        let ce = closed_form_levels(we.schedule(), 40);
        for (x, y) in cd.iter().zip(&ce) {
            assert!((x.0 / y.0.to_f64() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn admissible_range_contains_quarter() {
        let (best, reps) = admissible_epsilon(&[0.125, 0.25], 20).unwrap();
        assert_eq!(best, Some(0.25));
        assert!(reps.iter().all(|r| r.all_conditions_hold()));
    }
}
