//! The acceptance suite: nine numbered criteria, each reduced to a pass flag
//! plus the measured quantities behind it.

use std::collections::BTreeMap;
use std::fmt;
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};

use crate::carleson::blowup::{admissible_epsilon, blowup_ledger, smallness_report};
use crate::carleson::wcet::{brute_force_cii, CiiMode};
use crate::carleson::wns::{degree_analysis, geometric_grid, wns_bound, wns_scan};
use crate::carleson::{
    build_a, sigma1_bound, testing_cap, testing_constants, testing_increments, tilde_a, tilde_carleson_sup, CarlesonSequence,
};
use crate::convexbody::body_average;
use crate::dyadic::{plus_class, s_interval, DyadicInterval};
use crate::error::Result;
use crate::mat2::{SymMat2, Vec2};
use crate::maxop::{eval_cg, eval_mcw, eval_mw, weighted_norm};
use crate::oracle;
use crate::random;
use crate::real::{Ext, Real};
use crate::weight::{build_counterexample_weight, build_wns, MartingaleWeight, PiecewiseVector, PiecewiseWeight};

use rand::Rng;

#[derive(Debug, Clone, Serialize)]
pub struct AcceptanceConfig {
    pub epsilon: f64,
    pub seed: u64,
    /// Precision of the extended-backend checks.
    pub bits: u32,
}

impl Default for AcceptanceConfig {
    fn default() -> Self {
        AcceptanceConfig { epsilon: 0.25, seed: 20_240_601, bits: 192 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Outcome {
    pub id: u32,
    pub title: &'static str,
    pub passed: bool,
    pub metrics: BTreeMap<String, Value>,
    pub notes: Vec<String>,
    pub seconds: f64,
}

impl Outcome {
    fn metric(&mut self, key: &str, v: impl Serialize) {
        self.metrics.insert(key.to_string(), json!(v));
    }

    fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "criterion {} {tag}: {} ({:.2} s)", self.id, self.title, self.seconds)?;
        for (k, v) in &self.metrics {
            write!(f, " {k}={v}")?;
        }
        for n in &self.notes {
            write!(f, " [{n}]")?;
        }
        Ok(())
    }
}

pub const TITLES: [&str; 9] = [
    "martingale validity",
    "testing condition",
    "blow-up of the embedding sum",
    "pointwise estimates",
    "convex-body comparability",
    "operator ordering and scalar reduction",
    "perturbed weights",
    "degree analysis",
    "small-depth embedding oracle",
];

fn run(id: u32, body: impl FnOnce(&mut Outcome) -> Result<bool>) -> Outcome {
    let mut out = Outcome {
        id,
        title: TITLES[id as usize - 1],
        passed: false,
        metrics: BTreeMap::new(),
        notes: Vec::new(),
        seconds: 0.0,
    };
    let t = Instant::now();
    match body(&mut out) {
        Ok(p) => out.passed = p,
        Err(e) => {
            out.passed = false;
            out.note(format!("error: {e}"));
        }
    }
    out.seconds = t.elapsed().as_secs_f64();
    out
}

/// Relative excess of `a` over `b`: positive when `a > b`.
fn excess(a: f64, b: f64) -> f64 {
    (a - b) / b.abs().max(1e-300)
}

/// Sup of the testing constants over `K` of level at most 16, summing to depth 20.
pub fn measured_testing_constant(eps: f64) -> Result<f64> {
    let w = build_counterexample_weight(eps, 20)?;
    let a = build_a(&w, 20)?;
    Ok(testing_constants(&w, &a, 20, 16)?.sup)
}

pub fn criterion_1(cfg: &AcceptanceConfig) -> Outcome {
    run(1, |o| {
        let t = Instant::now();
        let w = build_counterexample_weight(cfg.epsilon, 20)?;
        let rep = w.check_invariants(20);
        let secs = t.elapsed().as_secs_f64();
        o.metric("nodes", rep.nodes);
        o.metric("martingale_residual", rep.martingale_residual);
        o.metric("trace_deviation", rep.trace_deviation);
        o.metric("frame_deviation", rep.frame_deviation);
        o.metric("eigen_deviation", rep.eigen_deviation);
        o.metric("min_cos_to_root", rep.min_cos_to_root);
        o.metric("build_and_check_seconds", secs);
        // a few deep branches beyond the dense levels
        let deep = MartingaleWeight::build(cfg.epsilon, 60, 8)?;
        let mut rng = random::rng(cfg.seed);
        let leaves: Vec<DyadicInterval> = (0..64)
            .map(|j| match j {
                0 => DyadicInterval::at(60, 0),
                1 => DyadicInterval::at(60, (1u64 << 60) - 1),
                _ => DyadicInterval::at(60, rng.gen_range(0..1u64 << 60)),
            })
            .collect();
        let branches = deep.check_branches(&leaves);
        o.metric("depth60_branches_pass", branches.passes(1e-12));
        Ok(rep.martingale_residual <= 1e-12
            && rep.trace_deviation <= 1e-12
            && rep.frame_deviation <= 1e-12
            && secs < 10.0)
    })
}

pub fn criterion_2(cfg: &AcceptanceConfig) -> Outcome {
    run(2, |o| {
        let eps = cfg.epsilon;
        let w = build_counterexample_weight(eps, 20)?;
        let a = build_a(&w, 20)?;
        let table = testing_constants(&w, &a, 20, 16)?;
        let cap = testing_cap(&eps);
        o.metric("testing_constant", table.sup);
        o.metric("argmax", table.argmax.to_string());
        o.metric("cap", cap);
        // growth of each c_K as deeper levels join, against eps^(2j) with
        // j the depth below K
        let inc = testing_increments(&w, &a, &eps, 20, 16)?;
        o.metric("max_increment_ratio", inc.max_ratio);
        o.metric("increment_argmax", format!("{} at depth {}", inc.argmax.0, inc.argmax.1));
        o.metric("min_increment", inc.min_increment);
        // the same bound without rounding slack, on K of level <= 2
        let x = |v: f64| Ext::with_bits(v, cfg.bits);
        let we = build_counterexample_weight(x(eps), 12)?;
        let ae = build_a(&we, 12)?;
        let exact = testing_increments(&we, &ae, &x(eps), 12, 2)?;
        let exact_ok = exact.max_ratio <= Ext::with_bits(1.0, cfg.bits) && exact.min_increment > Ext::with_bits(0.0, cfg.bits);
        o.metric("extended_max_increment_ratio_minus_one", (exact.max_ratio - x(1.0)).to_f64());
        o.metric("extended_increments_ok", exact_ok);
        let monotone = inc.min_increment >= 0.0;
        let bounded = inc.max_ratio <= 1.0 + 1e-12;
        Ok(table.sup <= cap + 1e-9 && monotone && bounded && exact_ok)
    })
}

pub fn criterion_3(cfg: &AcceptanceConfig) -> Outcome {
    run(3, |o| {
        let eps = cfg.epsilon;
        let w = MartingaleWeight::build(eps, 40, 20)?;
        let ledger = blowup_ledger(&w, 40, 0, 4096)?;
        let bound = sigma1_bound(&eps);
        let min_level = ledger.min_level_sum();
        let min_half = ledger.min_half_level_sum();
        let total = ledger.total();
        let closed_gap = ledger
            .levels
            .iter()
            .filter(|l| l.exhaustive)
            .map(|l| {
                let a = (l.sum - l.closed_form_sum).abs() / l.closed_form_sum.abs();
                let b = if l.level == 0 { 0.0 } else { (l.half_sum - l.half_closed_form_sum).abs() / l.half_closed_form_sum.abs() };
                a.max(b)
            })
            .fold(0.0, f64::max);
        o.metric("min_level_sum", min_level);
        o.metric("min_half_level_sum", min_half);
        o.metric("cumulative_40", total);
        o.metric("ten_sigma1_bound", 10.0 * bound);
        o.metric("slope", ledger.slope);
        o.metric("half_slope", ledger.half_slope);
        o.metric("exhaustive_vs_closed_form", closed_gap);
        o.note("the half sum starts at level 1: the root is not a plus interval");
        Ok(min_level >= 1.0 / 1024.0 && total > 10.0 * bound && min_half >= 1.0 / 2048.0 && closed_gap < 1e-10)
    })
}

pub fn criterion_4(_cfg: &AcceptanceConfig) -> Outcome {
    run(4, |o| {
        let mut ok = true;
        for eps in [0.125, 0.25] {
            let w = MartingaleWeight::build(eps, 40, 20)?;
            let ledger = blowup_ledger(&w, 40, 0, 4096)?;
            let exhaustive: u64 = ledger.levels.iter().filter(|l| l.exhaustive).map(|l| l.evaluated).sum();
            let sampled: u64 = ledger.levels.iter().filter(|l| !l.exhaustive).map(|l| l.evaluated).sum();
            let min_rd = ledger.levels.iter().map(|l| l.min_rd).fold(f64::INFINITY, f64::min);
            let max_fd = ledger.levels.iter().map(|l| l.max_f_over_d).fold(0.0, f64::max);
            let exceptions: u64 = ledger.levels.iter().map(|l| l.extremal_exceptions).sum();
            let report = smallness_report(eps, 40)?;
            let key = format!("eps_{eps}");
            o.metric(&format!("{key}_min_rd"), min_rd);
            o.metric(&format!("{key}_max_f_over_d"), max_fd);
            o.metric(&format!("{key}_exhaustive_intervals"), exhaustive);
            o.metric(&format!("{key}_sampled_intervals"), sampled);
            o.metric(&format!("{key}_extremal_exceptions"), exceptions);
            o.metric(&format!("{key}_conditions"), report.all_conditions_hold());
            ok &= ledger.all_estimates_hold() && report.estimates_hold();
        }
        let grid: Vec<f64> = (1..=10).map(|k| k as f64 * 0.05).collect();
        let (best, _) = admissible_epsilon(&grid, 20)?;
        o.metric("largest_admissible_epsilon", best);
        Ok(ok)
    })
}

pub fn criterion_5(cfg: &AcceptanceConfig) -> Outcome {
    run(5, |o| {
        let mut rng = random::rng(cfg.seed ^ 5);
        let mut violations = 0u32;
        let (mut lo, mut hi) = (f64::INFINITY, 0f64);
        for _ in 0..1000 {
            let f = random::vector_field(&mut rng, 6);
            let a = random::psd_matrix(&mut rng, 1e-4);
            let level = rng.gen_range(0..=5);
            let i = DyadicInterval::at(level, rng.gen_range(0..1u64 << level));
            let cells = &f.cells()[i.cell_range(6).start as usize..i.cell_range(6).end as usize];
            let avg = cells.iter().map(|v| a.quad(v).sqrt()).sum::<f64>() / cells.len() as f64;
            let norm = body_average(&f, i)?.norm_a(&a);
            let r = norm / avg;
            lo = lo.min(r);
            hi = hi.max(r);
            if r < 0.5 * (1.0 - 1e-12) || r > 1.0 + 1e-12 {
                violations += 1;
            }
        }
        o.metric("comparability_violations", violations);
        o.metric("min_ratio", lo);
        o.metric("max_ratio", hi);
        let mut worst: f64 = 0.0;
        for m in 1..=12usize {
            for t in 0..40 {
                let mut gens: Vec<Vec2<f64>> = (0..m).map(|_| random::unit_vector(&mut rng).scale(&rng.gen_range(0.1..2.0))).collect();
                if t % 4 == 0 && m > 1 {
                    gens[m - 1] = gens[0].scale(&-0.5);
                }
                let a = if t % 5 == 0 { random::rank_one(&mut rng) } else { random::psd_matrix(&mut rng, 1e-3) };
                let fast = crate::convexbody::Zonotope::new(gens.clone()).norm_a(&a);
                let slow = oracle::brute_zonotope_norm(&gens, &a);
                worst = worst.max((fast - slow).abs() / slow.max(1e-300));
            }
        }
        o.metric("zonotope_vs_enumeration", worst);
        Ok(violations == 0 && worst <= 1e-12)
    })
}

pub fn criterion_6(cfg: &AcceptanceConfig) -> Outcome {
    run(6, |o| {
        let mut rng = random::rng(cfg.seed ^ 6);
        let tol = 1e-12;
        let mut order_violations = 0u64;
        for _ in 0..100 {
            let w = random::weight(&mut rng, 8, 1e-3);
            let f = random::vector_field(&mut rng, 8);
            let mw = eval_mw(&w, &f, 8)?;
            let mcw = eval_mcw(&w, &f, 8)?;
            let cg = eval_cg(&w, &f, 8)?;
            for ((p, c), g) in mw.values.iter().zip(&mcw.values).zip(&cg.values) {
                let bad = excess(*p, *c) > tol || excess(*c, *g) > tol || excess(*g, 2.0 * c) > tol;
                order_violations += u64::from(bad);
            }
        }
        o.metric("ordering_violations", order_violations);
        let mut scalar_gap: f64 = 0.0;
        for _ in 0..20 {
            let ws: Vec<f64> = (0..256).map(|_| rng.gen_range(-6.0f64..6.0).exp()).collect();
            let g = random::scalar_field(&mut rng, 8);
            let (plain, convex) = oracle::scalar_maximal(&ws, &g, 8);
            let w = PiecewiseWeight::new(8, ws.iter().map(|&x| SymMat2::identity().scale(&x)).collect())?;
            let f = PiecewiseVector::new(8, g.iter().map(|&x| Vec2::new(x, 0.0)).collect())?;
            let fields = [(eval_mw(&w, &f, 8)?, &plain), (eval_mcw(&w, &f, 8)?, &convex), (eval_cg(&w, &f, 8)?, &convex)];
            for (field, reference) in fields {
                for (x, y) in field.values.iter().zip(reference.iter()) {
                    scalar_gap = scalar_gap.max((x - y).abs() / y.abs().max(1e-300));
                }
            }
        }
        o.metric("scalar_reduction_gap", scalar_gap);
        let id = PiecewiseWeight::constant(8, SymMat2::<f64>::identity());
        let mut doob: f64 = 0.0;
        for _ in 0..1000 {
            let f = random::vector_field(&mut rng, 8);
            let m = eval_mw(&id, &f, 8)?.l2_norm();
            doob = doob.max(m / weighted_norm(&f, &id)?);
        }
        o.metric("max_doob_ratio", doob);
        Ok(order_violations == 0 && scalar_gap <= 1e-12 && doob <= 2.0)
    })
}

pub fn criterion_7(cfg: &AcceptanceConfig) -> Outcome {
    run(7, |o| {
        let eps = cfg.epsilon;
        let w = build_counterexample_weight(eps, 20)?;
        let a = build_a(&w, 20)?;
        let c = testing_constants(&w, &a, 20, 16)?.sup;
        o.metric("constant", c);
        let tilde = tilde_a(&w, &a, &c)?;
        let (tsup, targ) = tilde_carleson_sup(&w, &tilde, 20, 16)?;
        o.metric("tilde_carleson_sup", tsup);
        o.metric("tilde_argmax", targ.to_string());
        let mut disjoint = true;
        for n in 1..=20 {
            let mut sets = plus_class(n)
                .into_iter()
                .map(|i| {
                    let s = s_interval(i, n)?;
                    disjoint &= i.contains(&s) && s.level() == n + 1;
                    Ok(s.index())
                })
                .collect::<Result<Vec<u64>>>()?;
            let len = sets.len();
            sets.sort_unstable();
            sets.dedup();
            disjoint &= sets.len() == len;
        }
        o.metric("s_disjoint_to_20", disjoint);

        let bits = cfg.bits;
        let x = |v: f64| Ext::with_bits(v, bits);
        let we = MartingaleWeight::build(x(eps), 13, 13)?;
        let ae = build_a(&we, 13)?;
        let te: CarlesonSequence<Ext> = tilde_a(&we, &ae, &x(c))?;
        // direct evaluation of the convex-body maximal function on W_{n,s}
        let jobs: Vec<(u32, f64)> = (1..=8).flat_map(|n| [0.25, 1.0, 4.0].map(|s| (n, s))).collect();
        use rayon::prelude::*;
        let gaps = jobs
            .par_iter()
            .map(|&(n, s)| {
                let b = wns_bound(&we, &te, n, &x(s))?;
                let wns = build_wns(&we, &te, n, &x(s))?;
                let f = PiecewiseVector::constant(n + 1, Vec2::new(x(1.0), x(0.0)));
                let m = eval_mcw(&wns, &f, n + 1)?.l2_norm_sq();
                let direct = m / wns.weighted_norm_sq(&f)?;
                Ok((n, s, b.ratio.to_f64(), direct.to_f64()))
            })
            .collect::<Result<Vec<_>>>()?;
        let wns_ok = gaps.iter().all(|g| g.2 <= g.3 * (1.0 + 1e-12));
        let worst = gaps.iter().map(|g| g.2 / g.3).fold(0.0, f64::max);
        o.metric("wns_over_direct_max", worst);

        let scan = wns_scan(&we, &te, 2..=12, &geometric_grid(-6.0, 6.0, 13))?;
        let best: Vec<f64> = scan.best.iter().map(|r| r.ratio).collect();
        let drops = scan.best_decreases();
        o.metric("best_ratio_by_n", &best);
        o.metric("best_decreases_at", &drops);
        if !drops.is_empty() {
            o.note(format!("best lower bound decreases at n = {drops:?}"));
        }
        Ok(tsup <= 1.0 + 1e-9 && disjoint && wns_ok && drops.is_empty())
    })
}

pub fn criterion_8(cfg: &AcceptanceConfig) -> Outcome {
    run(8, |o| {
        let eps = cfg.epsilon;
        let c = measured_testing_constant(eps)?;
        let x = |v: f64| Ext::with_bits(v, cfg.bits);
        let we = MartingaleWeight::build(x(eps), 7, 7)?;
        let ae = build_a(&we, 7)?;
        let te = tilde_a(&we, &ae, &x(c))?;
        let d = degree_analysis(&we, &te, 6, &x(c))?;
        let growth = d.samples.iter().all(|s| s.q_growth_ok);
        let nonneg = d.samples.iter().all(|s| s.p_nonnegative);
        o.metric("intervals", d.samples.len());
        o.metric("p_residual_quartic", d.max_p_residual());
        o.metric("p_residual_six_point", d.max_p_residual_six());
        o.metric("q_residual", d.max_q_residual());
        o.metric("q_growth", growth);
        o.metric("p_nonnegative", nonneg);
        o.metric("aggregate", &d.aggregate);
        o.metric("lemma_p0", d.lemma.p0);
        o.metric("lemma_bound", d.lemma.bound);
        o.metric("lemma_max_ratio", d.lemma.max_ratio);
        o.metric("a_priori_quintic", d.a_priori_quintic_holds());
        o.metric("r0_relative_gap", d.r0_relative_gap());
        Ok(d.max_p_residual() <= 1e-8
            && d.max_p_residual_six() <= 1e-8
            && d.max_q_residual() <= 1e-30
            && growth
            && nonneg
            && d.lemma.n == 5
            && d.lemma.passes())
    })
}

pub fn criterion_9(cfg: &AcceptanceConfig) -> Outcome {
    run(9, |o| {
        let mut rng = random::rng(cfg.seed ^ 9);
        let mut violations = 0u32;
        let mut min_ratio = f64::INFINITY;
        for _ in 0..50 {
            let w = random::weight(&mut rng, 3, 1e-2);
            let a = random::carleson_sequence(&mut rng, 3)?;
            let ci = testing_constants(&w.average_tree(), &a, 3, 3)?.sup;
            let cii = brute_force_cii(&w, &a, 3, CiiMode::Plain)?;
            min_ratio = min_ratio.min(cii / ci);
            if cii < ci * (1.0 - 1e-10) {
                violations += 1;
            }
        }
        o.metric("violations", violations);
        o.metric("min_cii_over_ci", min_ratio);
        let w = build_counterexample_weight(cfg.epsilon, 3)?;
        let a = build_a(&w, 3)?;
        let wp = w.truncate(3)?;
        let plain = brute_force_cii(&wp, &a, 3, CiiMode::Plain)?;
        let convex = brute_force_cii(&wp, &a, 3, CiiMode::ConvexBody)?;
        o.metric("plain", plain);
        o.metric("convex_body", convex);
        o.metric("gap", convex - plain);
        Ok(violations == 0 && convex > plain * (1.0 + 1e-9))
    })
}

pub fn run_criterion(id: u32, cfg: &AcceptanceConfig) -> Option<Outcome> {
    Some(match id {
        1 => criterion_1(cfg),
        2 => criterion_2(cfg),
        3 => criterion_3(cfg),
        4 => criterion_4(cfg),
        5 => criterion_5(cfg),
        6 => criterion_6(cfg),
        7 => criterion_7(cfg),
        8 => criterion_8(cfg),
        9 => criterion_9(cfg),
        _ => return None,
    })
}

pub fn run_all(cfg: &AcceptanceConfig) -> Vec<Outcome> {
    (1..=9).filter_map(|id| run_criterion(id, cfg)).collect()
}
