//! The subcommands. Each writes its files through a [`Sink`] and returns a
//! [`Report`] whose `passed` flag drives the exit code.

use serde_json::{json, Value};

use mwcb_core::acceptance::{run_all, AcceptanceConfig};
use mwcb_core::carleson::blowup::{blowup_ledger, LevelSummary};
use mwcb_core::carleson::wns::{gluing_report, wns_scan};
use mwcb_core::carleson::{
    build_a, counterexample_embedding_sum, sigma1_bound, testing_cap, testing_constants, testing_increments, tilde_a,
    PhiPolicy,
};
use mwcb_core::maxop::{eval_cg, eval_mcw, eval_mw, weighted_norm};
use mwcb_core::real::set_default_ext_bits;
use mwcb_core::weight::build_counterexample_weight;
use mwcb_core::{DyadicInterval, Ext, MartingaleWeight, PiecewiseVector, Real, Vec2};

use crate::config::{BackendArg, Command, ExperimentConfig, PhiArg};
use crate::output::{Sink, Table};
use crate::{summary, CliError, Report};

/// Levels built densely (and dumped) by `build`.
pub const BUILD_DENSE: u32 = 16;
/// Levels evaluated exhaustively by `blowup`; beyond them the ledger samples.
pub const BLOWUP_DENSE: [u32; 2] = [20, 12];
pub const CARLESON_MAX: [u32; 2] = [22, 16];
pub const MAXOP_MAX: [u32; 2] = [14, 10];
pub const WNS_MAX: [u32; 2] = [18, 14];

fn cap(table: [u32; 2], backend: BackendArg) -> u32 {
    match backend {
        BackendArg::Double => table[0],
        BackendArg::Extended => table[1],
    }
}

fn check_depth(cfg: &ExperimentConfig, table: [u32; 2]) -> Result<(), CliError> {
    let max = cap(table, cfg.backend);
    if cfg.depth > max {
        return Err(CliError::Resource(format!(
            "{} at depth {} with the {:?} backend exceeds the supported depth {max}",
            cfg.command.name(),
            cfg.depth,
            cfg.backend
        )));
    }
    Ok(())
}

fn f(x: &impl Real) -> Value {
    json!(x.to_f64())
}

pub fn run(cfg: &ExperimentConfig) -> Result<bool, CliError> {
    if cfg.backend == BackendArg::Extended {
        set_default_ext_bits(cfg.bits);
    }
    let mut sink = Sink::new(&cfg.out)?;
    let report = match (cfg.command, cfg.backend) {
        (Command::Accept, _) => accept(cfg, &mut sink)?,
        (_, BackendArg::Double) => dispatch::<f64>(cfg, &mut sink, cfg.epsilon)?,
        (_, BackendArg::Extended) => dispatch::<Ext>(cfg, &mut sink, Ext::with_bits(cfg.epsilon, cfg.bits))?,
    };
    let files = sink.files.clone();
    let doc = summary(cfg, &report, &files);
    sink.json(&format!("{}.summary.json", cfg.command.name()), &doc)?;
    println!("{}", serde_json::to_string_pretty(&doc)?);
    Ok(report.passed)
}

fn dispatch<R: Real>(cfg: &ExperimentConfig, sink: &mut Sink, eps: R) -> Result<Report, CliError> {
    match cfg.command {
        Command::Build => build(cfg, sink, eps),
        Command::Carleson => carleson(cfg, sink, eps),
        Command::Blowup => blowup(cfg, sink, eps),
        Command::Maxop => maxop(cfg, sink, eps),
        Command::Wns => wns(cfg, sink, eps),
        Command::Accept => unreachable!("handled before dispatch"),
    }
}

fn build<R: Real>(cfg: &ExperimentConfig, sink: &mut Sink, eps: R) -> Result<Report, CliError> {
    let depth = cfg.depth;
    let dense = depth.min(BUILD_DENSE);
    let w = MartingaleWeight::build(eps.clone(), depth, dense)?;
    let rows = sink.file("weight.csv", |out| Ok(w.write_csv(dense, out)?))?;
    let inv = w.check_invariants(dense);
    // ancestor chains of spread-out leaves below the dense levels
    let branches = (depth > dense).then(|| {
        let mask = (1u64 << depth) - 1;
        let leaves: Vec<DyadicInterval> = (0..64u64)
            .map(|j| match j {
                0 => 0,
                1 => mask,
                _ => j.wrapping_mul(0x9E37_79B9_7F4A_7C15) & mask,
            })
            .map(|k| DyadicInterval::new(depth, k).expect("index below 2^depth"))
            .collect();
        w.check_branches(&leaves)
    });
    // reload the dump and compare the averages bit for bit
    let text = std::fs::read(sink.dir.join("weight.csv"))?;
    let back = MartingaleWeight::read_csv(eps, text.as_slice(), R::parse_sci)?;
    let roundtrip = (0..=dense).all(|n| back.level_matrices(n) == w.level_matrices(n));
    let tol = 1e-12;
    let passed = inv.passes(tol) && branches.as_ref().is_none_or(|b| b.passes(tol)) && roundtrip;
    Ok(Report {
        passed,
        results: json!({
            "rows": rows,
            "dumped_levels": dense,
            "tolerance": tol,
            "invariants": inv,
            "branches": branches,
            "roundtrip_exact": roundtrip,
        }),
    })
}

fn policy<R: Real>(phi: PhiArg) -> PhiPolicy<R> {
    match phi {
        PhiArg::Ones => PhiPolicy::Ones,
        PhiArg::Left => PhiPolicy::Left,
        PhiArg::LeftPlus => PhiPolicy::LeftPlus,
    }
}

fn carleson<R: Real>(cfg: &ExperimentConfig, sink: &mut Sink, eps: R) -> Result<Report, CliError> {
    check_depth(cfg, CARLESON_MAX)?;
    let depth = cfg.depth;
    let k_level = depth.min(16);
    let w = build_counterexample_weight(eps.clone(), depth)?;
    let a = build_a(&w, depth)?;
    let table = testing_constants(&w, &a, depth, k_level)?;
    let inc = testing_increments(&w, &a, &eps, depth, k_level)?;
    let sums = counterexample_embedding_sum(&w, &a, &policy(cfg.phi), depth)?;
    let cap = testing_cap(&eps);
    let bound = sigma1_bound(&eps);

    let mut t = Table::new(&["level", "max_testing_constant", "sigma1_level", "sigma1_cumulative"]);
    let mut plot_c = Vec::new();
    let mut plot_s = Vec::new();
    for n in 0..=depth as usize {
        let c = table.constants.get(n).map(|l| l.iter().fold(0.0f64, |m, x| m.max(x.to_f64())));
        t.push(vec![json!(n), json!(c), f(&sums.per_level[n]), f(&sums.cumulative[n])]);
        if let Some(c) = c {
            plot_c.push((n as f64, c));
        }
        plot_s.push((n as f64, sums.cumulative[n].to_f64()));
    }
    sink.table("carleson", &t, cfg.format)?;
    sink.plot("testing_by_level", "level", "max_testing_constant", &plot_c)?;
    sink.plot("sigma1_cumulative", "level", "cumulative", &plot_s)?;

    let within_cap = table.sup.to_f64() <= cap.to_f64() + 1e-9;
    let total = sums.total();
    Ok(Report {
        passed: within_cap,
        results: json!({
            "testing_constant": f(&table.sup),
            "argmax": table.argmax.to_string(),
            "cap": f(&cap),
            "within_cap": within_cap,
            "k_levels": k_level,
            "max_increment_ratio": f(&inc.max_ratio),
            "min_increment": f(&inc.min_increment),
            "phi": cfg.phi,
            "sigma1_total": f(&total),
            "sigma1_bound": f(&bound),
            "sigma1_within_bound": total <= bound,
        }),
    })
}

fn blowup<R: Real>(cfg: &ExperimentConfig, sink: &mut Sink, eps: R) -> Result<Report, CliError> {
    let depth = cfg.depth;
    let dense = depth.min(cap(BLOWUP_DENSE, cfg.backend));
    let w = MartingaleWeight::build(eps.clone(), depth, dense)?;
    let ledger = blowup_ledger(&w, depth, depth.min(10), 4096)?;
    let mut t = Table::new(&[
        "level",
        "exhaustive",
        "evaluated",
        "sum",
        "closed_form_sum",
        "half_sum",
        "half_closed_form_sum",
        "cumulative",
        "half_cumulative",
        "extremal_rd",
        "extremal_f_over_d",
        "min_rd",
        "max_f_over_d",
    ]);
    for l in &ledger.levels {
        t.push(vec![
            json!(l.level),
            json!(l.exhaustive),
            json!(l.evaluated),
            json!(l.sum),
            json!(l.closed_form_sum),
            json!(l.half_sum),
            json!(l.half_closed_form_sum),
            json!(l.cumulative),
            json!(l.half_cumulative),
            json!(l.extremal_rd),
            json!(l.extremal_f_over_d),
            json!(l.min_rd),
            json!(l.max_f_over_d),
        ]);
    }
    sink.table("blowup", &t, cfg.format)?;
    sink.file("blowup_records.csv", |out| Ok(ledger.write_records_csv(out)?))?;
    let pts = |g: &dyn Fn(&LevelSummary) -> f64| -> Vec<(f64, f64)> {
        ledger.levels.iter().map(|l| (l.level as f64, g(l))).collect()
    };
    sink.plot("sigma2_cumulative", "level", "cumulative", &pts(&|l| l.cumulative))?;
    sink.plot("sigma2_half_cumulative", "level", "half_cumulative", &pts(&|l| l.half_cumulative))?;
    sink.plot("sigma2_per_level", "level", "sum", &pts(&|l| l.sum))?;
    let bound = sigma1_bound(&eps).to_f64();
    let estimates = ledger.all_estimates_hold();
    Ok(Report {
        passed: estimates,
        results: json!({
            "slope": ledger.slope,
            "half_slope": ledger.half_slope,
            "min_level_sum": ledger.min_level_sum(),
            "min_half_level_sum": ledger.min_half_level_sum(),
            "total": ledger.total(),
            "sigma1_bound": bound,
            "total_over_sigma1_bound": ledger.total() / bound,
            "exhaustive_levels": dense,
            "estimates_hold": estimates,
        }),
    })
}

fn maxop<R: Real>(cfg: &ExperimentConfig, sink: &mut Sink, eps: R) -> Result<Report, CliError> {
    check_depth(cfg, MAXOP_MAX)?;
    let n = cfg.depth;
    let w = build_counterexample_weight(eps.clone(), n)?.truncate(n)?;
    let fv = PiecewiseVector::constant(n, Vec2::new(R::one(), R::zero()));
    let fnorm = weighted_norm(&fv, &w)?;
    let fields = [eval_mw(&w, &fv, n)?, eval_mcw(&w, &fv, n)?, eval_cg(&w, &fv, n)?];
    let mut t = Table::new(&["operator", "l2_norm", "norm_ratio"]);
    for field in &fields {
        let name = field.operator.to_string();
        sink.file(&format!("maxop_{name}.tsv"), |out| Ok(field.write_tsv(out)?))?;
        sink.json(&format!("maxop_{name}.json"), &field.sidecar(Some(eps.to_f64())))?;
        let norm = field.l2_norm();
        t.push(vec![json!(name), f(&norm), f(&(norm / fnorm.clone()))]);
    }
    sink.table("maxop", &t, cfg.format)?;
    let tol = 1e-12;
    let [mw, mcw, cg] = &fields;
    let ordered = mw.values.iter().zip(&mcw.values).zip(&cg.values).all(|((p, c), g)| {
        let (p, c, g) = (p.to_f64(), c.to_f64(), g.to_f64());
        p <= c * (1.0 + tol) && c <= g * (1.0 + tol) && g <= 2.0 * c * (1.0 + tol)
    });
    Ok(Report {
        passed: ordered,
        results: json!({
            "grid_level": n,
            "f": "1_{I0} e1",
            "f_norm": f(&fnorm),
            "mw_norm": f(&mw.l2_norm()),
            "mcw_norm": f(&mcw.l2_norm()),
            "cg_norm": f(&cg.l2_norm()),
            "ordered": ordered,
        }),
    })
}

fn wns<R: Real>(cfg: &ExperimentConfig, sink: &mut Sink, eps: R) -> Result<Report, CliError> {
    check_depth(cfg, WNS_MAX)?;
    let top = cfg.depth.max(1);
    // the normalizing constant is the measured testing constant
    let c = mwcb_core::acceptance::measured_testing_constant(eps.to_f64())?;
    let w = MartingaleWeight::build(eps.clone(), top + 1, top + 1)?;
    let a = build_a(&w, top + 1)?;
    let tilde = tilde_a(&w, &a, &R::from_f64(c))?;
    let scan = wns_scan(&w, &tilde, 1..=top, &cfg.grid.values())?;
    let mut t = Table::new(&["n", "s", "lhs", "fnorm", "ratio", "fnorm_bound_ok"]);
    for r in &scan.rows {
        t.push(vec![json!(r.n), json!(r.s), json!(r.lhs), json!(r.fnorm), json!(r.ratio), json!(r.fnorm_bound_ok)]);
    }
    sink.table("wns", &t, cfg.format)?;
    let best: Vec<(f64, f64)> = scan.best.iter().map(|r| (r.n as f64, r.ratio)).collect();
    sink.plot("wns_best", "n", "best_ratio", &best)?;
    let bounds_ok = scan.rows.iter().all(|r| r.fnorm_bound_ok);
    Ok(Report {
        passed: bounds_ok,
        results: json!({
            "constant": c,
            "best": scan.best.iter().map(|r| json!({"n": r.n, "s": r.s, "ratio": r.ratio})).collect::<Vec<_>>(),
            "best_decreases_at": scan.best_decreases(),
            "fnorm_bounds_hold": bounds_ok,
            "gluing": gluing_report(&scan),
        }),
    })
}

fn accept(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<Report, CliError> {
    let bits = if cfg.backend == BackendArg::Extended { cfg.bits } else { AcceptanceConfig::default().bits };
    let acfg = AcceptanceConfig { epsilon: cfg.epsilon, seed: cfg.seed, bits };
    let outcomes = run_all(&acfg);
    for o in &outcomes {
        eprintln!("{o}");
    }
    let mut t = Table::new(&["criterion", "title", "passed"]);
    for o in &outcomes {
        t.push(vec![json!(o.id), json!(o.title), json!(o.passed)]);
    }
    sink.table("acceptance", &t, cfg.format)?;
    Ok(Report {
        passed: outcomes.iter().all(|o| o.passed),
        results: json!({ "criteria": outcomes }),
    })
}
