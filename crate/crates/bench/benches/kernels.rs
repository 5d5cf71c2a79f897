use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use mwcb_bench::random_pair;
use mwcb_core::carleson::blowup::blowup_ledger;
use mwcb_core::carleson::{build_a, testing_constants};
use mwcb_core::convexbody::Zonotope;
use mwcb_core::maxop::{eval_cg, eval_mcw, eval_mw};
use mwcb_core::weight::build_counterexample_weight;
use mwcb_core::{Ext, MartingaleWeight, SymMat2, Vec2};

fn weight_build(c: &mut Criterion) {
    let mut g = c.benchmark_group("weight_build");
    for depth in [12u32, 16, 20] {
        g.bench_with_input(BenchmarkId::new("double", depth), &depth, |b, &d| {
            b.iter(|| build_counterexample_weight(black_box(0.25f64), d).unwrap())
        });
    }
    g.bench_function("extended_192_depth_10", |b| {
        b.iter(|| build_counterexample_weight(Ext::with_bits(0.25, 192), 10).unwrap())
    });
    g.finish();
}

fn testing(c: &mut Criterion) {
    let w = build_counterexample_weight(0.25f64, 16).unwrap();
    let a = build_a(&w, 16).unwrap();
    c.bench_function("testing_constants_depth_16", |b| b.iter(|| testing_constants(&w, &a, 16, 12).unwrap().sup));
}

fn ledger(c: &mut Criterion) {
    let w = MartingaleWeight::build(0.25f64, 40, 16).unwrap();
    c.bench_function("blowup_ledger_depth_40", |b| b.iter(|| blowup_ledger(&w, 40, 0, 1024).unwrap().total()));
}

fn zonotope(c: &mut Criterion) {
    let gens: Vec<Vec2<f64>> = (0..256).map(|k| {
        let t = k as f64 * 0.37;
        Vec2::new(t.cos(), (1.3 * t).sin())
    }).collect();
    let z = Zonotope::new(gens);
    let a = SymMat2::from_f64(2.0, 0.3, 0.5);
    c.bench_function("zonotope_norm_256", |b| b.iter(|| z.norm_a(black_box(&a))));
}

fn maximal(c: &mut Criterion) {
    let mut g = c.benchmark_group("maxop");
    for level in [6u32, 8] {
        let (w, f) = random_pair(level);
        g.bench_with_input(BenchmarkId::new("mw", level), &level, |b, &n| b.iter(|| eval_mw(&w, &f, n).unwrap()));
        g.bench_with_input(BenchmarkId::new("mcw", level), &level, |b, &n| b.iter(|| eval_mcw(&w, &f, n).unwrap()));
        g.bench_with_input(BenchmarkId::new("cg", level), &level, |b, &n| b.iter(|| eval_cg(&w, &f, n).unwrap()));
    }
    g.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = weight_build, testing, ledger, zonotope, maximal
}
criterion_main!(benches);
