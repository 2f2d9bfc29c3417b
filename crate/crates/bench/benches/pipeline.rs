use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use expecta_bench::{annotations, model};
use expecta_core::annot::Canvas;
use expecta_core::attribution::detector_values;
use expecta_core::{auroc, shapley_exact, ExpectationSpec, MaskingPolicy, Simulator};

fn render(c: &mut Criterion) {
    let mut g = c.benchmark_group("render");
    for side in [64, 128] {
        let sim = Simulator::clean(Canvas::square(side));
        let anns = annotations(side, 64);
        g.bench_with_input(BenchmarkId::new("clean", side), &anns, |b, anns| {
            b.iter(|| {
                for (i, a) in anns.iter().enumerate() {
                    black_box(sim.render(a, i as u64).unwrap());
                }
            })
        });
    }
    g.finish();
}

fn forward(c: &mut Criterion) {
    let mut g = c.benchmark_group("forward");
    g.sample_size(10);
    let sim = Simulator::clean(Canvas::square(64));
    let imgs: Vec<_> = annotations(64, 32).iter().map(|a| sim.render(a, 0).unwrap()).collect();
    let refs: Vec<_> = imgs.iter().collect();
    for preset in ["VGG05", "VGG13"] {
        let m = model(preset, 64);
        g.bench_function(BenchmarkId::new(preset, "64px x32"), |b| b.iter(|| black_box(m.logits(&refs).unwrap())));
    }
    g.finish();
}

fn shapley(c: &mut Criterion) {
    let mut g = c.benchmark_group("shapley");
    g.sample_size(10);
    let side = 32;
    let m = model("VGG05", side);
    let sim = Simulator::clean(Canvas::square(side));
    let policy = MaskingPolicy::new(ExpectationSpec::for_canvas(side));
    let ann = annotations(side, 1)[0];
    g.bench_function("exact VGG05 32px", |b| {
        b.iter(|| black_box(shapley_exact(|xs| detector_values(&m, &sim, xs, 2.0), &ann, &policy, 3).unwrap()))
    });
    g.finish();
}

fn auroc_bench(c: &mut Criterion) {
    let n = 10_000;
    let scores: Vec<f64> = (0..n).map(|i| ((i * 7919) % 1000) as f64 / 1000.0).collect();
    let familiar: Vec<bool> = (0..n).map(|i| i % 3 == 0).collect();
    c.bench_function("auroc 10k", |b| b.iter(|| black_box(auroc(&scores, &familiar).unwrap())));
}

criterion_group!(benches, render, forward, shapley, auroc_bench);
criterion_main!(benches);
