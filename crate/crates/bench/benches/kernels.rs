use std::hint::black_box;

use alsieve::bilinear::s_full;
use alsieve::sieve_checks::{mellin_l1_estimate, random_vector, PrimitiveFamily};
use alsieve::{CharacterGroup, DeltaEngine, DeltaParams, ExperimentTemplate, VectorSource};
use criterion::{criterion_group, criterion_main, Criterion};

fn kernel(c: &mut Criterion) {
    let group = CharacterGroup::new(720).unwrap();
    c.bench_function("primitive_kernel q=720", |b| {
        b.iter(|| (1..=60u64).map(|m| group.primitive_kernel(black_box(m), 7)).sum::<i64>())
    });
}

fn delta(c: &mut Criterion) {
    let engine = DeltaEngine::new(DeltaParams::standard(200.0, 200f64.powf(0.25)).unwrap());
    c.bench_function("delta_direct Q=200", |b| b.iter(|| engine.delta_direct(black_box(12), black_box(17))));
}

fn bilinear(c: &mut Criterion) {
    let cfg = ExperimentTemplate::default().config_for(100.0).unwrap();
    c.bench_function("s_full Q=100", |b| b.iter(|| s_full(black_box(&cfg))));
    c.bench_function("mellin_l1_estimate Q=100", |b| b.iter(|| mellin_l1_estimate(cfg.f.as_ref(), 20.0)));
}

fn sieve(c: &mut Criterion) {
    let family = PrimitiveFamily::new(60, 0, 60).unwrap();
    let a = random_vector(VectorSource::Gaussian, 60, 0, 60, 1);
    c.bench_function("lsi_multiplicative N=Q=60", |b| b.iter(|| family.multiplicative(black_box(&a))));
}

criterion_group!(benches, kernel, delta, bilinear, sieve);
criterion_main!(benches);
