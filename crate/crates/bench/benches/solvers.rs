use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use gdmgame_core::env::{sample_scenario, ScenarioRanges};
use gdmgame_core::game::{best_response, stackelberg_oracle};
use gdmgame_core::gdm::{DiffusionPolicy, DiffusionSchedule, ReverseVariance};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn game(c: &mut Criterion) {
    let s = sample_scenario(&ScenarioRanges::default(), 0).unwrap();
    let m = &s.market;
    let price = m.clamp_price(0.33);
    c.bench_function("best_response", |b| {
        b.iter(|| best_response(black_box(&s.devices[0]), black_box(price), m))
    });
    c.bench_function("respond_10_devices", |b| {
        b.iter(|| s.respond(black_box(price)))
    });
    c.bench_function("stackelberg_oracle_10_devices", |b| {
        b.iter(|| stackelberg_oracle(black_box(&s.devices), m, 1e-6).unwrap())
    });
}

fn diffusion(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let schedule = DiffusionSchedule::linear(5, 1e-4, 0.2).unwrap();
    let policy = DiffusionPolicy::new(
        11,
        &[32, 32],
        schedule,
        ReverseVariance::Posterior,
        &mut rng,
    )
    .unwrap();
    let state = vec![0.1; 11];
    c.bench_function("reverse_chain_sample", |b| {
        b.iter(|| policy.sample_unit(black_box(&state), &mut rng).unwrap())
    });
}

criterion_group!(benches, game, diffusion);
criterion_main!(benches);
