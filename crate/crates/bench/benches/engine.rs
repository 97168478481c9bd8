use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use stiffsim_core::observer::{EmbodiedObserver, PsychometricObserver};
use stiffsim_core::render::{self, ConditionMode, PlantParams, SpringParams, WristState};
use stiffsim_core::session::{plan_session, run_session, ExperimentConfig};
use stiffsim_core::{rng, ObserverModel, StaircaseConfig, StaircaseState};

fn bench_tick(c: &mut Criterion) {
    let plant = PlantParams::default();
    let spring = SpringParams::new(1.25, 1.5).unwrap();
    c.bench_function("tick_c1", |b| {
        b.iter(|| {
            render::tick(
                ConditionMode::C1,
                black_box(spring),
                black_box(WristState::new(12.3, -4.5)),
                &plant,
            )
        })
    });
}

fn bench_staircase(c: &mut Criterion) {
    let cfg = StaircaseConfig::default();
    c.bench_function("staircase_run_to_termination", |b| {
        b.iter(|| {
            let mut s = StaircaseState::init(&cfg).unwrap();
            let mut i = 0u32;
            while !s.is_terminated(&cfg) {
                s.step(black_box(i % 5 != 4), &cfg).unwrap();
                i += 1;
            }
            s
        })
    });
}

fn bench_embodied_estimate(c: &mut Criterion) {
    let plant = PlantParams::default();
    let obs = EmbodiedObserver::default();
    let spring = SpringParams::new(1.2, 1.5).unwrap();
    let mut r = rng::stream(1, 0);
    c.bench_function("embodied_explore_and_estimate", |b| {
        b.iter(|| obs.explore_and_estimate(ConditionMode::C4L, spring, &plant, &mut r))
    });
}

fn bench_session(c: &mut Criterion) {
    let mut group = c.benchmark_group("session");
    group.sample_size(20);
    for (name, observer) in [
        ("psychometric", ObserverModel::Psychometric(PsychometricObserver::default())),
        ("embodied", ObserverModel::Embodied(EmbodiedObserver::default())),
    ] {
        let cfg = ExperimentConfig {
            observer,
            ..Default::default()
        };
        group.bench_function(name, |b| {
            let mut seed = 0;
            b.iter(|| {
                seed += 1;
                run_session(&plan_session(seed, &cfg).unwrap()).unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, bench_tick, bench_staircase, bench_embodied_estimate, bench_session);
criterion_main!(benches);
