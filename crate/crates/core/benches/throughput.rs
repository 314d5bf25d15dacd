//! Sequential vs data-parallel throughput for the two batch workloads:
//! dataset sampling and policy evaluation. Without the `parallel` feature
//! both variants run sequentially.

use std::hint::black_box;

use actnav::episode::{generate_dataset_with, ActionKind};
use actnav::fixtures::{fixture, FixtureKind};
use actnav::metrics::{evaluate, EvalItem, EvalOptions};
use actnav::nav::PolicyKind;
use actnav::par::Execution;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn sampling(c: &mut Criterion) {
    let scene = &fixture(FixtureKind::FourRoomRing);
    let mut group = c.benchmark_group("dataset_generate");
    for kind in [ActionKind::GoPast, ActionKind::GoThrough] {
        let n = 2000;
        group.throughput(Throughput::Elements(n as u64));
        for (name, mode) in MODES {
            group.bench_with_input(BenchmarkId::new(name, kind), &kind, |b, &kind| {
                b.iter(|| black_box(generate_dataset_with(scene, kind, n, 7, mode).unwrap()))
            });
        }
    }
    group.finish();
}

fn evaluation(c: &mut Criterion) {
    let scenes = [fixture(FixtureKind::FourRoomRing)];
    let scene = &scenes[0];
    let items: Vec<EvalItem> = generate_dataset_with(scene, ActionKind::GoInto, 400, 7, Execution::Parallel)
        .unwrap()
        .iter()
        .map(EvalItem::from_episode)
        .collect();
    let options = EvalOptions::default();
    let mut group = c.benchmark_group("evaluate");
    group.sample_size(20);
    group.throughput(Throughput::Elements(items.len() as u64));
    for policy in [PolicyKind::Oracle, PolicyKind::GreedyBacktrack] {
        for (name, mode) in MODES {
            group.bench_with_input(BenchmarkId::new(name, policy.name()), &policy, |b, &policy| {
                b.iter(|| black_box(evaluate(&scenes, &items, policy, &options, mode).unwrap()))
            });
        }
    }
    group.finish();
}

criterion_group!(benches, sampling, evaluation);
criterion_main!(benches);
