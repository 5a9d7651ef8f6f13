use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use tcqueue::montecarlo::{simulate_busy_period, simulate_time_changed, SimPlan, TimeChange};
use tcqueue::queue::QueueParams;
use tcqueue::Exec;

fn pstar() -> QueueParams {
    QueueParams::new(vec![0.6, 0.3], 2, 1.2).unwrap()
}

fn states(c: &mut Criterion) {
    let tc = TimeChange::tempered(0.5, 0.7).unwrap();
    let mut g = c.benchmark_group("state_paths");
    g.sample_size(10);
    for exec in [Exec::Sequential, Exec::Parallel] {
        let mut plan = SimPlan::new(pstar(), tc, vec![0.5, 1.0], 4096, 1).unwrap();
        plan.exec = exec;
        g.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &plan, |b, p| {
            b.iter(|| black_box(simulate_time_changed(p, false).unwrap()))
        });
    }
    g.finish();
}

fn busy(c: &mut Criterion) {
    let tc = TimeChange::tempered(0.5, 0.7).unwrap();
    let mut g = c.benchmark_group("busy_paths");
    g.sample_size(10);
    for exec in [Exec::Sequential, Exec::Parallel] {
        g.bench_function(BenchmarkId::from_parameter(format!("{exec:?}")), |b| {
            b.iter(|| black_box(simulate_busy_period(&pstar(), tc, 2, 2.0, 16_384, 3, exec).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, states, busy);
criterion_main!(benches);
