use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use sandwich_core::coupling::SandwichCoupler;
use sandwich_core::oracle::{enumerate_spec, OracleCaps};
use sandwich_core::sampler::{BudgetDp, ProfileSampler, SamplerOptions, Strategy};
use sandwich_core::{maximize_entropy, ConstraintSpec, EdgePartition, RandomStream, SolverOptions};

fn budget(costs: &[f64], budget: f64) -> ConstraintSpec {
    ConstraintSpec::Budget {
        costs: costs.to_vec(),
        budget,
    }
}

fn solver(c: &mut Criterion) {
    let part = EdgePartition::balanced(200, 3).unwrap();
    let spec = budget(&[1.0, 2.0, 3.0], 17_600.0);
    c.bench_function("maxent_budget_k3", |b| {
        b.iter(|| maximize_entropy(black_box(&part), black_box(&spec), &SolverOptions::default()))
    });

    let part = EdgePartition::balanced(40, 8).unwrap();
    let spec = ConstraintSpec::LinearSystem {
        a: vec![
            (0..8).map(|i| 1.0 + i as f64).collect(),
            (0..8).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect(),
        ],
        b: vec![1500.0, 20.0],
    };
    c.bench_function("maxent_linear_k8", |b| {
        b.iter(|| maximize_entropy(black_box(&part), black_box(&spec), &SolverOptions::default()))
    });
}

fn samplers(c: &mut Criterion) {
    let part = EdgePartition::balanced(60, 3).unwrap();
    let spec = budget(&[1.0, 2.0, 3.0], 1500.0);
    c.bench_function("budget_dp_table", |b| b.iter(|| BudgetDp::new(black_box(&part), &spec, 1e10)));

    let mut sampler = ProfileSampler::new(&part, &spec, Strategy::BudgetDp, &SamplerOptions::default()).unwrap();
    let mut rng = RandomStream::new(1);
    c.bench_function("two_stage_graph_n60", |b| b.iter(|| sampler.sample_graph(&part, &mut rng)));

    let small = EdgePartition::balanced(12, 2).unwrap();
    let spec = budget(&[1.0, 2.0], 60.0);
    let mut sampler = ProfileSampler::new(&small, &spec, Strategy::Enumeration, &SamplerOptions::default()).unwrap();
    c.bench_function("enumeration_profile_draw", |b| b.iter(|| sampler.sample(&mut rng)));
}

fn coupling(c: &mut Criterion) {
    let part = EdgePartition::trivial(50).unwrap();
    let spec = ConstraintSpec::exact_edges(200);
    let mut coupler =
        SandwichCoupler::new(&part, &spec, 0.5, Strategy::Enumeration, &SamplerOptions::default()).unwrap();
    let mut rng = RandomStream::new(2);
    c.bench_function("sandwich_trial_gnm", |b| b.iter(|| coupler.sample(&mut rng)));
}

fn oracle(c: &mut Criterion) {
    let part = EdgePartition::balanced(6, 3).unwrap();
    let spec = budget(&[1.0, 0.5, 2.0], 8.0);
    let mut group = c.benchmark_group("oracle");
    group.sample_size(10);
    group.bench_function("enumerate_n6", |b| {
        b.iter(|| enumerate_spec(black_box(&part), &spec, &OracleCaps::default()))
    });
    group.finish();
}

criterion_group!(benches, solver, samplers, coupling, oracle);
criterion_main!(benches);
