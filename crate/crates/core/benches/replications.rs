use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use paic::experiments::{
    run_logit_experiment, run_normal_bias_experiment, LogitExperimentConfig, NormalExperimentConfig, TauRule,
};
use paic::mcmc::HierLogitSampler;
use paic::Execution;

fn normal_study(c: &mut Criterion) {
    let mut group = c.benchmark_group("normal_study");
    group.sample_size(10);
    for exec in [Execution::Sequential, Execution::Parallel] {
        let cfg = NormalExperimentConfig {
            sigma_a2: vec![1.0, 2.25],
            tau_rules: vec![TauRule::Fixed(1e4)],
            replications: 200,
            execution: exec,
            ..Default::default()
        };
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &cfg, |b, cfg| {
            b.iter(|| run_normal_bias_experiment(cfg).unwrap())
        });
    }
    group.finish();
}

fn logit_study(c: &mut Criterion) {
    let mut group = c.benchmark_group("logit_study");
    group.sample_size(10);
    for exec in [Execution::Sequential, Execution::Parallel] {
        let cfg = LogitExperimentConfig {
            replications: 4,
            groups: 8,
            loo: false,
            sampler: HierLogitSampler { draws_per_chain: 1000, warmup: 500, ..Default::default() },
            max_failure_fraction: 1.0,
            execution: exec,
            ..Default::default()
        };
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &cfg, |b, cfg| {
            b.iter(|| run_logit_experiment(cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, normal_study, logit_study);
criterion_main!(benches);
