use std::hint::black_box;

use areatol::io::Config;
use areatol::par::Execution;
use areatol::pipeline::analyze_campaign;
use areatol::robust_stats::{JackknifeNull, LillieforsNull, MonteCarlo, ThresholdRule};
use areatol::simulator::{generate_campaign, generate_campaign_with, SimulationPlan};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn monte_carlo_nulls(c: &mut Criterion) {
    let mut g = c.benchmark_group("monte_carlo_null");
    g.sample_size(10);
    for (name, exec) in MODES {
        let mc = MonteCarlo::new(10_000, 1).with_execution(exec);
        g.bench_with_input(BenchmarkId::new("lilliefors_n500", name), &mc, |b, mc| {
            b.iter(|| LillieforsNull::new(500, black_box(mc)).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("jackknife_n15", name), &mc, |b, mc| {
            b.iter(|| JackknifeNull::new(0.05, ThresholdRule::FamilyWise, *black_box(mc)).unwrap().threshold(15))
        });
    }
    g.finish();
}

fn simulation(c: &mut Criterion) {
    let plan = SimulationPlan { seed: 1, ..Default::default() };
    let mut g = c.benchmark_group("generate_campaign_185");
    g.sample_size(20);
    for (name, exec) in MODES {
        g.bench_function(name, |b| b.iter(|| generate_campaign_with(black_box(&plan), exec).unwrap()));
    }
    g.finish();
}

fn analysis(c: &mut Criterion) {
    let campaign = generate_campaign(&SimulationPlan { seed: 2, ..Default::default() }).unwrap().campaign;
    let mut g = c.benchmark_group("analyze_185");
    g.sample_size(10);
    for (name, exec) in MODES {
        let mut cfg = Config::from_toml("[monte_carlo]\nseed = 2\n", std::path::Path::new(".")).unwrap();
        cfg.monte_carlo.execution = exec;
        g.bench_function(name, |b| b.iter(|| analyze_campaign(black_box(&campaign), &cfg, Default::default()).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, monte_carlo_nulls, simulation, analysis);
criterion_main!(benches);
