use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use densecoord::pairing::{build_costs, solve_pairing, PairingProblem};
use densecoord::sim::{run_campaign_with, snapshot_rng, Campaign, RunOptions};
use densecoord::topology::{generate_topology, Scenario, Strategy};
use std::hint::black_box;

fn campaign(k: usize) -> Campaign {
    let mut c = Campaign::new(Scenario::new(k, k));
    c.strategies = vec![Strategy::Local, Strategy::CoordPr, Strategy::LocalPowCoord, Strategy::JPcon];
    c.n_snapshots = 8;
    c
}

fn serial_vs_parallel(c: &mut Criterion) {
    let mut group = c.benchmark_group("campaign");
    group.sample_size(10);
    for k in [8, 16] {
        let camp = campaign(k);
        group.bench_with_input(BenchmarkId::new("serial", k), &camp, |b, camp| {
            b.iter(|| run_campaign_with(black_box(camp), &RunOptions { parallel: false, ..RunOptions::default() }))
        });
        group.bench_with_input(BenchmarkId::new("parallel", k), &camp, |b, camp| {
            b.iter(|| run_campaign_with(black_box(camp), &RunOptions { parallel: true, ..RunOptions::default() }))
        });
    }
    group.finish();
}

fn pairing(c: &mut Criterion) {
    let s = Scenario::new(16, 32);
    let topo = generate_topology(&s, &mut snapshot_rng(1, 0));
    let costs = build_costs(&topo);
    let mut group = c.benchmark_group("pairing_16x32");
    for b_max in [16, 4] {
        let problem = PairingProblem::new(costs.clone(), b_max, 4).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(b_max), &problem, |b, p| {
            b.iter(|| solve_pairing(black_box(p)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, serial_vs_parallel, pairing);
criterion_main!(benches);
