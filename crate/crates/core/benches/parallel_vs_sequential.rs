use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use synccert::certificate::{gain_bound, sector_box_samples};
use synccert::goodwin::{linspace, search_params, DeltaRule};
use synccert::sim::{run_sweep, Network, SimOptions};
use synccert::{
    certify_network, CertParams, CouplingSpec, DisturbanceKind, DisturbanceSpec, Execution, GoodwinParams, Graph,
    NuMode, SectorBound,
};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn agents(n: usize) -> Vec<GoodwinParams> {
    (0..n)
        .map(|i| GoodwinParams {
            a1: 0.5,
            a2: 1.0,
            a3: 1.0,
            b2: 1.5,
            b3: 1.5,
            input_gain: 0.8 + 0.4 * i as f64 / (n.max(2) - 1) as f64,
            hill: 14,
        })
        .collect()
}

fn x0(n: usize) -> Vec<[f64; 3]> {
    (0..n).map(|i| [0.2 + 0.1 * i as f64, 0.0, 0.0]).collect()
}

fn bench_gain_bound(c: &mut Criterion) {
    let mut group = c.benchmark_group("gain_bound_vertices");
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let g = Graph::random_connected(7, 0.45, &mut rng).unwrap();
    let p = g.edge_count().min(12);
    let g = Graph::new(7, &g.edges()[..p].iter().map(|&(i, j)| (i + 1, j + 1)).collect::<Vec<_>>()).unwrap();
    let sectors = vec![SectorBound::new(4.0, 6.0).unwrap(); g.edge_count()];
    let cert = certify_network(&agents(7), &g, &CertParams::new(2.0, 1.5), NuMode::PerEdge, &x0(7), &sectors).unwrap();
    let samples = sector_box_samples(&sectors, 0, 0);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::new(name, samples.len()), &samples, |b, s| {
            b.iter(|| black_box(gain_bound(&g, &cert, s, exec).unwrap().mu_lo))
        });
    }
    group.finish();
}

fn bench_search(c: &mut Criterion) {
    let mut group = c.benchmark_group("search_grid");
    let g = Graph::complete(5).unwrap();
    let sectors = vec![SectorBound::point(5.0).unwrap(); 10];
    let thetas = linspace(0.5, 4.0, 40);
    let theta3s = linspace(1.2, 1.9, 40);
    for (name, exec) in MODES {
        group.bench_function(name, |b| {
            b.iter(|| {
                let r = search_params(
                    &agents(5),
                    &g,
                    &sectors,
                    NuMode::UniformWorstCase,
                    &x0(5),
                    &thetas,
                    &theta3s,
                    DeltaRule::ClosedForm,
                    exec,
                )
                .unwrap();
                black_box(r.best)
            })
        });
    }
    group.finish();
}

fn bench_seed_sweep(c: &mut Criterion) {
    let mut group = c.benchmark_group("seed_sweep");
    group.sample_size(10);
    let g = Graph::complete(5).unwrap();
    let net = Network::new(g, agents(5), vec![CouplingSpec::linear(5.0).unwrap(); 10]).unwrap();
    let opts = SimOptions { sample_stride: 100, ..SimOptions::new(1e-3, 5.0) };
    let sets: Vec<_> = (0..8).map(|s| DisturbanceSpec::per_edge(DisturbanceKind::Gaussian, 0.3, s, 10)).collect();
    for (name, exec) in MODES {
        group.bench_function(name, |b| b.iter(|| black_box(run_sweep(&net, &x0(5), &sets, &opts, exec).len())));
    }
    group.finish();
}

criterion_group!(benches, bench_gain_bound, bench_search, bench_seed_sweep);
criterion_main!(benches);
