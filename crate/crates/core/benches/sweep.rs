use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fmsv_core::model::{benchmark_theta, simulate};
use fmsv_core::samplers::{Chain, SamplerConfig, Scheme};
use fmsv_core::{ModelDims, Parallelism};

fn sweeps(c: &mut Criterion) {
    let theta = benchmark_theta(10, 2).unwrap();
    let (y, _) = simulate(ModelDims::new(10, 2, 300).unwrap(), &theta, 1).unwrap();
    let mut modes = vec![("sequential", Parallelism::Sequential)];
    #[cfg(feature = "parallel")]
    modes.push(("rayon", Parallelism::Rayon));

    let mut group = c.benchmark_group("sweep");
    group.sample_size(10);
    for scheme in [Scheme::Pg, Scheme::Mixed] {
        for &(label, parallelism) in &modes {
            let cfg = SamplerConfig { scheme, particles: 100, iters: 10, burnin: 5, parallelism, ..Default::default() };
            let mut chain = Chain::new(&y, 2, cfg).unwrap();
            group.bench_with_input(BenchmarkId::new(scheme.to_string(), label), &(), |b, _| {
                b.iter(|| chain.sweep().unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, sweeps);
criterion_main!(benches);
