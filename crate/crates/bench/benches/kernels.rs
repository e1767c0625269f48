use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use maxsch_bench::{initial_data, packet, transverse};
use maxsch_core::{
    apply_multiplier, kg_evolve, phi_map, project, schrodinger_step, CoulombSpec, Hamiltonian,
    PhysicalParams, PicardConfig, SpectralGrid, StepperConfig, TimeGrid, C64,
};

fn spectral(c: &mut Criterion) {
    let mut group = c.benchmark_group("multiplier");
    for (m, d) in [(32, 3), (8, 6)] {
        let g = SpectralGrid::new(m, 8.0, d).unwrap();
        let psi = packet(&g);
        group.bench_with_input(BenchmarkId::new("bracket", format!("{m}^{d}")), &psi, |b, psi| {
            b.iter(|| apply_multiplier(psi.field(), |k| C64::new((1.0 + k.iter().map(|v| v * v).sum::<f64>()).sqrt(), 0.0)))
        });
    }
    group.finish();

    let g = SpectralGrid::new(32, 8.0, 3).unwrap();
    let v = transverse(&g, 1.0);
    c.bench_function("project 32^3", |b| b.iter(|| project(black_box(&v))));
}

fn hamiltonian(c: &mut Criterion) {
    let mut group = c.benchmark_group("hamiltonian");
    group.sample_size(10);
    for (m, n) in [(16, 1), (8, 2)] {
        let g = SpectralGrid::new(m, 8.0, 3 * n).unwrap();
        let params = PhysicalParams::identical(n, 1.0, 1.0).unwrap();
        let h = Hamiltonian::new(g.clone(), params, CoulombSpec::Spectral).unwrap();
        let psi = packet(&g);
        let a = transverse(&g.with_dimension(3).unwrap(), 0.1);
        let label = format!("N={n} M={m}");
        group.bench_function(BenchmarkId::new("apply", &label), |b| {
            b.iter(|| h.apply(psi.values(), &a))
        });
        group.bench_function(BenchmarkId::new("step", &label), |b| {
            b.iter(|| schrodinger_step(&h, &psi, &a, 0.05, &StepperConfig::default()))
        });
    }
    group.finish();
}

fn klein_gordon(c: &mut Criterion) {
    let g = SpectralGrid::new(32, 8.0, 3).unwrap();
    let a0 = transverse(&g, 0.1);
    let a1 = transverse(&g, 0.0);
    let times = TimeGrid::span(1.0, 16).unwrap();
    let source = vec![a0.clone(); times.len()];
    c.bench_function("kg_evolve 32^3 x16", |b| {
        b.iter(|| kg_evolve(&a0, &a1, Some(&source), &times, 1.0))
    });
}

fn coupler(c: &mut Criterion) {
    let g = SpectralGrid::new(8, 8.0, 3).unwrap();
    let init = initial_data(&g, 0.1);
    let params = PhysicalParams::identical(1, 1.0, 1.0).unwrap();
    let cfg = PicardConfig { horizon: 0.5, intervals: 8, ..Default::default() };
    let traj = init.frozen(cfg.time_grid().unwrap()).unwrap();
    c.bench_function("phi_map N=1 M=8 x8", |b| b.iter(|| phi_map(&traj, &init, &params, &cfg)));
}

criterion_group!(benches, spectral, hamiltonian, klein_gordon, coupler);
criterion_main!(benches);
