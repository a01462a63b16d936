use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use qcyield_core::{
    apply_diffusion, generate, principal_eigenpair, solve_shifted, to_growth_field, Boundary,
    DomainSpec, GridField, ModelParams, SpectralSolver,
};

fn wavy(domain: DomainSpec) -> GridField {
    GridField::from_fn(domain, |x| 1.0 + (6.0 * x[0]).sin() * (4.0 * x[1]).cos()).unwrap()
}

fn diffusion(c: &mut Criterion) {
    let mut g = c.benchmark_group("apply_diffusion");
    for bc in [Boundary::Periodic, Boundary::Neumann, Boundary::Dirichlet] {
        let f = wavy(DomainSpec::new(bc, &[1.0, 1.0], &[128, 128]).unwrap());
        g.bench_function(BenchmarkId::from_parameter(format!("{bc:?}")), |b| {
            b.iter(|| apply_diffusion(black_box(&f), 1.0))
        });
    }
    g.finish();
}

fn shifted_solves(c: &mut Criterion) {
    let mut g = c.benchmark_group("shifted_solve");
    for m in [64, 128] {
        let domain = DomainSpec::new(Boundary::Neumann, &[1.0, 1.0], &[m, m]).unwrap();
        let rhs = wavy(domain);
        let spectral = SpectralSolver::new(&domain);
        let mut out = vec![0.0; domain.len()];
        g.bench_with_input(BenchmarkId::new("spectral", m), &rhs, |b, rhs| {
            b.iter(|| spectral.solve_into(3.0, 1.0, black_box(rhs.values()), &mut out))
        });
        let potential = rhs.map(|v| v * v);
        g.bench_with_input(BenchmarkId::new("pcg", m), &rhs, |b, rhs| {
            b.iter(|| solve_shifted(black_box(rhs), 1.0, 3.0, &potential).unwrap())
        });
    }
    g.finish();
}

fn eigenpair(c: &mut Criterion) {
    let mut g = c.benchmark_group("principal_eigenpair");
    g.sample_size(10);
    let land = generate(50, 0.2, 4000, 3, 200).unwrap();
    for m in [50, 100] {
        let domain = DomainSpec::periodic_2d(1.0, 1.0, m, m).unwrap();
        let mu = to_growth_field(&land, 10.0, 0.0, &domain).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(m), &mu, |b, mu| {
            b.iter(|| principal_eigenpair(black_box(mu), 1.0).unwrap())
        });
    }
    g.finish();
}

fn logistic_profile(c: &mut Criterion) {
    let mut g = c.benchmark_group("logistic_profile");
    g.sample_size(10);
    let domain = DomainSpec::new(Boundary::Neumann, &[1.0, 1.0], &[64, 64]).unwrap();
    let mu = wavy(domain);
    let one = GridField::constant(domain, 1.0);
    g.bench_function("neumann_64", |b| {
        b.iter(|| {
            let p = ModelParams::new(1.0, mu.clone(), one.clone(), one.clone(), 0.0, None).unwrap();
            p.logistic_profile().unwrap().max()
        })
    });
    g.finish();
}

fn landscapes(c: &mut Criterion) {
    let mut g = c.benchmark_group("generate");
    g.sample_size(10);
    for target in [3400u64, 4900] {
        g.bench_with_input(BenchmarkId::from_parameter(target), &target, |b, &t| {
            b.iter(|| generate(50, 0.2, t, 1, 500).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, diffusion, shifted_solves, eigenpair, logistic_profile, landscapes);
criterion_main!(benches);
