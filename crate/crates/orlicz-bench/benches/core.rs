use std::collections::BTreeMap;

use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use orlicz_core::{
    catalog, luxemburg_norm, make_mesh, model_f, DiscreteFunction, EnergyFunctional, Rhs,
};

fn nfun(name: &str, params: &[(&str, f64)]) -> orlicz_core::NFunction {
    let p: BTreeMap<String, f64> = params
        .iter()
        .map(|(k, v)| (k.to_string(), *v))
        .collect();
    catalog(name, &p).unwrap()
}

fn bench_complementary(c: &mut Criterion) {
    let phi = nfun("powersum", &[("p", 3.0), ("q", 2.0)]);
    c.bench_function("complementary_powersum", |b| {
        b.iter(|| phi.complementary(black_box(7.5)).unwrap())
    });
}

fn bench_luxemburg(c: &mut Criterion) {
    let phi = nfun("power", &[("p", 4.0)]);
    let mesh = make_mesh(1, (0.0, 1.0), 256).unwrap();
    let u = DiscreteFunction::from_fn_zero_trace(mesh, |p| p[0] * (1.0 - p[0]));
    c.bench_function("luxemburg_norm_256", |b| {
        b.iter(|| luxemburg_norm(black_box(&phi), &u, false).unwrap())
    });
}

fn bench_assembly(c: &mut Criterion) {
    let phi = nfun("power", &[("p", 4.0)]);
    let f = model_f("pq", &[("p", 3.0), ("q", 2.0)].into_iter().map(|(k, v)| (k.to_string(), v)).collect()).unwrap();
    let mesh = make_mesh(2, (0.0, 1.0), 32).unwrap();
    let e = EnergyFunctional::new(phi, Rhs::Plain(f), 5.0, mesh.clone()).unwrap();
    let u = DiscreteFunction::from_fn_zero_trace(mesh, |p| {
        p[0] * (1.0 - p[0]) * p[1] * (1.0 - p[1])
    });
    c.bench_function("energy_2d_32", |b| b.iter(|| e.energy(black_box(&u)).unwrap()));
    c.bench_function("residual_2d_32", |b| {
        b.iter(|| e.residual(black_box(&u)).unwrap())
    });
}

criterion_group!(benches, bench_complementary, bench_luxemburg, bench_assembly);
criterion_main!(benches);
