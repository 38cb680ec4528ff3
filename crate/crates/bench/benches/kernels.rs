use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use cma_lab::families::DensitySpec;
use cma_lab::lin::{assemble, solve_linear, LinearSolveConfig};
use cma_lab::ma::solve_ma;
use cma_lab::psh::complex_hessian;
use cma_lab::sections::SectionContext;
use cma_lab::{DomainMask, Grid, ScalarField, SolverConfig, StencilMode, Trace};

fn setup(n: usize, res: usize) -> (DomainMask, cma_lab::Solution) {
    let g = Grid::build(n, res, 1.1).unwrap();
    let mask = DomainMask::ball(&g, 0.0, None).unwrap();
    let f = DensitySpec::new("cosine", 0.05).field(&mask).unwrap();
    let phi = solve_ma(&mask, &f, &Trace::zeros(&mask), &SolverConfig::default()).unwrap();
    (mask, phi)
}

fn hessian(c: &mut Criterion) {
    for (n, res) in [(1, 257), (2, 17)] {
        let (mask, phi) = setup(n, res);
        c.bench_function(&format!("complex_hessian n={n} {res}"), |b| {
            b.iter(|| complex_hessian(&mask, &phi.field, &phi.trace))
        });
    }
}

fn linear(c: &mut Criterion) {
    let (mask, phi) = setup(1, 129);
    let zero = ScalarField::constant(mask.grid(), 0.0);
    let bc = Trace::from_fn(&mask, |p| 2.0 + p[0]);
    c.bench_function("assemble+solve n=1 129", |b| {
        b.iter(|| {
            let op = assemble(&phi.hessian, &mask, StencilMode::Central).unwrap();
            solve_linear(&op, &zero, &bc, &LinearSolveConfig::default()).unwrap()
        })
    });
}

fn sections(c: &mut Criterion) {
    let (mask, phi) = setup(1, 257);
    let ctx = SectionContext::new(&mask, &phi.field, &phi.trace);
    let center = mask.grid().nearest(&[0.1, -0.05, 0.0, 0.0]).unwrap().0;
    c.bench_function("build_section n=1 257 t=0.1", |b| {
        b.iter_batched(|| center, |x| ctx.build(x, 0.1).unwrap(), BatchSize::SmallInput)
    });
}

criterion_group! {
    name = kernels;
    config = Criterion::default().sample_size(10);
    targets = hessian, linear, sections
}
criterion_main!(kernels);
