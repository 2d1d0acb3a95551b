use std::f64::consts::PI;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ghz_prism::continuous::{solve_densities, solve_densities_with, SolverParams, WindowWidth};
use ghz_prism::discrete::DiscreteModel;
use ghz_prism::simulate::{run_experiment, ErrorModel, Experiment, Schedule, Source};
use ghz_prism::Execution;

fn strategies() -> [(&'static str, Execution); 2] {
    [("sequential", Execution::Sequential), ("parallel", Execution::default())]
}

fn simulation(c: &mut Criterion) {
    let mut group = c.benchmark_group("simulate");
    group.sample_size(10);
    let errors = ErrorModel::new(0.8, 0.01, Some(0.9)).unwrap();
    let discrete = Experiment::new(
        Source::discrete(&DiscreteModel::lambda48()).unwrap(),
        Schedule::cycle8(),
        errors,
        400_000,
        1,
    )
    .unwrap();
    let sol = solve_densities(WindowWidth::new(0.9 * PI / 3.0).unwrap(), 1024, 1e-3, 20_000).unwrap();
    let continuous =
        Experiment::new(Source::continuous(&sol).unwrap(), Schedule::uniform(8).unwrap(), errors, 400_000, 1).unwrap();
    for (name, exec) in strategies() {
        group.bench_with_input(BenchmarkId::new("discrete", name), &exec, |b, exec| {
            b.iter(|| black_box(run_experiment(&discrete, *exec).unwrap()))
        });
        group.bench_with_input(BenchmarkId::new("continuous", name), &exec, |b, exec| {
            b.iter(|| black_box(run_experiment(&continuous, *exec).unwrap()))
        });
    }
    group.finish();
}

fn solver(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve");
    group.sample_size(10);
    let params = SolverParams::new(WindowWidth::new(0.9 * PI / 3.0).unwrap());
    for (name, exec) in strategies() {
        group.bench_with_input(BenchmarkId::new("grid1024", name), &exec, |b, exec| {
            b.iter(|| black_box(solve_densities_with(&params, *exec).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, simulation, solver);
criterion_main!(benches);
