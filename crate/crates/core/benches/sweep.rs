use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use shishkin::{
    assemble_step, build_shishkin_mesh, build_time_mesh, builtin_example, run_sweep, Axis,
    Execution, ScaledEpsilons, SweepOptions,
};

fn sweep(c: &mut Criterion) {
    let family = ScaledEpsilons::two_component(builtin_example([1e-4, 2e-4]).unwrap());
    let etas: Vec<f64> = (7..=11).map(|k| 2f64.powi(-k)).collect();
    let mut group = c.benchmark_group("space_sweep");
    group.sample_size(10);
    for execution in [Execution::Sequential, Execution::Parallel] {
        let options = SweepOptions {
            execution,
            ..Default::default()
        };
        group.bench_function(BenchmarkId::from_parameter(format!("{execution:?}")), |b| {
            b.iter(|| run_sweep(&family, &etas, Axis::Space, &[32, 64, 128], 32, &options).unwrap())
        });
    }
    group.finish();
}

fn step_solve(c: &mut Criterion) {
    let spec = builtin_example([2f64.powi(-15), 2f64.powi(-14)]).unwrap();
    let mut group = c.benchmark_group("step_solve");
    for big_n in [64, 256] {
        let space = build_shishkin_mesh(spec.epsilons(), spec.alpha(), big_n).unwrap();
        let time = build_time_mesh(spec.horizon(), 32).unwrap();
        let previous = vec![0.0; 2 * (big_n + 1)];
        let sys = assemble_step(&spec, &space, &time, 1, &previous).unwrap();
        group.bench_with_input(BenchmarkId::new("block_thomas", big_n), &sys, |b, s| {
            b.iter(|| s.solve().unwrap())
        });
        group.bench_with_input(BenchmarkId::new("dense", big_n), &sys, |b, s| {
            b.iter(|| s.solve_dense().unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, sweep, step_solve);
criterion_main!(benches);
