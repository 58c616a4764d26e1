use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use excitation::estimate::constraints_from_neighbors;
use excitation::{
    constrained_estimate, erf_inv, infer_one_hop, ols_estimate, simulate, DVector, LsProblem, NoiseModel,
};
use excitation_bench::{excited_trajectory, topology};
use std::hint::black_box;

fn special(c: &mut Criterion) {
    c.bench_function("erf_inv", |b| {
        b.iter(|| {
            let mut s = 0.0;
            for k in 1..100 {
                s += erf_inv(black_box(k as f64 / 100.0 - 0.5)).unwrap();
            }
            s
        })
    });
}

fn dynamics(c: &mut Criterion) {
    let mut g = c.benchmark_group("simulate");
    for n in [20, 50, 100] {
        let topo = topology(n);
        let x0 = DVector::from_element(n, 1.0);
        let noise = NoiseModel::new(1.0, 1.0).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| simulate(&topo.matrix, &x0, 200, &noise, None, black_box(3)).unwrap())
        });
    }
    g.finish();
}

fn estimation(c: &mut Criterion) {
    let mut g = c.benchmark_group("estimate");
    for n in [20, 50] {
        let topo = topology(n);
        let traj = excited_trajectory(&topo, 2 * n);
        let problem = LsProblem::from_trajectory(&traj, 2 * n - 1).unwrap();
        let accepted = topo.graph.out_neighbors(0).collect();
        let cons = constraints_from_neighbors(n, 0, &accepted);
        g.bench_with_input(BenchmarkId::new("ols", n), &n, |b, _| b.iter(|| ols_estimate(&problem)));
        g.bench_with_input(BenchmarkId::new("constrained", n), &n, |b, _| {
            b.iter(|| constrained_estimate(&problem, &cons).unwrap())
        });
    }
    g.finish();
}

fn inference(c: &mut Criterion) {
    let topo = topology(100);
    let traj = excited_trajectory(&topo, 40);
    let before = traj.observation(39).unwrap().clone();
    let after = traj.observation(40).unwrap().clone();
    let class = topo.matrix.stability();
    c.bench_function("infer_one_hop/100", |b| {
        b.iter(|| infer_one_hop(&before, &after, 0, 10.0, 0.1, class).unwrap())
    });
}

criterion_group!(benches, special, dynamics, estimation, inference);
criterion_main!(benches);
