//! Shared fixtures for the criterion benchmarks in `benches/`.

use excitation::harness::{build_topology, Topology};
use excitation::{simulate, DVector, ExcitationPlan, ExperimentConfig, NoiseModel, Trajectory};

/// Stable topology of size `n` with a weight floor loose enough for large `n`.
pub fn topology(n: usize) -> Topology {
    let cfg = ExperimentConfig {
        n,
        edge_probability: (1.0 / n as f64).max(0.05),
        weight_floor: 1e-3,
        ..ExperimentConfig::default()
    };
    build_topology(&cfg).expect("admissible topology")
}

/// Trajectory of `horizon` steps with node 0 excited at `horizon - 1`.
pub fn excited_trajectory(topo: &Topology, horizon: usize) -> Trajectory {
    let n = topo.matrix.n();
    let x0 = DVector::from_fn(n, |i, _| i as f64);
    let plan = ExcitationPlan::single(0, horizon - 1, 10.0).expect("plan");
    let noise = NoiseModel::new(1.0, 1.0).expect("noise");
    simulate(&topo.matrix, &x0, horizon, &noise, Some(&plan), 1).expect("simulate")
}
