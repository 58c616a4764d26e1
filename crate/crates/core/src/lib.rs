//! Topology inference for noisy linear networked dynamical systems by
//! active excitation.
//!
//! A network evolves as `x_t = W x_{t-1} + θ_{t-1}` and is observed through
//! `y_t = x_t + υ_t`. Injecting a known input `e` into node `j` shifts the
//! next observation of every out-neighbor `i` by `w_ij · e`; a Gaussian
//! threshold test on the observed deviations recovers the out-neighbor sets
//! with a designed misjudgement probability.
//!
//! Module map:
//!
//! * [`topology`]: random digraphs, Laplacian/Metropolis weight rules,
//!   stability classification and the ground-truth hop-set oracle.
//! * [`dynamics`]: seeded simulation with process/measurement noise and
//!   excitation injection.
//! * [`detect`]: `erf`/`erf_inv`, noise-variance bounds, critical
//!   excitations and the misjudgement/lower-bound formulas.
//! * [`infer`]: one-hop, within-h-hop and multi-excitation decision rules.
//! * [`estimate`]: ordinary and excitation-constrained least squares plus
//!   structure/magnitude error metrics.
//! * [`harness`]: experiment configuration and Monte Carlo runners.
//! * [`io`]: the plain-text matrix, constraint and trajectory formats.

pub mod detect;
pub mod dynamics;
mod error;
pub mod estimate;
pub mod harness;
pub mod infer;
pub mod io;
mod nnls;
pub mod seed;
pub mod special;
pub mod topology;

pub use detect::{
    critical_excitation, f0, f1, hhop_critical_excitation, hhop_lower_bound,
    misjudgement_probability, multi_excitation_bound, sigma_omega_bound, sigma_omega_h, HStepNoise,
    TestDesign,
};
pub use dynamics::{
    deviation_bound, observation_deviation, simulate, ExcitationEvent, ExcitationPlan, NoiseModel,
    Trajectory,
};
pub use error::{Error, Result};
pub use estimate::{
    constrained_estimate, error_metrics, ols_estimate, EntryConstraint, ErrorMetrics, LsEstimate,
    LsProblem,
};
pub use harness::{ExperimentConfig, ResultRow, ResultTable, WeightRule};
pub use infer::{infer_multi_excitation, infer_one_hop, infer_within_h, NeighborDecision};
pub use special::{erf, erf_inv, erfc};
pub use topology::{
    classify_stability, generate_random_digraph, scale_to_asymptotic, true_hop_sets,
    weight_laplacian, weight_metropolis, HopSets, StabilityClass, TopologyMatrix, WeightedDigraph,
};

pub use nalgebra::{DMatrix, DVector};
