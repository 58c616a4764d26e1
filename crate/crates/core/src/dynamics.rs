//! Forward simulation of `x_{t+1} = W x_t + θ_t`, `y_t = x_t + υ_t` with an
//! optional additive excitation.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::seed::rng_from_seed;
use crate::topology::{StabilityClass, TopologyMatrix};

/// Standard deviations of the process noise `θ` and measurement noise `υ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub sigma_theta: f64,
    pub sigma_upsilon: f64,
}

impl NoiseModel {
    pub fn new(sigma_theta: f64, sigma_upsilon: f64) -> Result<Self> {
        for (name, v) in [("sigma_theta", sigma_theta), ("sigma_upsilon", sigma_upsilon)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("must be finite and >= 0, got {v}")));
            }
        }
        Ok(Self {
            sigma_theta,
            sigma_upsilon,
        })
    }

    pub fn noiseless() -> Self {
        Self {
            sigma_theta: 0.0,
            sigma_upsilon: 0.0,
        }
    }
}

/// Where, when and how hard to excite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExcitationPlan {
    pub node: usize,
    pub time: usize,
    pub magnitude: f64,
    /// Independent repetitions for the multi-excitation test.
    pub repetitions: usize,
}

impl ExcitationPlan {
    pub fn new(node: usize, time: usize, magnitude: f64, repetitions: usize) -> Result<Self> {
        if repetitions == 0 {
            return Err(invalid("repetitions", "must be at least 1"));
        }
        if !magnitude.is_finite() {
            return Err(invalid("magnitude", format!("must be finite, got {magnitude}")));
        }
        Ok(Self {
            node,
            time,
            magnitude,
            repetitions,
        })
    }

    pub fn single(node: usize, time: usize, magnitude: f64) -> Result<Self> {
        Self::new(node, time, magnitude, 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExcitationEvent {
    pub node: usize,
    pub time: usize,
    pub magnitude: f64,
}

/// States `x_0..x_T`, observations `y_0..y_T` and the injected excitations.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<DVector<f64>>,
    pub observations: Vec<DVector<f64>>,
    pub excitations: Vec<ExcitationEvent>,
}

impl Trajectory {
    pub fn new(
        states: Vec<DVector<f64>>,
        observations: Vec<DVector<f64>>,
        excitations: Vec<ExcitationEvent>,
    ) -> Result<Self> {
        if states.len() != observations.len() {
            return Err(Error::Dimension(format!(
                "{} states but {} observations",
                states.len(),
                observations.len()
            )));
        }
        let n = states.first().map_or(0, |v| v.len());
        if states.iter().chain(&observations).any(|v| v.len() != n) {
            return Err(Error::Dimension("ragged trajectory vectors".into()));
        }
        Ok(Self {
            states,
            observations,
            excitations,
        })
    }

    /// Last time index `T`.
    pub fn horizon(&self) -> usize {
        self.observations.len().saturating_sub(1)
    }

    pub fn n(&self) -> usize {
        self.observations.first().map_or(0, |v| v.len())
    }

    pub fn observation(&self, t: usize) -> Result<&DVector<f64>> {
        self.observations.get(t).ok_or_else(|| {
            Error::OutOfRange(format!("time {t} beyond horizon {}", self.horizon()))
        })
    }

    /// Consecutive observation pairs `(y_{t-1}, y_t)` for `t = 1..=until`.
    pub fn observation_pairs(&self, until: usize) -> Result<Vec<(DVector<f64>, DVector<f64>)>> {
        if until > self.horizon() {
            return Err(Error::OutOfRange(format!(
                "pair index {until} beyond horizon {}",
                self.horizon()
            )));
        }
        Ok((1..=until)
            .map(|t| (self.observations[t - 1].clone(), self.observations[t].clone()))
            .collect())
    }

    pub fn excitation_for(&self, node: usize) -> Option<&ExcitationEvent> {
        self.excitations.iter().find(|e| e.node == node)
    }
}

/// Simulates `horizon` steps from `x0`, seeding a fresh stream from `seed`.
pub fn simulate(
    w: &TopologyMatrix,
    x0: &DVector<f64>,
    horizon: usize,
    noise: &NoiseModel,
    plan: Option<&ExcitationPlan>,
    seed: u64,
) -> Result<Trajectory> {
    simulate_with_rng(w, x0, horizon, noise, plan, &mut rng_from_seed(seed))
}

/// As [`simulate`], drawing from a caller-provided generator.
///
/// Noise is drawn in a fixed order (`υ_0`, then `θ_t, υ_{t+1}` per step)
/// whether or not an excitation is present, so runs that differ only in the
/// plan share their noise realizations.
pub fn simulate_with_rng<R: Rng + ?Sized>(
    w: &TopologyMatrix,
    x0: &DVector<f64>,
    horizon: usize,
    noise: &NoiseModel,
    plan: Option<&ExcitationPlan>,
    rng: &mut R,
) -> Result<Trajectory> {
    let n = w.n();
    if x0.len() != n {
        return Err(Error::Dimension(format!(
            "x0 has length {} but W is {n}x{n}",
            x0.len()
        )));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(invalid("x0", "initial state must be finite"));
    }
    if horizon == 0 {
        return Err(invalid("horizon", "must be at least 1"));
    }
    if let Some(p) = plan {
        if p.time >= horizon {
            return Err(invalid(
                "plan.time",
                format!("excitation at {} is not before horizon {horizon}", p.time),
            ));
        }
        if p.node >= n {
            return Err(Error::OutOfRange(format!("excited node {} of {n}", p.node)));
        }
    }

    let mut draw = |sigma: f64| -> DVector<f64> {
        DVector::from_fn(n, |_, _| sigma * rng.sample::<f64, _>(StandardNormal))
    };

    let mut states = Vec::with_capacity(horizon + 1);
    let mut observations = Vec::with_capacity(horizon + 1);
    let mut x = x0.clone();
    observations.push(&x + draw(noise.sigma_upsilon));
    states.push(x.clone());
    for t in 0..horizon {
        let theta = draw(noise.sigma_theta);
        if let Some(p) = plan.filter(|p| p.time == t) {
            x[p.node] += p.magnitude;
        }
        x = w.weights() * &x + theta;
        let upsilon = draw(noise.sigma_upsilon);
        observations.push(&x + upsilon);
        states.push(x.clone());
    }
    let excitations = plan
        .map(|p| {
            vec![ExcitationEvent {
                node: p.node,
                time: p.time,
                magnitude: p.magnitude,
            }]
        })
        .unwrap_or_default();
    Ok(Trajectory {
        states,
        observations,
        excitations,
    })
}

/// `Δy^max`: the spread of `y` for marginally stable `W`, its largest
/// magnitude for asymptotically stable `W`.
pub fn deviation_bound(y: &DVector<f64>, class: StabilityClass) -> Result<f64> {
    if y.iter().any(|v| !v.is_finite()) {
        return Err(invalid("y", "observation must be finite"));
    }
    match class {
        StabilityClass::MarginallyStable => {
            if y.is_empty() {
                return Ok(0.0);
            }
            Ok(y.max() - y.min())
        }
        StabilityClass::AsymptoticallyStable => Ok(y.amax()),
        StabilityClass::Unstable => Err(Error::Unstable),
    }
}

/// `ỹ_{t+h}^i − y_t^i` read off the trajectory.
pub fn observation_deviation(traj: &Trajectory, i: usize, t: usize, h: usize) -> Result<f64> {
    let later = traj.observation(t + h)?;
    let now = traj.observation(t)?;
    if i >= now.len() {
        return Err(Error::OutOfRange(format!("node {i} of {}", now.len())));
    }
    Ok(later[i] - now[i])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::derive_seed;
    use crate::topology::{generate_random_digraph, weight_laplacian};
    use nalgebra::DMatrix;
    use rand::Rng;

    fn laplacian(n: usize, seed: u64) -> TopologyMatrix {
        weight_laplacian(&generate_random_digraph(n, 0.3, seed).unwrap(), 1.0).unwrap()
    }

    fn random_x0(n: usize, seed: u64) -> DVector<f64> {
        let mut rng = rng_from_seed(seed);
        DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn noiseless_run_is_matrix_power() {
        let w = laplacian(8, 1);
        let x0 = random_x0(8, 2);
        let traj = simulate(&w, &x0, 30, &NoiseModel::noiseless(), None, 3).unwrap();
        let powers = w.powers(30);
        for (t, y) in traj.observations.iter().enumerate() {
            assert!((y - &powers[t] * &x0).amax() < 1e-12, "t = {t}");
        }
    }

    #[test]
    fn noiseless_excitation_adds_column() {
        let w = laplacian(6, 4);
        let x0 = random_x0(6, 5);
        let (j, t, e) = (2, 3, 1.7);
        let plan = ExcitationPlan::single(j, t, e).unwrap();
        let traj = simulate(&w, &x0, 6, &NoiseModel::noiseless(), Some(&plan), 0).unwrap();
        let baseline = &w.powers(t + 1)[t + 1] * &x0;
        let shift = &traj.observations[t + 1] - baseline;
        let column = w.weights().column(j) * e;
        assert!((shift - column).amax() < 1e-12);
        // Observation at the injection time is taken before injection.
        assert!((&traj.observations[t] - &w.powers(t)[t] * &x0).amax() < 1e-12);
    }

    #[test]
    fn superposition_with_common_noise() {
        let w = laplacian(10, 6);
        let x0 = random_x0(10, 7);
        let noise = NoiseModel::new(1.0, 1.0).unwrap();
        let (j, t, e) = (4, 5, -3.0);
        let plan = ExcitationPlan::single(j, t, e).unwrap();
        let with = simulate(&w, &x0, 20, &noise, Some(&plan), 11).unwrap();
        let without = simulate(&w, &x0, 20, &noise, None, 11).unwrap();
        let powers = w.powers(20);
        for s in 0..=20 {
            let diff = &with.observations[s] - &without.observations[s];
            if s <= t {
                assert_eq!(diff.amax(), 0.0);
            } else {
                let expect = powers[s - t].column(j) * e;
                assert!((diff - expect).amax() < 1e-9, "s = {s}");
            }
        }
    }

    #[test]
    fn seeded_runs_are_bit_identical() {
        let w = laplacian(10, 8);
        let x0 = random_x0(10, 9);
        let noise = NoiseModel::new(0.5, 2.0).unwrap();
        let a = simulate(&w, &x0, 15, &noise, None, 77).unwrap();
        let b = simulate(&w, &x0, 15, &noise, None, 77).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bounded_by_initial_range_without_noise() {
        let w = laplacian(12, 10);
        let x0 = random_x0(12, 11);
        let bound = x0.amax();
        let traj = simulate(&w, &x0, 100, &NoiseModel::noiseless(), None, 0).unwrap();
        assert!(traj.states.iter().all(|x| x.amax() <= bound + 1e-12));
    }

    #[test]
    fn rejects_bad_plans() {
        let w = laplacian(4, 1);
        let x0 = DVector::zeros(4);
        let late = ExcitationPlan::single(0, 5, 1.0).unwrap();
        assert!(simulate(&w, &x0, 5, &NoiseModel::noiseless(), Some(&late), 0).is_err());
        let far = ExcitationPlan::single(9, 0, 1.0).unwrap();
        assert!(simulate(&w, &x0, 5, &NoiseModel::noiseless(), Some(&far), 0).is_err());
        assert!(simulate(&w, &x0, 0, &NoiseModel::noiseless(), None, 0).is_err());
        assert!(ExcitationPlan::new(0, 0, 1.0, 0).is_err());
        assert!(NoiseModel::new(-1.0, 0.0).is_err());
    }

    #[test]
    fn deviation_bound_examples() {
        let y = DVector::from_vec(vec![3.0, 1.0, 2.0]);
        assert_eq!(deviation_bound(&y, StabilityClass::MarginallyStable).unwrap(), 2.0);
        assert_eq!(deviation_bound(&y, StabilityClass::AsymptoticallyStable).unwrap(), 3.0);
        let c = DVector::from_element(5, 4.2);
        assert_eq!(deviation_bound(&c, StabilityClass::MarginallyStable).unwrap(), 0.0);
        assert!(deviation_bound(&y, StabilityClass::Unstable).is_err());
    }

    #[test]
    fn observation_deviation_noiseless() {
        let w = laplacian(6, 12);
        let x0 = random_x0(6, 13);
        let traj = simulate(&w, &x0, 4, &NoiseModel::noiseless(), None, 0).unwrap();
        let y2 = &traj.observations[2];
        let wy = w.weights() * y2;
        for i in 0..6 {
            let d = observation_deviation(&traj, i, 2, 1).unwrap();
            assert!((d - (wy[i] - y2[i])).abs() < 1e-12);
        }
        assert!(observation_deviation(&traj, 0, 4, 1).is_err());
        assert!(observation_deviation(&traj, 6, 0, 1).is_err());
    }

    #[test]
    fn observation_deviation_at_consensus_is_edge_weight() {
        let w = laplacian(6, 14);
        let x0 = DVector::from_element(6, 3.0);
        let (j, e) = (1, 2.5);
        let plan = ExcitationPlan::single(j, 2, e).unwrap();
        let traj = simulate(&w, &x0, 3, &NoiseModel::noiseless(), Some(&plan), 0).unwrap();
        for i in 0..6 {
            let d = observation_deviation(&traj, i, 2, 1).unwrap();
            assert!((d - w.weights()[(i, j)] * e).abs() < 1e-12);
        }
    }

    /// Sample variance of the one-step residual `y_{t+1} - W y_t` against
    /// the diagonal of `σ_υ² W Wᵀ + (σ_υ² + σ_θ²) I`.
    #[test]
    fn one_step_residual_variance_matches_covariance() {
        let n = 6;
        let w = laplacian(n, 15);
        let noise = NoiseModel::new(1.0, 1.0).unwrap();
        let x0 = random_x0(n, 16);
        let trials = 10_000;
        let mut sum = DVector::<f64>::zeros(n);
        let mut sum_sq = DVector::<f64>::zeros(n);
        for k in 0..trials {
            let traj = simulate(&w, &x0, 4, &noise, None, derive_seed(99, k)).unwrap();
            let r = &traj.observations[4] - w.weights() * &traj.observations[3];
            sum += &r;
            sum_sq += r.component_mul(&r);
        }
        let wwt: DMatrix<f64> = w.weights() * w.weights().transpose();
        for i in 0..n {
            let mean = sum[i] / trials as f64;
            let var = sum_sq[i] / trials as f64 - mean * mean;
            let expect = wwt[(i, i)] + 2.0;
            assert!(((var - expect) / expect).abs() < 0.05, "node {i}: {var} vs {expect}");
        }
    }
}
