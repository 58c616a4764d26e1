//! Closed-form quantities of the Gaussian edge test.
//!
//! Under `H0` (no edge) the observed deviation is `N(0, σ²)`; under `H1` it is
//! `N(w e, σ²)`. With equal priors the likelihood-ratio threshold sits at
//! `w e / 2`, which fixes every formula below.

use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};

use crate::dynamics::NoiseModel;
use crate::error::{invalid, Error, Result};
use crate::special::{erf_inv, erfc};
use crate::topology::TopologyMatrix;

/// Design of a one-shot excitation test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestDesign {
    pub weight_floor: f64,
    pub target_error: f64,
    pub sigma_bound: f64,
    pub critical_excitation: f64,
}

impl TestDesign {
    /// Smallest excitation that discriminates edges of weight at least
    /// `weight_floor` with misjudgement probability at most `target_error`.
    pub fn one_hop(sigma_bound: f64, weight_floor: f64, target_error: f64) -> Result<Self> {
        if !(target_error > 0.0 && target_error < 1.0) {
            return Err(invalid(
                "target_error",
                format!("must lie in (0, 1), got {target_error}"),
            ));
        }
        if !(sigma_bound > 0.0) {
            return Err(invalid("sigma_bound", format!("must be positive, got {sigma_bound}")));
        }
        let critical_excitation = critical_excitation(sigma_bound, weight_floor, target_error)?;
        Ok(Self {
            weight_floor,
            target_error,
            sigma_bound,
            critical_excitation,
        })
    }
}

/// Per-node standard deviation of the `h`-step deviation noise `ω_{t,h}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HStepNoise {
    pub per_node: Vec<f64>,
    pub horizon: usize,
}

impl HStepNoise {
    pub fn new(w: &TopologyMatrix, h: usize, noise: &NoiseModel) -> Result<Self> {
        if h == 0 {
            return Err(invalid("h", "must be at least 1"));
        }
        let powers = w.powers(h);
        let per_node = (0..w.n())
            .map(|i| sigma_from_powers(&powers, i, h, noise))
            .collect();
        Ok(Self { per_node, horizon: h })
    }
}

/// Noise-level bound that needs no knowledge of `W`:
/// `√((1+n)σ_υ² + σ_θ²)`, or `√(2σ_υ² + σ_θ²)` for row-stochastic `W`.
pub fn sigma_omega_bound(n: usize, noise: &NoiseModel, row_stochastic: bool) -> f64 {
    let su2 = noise.sigma_upsilon * noise.sigma_upsilon;
    let st2 = noise.sigma_theta * noise.sigma_theta;
    let factor = if row_stochastic { 2.0 } else { 1.0 + n as f64 };
    (factor * su2 + st2).sqrt()
}

fn sigma_from_powers(
    powers: &[nalgebra::DMatrix<f64>],
    i: usize,
    h: usize,
    noise: &NoiseModel,
) -> f64 {
    let row_sq = |l: usize| powers[l].row(i).norm_squared();
    let measurement = 1.0 + row_sq(h);
    let process: f64 = (1..=h).map(|m| row_sq(m - 1)).sum();
    let var = measurement * noise.sigma_upsilon.powi(2) + process * noise.sigma_theta.powi(2);
    var.sqrt()
}

/// Exact `σ_{ω,h}(i)` from the powers of `W`.
pub fn sigma_omega_h(w: &TopologyMatrix, i: usize, h: usize, noise: &NoiseModel) -> Result<f64> {
    if h == 0 {
        return Err(invalid("h", "must be at least 1"));
    }
    if i >= w.n() {
        return Err(Error::OutOfRange(format!("node {i} of {}", w.n())));
    }
    Ok(sigma_from_powers(&w.powers(h), i, h, noise))
}

/// `2√2 σ erf⁻¹(1 − δ̄) / weight`.
///
/// With `(σ_{ω,h}, Γ_ij(h))` in place of `(σ_ω, w_ij)` this is also the
/// critical excitation for the within-`h`-hop test.
pub fn critical_excitation(sigma: f64, weight: f64, delta_bar: f64) -> Result<f64> {
    if !(weight > 0.0) {
        return Err(invalid("weight", format!("must be positive, got {weight}")));
    }
    if !(delta_bar > 0.0 && delta_bar <= 1.0) {
        return Err(invalid(
            "delta_bar",
            format!("must lie in (0, 1], got {delta_bar}"),
        ));
    }
    if !(sigma >= 0.0) {
        return Err(invalid("sigma", format!("must be >= 0, got {sigma}")));
    }
    Ok(2.0 * SQRT_2 * sigma * erf_inv(1.0 - delta_bar)? / weight)
}

/// `δ_e = 1 − erf(w e / (2√2 σ))`, the false-alarm plus missed-detection
/// probability at the likelihood-ratio threshold.
pub fn misjudgement_probability(sigma: f64, weight: f64, e: f64) -> f64 {
    erfc(weight * e.abs() / (2.0 * SQRT_2 * sigma))
}

/// `∫_{ze/2}^∞ N(r; 0, σ²) dr`, the false-alarm mass.
pub fn f0(z: f64, e: f64, sigma: f64) -> f64 {
    0.5 * erfc(z * e / (2.0 * SQRT_2 * sigma))
}

/// `∫_{ze/2}^∞ N(r; ze, σ²) dr`, the detection mass.
pub fn f1(z: f64, e: f64, sigma: f64) -> f64 {
    0.5 * erfc(-z * e / (2.0 * SQRT_2 * sigma))
}

/// Excitation `2√2 σ erf⁻¹(1 − 2α) / Γ_min` that caps the false-alarm
/// probability of every within-`h`-hop round at `α`.
pub fn hhop_critical_excitation(sigma: f64, gamma_min: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    critical_excitation(sigma, gamma_min, 2.0 * alpha)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(invalid("alpha", format!("must lie in (0, 0.5), got {alpha}")));
    }
    Ok(())
}

/// Lower bound `F₁(Γ_min, e_m)(2 − α − F₁(Γ_max, e_m))` on the probability
/// that an `h`-hop out-neighbor is assigned to hop `h`.
pub fn hhop_lower_bound(
    gamma_min: f64,
    gamma_max: f64,
    e_m: f64,
    alpha: f64,
    sigma: f64,
) -> Result<f64> {
    if !(gamma_min > 0.0) {
        return Err(invalid("gamma_min", format!("must be positive, got {gamma_min}")));
    }
    if gamma_max < gamma_min {
        return Err(invalid(
            "gamma_max",
            format!("{gamma_max} is below gamma_min {gamma_min}"),
        ));
    }
    check_alpha(alpha)?;
    Ok(f1(gamma_min, e_m, sigma) * (2.0 - alpha - f1(gamma_max, e_m, sigma)))
}

/// Misjudgement bound `1 − erf(q₀ e √m / (2√2 σ))` after averaging `m`
/// independent excitations.
pub fn multi_excitation_bound(e: f64, q0: f64, sigma: f64, m: usize) -> Result<f64> {
    if m == 0 {
        return Err(invalid("m", "need at least one excitation"));
    }
    if !(q0 > 0.0) {
        return Err(invalid("q0", format!("must be positive, got {q0}")));
    }
    Ok(erfc(q0 * e.abs() * (m as f64).sqrt() / (2.0 * SQRT_2 * sigma)))
}

/// Smallest and largest positive `Γ_ij(l)` over `l = 1..=h`.
pub fn gamma_extremes(powers: &[nalgebra::DMatrix<f64>], i: usize, j: usize, h: usize) -> Option<(f64, f64)> {
    let positive: Vec<f64> = (1..=h)
        .map(|l| powers[l][(i, j)])
        .filter(|&g| g > 0.0)
        .collect();
    if positive.is_empty() {
        return None;
    }
    let lo = positive.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = positive.iter().copied().fold(0.0, f64::max);
    Some((lo, hi))
}
