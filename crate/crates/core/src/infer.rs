//! Threshold tests that turn observed deviations into out-neighbor sets.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::dynamics::{deviation_bound, Trajectory};
use crate::error::{invalid, Error, Result};
use crate::topology::StabilityClass;

/// Outcome of the tests run for one excited node.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NeighborDecision {
    pub source: usize,
    /// `h -> N̂_{j,h}`; the sets are pairwise disjoint and never contain the
    /// source.
    pub estimated_per_hop: BTreeMap<usize, BTreeSet<usize>>,
    /// `(i, h) -> ỹ^{i,Δ}_{t,h}` (signed).
    pub raw_deviations: BTreeMap<(usize, usize), f64>,
    pub thresholds: BTreeMap<usize, f64>,
}

/// One exported record per hop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub source: usize,
    pub hop: usize,
    pub members: Vec<usize>,
    pub threshold: f64,
    pub deviations: BTreeMap<usize, f64>,
}

impl NeighborDecision {
    fn new(source: usize) -> Self {
        Self {
            source,
            ..Self::default()
        }
    }

    /// `N̂_{j,h}`, empty when hop `h` was not tested.
    pub fn hop(&self, h: usize) -> BTreeSet<usize> {
        self.estimated_per_hop.get(&h).cloned().unwrap_or_default()
    }

    pub fn one_hop(&self) -> BTreeSet<usize> {
        self.hop(1)
    }

    /// Hop at which `i` was accepted.
    pub fn hop_of(&self, i: usize) -> Option<usize> {
        self.estimated_per_hop
            .iter()
            .find(|(_, set)| set.contains(&i))
            .map(|(&h, _)| h)
    }

    pub fn max_hop(&self) -> usize {
        self.thresholds.keys().next_back().copied().unwrap_or(0)
    }

    pub fn to_records(&self) -> Vec<DecisionRecord> {
        self.thresholds
            .iter()
            .map(|(&hop, &threshold)| DecisionRecord {
                source: self.source,
                hop,
                members: self.hop(hop).into_iter().collect(),
                threshold,
                deviations: self
                    .raw_deviations
                    .iter()
                    .filter(|((_, h), _)| *h == hop)
                    .map(|(&(i, _), &d)| (i, d))
                    .collect(),
            })
            .collect()
    }
}

fn check_excitation(e: f64) -> Result<()> {
    if e == 0.0 || !e.is_finite() {
        return Err(invalid("e", format!("excitation must be finite and nonzero, got {e}")));
    }
    Ok(())
}

fn check_floor(name: &'static str, floor: f64) -> Result<()> {
    if !(floor > 0.0 && floor.is_finite()) {
        return Err(invalid(name, format!("must be positive, got {floor}")));
    }
    Ok(())
}

fn check_source(j: usize, n: usize) -> Result<()> {
    if j >= n {
        return Err(Error::OutOfRange(format!("source {j} of {n}")));
    }
    Ok(())
}

/// Applies `|dev_i| ≥ threshold` to every `i ≠ j` not yet assigned.
fn accept_round(
    decision: &mut NeighborDecision,
    hop: usize,
    deviations: &DVector<f64>,
    threshold: f64,
) {
    let mut accepted = BTreeSet::new();
    for (i, &d) in deviations.iter().enumerate() {
        if i == decision.source {
            continue;
        }
        decision.raw_deviations.insert((i, hop), d);
        if d.abs() >= threshold && decision.hop_of(i).is_none() {
            accepted.insert(i);
        }
    }
    decision.thresholds.insert(hop, threshold);
    decision.estimated_per_hop.insert(hop, accepted);
}

/// Single-excitation test: `i` is an out-neighbor of `j` iff
/// `|y_after^i − y_before^i| ≥ Δy^max(y_before) + w̲|e|/2`.
pub fn infer_one_hop(
    y_before: &DVector<f64>,
    y_after: &DVector<f64>,
    j: usize,
    e: f64,
    weight_floor: f64,
    class: StabilityClass,
) -> Result<NeighborDecision> {
    infer_multi_excitation(&[(y_before.clone(), y_after.clone())], j, e, weight_floor, class)
}

/// `Γ` floors `w̲^h` for `h = 1..=max_hop`.
pub fn default_gamma_floors(weight_floor: f64, max_hop: usize) -> Vec<f64> {
    (1..=max_hop as i32).map(|h| weight_floor.powi(h)).collect()
}

/// Within-`h`-hop tests on one trajectory excited at `time`.
///
/// Round `h` compares `|y_{t+h}^i − y_t^i|` with
/// `Δy^max(y_t) + gamma_floors[h-1]·|e|/2`; a node lands in the first hop
/// whose test accepts. `Δy^max` is taken once at `t` for every round.
pub fn infer_within_h(
    traj: &Trajectory,
    j: usize,
    time: usize,
    e: f64,
    gamma_floors: &[f64],
    class: StabilityClass,
) -> Result<NeighborDecision> {
    check_excitation(e)?;
    let max_hop = gamma_floors.len();
    if max_hop == 0 {
        return Err(invalid("gamma_floors", "need at least one hop"));
    }
    for &g in gamma_floors {
        check_floor("gamma_floors", g)?;
    }
    if time + max_hop > traj.horizon() {
        return Err(Error::OutOfRange(format!(
            "hops up to {max_hop} after t = {time} exceed horizon {}",
            traj.horizon()
        )));
    }
    check_source(j, traj.n())?;
    let y_t = traj.observation(time)?;
    let dy = deviation_bound(y_t, class)?;
    let mut decision = NeighborDecision::new(j);
    for (idx, &floor) in gamma_floors.iter().enumerate() {
        let h = idx + 1;
        let deviations = traj.observation(time + h)? - y_t;
        accept_round(&mut decision, h, &deviations, dy + floor * e.abs() / 2.0);
    }
    Ok(decision)
}

/// Averaged test over `m` independent excitations of the same node with the
/// same magnitude: mean deviation against mean `Δy^max` plus `w̲|e|/2`.
pub fn infer_multi_excitation(
    trials: &[(DVector<f64>, DVector<f64>)],
    j: usize,
    e: f64,
    weight_floor: f64,
    class: StabilityClass,
) -> Result<NeighborDecision> {
    check_excitation(e)?;
    check_floor("weight_floor", weight_floor)?;
    let Some((first, _)) = trials.first() else {
        return Err(invalid("trials", "need at least one excitation"));
    };
    let n = first.len();
    if trials.iter().any(|(b, a)| b.len() != n || a.len() != n) {
        return Err(Error::Dimension("trial observations differ in length".into()));
    }
    check_source(j, n)?;
    let mut sum_dev = DVector::zeros(n);
    let mut sum_dy = 0.0;
    for (before, after) in trials {
        sum_dev += after - before;
        sum_dy += deviation_bound(before, class)?;
    }
    let m = trials.len() as f64;
    let mean_dev = sum_dev / m;
    let threshold = sum_dy / m + weight_floor * e.abs() / 2.0;
    let mut decision = NeighborDecision::new(j);
    accept_round(&mut decision, 1, &mean_dev, threshold);
    Ok(decision)
}
