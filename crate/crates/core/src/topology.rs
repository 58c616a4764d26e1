//! Directed interaction graphs, weight matrices and hop-set ground truth.
//!
//! An edge `(i, j)` means node `i` uses information from node `j`, so row `i`
//! of the adjacency matrix lists the in-neighbors of `i` and column `j` lists
//! the out-neighbors of `j`.

use std::collections::{BTreeSet, VecDeque};
use std::os::raw::c_int;
use std::sync::{Mutex, Once};

use nalgebra::DMatrix;
use ndarray_linalg::{EigVals, SVD};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::seed::rng_from_seed;

/// Eigenvalue tolerance used for stability classification.
pub const STABILITY_TOL: f64 = 1e-9;

/// Row sums of rule-built matrices must equal one within this bound.
pub const ROW_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightedDigraph {
    n: usize,
    adjacency: Vec<bool>,
}

impl WeightedDigraph {
    /// Graph with `n` nodes and no edges.
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            adjacency: vec![false; n * n],
        }
    }

    /// Builds a graph from `(i, j)` pairs meaning `a_ij = 1`.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut g = Self::empty(n);
        for &(i, j) in edges {
            g.add_edge(i, j)?;
        }
        Ok(g)
    }

    /// Builds a graph from a 0/1 matrix with zero diagonal.
    pub fn from_adjacency(a: &DMatrix<f64>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::Dimension(format!(
                "adjacency must be square, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        let n = a.nrows();
        let mut g = Self::empty(n);
        for i in 0..n {
            for j in 0..n {
                let v = a[(i, j)];
                if v == 1.0 {
                    g.add_edge(i, j)?;
                } else if v != 0.0 {
                    return Err(invalid(
                        "adjacency",
                        format!("entry ({i},{j}) = {v} is not 0 or 1"),
                    ));
                }
            }
        }
        Ok(g)
    }

    pub fn add_edge(&mut self, i: usize, j: usize) -> Result<()> {
        if i >= self.n || j >= self.n {
            return Err(Error::OutOfRange(format!(
                "edge ({i},{j}) in a graph of {} nodes",
                self.n
            )));
        }
        if i == j {
            return Err(invalid("adjacency", format!("self-loop at node {i}")));
        }
        self.adjacency[i * self.n + j] = true;
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency[i * self.n + j]
    }

    /// `d_i`, the number of nodes `i` listens to.
    pub fn in_degree(&self, i: usize) -> usize {
        (0..self.n).filter(|&j| self.has_edge(i, j)).count()
    }

    pub fn out_degree(&self, j: usize) -> usize {
        (0..self.n).filter(|&i| self.has_edge(i, j)).count()
    }

    pub fn max_in_degree(&self) -> usize {
        (0..self.n).map(|i| self.in_degree(i)).max().unwrap_or(0)
    }

    /// One-hop out-neighbors of `j`: `{ i : a_ij = 1 }`.
    pub fn out_neighbors(&self, j: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&i| self.has_edge(i, j))
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().filter(|&&a| a).count()
    }

    pub fn adjacency_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| {
            if self.has_edge(i, j) {
                1.0
            } else {
                0.0
            }
        })
    }
}

/// Bernoulli(`p`) digraph on `n` nodes. Rows left without in-edges receive
/// one uniformly chosen in-edge so every node listens to someone.
pub fn generate_random_digraph(n: usize, edge_probability: f64, seed: u64) -> Result<WeightedDigraph> {
    if n < 2 {
        return Err(invalid("n", format!("need at least 2 nodes, got {n}")));
    }
    if !(edge_probability > 0.0 && edge_probability <= 1.0) {
        return Err(invalid(
            "edge_probability",
            format!("must lie in (0, 1], got {edge_probability}"),
        ));
    }
    let mut rng = rng_from_seed(seed);
    let mut g = WeightedDigraph::empty(n);
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.random::<f64>() < edge_probability {
                g.adjacency[i * n + j] = true;
            }
        }
    }
    for i in 0..n {
        if g.in_degree(i) == 0 {
            let mut j = rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            g.adjacency[i * n + j] = true;
        }
    }
    Ok(g)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityClass {
    AsymptoticallyStable,
    MarginallyStable,
    Unstable,
}

/// Nonnegative interaction matrix `W` with its spectral classification.
#[derive(Debug, Clone, PartialEq)]
pub struct TopologyMatrix {
    w: DMatrix<f64>,
    stability: StabilityClass,
    weight_floor: f64,
    row_stochastic: bool,
}

impl TopologyMatrix {
    /// Validates nonnegativity and classifies the spectrum of `w`.
    pub fn from_matrix(w: DMatrix<f64>) -> Result<Self> {
        let stability = classify_stability(&w);
        Self::with_class(w, stability)
    }

    fn with_class(w: DMatrix<f64>, stability: StabilityClass) -> Result<Self> {
        if !w.is_square() {
            return Err(Error::Dimension(format!(
                "topology matrix must be square, got {}x{}",
                w.nrows(),
                w.ncols()
            )));
        }
        if let Some(bad) = w.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(invalid(
                "W",
                format!("entries must be finite and nonnegative, found {bad}"),
            ));
        }
        let weight_floor = w
            .iter()
            .copied()
            .filter(|&v| v > 0.0)
            .fold(f64::INFINITY, f64::min);
        if !weight_floor.is_finite() {
            return Err(invalid("W", "matrix has no positive entry"));
        }
        let row_stochastic = w
            .row_iter()
            .all(|row| (row.sum() - 1.0).abs() <= ROW_SUM_TOL);
        Ok(Self {
            w,
            stability,
            weight_floor,
            row_stochastic,
        })
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    pub fn stability(&self) -> StabilityClass {
        self.stability
    }

    /// Smallest positive entry of `W`.
    pub fn weight_floor(&self) -> f64 {
        self.weight_floor
    }

    /// Smallest positive off-diagonal entry, the weakest real edge.
    pub fn edge_weight_floor(&self) -> Option<f64> {
        let n = self.n();
        let mut floor = f64::INFINITY;
        for i in 0..n {
            for j in 0..n {
                let v = self.w[(i, j)];
                if i != j && v > 0.0 {
                    floor = floor.min(v);
                }
            }
        }
        floor.is_finite().then_some(floor)
    }

    pub fn is_row_stochastic(&self) -> bool {
        self.row_stochastic
    }

    /// `[Γ(0), Γ(1), …, Γ(h)]` with `Γ(l) = W^l`.
    pub fn powers(&self, h: usize) -> Vec<DMatrix<f64>> {
        let n = self.n();
        let mut out = Vec::with_capacity(h + 1);
        out.push(DMatrix::identity(n, n));
        for l in 1..=h {
            let next = &self.w * &out[l - 1];
            out.push(next);
        }
        out
    }

    pub fn spectral_radius(&self) -> f64 {
        spectral_radius(&self.w)
    }
}

/// `w_ij = γ a_ij / max_k d_k`, diagonal closing each row to one.
pub fn weight_laplacian(g: &WeightedDigraph, gamma: f64) -> Result<TopologyMatrix> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(invalid("gamma", format!("must lie in (0, 1], got {gamma}")));
    }
    let d_max = g.max_in_degree();
    if d_max == 0 {
        return Err(invalid("graph", "Laplacian rule needs at least one edge"));
    }
    let scale = gamma / d_max as f64;
    build_row_stochastic(g, |_, _| scale)
}

/// `w_ij = a_ij / max(d_i, d_j)`, diagonal closing each row to one.
pub fn weight_metropolis(g: &WeightedDigraph) -> Result<TopologyMatrix> {
    if g.max_in_degree() == 0 {
        return Err(invalid("graph", "Metropolis rule needs at least one edge"));
    }
    let degrees: Vec<usize> = (0..g.n()).map(|i| g.in_degree(i)).collect();
    build_row_stochastic(g, |i, j| 1.0 / degrees[i].max(degrees[j]) as f64)
}

fn build_row_stochastic(
    g: &WeightedDigraph,
    edge_weight: impl Fn(usize, usize) -> f64,
) -> Result<TopologyMatrix> {
    let n = g.n();
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut off = 0.0;
        for j in 0..n {
            if g.has_edge(i, j) {
                let v = edge_weight(i, j);
                w[(i, j)] = v;
                off += v;
            }
        }
        let diag = 1.0 - off;
        // Both rules keep the off-diagonal row mass at most one.
        if diag < -ROW_SUM_TOL {
            return Err(invalid(
                "W",
                format!("row {i} would need negative self-weight {diag}"),
            ));
        }
        w[(i, i)] = diag.max(0.0);
    }
    TopologyMatrix::from_matrix(w)
}

/// `α·W` for a marginally stable `W`, giving spectral radius `α`.
pub fn scale_to_asymptotic(w: &TopologyMatrix, alpha: f64) -> Result<TopologyMatrix> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid("alpha", format!("must lie in (0, 1), got {alpha}")));
    }
    if w.stability() != StabilityClass::MarginallyStable {
        return Err(invalid(
            "W",
            format!("scaling expects a marginally stable matrix, got {:?}", w.stability()),
        ));
    }
    TopologyMatrix::with_class(w.weights() * alpha, StabilityClass::AsymptoticallyStable)
}

extern "C" {
    fn openblas_set_num_threads(n: c_int);
}

static LAPACK_LOCK: Mutex<()> = Mutex::new(());

/// Runs `f` with exclusive, single-threaded access to OpenBLAS.
fn with_lapack<T>(f: impl FnOnce() -> T) -> T {
    static INIT: Once = Once::new();
    // SAFETY: plain setter exported by the linked OpenBLAS.
    INIT.call_once(|| unsafe { openblas_set_num_threads(1) });
    let _guard = LAPACK_LOCK.lock().unwrap_or_else(|e| e.into_inner());
    f()
}

/// Largest eigenvalue magnitude, via LAPACK `geev`.
///
/// Returns NaN if the eigenvalue iteration fails to converge.
pub fn spectral_radius(w: &DMatrix<f64>) -> f64 {
    if w.is_empty() {
        return 0.0;
    }
    let a = ndarray::Array2::from_shape_fn((w.nrows(), w.ncols()), |(i, j)| w[(i, j)]);
    match with_lapack(|| a.eigvals()) {
        Ok(ev) => ev.iter().map(|z| z.norm()).fold(0.0, f64::max),
        Err(_) => f64::NAN,
    }
}

/// Dimension of the eigenspace of eigenvalue one, `n - rank(W - I)`.
pub fn unit_eigenvalue_multiplicity(w: &DMatrix<f64>) -> usize {
    let n = w.nrows();
    let shifted = ndarray::Array2::from_shape_fn((n, n), |(i, j)| {
        w[(i, j)] - if i == j { 1.0 } else { 0.0 }
    });
    let Ok((_, sv, _)) = with_lapack(|| shifted.svd(false, false)) else {
        return n;
    };
    let s_max = sv.iter().copied().fold(0.0, f64::max);
    let tol = STABILITY_TOL * s_max.max(1.0);
    let rank = sv.iter().filter(|&&s| s > tol).count();
    n - rank
}

pub fn classify_stability(w: &DMatrix<f64>) -> StabilityClass {
    if !w.is_square() || w.iter().any(|v| !v.is_finite()) {
        return StabilityClass::Unstable;
    }
    let rho = spectral_radius(w);
    if rho < 1.0 - STABILITY_TOL {
        StabilityClass::AsymptoticallyStable
    } else if (rho - 1.0).abs() <= STABILITY_TOL && unit_eigenvalue_multiplicity(w) == 1 {
        StabilityClass::MarginallyStable
    } else {
        StabilityClass::Unstable
    }
}

/// Exact-hop out-neighbor sets of a source node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HopSets {
    pub source: usize,
    /// `per_hop[h-1]` holds the nodes whose shortest path from the source has
    /// exactly `h` edges.
    pub per_hop: Vec<BTreeSet<usize>>,
    /// `reachable[h-1]` holds every node reachable within `h` edges.
    pub reachable: Vec<BTreeSet<usize>>,
}

impl HopSets {
    pub fn max_hop(&self) -> usize {
        self.per_hop.len()
    }

    /// Nodes at exactly `h` hops, `h >= 1`.
    pub fn hop(&self, h: usize) -> &BTreeSet<usize> {
        &self.per_hop[h - 1]
    }

    /// Hop distance of `i`, if within range.
    pub fn hop_of(&self, i: usize) -> Option<usize> {
        self.per_hop
            .iter()
            .position(|set| set.contains(&i))
            .map(|p| p + 1)
    }
}

/// Breadth-first search along information flow (`j -> i` whenever `a_ij = 1`).
pub fn true_hop_sets(g: &WeightedDigraph, source: usize, max_hop: usize) -> Result<HopSets> {
    let n = g.n();
    if source >= n {
        return Err(Error::OutOfRange(format!(
            "source {source} in a graph of {n} nodes"
        )));
    }
    let mut dist = vec![usize::MAX; n];
    dist[source] = 0;
    let mut queue = VecDeque::from([source]);
    while let Some(k) = queue.pop_front() {
        if dist[k] >= max_hop {
            continue;
        }
        for i in g.out_neighbors(k) {
            if dist[i] == usize::MAX {
                dist[i] = dist[k] + 1;
                queue.push_back(i);
            }
        }
    }
    let mut per_hop = vec![BTreeSet::new(); max_hop];
    for (i, &d) in dist.iter().enumerate() {
        if i != source && d >= 1 && d <= max_hop {
            per_hop[d - 1].insert(i);
        }
    }
    let mut reachable = Vec::with_capacity(max_hop);
    let mut acc = BTreeSet::new();
    for set in &per_hop {
        acc.extend(set.iter().copied());
        reachable.push(acc.clone());
    }
    Ok(HopSets {
        source,
        per_hop,
        reachable,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(rows: &[&[f64]]) -> DMatrix<f64> {
        let n = rows.len();
        DMatrix::from_fn(n, rows[0].len(), |i, j| rows[i][j])
    }

    #[test]
    fn two_nodes_full_probability_is_complete() {
        for seed in [0, 1, 99] {
            let g = generate_random_digraph(2, 1.0, seed).unwrap();
            assert_eq!(g.adjacency_matrix(), m(&[&[0.0, 1.0], &[1.0, 0.0]]));
        }
    }

    #[test]
    fn generation_is_deterministic_per_seed() {
        let a = generate_random_digraph(20, 0.2, 7).unwrap();
        let b = generate_random_digraph(20, 0.2, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate_random_digraph(20, 0.2, 8).unwrap());
    }

    #[test]
    fn generation_rejects_bad_parameters() {
        assert!(generate_random_digraph(1, 0.5, 0).is_err());
        assert!(generate_random_digraph(5, 0.0, 0).is_err());
        assert!(generate_random_digraph(5, 1.5, 0).is_err());
    }

    #[test]
    fn every_node_has_an_in_edge_and_no_self_loops() {
        for seed in 0..50 {
            let g = generate_random_digraph(20, 0.02, seed).unwrap();
            for i in 0..20 {
                assert!(g.in_degree(i) >= 1);
                assert!(!g.has_edge(i, i));
            }
        }
    }

    #[test]
    fn mean_edge_count_matches_binomial_with_repair() {
        let (n, p) = (20usize, 0.2f64);
        let off = (n * (n - 1)) as f64;
        // Bernoulli edges plus one repair edge per empty row.
        let q_empty = (1.0 - p).powi(n as i32 - 1);
        let expected = off * p + n as f64 * q_empty;
        let var = off * p * (1.0 - p) + n as f64 * q_empty * (1.0 - q_empty);
        let seeds = 1000;
        let mean = (0..seeds)
            .map(|s| generate_random_digraph(n, p, s).unwrap().edge_count() as f64)
            .sum::<f64>()
            / seeds as f64;
        let sd_mean = (var / seeds as f64).sqrt();
        assert!((mean - expected).abs() < 3.0 * sd_mean, "mean {mean} vs {expected}");
    }

    #[test]
    fn laplacian_single_edge() {
        let g = WeightedDigraph::from_edges(2, &[(0, 1)]).unwrap();
        let w = weight_laplacian(&g, 1.0).unwrap();
        assert_eq!(w.weights(), &m(&[&[0.0, 1.0], &[0.0, 1.0]]));
        assert_eq!(w.stability(), StabilityClass::MarginallyStable);
    }

    #[test]
    fn laplacian_two_way_half_gamma() {
        let g = WeightedDigraph::from_edges(2, &[(0, 1), (1, 0)]).unwrap();
        let w = weight_laplacian(&g, 0.5).unwrap();
        assert_eq!(w.weights(), &m(&[&[0.5, 0.5], &[0.5, 0.5]]));
    }

    #[test]
    fn laplacian_rejects_gamma_out_of_range() {
        let g = WeightedDigraph::from_edges(2, &[(0, 1)]).unwrap();
        assert!(weight_laplacian(&g, 0.0).is_err());
        assert!(weight_laplacian(&g, 1.01).is_err());
        assert!(weight_laplacian(&WeightedDigraph::empty(3), 1.0).is_err());
    }

    #[test]
    fn metropolis_two_way() {
        let g = WeightedDigraph::from_edges(2, &[(0, 1), (1, 0)]).unwrap();
        let w = weight_metropolis(&g).unwrap();
        assert_eq!(w.weights(), &m(&[&[0.0, 1.0], &[1.0, 0.0]]));
        assert_eq!(w.stability(), StabilityClass::MarginallyStable);
    }

    #[test]
    fn metropolis_star_center() {
        let edges = [(0, 1), (0, 2), (0, 3), (1, 0), (2, 0), (3, 0)];
        let g = WeightedDigraph::from_edges(4, &edges).unwrap();
        let w = weight_metropolis(&g).unwrap();
        for leaf in 1..4 {
            assert!((w.weights()[(0, leaf)] - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    /// Gelfand's formula with the max-row-sum norm, independent of the
    /// Schur-based eigen solver.
    fn gelfand_radius(w: &DMatrix<f64>) -> f64 {
        let mut p = w.clone();
        let mut log_scale = 0.0;
        let k = 1024;
        for _ in 0..10 {
            p = &p * &p;
            let norm = p.row_iter().map(|r| r.abs().sum()).fold(0.0, f64::max);
            p /= norm;
            log_scale = 2.0 * log_scale + norm.ln();
        }
        (log_scale / k as f64).exp()
    }

    #[test]
    fn random_rule_matrices_are_row_stochastic_with_unit_radius() {
        for seed in 0..10 {
            let g = generate_random_digraph(20, 0.2, seed).unwrap();
            for w in [weight_laplacian(&g, 1.0).unwrap(), weight_metropolis(&g).unwrap()] {
                for row in w.weights().row_iter() {
                    assert!((row.sum() - 1.0).abs() <= ROW_SUM_TOL);
                }
                assert!(w.is_row_stochastic());
                assert!((w.spectral_radius() - 1.0).abs() < 1e-9);
                assert!((gelfand_radius(w.weights()) - 1.0).abs() < 1e-2);
            }
        }
    }

    #[test]
    fn scaling_sets_radius_and_class() {
        let g = generate_random_digraph(20, 0.2, 3).unwrap();
        let w = weight_laplacian(&g, 1.0).unwrap();
        let s = scale_to_asymptotic(&w, 0.9).unwrap();
        assert_eq!(s.stability(), StabilityClass::AsymptoticallyStable);
        assert!((s.spectral_radius() - 0.9).abs() < 1e-9);
        assert_eq!(s.weights(), &(w.weights() * 0.9));

        let once = scale_to_asymptotic(&w, 0.9 * 0.5).unwrap();
        let twice = scale_to_asymptotic(&w, 0.5).unwrap().weights() * 0.9;
        assert!((once.weights() - twice).amax() < 1e-15);

        assert!(scale_to_asymptotic(&w, 1.0).is_err());
        assert!(scale_to_asymptotic(&s, 0.5).is_err());
    }

    #[test]
    fn classification_examples() {
        let half = DMatrix::<f64>::identity(3, 3) * 0.5;
        assert_eq!(classify_stability(&half), StabilityClass::AsymptoticallyStable);
        let id = DMatrix::<f64>::identity(2, 2);
        assert_eq!(classify_stability(&id), StabilityClass::Unstable);
        let grow = DMatrix::<f64>::identity(2, 2) * 1.5;
        assert_eq!(classify_stability(&grow), StabilityClass::Unstable);
        // 3-cycle is strongly connected.
        let g = WeightedDigraph::from_edges(3, &[(1, 0), (2, 1), (0, 2)]).unwrap();
        let w = weight_laplacian(&g, 0.5).unwrap();
        assert_eq!(w.stability(), StabilityClass::MarginallyStable);
    }

    #[test]
    fn two_sink_components_are_unstable() {
        // Nodes 0 and 1 listen only to each other, as do 2 and 3.
        let g = WeightedDigraph::from_edges(4, &[(0, 1), (1, 0), (2, 3), (3, 2)]).unwrap();
        let w = weight_laplacian(&g, 0.5).unwrap();
        assert_eq!(unit_eigenvalue_multiplicity(w.weights()), 2);
        assert_eq!(w.stability(), StabilityClass::Unstable);
    }

    #[test]
    fn chain_hop_sets() {
        // a_21 = 1, a_32 = 1 in one-based labels.
        let g = WeightedDigraph::from_edges(3, &[(1, 0), (2, 1)]).unwrap();
        let hs = true_hop_sets(&g, 0, 3).unwrap();
        assert_eq!(hs.hop(1), &BTreeSet::from([1]));
        assert_eq!(hs.hop(2), &BTreeSet::from([2]));
        assert!(hs.hop(3).is_empty());
        assert_eq!(hs.reachable[1], BTreeSet::from([1, 2]));
    }

    #[test]
    fn sink_node_has_empty_hops() {
        let g = WeightedDigraph::from_edges(3, &[(1, 0), (2, 1)]).unwrap();
        let hs = true_hop_sets(&g, 2, 4).unwrap();
        assert!(hs.per_hop.iter().all(BTreeSet::is_empty));
        assert!(true_hop_sets(&g, 3, 1).is_err());
    }

    /// `i ∈ reachable[h]` iff `(Σ_{l=1..h} A^l)_{ij} > 0`, excluding `i = j`.
    fn reachable_by_powers(g: &WeightedDigraph, j: usize, h: usize) -> BTreeSet<usize> {
        let a = g.adjacency_matrix();
        let mut p = DMatrix::<f64>::identity(g.n(), g.n());
        let mut acc = DMatrix::<f64>::zeros(g.n(), g.n());
        for _ in 0..h {
            p = &a * &p;
            acc += &p;
        }
        (0..g.n()).filter(|&i| i != j && acc[(i, j)] > 0.0).collect()
    }

    proptest! {
        #[test]
        fn hop_sets_match_matrix_power_oracle(
            n in 2usize..=8,
            p in 0.05f64..0.6,
            seed in any::<u64>(),
            source in 0usize..8,
            max_hop in 1usize..=7,
        ) {
            let g = generate_random_digraph(n, p, seed).unwrap();
            let j = source % n;
            let hs = true_hop_sets(&g, j, max_hop).unwrap();
            for h in 1..=max_hop {
                prop_assert_eq!(&hs.reachable[h - 1], &reachable_by_powers(&g, j, h));
            }
            for a in 0..max_hop {
                for b in (a + 1)..max_hop {
                    prop_assert!(hs.per_hop[a].is_disjoint(&hs.per_hop[b]));
                }
                let earlier: BTreeSet<usize> = hs.per_hop[..a].iter().flatten().copied().collect();
                let expect: BTreeSet<usize> = hs.reachable[a].difference(&earlier).copied().collect();
                prop_assert_eq!(&hs.per_hop[a], &expect);
            }
        }

        #[test]
        fn gamma_row_square_sums_stay_below_one(seed in any::<u64>(), alpha in 0.1f64..0.99) {
            let g = generate_random_digraph(12, 0.25, seed).unwrap();
            let w = weight_laplacian(&g, 1.0).unwrap();
            prop_assume!(w.stability() == StabilityClass::MarginallyStable);
            for m in [w.clone(), scale_to_asymptotic(&w, alpha).unwrap()] {
                for gamma in m.powers(10) {
                    for row in gamma.row_iter() {
                        prop_assert!(row.norm_squared() <= 1.0 + 1e-12);
                    }
                }
            }
        }
    }
}
