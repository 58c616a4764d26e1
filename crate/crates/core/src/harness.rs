//! Experiment configuration and the Monte Carlo runners behind the
//! `experiment` subcommands.
//!
//! Trials are distributed with rayon and reduced in trial-index order, so a
//! fixed seed reproduces every emitted number.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detect::{
    critical_excitation, gamma_extremes, hhop_critical_excitation, hhop_lower_bound,
    misjudgement_probability, multi_excitation_bound, sigma_omega_bound, HStepNoise,
};
use crate::dynamics::{simulate_with_rng, ExcitationPlan, NoiseModel, Trajectory};
use crate::error::{invalid, Error, Result};
use crate::estimate::{
    constrained_estimate, constraints_from_neighbors, error_metrics, ols_estimate, LsProblem,
};
use crate::infer::{default_gamma_floors, infer_multi_excitation, infer_one_hop, infer_within_h};
use crate::seed::{derive_seed, rng_from_seed};
use crate::topology::{
    generate_random_digraph, scale_to_asymptotic, true_hop_sets, weight_laplacian,
    weight_metropolis, HopSets, StabilityClass, TopologyMatrix, WeightedDigraph,
};

const LS_STREAM: u64 = 0x4c53_4c53;
const MULTI_STREAM: u64 = 0x4d55_4c54;
const HALF_WIDTH_CAP: f64 = 0.5;
const Z95: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightRule {
    Laplacian,
    Metropolis,
    /// Laplacian weights scaled by `alpha`.
    Scaled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MultiMode {
    /// Two-Gaussian observation model with zero pre-excitation spread.
    Isolated,
    /// Full simulation of the configured network.
    Network,
}

/// Flat key-value experiment configuration; every key is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: usize,
    pub graph_seed: u64,
    pub edge_probability: f64,
    /// Graph draws tried before giving up on finding an admissible one.
    pub max_graph_draws: usize,
    pub weight_rule: WeightRule,
    pub gamma: f64,
    pub alpha: f64,
    pub weight_floor: f64,
    pub sigma_theta: f64,
    pub sigma_upsilon: f64,
    pub trials: usize,
    pub seed: u64,
    pub error_targets: Vec<f64>,
    pub max_hop: usize,
    pub false_alarm: f64,
    pub burn_in: usize,
    pub initial_range: f64,
    pub excitation: Option<f64>,
    pub ls_seeds: usize,
    pub ls_delta: f64,
    pub multi_mode: MultiMode,
    pub multi_reps: usize,
    pub multi_counts: Vec<usize>,
    pub multi_delta: f64,
    /// Multi-excitation input as a fraction of the critical one at `multi_delta`.
    pub multi_scale: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n: 20,
            graph_seed: 1,
            edge_probability: 0.05,
            max_graph_draws: 10_000,
            weight_rule: WeightRule::Laplacian,
            gamma: 1.0,
            alpha: 0.9,
            weight_floor: 0.4,
            sigma_theta: 1.0,
            sigma_upsilon: 1.0,
            trials: 1000,
            seed: 0,
            error_targets: vec![0.05, 0.1, 0.2, 0.3],
            max_hop: 3,
            false_alarm: 0.05,
            burn_in: 50,
            initial_range: 100.0,
            excitation: None,
            ls_seeds: 50,
            ls_delta: 0.05,
            multi_mode: MultiMode::Isolated,
            multi_reps: 10_000,
            multi_counts: vec![1, 4, 16, 64],
            multi_delta: 0.05,
            multi_scale: 0.5,
        }
    }
}

fn open_unit(name: &'static str, v: f64) -> Result<()> {
    if !(v > 0.0 && v < 1.0) {
        return Err(invalid(name, format!("must lie in (0, 1), got {v}")));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(invalid("n", "need at least two nodes"));
        }
        if self.trials == 0 {
            return Err(invalid("trials", "must be at least 1"));
        }
        if self.max_graph_draws == 0 {
            return Err(invalid("max_graph_draws", "must be at least 1"));
        }
        open_unit("edge_probability", self.edge_probability)?;
        open_unit("ls_delta", self.ls_delta)?;
        open_unit("multi_delta", self.multi_delta)?;
        if self.error_targets.is_empty() {
            return Err(invalid("error_targets", "need at least one target"));
        }
        for &d in &self.error_targets {
            open_unit("error_targets", d)?;
        }
        if !(self.false_alarm > 0.0 && self.false_alarm < 0.5) {
            return Err(invalid("false_alarm", "must lie in (0, 0.5)"));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(invalid("gamma", "must lie in (0, 1]"));
        }
        open_unit("alpha", self.alpha)?;
        if !(self.weight_floor > 0.0 && self.weight_floor <= 1.0) {
            return Err(invalid("weight_floor", "must lie in (0, 1]"));
        }
        NoiseModel::new(self.sigma_theta, self.sigma_upsilon)?;
        if self.max_hop == 0 {
            return Err(invalid("max_hop", "must be at least 1"));
        }
        if !(self.initial_range >= 0.0 && self.initial_range.is_finite()) {
            return Err(invalid("initial_range", "must be finite and >= 0"));
        }
        if let Some(e) = self.excitation {
            if e == 0.0 || !e.is_finite() {
                return Err(invalid("excitation", "must be finite and nonzero"));
            }
        }
        if self.ls_seeds == 0 || self.multi_reps == 0 {
            return Err(invalid("ls_seeds/multi_reps", "must be at least 1"));
        }
        if self.multi_counts.is_empty() || self.multi_counts.contains(&0) {
            return Err(invalid("multi_counts", "need positive excitation counts"));
        }
        if !(self.multi_scale > 0.0 && self.multi_scale.is_finite()) {
            return Err(invalid("multi_scale", "must be positive"));
        }
        Ok(())
    }

    pub fn noise(&self) -> NoiseModel {
        NoiseModel {
            sigma_theta: self.sigma_theta,
            sigma_upsilon: self.sigma_upsilon,
        }
    }

    pub fn weights(&self, g: &WeightedDigraph) -> Result<TopologyMatrix> {
        match self.weight_rule {
            WeightRule::Laplacian => weight_laplacian(g, self.gamma),
            WeightRule::Metropolis => weight_metropolis(g),
            WeightRule::Scaled => scale_to_asymptotic(&weight_laplacian(g, self.gamma)?, self.alpha),
        }
    }

    /// Noise bound `σ̄_ω` that needs no knowledge of `W`.
    pub fn sigma_bound(&self, w: &TopologyMatrix) -> f64 {
        sigma_omega_bound(self.n, &self.noise(), w.is_row_stochastic())
    }
}

/// A graph together with its weights and the seed that produced it.
#[derive(Debug, Clone)]
pub struct Topology {
    pub graph: WeightedDigraph,
    pub matrix: TopologyMatrix,
    pub graph_seed: u64,
}

/// Draws graphs from `start_seed`, `start_seed + 1`, … until one is stable
/// and every edge weight reaches the configured floor `w̲`.
pub fn build_topology_from(config: &ExperimentConfig, start_seed: u64) -> Result<Topology> {
    for k in 0..config.max_graph_draws {
        let seed = start_seed.wrapping_add(k as u64);
        let graph = generate_random_digraph(config.n, config.edge_probability, seed)?;
        let matrix = config.weights(&graph)?;
        let floor_ok = matrix
            .edge_weight_floor()
            .is_some_and(|f| f >= config.weight_floor);
        if floor_ok && matrix.stability() != StabilityClass::Unstable {
            return Ok(Topology {
                graph,
                matrix,
                graph_seed: seed,
            });
        }
    }
    Err(Error::NoAdmissibleTopology {
        attempts: config.max_graph_draws,
        reason: format!(
            "need a stable matrix with every edge weight >= {}",
            config.weight_floor
        ),
    })
}

pub fn build_topology(config: &ExperimentConfig) -> Result<Topology> {
    build_topology_from(config, config.graph_seed)
}

/// NaN entries (rates with an empty denominator) serialize as JSON `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    #[serde(deserialize_with = "null_as_nan")]
    pub parameter: f64,
    #[serde(deserialize_with = "null_as_nan")]
    pub theoretical: f64,
    #[serde(deserialize_with = "null_as_nan")]
    pub empirical: f64,
    pub trials: usize,
    #[serde(deserialize_with = "null_as_nan")]
    pub half_width: f64,
    #[serde(deserialize_with = "null_map_as_nan")]
    pub extra: BTreeMap<String, f64>,
}

fn null_as_nan<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

fn null_map_as_nan<'de, D: serde::Deserializer<'de>>(
    d: D,
) -> std::result::Result<BTreeMap<String, f64>, D::Error> {
    let raw = BTreeMap::<String, Option<f64>>::deserialize(d)?;
    Ok(raw
        .into_iter()
        .map(|(k, v)| (k, v.unwrap_or(f64::NAN)))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub experiment: String,
    pub rows: Vec<ResultRow>,
}

pub const CSV_HEADER: &str = "experiment,parameter,theoretical,empirical,trials,half_width,extra";

impl ResultTable {
    /// Fixed columns followed by `extra` as `key=value` pairs joined by `;`.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{CSV_HEADER}\n");
        for r in &self.rows {
            let extra: Vec<String> = r.extra.iter().map(|(k, v)| format!("{k}={v}")).collect();
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                self.experiment,
                r.parameter,
                r.theoretical,
                r.empirical,
                r.trials,
                r.half_width,
                extra.join(";")
            )
            .expect("writing to a String");
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// `1.96 √(p(1−p)/n)`, capped at 0.5.
pub fn binomial_half_width(p: f64, n: usize) -> f64 {
    if n == 0 {
        return HALF_WIDTH_CAP;
    }
    (Z95 * (p * (1.0 - p) / n as f64).sqrt()).min(HALF_WIDTH_CAP)
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        f64::NAN
    } else {
        num as f64 / den as f64
    }
}

/// Initial state uniform in `±range`.
pub fn random_state<R: Rng>(n: usize, range: f64, rng: &mut R) -> DVector<f64> {
    if range == 0.0 {
        return DVector::zeros(n);
    }
    DVector::from_fn(n, |_, _| rng.random_range(-range..=range))
}

/// Initial state uniform in `±initial_range`, `burn_in` steps, excitation of
/// `source` at `burn_in`, then `after` more steps.
fn excited_run(
    topo: &Topology,
    config: &ExperimentConfig,
    source: usize,
    e: f64,
    after: usize,
    seed: u64,
) -> Result<Trajectory> {
    let mut rng = rng_from_seed(seed);
    let x0 = random_state(config.n, config.initial_range, &mut rng);
    let plan = ExcitationPlan::single(source, config.burn_in, e)?;
    simulate_with_rng(
        &topo.matrix,
        &x0,
        config.burn_in + after,
        &config.noise(),
        Some(&plan),
        &mut rng,
    )
}

#[derive(Debug, Clone, Copy, Default)]
struct OneHopCounts {
    correct: usize,
    decisions: usize,
    detected: usize,
    neighbors: usize,
    false_alarms: usize,
    non_neighbors: usize,
    exact_sets: usize,
    delta_y: f64,
}

impl OneHopCounts {
    fn add(mut self, o: Self) -> Self {
        self.correct += o.correct;
        self.decisions += o.decisions;
        self.detected += o.detected;
        self.neighbors += o.neighbors;
        self.false_alarms += o.false_alarms;
        self.non_neighbors += o.non_neighbors;
        self.exact_sets += o.exact_sets;
        self.delta_y += o.delta_y;
        self
    }
}

/// Per-pair accuracy of the single-excitation test for each target `δ̄_e`.
///
/// Trial `k` excites node `k mod n`; its noise stream depends only on `k`,
/// so all targets share their noise realizations.
pub fn run_onehop_accuracy(config: &ExperimentConfig) -> Result<ResultTable> {
    config.validate()?;
    let topo = build_topology(config)?;
    let sigma = config.sigma_bound(&topo.matrix);
    let class = topo.matrix.stability();
    let n = config.n;
    let mut rows = Vec::with_capacity(config.error_targets.len());
    for &delta in &config.error_targets {
        let e = match config.excitation {
            Some(e) => e,
            None => critical_excitation(sigma, config.weight_floor, delta)?,
        };
        let per_trial: Vec<OneHopCounts> = (0..config.trials)
            .into_par_iter()
            .map(|k| -> Result<OneHopCounts> {
                let source = k % n;
                let traj = excited_run(&topo, config, source, e, 1, derive_seed(config.seed, k as u64))?;
                let before = traj.observation(config.burn_in)?;
                let after = traj.observation(config.burn_in + 1)?;
                let d = infer_one_hop(before, after, source, e, config.weight_floor, class)?;
                let est = d.one_hop();
                let mut c = OneHopCounts {
                    delta_y: crate::dynamics::deviation_bound(before, class)?,
                    ..Default::default()
                };
                let mut exact = true;
                for i in (0..n).filter(|&i| i != source) {
                    let truth = topo.graph.has_edge(i, source);
                    let said = est.contains(&i);
                    c.decisions += 1;
                    c.correct += usize::from(truth == said);
                    exact &= truth == said;
                    if truth {
                        c.neighbors += 1;
                        c.detected += usize::from(said);
                    } else {
                        c.non_neighbors += 1;
                        c.false_alarms += usize::from(said);
                    }
                }
                c.exact_sets = usize::from(exact);
                Ok(c)
            })
            .collect::<Result<_>>()?;
        let c = per_trial
            .into_iter()
            .fold(OneHopCounts::default(), OneHopCounts::add);
        let empirical = ratio(c.correct, c.decisions);
        let extra = BTreeMap::from([
            ("excitation".to_string(), e),
            ("sigma_bound".to_string(), sigma),
            ("decisions".to_string(), c.decisions as f64),
            ("detection_rate".to_string(), ratio(c.detected, c.neighbors)),
            ("false_alarm_rate".to_string(), ratio(c.false_alarms, c.non_neighbors)),
            ("exact_set_accuracy".to_string(), ratio(c.exact_sets, config.trials)),
            ("mean_delta_y".to_string(), c.delta_y / config.trials as f64),
            ("graph_seed".to_string(), topo.graph_seed as f64),
        ]);
        rows.push(ResultRow {
            parameter: delta,
            theoretical: 1.0 - misjudgement_probability(sigma, config.weight_floor, e),
            empirical,
            trials: config.trials,
            half_width: binomial_half_width(empirical, config.trials),
            extra,
        });
    }
    Ok(ResultTable {
        experiment: "fig1a".into(),
        rows,
    })
}

/// Design quantities of one true `h`-hop pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HopPair {
    pub source: usize,
    pub node: usize,
    pub hop: usize,
    pub gamma_min: f64,
    pub gamma_max: f64,
    /// `max_{l ≤ h} σ_{ω,l}(i)`.
    pub sigma: f64,
    pub critical_excitation: f64,
}

/// Every exact-`h`-hop pair for `h ≤ max_hop` with its critical excitation
/// at false-alarm level `alpha`.
pub fn hop_pairs(
    topo: &Topology,
    noise: &NoiseModel,
    max_hop: usize,
    alpha: f64,
) -> Result<(Vec<HopSets>, Vec<HopPair>)> {
    let n = topo.matrix.n();
    let powers = topo.matrix.powers(max_hop);
    let sigmas: Vec<HStepNoise> = (1..=max_hop)
        .map(|h| HStepNoise::new(&topo.matrix, h, noise))
        .collect::<Result<_>>()?;
    let mut sets = Vec::with_capacity(n);
    let mut pairs = Vec::new();
    for j in 0..n {
        let hs = true_hop_sets(&topo.graph, j, max_hop)?;
        for h in 1..=max_hop {
            for &i in hs.hop(h) {
                let (gamma_min, gamma_max) = gamma_extremes(&powers, i, j, h).ok_or_else(|| {
                    invalid("topology", format!("no positive path weight from {j} to {i}"))
                })?;
                let sigma = (0..h).map(|l| sigmas[l].per_node[i]).fold(0.0, f64::max);
                pairs.push(HopPair {
                    source: j,
                    node: i,
                    hop: h,
                    gamma_min,
                    gamma_max,
                    sigma,
                    critical_excitation: hhop_critical_excitation(sigma, gamma_min, alpha)?,
                });
            }
        }
        sets.push(hs);
    }
    Ok((sets, pairs))
}

/// Fraction of true `h`-hop out-neighbors assigned to hop `h`, against the
/// averaged lower bound, for `h = 1..=max_hop`.
pub fn run_multihop_accuracy(config: &ExperimentConfig) -> Result<ResultTable> {
    config.validate()?;
    let topo = build_topology(config)?;
    let n = config.n;
    let big_h = config.max_hop;
    let class = topo.matrix.stability();
    let (sets, pairs) = hop_pairs(&topo, &config.noise(), big_h, config.false_alarm)?;
    let e = match config.excitation {
        Some(e) => e,
        None => pairs
            .iter()
            .map(|p| p.critical_excitation)
            .fold(0.0, f64::max),
    };
    if e == 0.0 {
        return Err(invalid("topology", "no multi-hop pairs to design for"));
    }
    let mut bound_by_source = vec![vec![0.0; big_h]; n];
    for p in &pairs {
        bound_by_source[p.source][p.hop - 1] +=
            hhop_lower_bound(p.gamma_min, p.gamma_max, e, config.false_alarm, p.sigma)?;
    }
    let floors = default_gamma_floors(config.weight_floor, big_h);

    // Per trial and hop: (hits, true pairs, correct decisions, decisions).
    let per_trial: Vec<Vec<[usize; 4]>> = (0..config.trials)
        .into_par_iter()
        .map(|k| -> Result<Vec<[usize; 4]>> {
            let source = k % n;
            let traj = excited_run(&topo, config, source, e, big_h, derive_seed(config.seed, k as u64))?;
            let d = infer_within_h(&traj, source, config.burn_in, e, &floors, class)?;
            let hs = &sets[source];
            Ok((1..=big_h)
                .map(|h| {
                    let mut c = [0usize; 4];
                    for i in (0..n).filter(|&i| i != source) {
                        let truth = hs.hop_of(i) == Some(h);
                        let said = d.hop_of(i) == Some(h);
                        if truth {
                            c[1] += 1;
                            c[0] += usize::from(said);
                        }
                        c[3] += 1;
                        c[2] += usize::from(truth == said);
                    }
                    c
                })
                .collect())
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(big_h);
    for h in 1..=big_h {
        let mut c = [0usize; 4];
        for t in &per_trial {
            for (acc, v) in c.iter_mut().zip(t[h - 1]) {
                *acc += v;
            }
        }
        let bound_sum: f64 = (0..config.trials).map(|k| bound_by_source[k % n][h - 1]).sum();
        let empirical = ratio(c[0], c[1]);
        let hop_pairs: Vec<&HopPair> = pairs.iter().filter(|p| p.hop == h).collect();
        let extra = BTreeMap::from([
            ("excitation".to_string(), e),
            ("pairs".to_string(), hop_pairs.len() as f64),
            ("decision_accuracy".to_string(), ratio(c[2], c[3])),
            ("gamma_floor".to_string(), floors[h - 1]),
            (
                "min_pair_bound".to_string(),
                hop_pairs
                    .iter()
                    .map(|p| hhop_lower_bound(p.gamma_min, p.gamma_max, e, config.false_alarm, p.sigma))
                    .collect::<Result<Vec<_>>>()?
                    .into_iter()
                    .fold(f64::NAN, f64::min),
            ),
            ("graph_seed".to_string(), topo.graph_seed as f64),
        ]);
        rows.push(ResultRow {
            parameter: h as f64,
            theoretical: if c[1] == 0 { f64::NAN } else { bound_sum / c[1] as f64 },
            empirical,
            trials: c[1],
            half_width: binomial_half_width(empirical, c[1]),
            extra,
        });
    }
    Ok(ResultTable {
        experiment: "fig1b".into(),
        rows,
    })
}

/// Paired OLS versus constrained LS errors, one row per seed.
///
/// `theoretical` holds the OLS structure error and `empirical` the
/// constrained one; magnitude errors are in `extra`.
pub fn run_ls_improvement(config: &ExperimentConfig) -> Result<ResultTable> {
    config.validate()?;
    let n = config.n;
    let pairs_count = n + 5;
    let rows: Vec<ResultRow> = (0..config.ls_seeds)
        .into_par_iter()
        .map(|k| -> Result<ResultRow> {
            let topo = build_topology_from(config, derive_seed(config.graph_seed, k as u64))?;
            let sigma = config.sigma_bound(&topo.matrix);
            let class = topo.matrix.stability();
            let e = match config.excitation {
                Some(e) => e,
                None => critical_excitation(sigma, config.weight_floor, config.ls_delta)?,
            };
            let source = k % n;
            let mut rng = rng_from_seed(derive_seed(config.seed ^ LS_STREAM, k as u64));
            let x0 = random_state(n, config.initial_range, &mut rng);
            let plan = ExcitationPlan::single(source, pairs_count, e)?;
            let traj = simulate_with_rng(
                &topo.matrix,
                &x0,
                pairs_count + 1,
                &config.noise(),
                Some(&plan),
                &mut rng,
            )?;
            let problem = LsProblem::from_trajectory(&traj, pairs_count)?;
            let ols = ols_estimate(&problem);
            let d = infer_one_hop(
                traj.observation(pairs_count)?,
                traj.observation(pairs_count + 1)?,
                source,
                e,
                config.weight_floor,
                class,
            )?;
            let constraints = constraints_from_neighbors(n, source, &d.one_hop());
            let con = constrained_estimate(&problem, &constraints)?;
            let truth = topo.matrix.weights();
            let m_ols = error_metrics(&ols.matrix, truth)?;
            let m_con = error_metrics(&con.matrix, truth)?;
            let extra = BTreeMap::from([
                ("eps2_ols".to_string(), m_ols.magnitude),
                ("eps2_constrained".to_string(), m_con.magnitude),
                ("source".to_string(), source as f64),
                ("excitation".to_string(), e),
                ("detected".to_string(), d.one_hop().len() as f64),
                ("true_out_degree".to_string(), topo.graph.out_degree(source) as f64),
                ("rank_deficient".to_string(), f64::from(u8::from(ols.rank_deficient))),
                ("zero_at_positive".to_string(), con.zero_at_positive as f64),
                ("graph_seed".to_string(), topo.graph_seed as f64),
            ]);
            Ok(ResultRow {
                parameter: k as f64,
                theoretical: m_ols.structure,
                empirical: m_con.structure,
                trials: 1,
                half_width: 0.0,
                extra,
            })
        })
        .collect::<Result<_>>()?;
    Ok(ResultTable {
        experiment: "fig1c".into(),
        rows,
    })
}

/// False-alarm and missed-detection rates of the isolated two-Gaussian
/// test: `draws` samples of `N(0, σ²)` and of `N(w e, σ²)` against the
/// threshold `w e / 2`.
pub fn isolated_test_misjudgement(sigma: f64, w: f64, e: f64, draws: usize, seed: u64) -> (f64, f64) {
    let threshold = w * e.abs() / 2.0;
    let mut rng = rng_from_seed(seed);
    let mut fa = 0usize;
    let mut md = 0usize;
    for _ in 0..draws {
        let z0: f64 = sigma * rng.sample::<f64, _>(StandardNormal);
        let z1: f64 = w * e.abs() + sigma * rng.sample::<f64, _>(StandardNormal);
        fa += usize::from(z0 >= threshold);
        md += usize::from(z1 < threshold);
    }
    (ratio(fa, draws), ratio(md, draws))
}

/// Averaged-test misjudgement (false-alarm rate plus missed-detection rate)
/// for each excitation count `m`.
pub fn run_multi_excitation(config: &ExperimentConfig) -> Result<ResultTable> {
    config.validate()?;
    match config.multi_mode {
        MultiMode::Isolated => multi_isolated(config),
        MultiMode::Network => multi_network(config),
    }
}

fn multi_rows(
    config: &ExperimentConfig,
    e: f64,
    sigma: f64,
    rates: &[(f64, f64)],
    extra_common: &[(&str, f64)],
) -> Result<Vec<ResultRow>> {
    config
        .multi_counts
        .iter()
        .zip(rates)
        .map(|(&m, &(fa, md))| {
            let reps = config.multi_reps as f64;
            let sd = ((fa * (1.0 - fa) + md * (1.0 - md)) / reps).sqrt();
            let mut extra = BTreeMap::from([
                ("excitation".to_string(), e),
                ("sigma".to_string(), sigma),
                ("false_alarm_rate".to_string(), fa),
                ("missed_detection_rate".to_string(), md),
                ("binomial_sigma".to_string(), sd),
            ]);
            for &(k, v) in extra_common {
                extra.insert(k.to_string(), v);
            }
            Ok(ResultRow {
                parameter: m as f64,
                theoretical: multi_excitation_bound(e, config.weight_floor, sigma, m)?,
                empirical: fa + md,
                trials: config.multi_reps,
                half_width: (Z95 * sd).min(HALF_WIDTH_CAP),
                extra,
            })
        })
        .collect()
}

/// Three-node observation model: source `0`, an out-neighbor `1` with
/// weight `w̲` and a non-neighbor `2`, zero pre-excitation observations and
/// deviation noise `N(0, σ̄²)`.
///
/// `empirical` scores the one-sided likelihood-ratio test on the averaged
/// deviation (accept iff it reaches `w̲ e / 2`). The `abs_rule_*` extras
/// score the magnitude rule of [`infer_multi_excitation`] on the same draws.
fn multi_isolated(config: &ExperimentConfig) -> Result<ResultTable> {
    let sigma = sigma_omega_bound(config.n, &config.noise(), true);
    let q0 = config.weight_floor;
    let e = match config.excitation {
        Some(e) => e,
        None => config.multi_scale * critical_excitation(sigma, q0, config.multi_delta)?,
    };
    let threshold = q0 * e.abs() / 2.0;
    let counts = &config.multi_counts;
    let max_m = counts.iter().copied().max().unwrap_or(1);
    let master = derive_seed(config.seed ^ MULTI_STREAM, 0);
    // Per repetition and count: [signed FA, signed MD, abs FA, abs MD].
    let per_rep: Vec<Vec<[bool; 4]>> = (0..config.multi_reps)
        .into_par_iter()
        .map(|r| -> Result<Vec<[bool; 4]>> {
            let mut rng = rng_from_seed(derive_seed(master, r as u64));
            let before = DVector::zeros(3);
            let trials: Vec<_> = (0..max_m)
                .map(|_| {
                    let w1: f64 = sigma * rng.sample::<f64, _>(StandardNormal);
                    let w2: f64 = sigma * rng.sample::<f64, _>(StandardNormal);
                    (before.clone(), DVector::from_vec(vec![0.0, q0 * e.abs() + w1, w2]))
                })
                .collect();
            counts
                .iter()
                .map(|&m| {
                    let d = infer_multi_excitation(
                        &trials[..m],
                        0,
                        e,
                        q0,
                        StabilityClass::MarginallyStable,
                    )?;
                    let accepted = d.one_hop();
                    let mean = |i: usize| d.raw_deviations[&(i, 1)];
                    Ok([
                        mean(2) >= threshold,
                        mean(1) < threshold,
                        accepted.contains(&2),
                        !accepted.contains(&1),
                    ])
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let rate = |c: usize, k: usize| {
        ratio(per_rep.iter().filter(|r| r[c][k]).count(), config.multi_reps)
    };
    let rates: Vec<(f64, f64)> = (0..counts.len()).map(|c| (rate(c, 0), rate(c, 1))).collect();
    let mut rows = multi_rows(config, e, sigma, &rates, &[("q0", q0)])?;
    for (c, row) in rows.iter_mut().enumerate() {
        let (fa, md) = (rate(c, 2), rate(c, 3));
        row.extra.insert("abs_rule_false_alarm_rate".into(), fa);
        row.extra.insert("abs_rule_missed_detection_rate".into(), md);
        row.extra.insert("abs_rule_misjudgement".into(), fa + md);
    }
    Ok(ResultTable {
        experiment: "multi".into(),
        rows,
    })
}

/// Repeated excitations of the configured network; every repetition is a
/// fresh run from a new initial state.
fn multi_network(config: &ExperimentConfig) -> Result<ResultTable> {
    let topo = build_topology(config)?;
    let n = config.n;
    let sigma = config.sigma_bound(&topo.matrix);
    let class = topo.matrix.stability();
    let e = match config.excitation {
        Some(e) => e,
        None => config.multi_scale * critical_excitation(sigma, config.weight_floor, config.multi_delta)?,
    };
    let counts = &config.multi_counts;
    let max_m = counts.iter().copied().max().unwrap_or(1);
    let master = derive_seed(config.seed ^ MULTI_STREAM, 1);
    // Per repetition and count: (false alarms, non-neighbors, misses, neighbors).
    let per_rep: Vec<Vec<[usize; 4]>> = (0..config.multi_reps)
        .into_par_iter()
        .map(|r| -> Result<Vec<[usize; 4]>> {
            let source = r % n;
            let rep_seed = derive_seed(master, r as u64);
            let trials: Vec<_> = (0..max_m)
                .map(|l| {
                    let traj = excited_run(&topo, config, source, e, 1, derive_seed(rep_seed, l as u64))?;
                    Ok((
                        traj.observation(config.burn_in)?.clone(),
                        traj.observation(config.burn_in + 1)?.clone(),
                    ))
                })
                .collect::<Result<_>>()?;
            counts
                .iter()
                .map(|&m| {
                    let d = infer_multi_excitation(&trials[..m], source, e, config.weight_floor, class)?;
                    let est = d.one_hop();
                    let mut c = [0usize; 4];
                    for i in (0..n).filter(|&i| i != source) {
                        if topo.graph.has_edge(i, source) {
                            c[3] += 1;
                            c[2] += usize::from(!est.contains(&i));
                        } else {
                            c[1] += 1;
                            c[0] += usize::from(est.contains(&i));
                        }
                    }
                    Ok(c)
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let rates: Vec<(f64, f64)> = (0..counts.len())
        .map(|c| {
            let mut s = [0usize; 4];
            for r in &per_rep {
                for (acc, v) in s.iter_mut().zip(r[c]) {
                    *acc += v;
                }
            }
            (ratio(s[0], s[1]), ratio(s[2], s[3]))
        })
        .collect();
    Ok(ResultTable {
        experiment: "multi".into(),
        rows: multi_rows(
            config,
            e,
            sigma,
            &rates,
            &[("graph_seed", topo.graph_seed as f64)],
        )?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            n: 10,
            edge_probability: 0.1,
            trials: 40,
            ls_seeds: 4,
            multi_reps: 200,
            burn_in: 10,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn config_parses_flat_toml() {
        let cfg = ExperimentConfig::from_toml_str(
            "n = 12\nweight_rule = \"metropolis\"\nerror_targets = [0.1]\nexcitation = 30.0\n",
        )
        .unwrap();
        assert_eq!(cfg.n, 12);
        assert_eq!(cfg.weight_rule, WeightRule::Metropolis);
        assert_eq!(cfg.excitation, Some(30.0));
        assert_eq!(cfg.trials, 1000);
        assert!(ExperimentConfig::from_toml_str("bogus = 1\n").is_err());
        assert!(ExperimentConfig::from_toml_str("trials = 0\n").is_err());
        assert!(ExperimentConfig::from_toml_str("error_targets = [1.5]\n").is_err());
    }

    #[test]
    fn admissible_topology_meets_floor() {
        let cfg = ExperimentConfig::default();
        let topo = build_topology(&cfg).unwrap();
        assert!(topo.matrix.edge_weight_floor().unwrap() >= cfg.weight_floor);
        assert_eq!(topo.matrix.stability(), StabilityClass::MarginallyStable);
        let impossible = ExperimentConfig {
            weight_floor: 1.0,
            edge_probability: 0.9,
            max_graph_draws: 5,
            ..cfg
        };
        assert!(matches!(
            build_topology(&impossible),
            Err(Error::NoAdmissibleTopology { .. })
        ));
    }

    #[test]
    fn onehop_is_deterministic_and_uses_detect() {
        let cfg = small();
        let a = run_onehop_accuracy(&cfg).unwrap();
        let b = run_onehop_accuracy(&cfg).unwrap();
        assert_eq!(a, b);
        let topo = build_topology(&cfg).unwrap();
        let sigma = cfg.sigma_bound(&topo.matrix);
        for (row, &d) in a.rows.iter().zip(&cfg.error_targets) {
            let e = critical_excitation(sigma, cfg.weight_floor, d).unwrap();
            assert_eq!(row.theoretical, 1.0 - misjudgement_probability(sigma, cfg.weight_floor, e));
            assert!((0.0..=1.0).contains(&row.empirical));
        }
    }

    #[test]
    fn single_trial_table_is_well_formed() {
        let cfg = ExperimentConfig {
            trials: 1,
            ..small()
        };
        let t = run_onehop_accuracy(&cfg).unwrap();
        assert_eq!(t.rows.len(), 4);
        assert!(t.rows.iter().all(|r| r.half_width <= 0.5 && r.trials == 1));
        let csv = t.to_csv();
        assert!(csv.starts_with(CSV_HEADER));
        assert_eq!(csv.lines().count(), 5);
        let back: ResultTable = serde_json::from_str(&t.to_json().unwrap()).unwrap();
        assert_eq!(back.rows.len(), 4);
    }

    #[test]
    fn half_width_cap() {
        assert_eq!(binomial_half_width(0.5, 1), 0.5);
        assert_eq!(binomial_half_width(1.0, 1), 0.0);
        assert!((binomial_half_width(0.5, 100) - 0.098).abs() < 1e-12);
    }

    #[test]
    fn multihop_single_hop_matches_onehop_detection() {
        let cfg = ExperimentConfig {
            max_hop: 1,
            excitation: Some(25.0),
            error_targets: vec![0.1],
            ..small()
        };
        let one = run_onehop_accuracy(&cfg).unwrap();
        let multi = run_multihop_accuracy(&cfg).unwrap();
        assert_eq!(multi.rows.len(), 1);
        assert_eq!(multi.rows[0].empirical, one.rows[0].extra["detection_rate"]);
    }

    #[test]
    fn ls_rows_match_seed_count() {
        let cfg = small();
        let t = run_ls_improvement(&cfg).unwrap();
        assert_eq!(t.rows.len(), cfg.ls_seeds);
        assert_eq!(t, run_ls_improvement(&cfg).unwrap());
    }

    #[test]
    fn ls_noiseless_is_exact() {
        let cfg = ExperimentConfig {
            sigma_theta: 0.0,
            sigma_upsilon: 0.0,
            excitation: Some(10.0),
            ..small()
        };
        for row in run_ls_improvement(&cfg).unwrap().rows {
            if row.extra["rank_deficient"] == 0.0 {
                assert!(row.extra["eps2_ols"] < 1e-8);
                assert!(row.extra["eps2_constrained"] < 1e-8);
            }
        }
    }

    #[test]
    fn multi_rows_follow_counts() {
        let cfg = small();
        let t = run_multi_excitation(&cfg).unwrap();
        assert_eq!(t.rows.len(), cfg.multi_counts.len());
        for (row, &m) in t.rows.iter().zip(&cfg.multi_counts) {
            assert_eq!(row.parameter, m as f64);
        }
        let net = ExperimentConfig {
            multi_mode: MultiMode::Network,
            multi_reps: 20,
            multi_counts: vec![1, 2],
            ..small()
        };
        assert_eq!(run_multi_excitation(&net).unwrap().rows.len(), 2);
    }

    #[test]
    fn isolated_test_rates() {
        let (fa, md) = isolated_test_misjudgement(1.0, 1.0, 0.0, 1000, 3);
        assert!((fa - 0.5).abs() < 0.06);
        assert!((md - 0.5).abs() < 0.06);
    }
}
