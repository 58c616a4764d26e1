use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use excitation::detect::{critical_excitation, misjudgement_probability};
use excitation::harness::{
    build_topology, hop_pairs, random_state, run_ls_improvement, run_multi_excitation, run_multihop_accuracy,
    run_onehop_accuracy,
};
use excitation::infer::default_gamma_floors;
use excitation::io;
use excitation::seed::rng_from_seed;
use excitation::{
    constrained_estimate, error_metrics, generate_random_digraph, infer_multi_excitation,
    infer_one_hop, infer_within_h, ols_estimate, simulate, DMatrix, DVector, ExcitationPlan,
    ExperimentConfig, LsProblem, NeighborDecision, ResultRow, ResultTable, StabilityClass,
    TopologyMatrix, Trajectory,
};

#[derive(Parser)]
#[command(name = "excite", version, about = "Excitation-based topology inference")]
struct Cli {
    /// TOML experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (graph seed for `generate`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output format for tables and decisions.
    #[arg(long, global = true, value_enum, default_value_t = OutFormat::Csv)]
    out: OutFormat,
    /// Override the configured trial count.
    #[arg(long, global = true)]
    trials: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutFormat {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a random digraph and weight it.
    Generate(GenerateArgs),
    /// Simulate a trajectory, optionally with one excitation.
    Simulate(SimulateArgs),
    /// Critical excitations for the configured error targets.
    DesignExcitation(DesignArgs),
    /// Decide out-neighbor sets from excited trajectories.
    #[command(subcommand)]
    Infer(InferCommand),
    /// Least-squares estimate of the weight matrix.
    #[command(subcommand)]
    Estimate(EstimateCommand),
    /// Reproduce an experiment as a result table.
    Experiment {
        #[arg(value_enum)]
        which: Experiment,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Experiment {
    Fig1a,
    Fig1b,
    Fig1c,
    Multi,
}

#[derive(Args)]
struct GenerateArgs {
    /// Keep drawing until the graph is stable and meets the weight floor.
    #[arg(long)]
    admissible: bool,
    /// Write the weight matrix here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Also write the 0/1 adjacency matrix.
    #[arg(long)]
    adjacency: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    horizon: usize,
    #[arg(long, requires_all = ["excite_time", "excitation"])]
    excite_node: Option<usize>,
    #[arg(long)]
    excite_time: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    excitation: Option<f64>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct DesignArgs {
    /// With a weight matrix, also design the multi-hop excitation.
    #[arg(long)]
    weights: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ClassArg {
    Marginal,
    Asymptotic,
}

#[derive(Args)]
struct DecisionArgs {
    /// Excited node; defaults to the trajectory's excitation record.
    #[arg(long)]
    source: Option<usize>,
    /// Excitation step.
    #[arg(long)]
    time: Option<usize>,
    /// Excitation magnitude.
    #[arg(long, allow_hyphen_values = true)]
    excitation: Option<f64>,
    /// `w̲`; defaults to the configured floor.
    #[arg(long)]
    weight_floor: Option<f64>,
    #[arg(long, value_enum, conflicts_with = "weights")]
    class: Option<ClassArg>,
    /// Classify stability from this weight matrix.
    #[arg(long)]
    weights: Option<PathBuf>,
}

#[derive(Subcommand)]
enum InferCommand {
    /// Single-excitation out-neighbor test.
    Onehop {
        #[arg(long)]
        trajectory: PathBuf,
        #[command(flatten)]
        decision: DecisionArgs,
    },
    /// Within-h-hop tests on one excited trajectory.
    Multihop {
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long)]
        max_hop: Option<usize>,
        #[command(flatten)]
        decision: DecisionArgs,
    },
    /// Averaged test over several excited trajectories.
    Multi {
        #[arg(long, num_args = 1.., required = true)]
        trajectory: Vec<PathBuf>,
        #[command(flatten)]
        decision: DecisionArgs,
    },
}

#[derive(Subcommand)]
enum EstimateCommand {
    /// Ordinary least squares.
    Ols(EstimateArgs),
    /// Least squares with sign and zero constraints.
    Constrained {
        #[command(flatten)]
        common: EstimateArgs,
        /// Lines `i j pos|zero`.
        #[arg(long)]
        constraints: PathBuf,
    },
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    trajectory: PathBuf,
    /// Use pairs `(y_{t-1}, y_t)` for `t = 1..=pairs`; defaults to every
    /// pair before the first excitation.
    #[arg(long)]
    pairs: Option<usize>,
    /// Report error metrics against this weight matrix.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
}

type AnyResult<T> = Result<T, Box<dyn std::error::Error>>;

fn load_config(cli: &Cli) -> AnyResult<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(t) = cli.trials {
        cfg.trials = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn emit(text: &str, path: Option<&Path>) -> AnyResult<()> {
    match path {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn emit_table(table: &ResultTable, out: OutFormat) -> AnyResult<()> {
    match out {
        OutFormat::Csv => print!("{}", table.to_csv()),
        OutFormat::Json => println!("{}", table.to_json()?),
    }
    Ok(())
}

fn generate(cli: &Cli, args: &GenerateArgs) -> AnyResult<()> {
    let mut cfg = load_config(cli)?;
    if let Some(s) = cli.seed {
        cfg.graph_seed = s;
    }
    let (graph, matrix) = if args.admissible {
        let t = build_topology(&cfg)?;
        (t.graph, t.matrix)
    } else {
        let g = generate_random_digraph(cfg.n, cfg.edge_probability, cfg.graph_seed)?;
        let w = cfg.weights(&g)?;
        (g, w)
    };
    if let Some(p) = &args.adjacency {
        fs::write(p, io::format_adjacency(&graph))?;
    }
    emit(&io::format_matrix(matrix.weights()), args.output.as_deref())
}

fn load_weights(path: &Path) -> AnyResult<TopologyMatrix> {
    Ok(TopologyMatrix::from_matrix(io::read_matrix(path)?)?)
}

fn simulate_cmd(cli: &Cli, args: &SimulateArgs) -> AnyResult<()> {
    let cfg = load_config(cli)?;
    let w = load_weights(&args.weights)?;
    let seed = cli.seed.unwrap_or(cfg.seed);
    let mut rng = rng_from_seed(seed);
    let x0 = random_state(w.n(), cfg.initial_range, &mut rng);
    let plan = match (args.excite_node, args.excite_time, args.excitation) {
        (Some(j), Some(t), Some(e)) => Some(ExcitationPlan::single(j, t, e)?),
        _ => None,
    };
    let traj = simulate(&w, &x0, args.horizon, &cfg.noise(), plan.as_ref(), seed ^ 1)?;
    emit(&io::format_trajectory(&traj), args.output.as_deref())
}

fn design(cli: &Cli, args: &DesignArgs) -> AnyResult<()> {
    let cfg = load_config(cli)?;
    let row_stochastic = match &args.weights {
        Some(p) => load_weights(p)?.is_row_stochastic(),
        None => cfg.weight_rule != excitation::WeightRule::Scaled,
    };
    let sigma = excitation::sigma_omega_bound(cfg.n, &cfg.noise(), row_stochastic);
    let mut rows = Vec::new();
    for &d in &cfg.error_targets {
        let e = critical_excitation(sigma, cfg.weight_floor, d)?;
        rows.push(ResultRow {
            parameter: d,
            theoretical: misjudgement_probability(sigma, cfg.weight_floor, e),
            empirical: e,
            trials: 0,
            half_width: 0.0,
            extra: [("sigma_bound".to_string(), sigma)].into(),
        });
    }
    let mut table = ResultTable {
        experiment: "design".into(),
        rows,
    };
    if let Some(p) = &args.weights {
        let matrix = load_weights(p)?;
        let n = matrix.n();
        let graph = excitation::WeightedDigraph::from_adjacency(&DMatrix::from_fn(n, n, |i, j| {
            if i != j && matrix.weights()[(i, j)] > 0.0 {
                1.0
            } else {
                0.0
            }
        }))?;
        let topo = excitation::harness::Topology {
            graph,
            matrix,
            graph_seed: 0,
        };
        let (_, pairs) = hop_pairs(&topo, &cfg.noise(), cfg.max_hop, cfg.false_alarm)?;
        for h in 1..=cfg.max_hop {
            let e = pairs
                .iter()
                .filter(|p| p.hop <= h)
                .map(|p| p.critical_excitation)
                .fold(0.0, f64::max);
            table.rows.push(ResultRow {
                parameter: h as f64,
                theoretical: cfg.false_alarm,
                empirical: e,
                trials: 0,
                half_width: 0.0,
                extra: [("hop_pairs".to_string(), pairs.iter().filter(|p| p.hop == h).count() as f64)]
                    .into(),
            });
        }
    }
    emit_table(&table, cli.out)
}

struct Resolved {
    source: usize,
    time: usize,
    e: f64,
    floor: f64,
    class: StabilityClass,
}

fn resolve(cfg: &ExperimentConfig, d: &DecisionArgs, traj: &Trajectory) -> AnyResult<Resolved> {
    let rec = traj.excitations.first();
    let source = d.source.or(rec.map(|r| r.node)).ok_or("no --source and no excitation record")?;
    let time = d.time.or(rec.map(|r| r.time)).ok_or("no --time and no excitation record")?;
    let e = d.excitation.or(rec.map(|r| r.magnitude)).ok_or("no --excitation and no record")?;
    let class = match (&d.weights, d.class) {
        (Some(p), _) => load_weights(p)?.stability(),
        (None, Some(ClassArg::Asymptotic)) => StabilityClass::AsymptoticallyStable,
        (None, _) => StabilityClass::MarginallyStable,
    };
    Ok(Resolved {
        source,
        time,
        e,
        floor: d.weight_floor.unwrap_or(cfg.weight_floor),
        class,
    })
}

fn emit_decision(decision: &NeighborDecision, out: OutFormat) -> AnyResult<()> {
    let records = decision.to_records();
    match out {
        OutFormat::Json => println!("{}", serde_json::to_string_pretty(&records)?),
        OutFormat::Csv => {
            println!("source,hop,node,deviation,threshold,member");
            for r in &records {
                for (node, dev) in &r.deviations {
                    println!(
                        "{},{},{},{},{},{}",
                        r.source,
                        r.hop,
                        node,
                        dev,
                        r.threshold,
                        u8::from(r.members.contains(node))
                    );
                }
            }
        }
    }
    Ok(())
}

fn excitation_pair(traj: &Trajectory, time: usize) -> AnyResult<(DVector<f64>, DVector<f64>)> {
    Ok((traj.observation(time)?.clone(), traj.observation(time + 1)?.clone()))
}

fn infer(cli: &Cli, cmd: &InferCommand) -> AnyResult<()> {
    let cfg = load_config(cli)?;
    let decision = match cmd {
        InferCommand::Onehop {
            trajectory,
            decision,
        } => {
            let traj = io::read_trajectory(trajectory)?;
            let r = resolve(&cfg, decision, &traj)?;
            let (before, after) = excitation_pair(&traj, r.time)?;
            infer_one_hop(&before, &after, r.source, r.e, r.floor, r.class)?
        }
        InferCommand::Multihop {
            trajectory,
            max_hop,
            decision,
        } => {
            let traj = io::read_trajectory(trajectory)?;
            let r = resolve(&cfg, decision, &traj)?;
            let floors = default_gamma_floors(r.floor, max_hop.unwrap_or(cfg.max_hop));
            infer_within_h(&traj, r.source, r.time, r.e, &floors, r.class)?
        }
        InferCommand::Multi {
            trajectory,
            decision,
        } => {
            let trajs: Vec<Trajectory> = trajectory
                .iter()
                .map(io::read_trajectory)
                .collect::<Result<_, _>>()?;
            let r = resolve(&cfg, decision, &trajs[0])?;
            let mut pairs = Vec::with_capacity(trajs.len());
            for t in &trajs {
                let time = t.excitations.first().map_or(r.time, |ev| ev.time);
                pairs.push(excitation_pair(t, time)?);
            }
            infer_multi_excitation(&pairs, r.source, r.e, r.floor, r.class)?
        }
    };
    emit_decision(&decision, cli.out)
}

fn estimate(cli: &Cli, cmd: &EstimateCommand) -> AnyResult<()> {
    let (common, constraints) = match cmd {
        EstimateCommand::Ols(a) => (a, None),
        EstimateCommand::Constrained {
            common,
            constraints,
        } => (common, Some(io::read_constraints(constraints)?)),
    };
    let traj = io::read_trajectory(&common.trajectory)?;
    let pairs = match common.pairs {
        Some(p) => p,
        None => traj
            .excitations
            .iter()
            .map(|e| e.time)
            .min()
            .unwrap_or(traj.horizon()),
    };
    let problem = LsProblem::from_trajectory(&traj, pairs)?;
    let est = match &constraints {
        None => ols_estimate(&problem),
        Some(c) => constrained_estimate(&problem, c)?,
    };
    let metrics = match &common.truth {
        Some(p) => Some(error_metrics(&est.matrix, &io::read_matrix(p)?)?),
        None => None,
    };
    if est.rank_deficient {
        eprintln!("warning: regressors have rank {} < {}", est.rank, problem.n());
    }
    let text = match cli.out {
        OutFormat::Csv => {
            if let Some(m) = metrics {
                eprintln!("structure_error={} magnitude_error={}", m.structure, m.magnitude);
            }
            io::format_matrix(&est.matrix)
        }
        OutFormat::Json => {
            let rows: Vec<Vec<f64>> = est
                .matrix
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect();
            let value = serde_json::json!({
                "matrix": rows,
                "rank": est.rank,
                "rank_deficient": est.rank_deficient,
                "zero_at_positive": est.zero_at_positive,
                "metrics": metrics,
            });
            format!("{}\n", serde_json::to_string_pretty(&value)?)
        }
    };
    emit(&text, common.output.as_deref())
}

fn experiment(cli: &Cli, which: Experiment) -> AnyResult<()> {
    let mut cfg = load_config(cli)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let table = match which {
        Experiment::Fig1a => run_onehop_accuracy(&cfg)?,
        Experiment::Fig1b => run_multihop_accuracy(&cfg)?,
        Experiment::Fig1c => run_ls_improvement(&cfg)?,
        Experiment::Multi => run_multi_excitation(&cfg)?,
    };
    emit_table(&table, cli.out)
}

fn run(cli: &Cli) -> AnyResult<()> {
    match &cli.command {
        Command::Generate(a) => generate(cli, a),
        Command::Simulate(a) => simulate_cmd(cli, a),
        Command::DesignExcitation(a) => design(cli, a),
        Command::Infer(c) => infer(cli, c),
        Command::Estimate(c) => estimate(cli, c),
        Command::Experiment { which } => experiment(cli, *which),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
