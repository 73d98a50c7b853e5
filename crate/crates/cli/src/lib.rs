//! Command-line front end for the `lgp` library.
//!
//! Every subcommand reads and writes the plain-text tables and JSON files
//! defined in `lgp::io`, so the output of one command feeds the next.
//! Exit codes: 0 on success, 1 for usage or input errors, 2 when a numerical
//! step (training, factorization, root finding) fails.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use serde::Serialize;

use lgp::error::{IoError, ModelError, RolloutError, SystemError, TrainError};
use lgp::experiments::{
    evaluate_predictor, metrics_table, run_benchmark, summarize, summary_table, BenchmarkError, BenchmarkPlan,
    Method, MetricsRow, RunSpec,
};
use lgp::io::{self, Table, TrajectoryRecord};
use lgp::metrics::{energy_stats, rmse, EnergyStats};
use lgp::model::{AnchorKind, KernelPair, TrainedLgp};
use lgp::operators::OperatorMode;
use lgp::rollout::{rollout, simulate_true, StepDiagnostics};
use lgp::systems::{make_test_scenario, sample_triplets, system_by_name, zero_inputs, SamplingBounds, SystemModel};
use lgp::training::{fit, FitReport, TrainConfig, Trajectory};

pub const FIELD_SCHEMA: &str = "lgp-field v1";

#[derive(Debug, Parser)]
#[command(name = "lgp", version, about = "Learn and roll out Lagrangian Gaussian process models")]
struct Cli {
    /// Seed for every random draw (datasets, scenarios, restarts).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for data-parallel loops.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Directory for outputs whose path is not given explicitly.
    #[arg(long, global = true, env = "LGP_OUTPUT_DIR", default_value = ".")]
    output_dir: PathBuf,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a ground-truth trajectory.
    Simulate(SimulateArgs),
    /// Sample a training dataset of position triplets.
    GenData(GenDataArgs),
    /// Fit hyperparameters and slack, then save the conditioned model.
    Train(TrainArgs),
    /// Roll a trained model forward from two initial configurations.
    Rollout(RolloutArgs),
    /// Score trained models on random test scenarios.
    Evaluate(EvaluateArgs),
    /// Posterior mean and standard deviation of L, F or H on a grid.
    ExportField(ExportFieldArgs),
    /// Run a sweep described by a TOML plan.
    Benchmark(BenchmarkArgs),
}

#[derive(Debug, Args)]
struct ScenarioArgs {
    /// Initial configuration, comma separated (default: random in the state box).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    q0: Option<Vec<f64>>,
    /// Initial velocity, comma separated (default: random in the state box).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    qdot0: Option<Vec<f64>>,
    /// Zero input instead of a random sinusoid.
    #[arg(long)]
    unforced: bool,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// `pendulum1`..`pendulum3`, `pendulumN-conservative` or `oscillator`.
    #[arg(long)]
    system: String,
    #[arg(long, default_value_t = 200)]
    steps: usize,
    #[arg(long, default_value_t = 0.05)]
    h: f64,
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Trajectory file [default: <output-dir>/trajectory.csv].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GenDataArgs {
    #[arg(long)]
    system: String,
    /// Number of triplets.
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0.05)]
    h: f64,
    /// Sample with zero input.
    #[arg(long)]
    unforced: bool,
    /// Dataset file [default: <output-dir>/dataset.csv].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Dataset file written by `gen-data` or by hand.
    #[arg(long)]
    data: PathBuf,
    /// physics, physics-pressure or generic.
    #[arg(long, default_value = "physics")]
    kernel: String,
    /// continuous or discrete.
    #[arg(long, default_value = "continuous")]
    mode: String,
    /// TOML file with training settings; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Optimize hyperparameters on at most this many triplets.
    #[arg(long)]
    max_opt_points: Option<usize>,
    /// origin or perturbed.
    #[arg(long)]
    anchor: Option<String>,
    /// Reference trajectory for the slack search.
    #[arg(long, conflicts_with = "heldout_system")]
    heldout: Option<PathBuf>,
    /// Simulate the slack-search trajectory with this system
    /// [default: the dataset's provenance when it names a known system].
    #[arg(long)]
    heldout_system: Option<String>,
    /// Keep the training slack instead of searching on a held-out trajectory.
    #[arg(long)]
    no_slack_search: bool,
    /// Model file [default: <output-dir>/model.json].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Fit report [default: <output-dir>/fit_report.json].
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RolloutArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 20)]
    steps: usize,
    /// Prediction step [default: the training step].
    #[arg(long)]
    h: Option<f64>,
    /// Trajectory file supplying initial configurations and inputs; its
    /// positions are used as the reference.
    #[arg(long, conflicts_with = "system")]
    scenario: Option<PathBuf>,
    /// System for a random scenario and reference
    /// [default: the training data's provenance when known].
    #[arg(long)]
    system: Option<String>,
    #[command(flatten)]
    init: ScenarioArgs,
    /// Trajectory file [default: <output-dir>/rollout.csv].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Diagnostics JSON [default: <output-dir>/rollout_diagnostics.json].
    #[arg(long)]
    diagnostics: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// One or more model files.
    #[arg(long, num_args = 1.., required = true)]
    model: Vec<PathBuf>,
    #[arg(long)]
    system: Option<String>,
    #[arg(long, default_value_t = 50)]
    scenarios: usize,
    #[arg(long, default_value_t = 20)]
    horizon: usize,
    /// Prediction step [default: each model's training step].
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    unforced: bool,
    /// Metrics table [default: <output-dir>/metrics.csv].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Summary table [default: <output-dir>/summary.csv].
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FieldObservable {
    Lagrangian,
    Force,
    Hamiltonian,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Axis {
    lo: f64,
    hi: f64,
    n: usize,
}

impl Axis {
    fn points(&self) -> Vec<f64> {
        if self.n == 1 {
            return vec![self.lo];
        }
        (0..self.n).map(|i| self.lo + (self.hi - self.lo) * i as f64 / (self.n - 1) as f64).collect()
    }
}

fn parse_axis(s: &str) -> Result<Axis, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [lo, hi, n] = parts[..] else { return Err(format!("expected lo:hi:n, got '{s}'")) };
    let lo: f64 = lo.trim().parse().map_err(|_| format!("bad lower bound '{lo}'"))?;
    let hi: f64 = hi.trim().parse().map_err(|_| format!("bad upper bound '{hi}'"))?;
    let n: usize = n.trim().parse().map_err(|_| format!("bad point count '{n}'"))?;
    if n == 0 || !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(format!("empty or unordered axis '{s}'"));
    }
    Ok(Axis { lo, hi, n })
}

#[derive(Debug, Args)]
struct ExportFieldArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum)]
    observable: FieldObservable,
    /// Configuration axis as lo:hi:n.
    #[arg(long, value_parser = parse_axis, allow_hyphen_values = true, default_value = "-3.141592653589793:3.141592653589793:41")]
    q_range: Axis,
    /// Velocity axis as lo:hi:n.
    #[arg(long, value_parser = parse_axis, allow_hyphen_values = true, default_value = "-4:4:41")]
    v_range: Axis,
    /// Coordinate swept by the grid; the others stay at zero.
    #[arg(long, default_value_t = 0)]
    dim: usize,
    /// Input applied to every coordinate when exporting the force.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    u: f64,
    /// Field table [default: <output-dir>/field.csv].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchmarkArgs {
    /// TOML benchmark plan.
    #[arg(long)]
    plan: PathBuf,
    /// Directory for metrics.csv, summary.csv and report.json
    /// [default: <output-dir>].
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Numerical(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Numerical(m) => m,
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Model(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<RolloutError> for CliError {
    fn from(e: RolloutError) -> Self {
        match e {
            RolloutError::Input(_) => CliError::Usage(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(_) | TrainError::InsufficientData(_) => CliError::Usage(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<SystemError> for CliError {
    fn from(e: SystemError) -> Self {
        match e {
            SystemError::Params(_) => CliError::Usage(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<BenchmarkError> for CliError {
    fn from(e: BenchmarkError) -> Self {
        match e {
            BenchmarkError::System(s) => s.into(),
            BenchmarkError::Io(i) => i.into(),
            BenchmarkError::Plan(_) => CliError::Usage(e.to_string()),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code. Diagnostics go to standard error.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();
    match with_jobs(cli.jobs, || dispatch(&cli)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("lgp: {}", e.message());
            e.code()
        }
    }
}

#[cfg(feature = "parallel")]
fn with_jobs<F: FnOnce() -> CliResult<()> + Send>(jobs: Option<usize>, f: F) -> CliResult<()> {
    match jobs {
        None => f(),
        Some(0) => Err(usage("--jobs must be at least 1")),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build().map_err(|e| usage(e.to_string()))?;
            pool.install(f)
        }
    }
}

#[cfg(not(feature = "parallel"))]
fn with_jobs<F: FnOnce() -> CliResult<()> + Send>(jobs: Option<usize>, f: F) -> CliResult<()> {
    if jobs == Some(0) {
        return Err(usage("--jobs must be at least 1"));
    }
    f()
}

fn dispatch(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Simulate(a) => simulate(cli, a),
        Command::GenData(a) => gen_data(cli, a),
        Command::Train(a) => train(cli, a),
        Command::Rollout(a) => rollout_cmd(cli, a),
        Command::Evaluate(a) => evaluate(cli, a),
        Command::ExportField(a) => export_field(cli, a),
        Command::Benchmark(a) => benchmark(cli, a),
    }
}

fn output_path(cli: &Cli, explicit: &Option<PathBuf>, default: &str) -> CliResult<PathBuf> {
    if let Some(p) = explicit {
        return Ok(p.clone());
    }
    std::fs::create_dir_all(&cli.output_dir).map_err(|e| usage(format!("{}: {e}", cli.output_dir.display())))?;
    Ok(cli.output_dir.join(default))
}

fn seed(cli: &Cli) -> u64 {
    cli.seed.unwrap_or(0)
}

fn system(name: &str) -> CliResult<Box<dyn SystemModel>> {
    Ok(system_by_name(name)?)
}

fn vector(v: &Option<Vec<f64>>, n: usize, flag: &str) -> CliResult<Option<DVector<f64>>> {
    match v {
        None => Ok(None),
        Some(x) if x.len() == n => Ok(Some(DVector::from_column_slice(x))),
        Some(x) => Err(usage(format!("--{flag} needs {n} values, got {}", x.len()))),
    }
}

fn bounds(n: usize, unforced: bool) -> SamplingBounds {
    if unforced {
        SamplingBounds::unforced(n)
    } else {
        SamplingBounds::default_for(n)
    }
}

/// Initial state and `steps + 1` inputs drawn from the seed, with overrides.
fn scenario(
    sys: &dyn SystemModel,
    args: &ScenarioArgs,
    seed: u64,
    steps: usize,
    h: f64,
) -> CliResult<(DVector<f64>, DVector<f64>, Vec<DVector<f64>>)> {
    let n = sys.n_q();
    let mut s = make_test_scenario(sys, seed, steps, h, &bounds(n, args.unforced));
    if args.unforced {
        s.inputs = zero_inputs(n, steps);
    }
    let q0 = vector(&args.q0, n, "q0")?.unwrap_or(s.q0);
    let qdot0 = vector(&args.qdot0, n, "qdot0")?.unwrap_or(s.qdot0);
    Ok((q0, qdot0, s.inputs))
}

fn check_step(h: f64) -> CliResult<()> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(usage(format!("step size must be positive, got {h}")))
    }
}

fn simulate(cli: &Cli, a: &SimulateArgs) -> CliResult<()> {
    check_step(a.h)?;
    let sys = system(&a.system)?;
    let (q0, qdot0, inputs) = scenario(sys.as_ref(), &a.scenario, seed(cli), a.steps + 1, a.h)?;
    let q = simulate_true(sys.as_ref(), &q0, &qdot0, &inputs, a.h, a.steps)?;
    let path = output_path(cli, &a.out, "trajectory.csv")?;
    io::write_trajectory(&path, &TrajectoryRecord::plain(Trajectory { h: a.h, q, u: inputs }))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn gen_data(cli: &Cli, a: &GenDataArgs) -> CliResult<()> {
    let sys = system(&a.system)?;
    let data = sample_triplets(sys.as_ref(), a.n, &bounds(sys.n_q(), a.unforced), a.h, seed(cli))?;
    let path = output_path(cli, &a.out, "dataset.csv")?;
    io::write_dataset(&path, &data)?;
    println!("wrote {} ({} triplets)", path.display(), data.len());
    Ok(())
}

fn train_config(cli: &Cli, a: &TrainArgs) -> CliResult<TrainConfig> {
    let mut cfg = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| usage(format!("{}: {e}", p.display())))?;
            toml::from_str::<TrainConfig>(&text).map_err(|e| usage(format!("{}: {e}", p.display())))?
        }
        None => TrainConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(r) = a.restarts {
        cfg.restarts = r;
    }
    if let Some(m) = a.max_iter {
        cfg.max_iter = m;
    }
    if a.max_opt_points.is_some() {
        cfg.max_opt_points = a.max_opt_points;
    }
    if let Some(k) = &a.anchor {
        cfg.anchor = k.parse::<AnchorKind>().map_err(usage)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Held-out trajectory for the slack search, if one can be had.
fn heldout(a: &TrainArgs, data: &lgp::Dataset, mode: OperatorMode, cfg: &TrainConfig) -> CliResult<Option<(Trajectory, String)>> {
    if a.no_slack_search {
        return Ok(None);
    }
    if let Some(p) = &a.heldout {
        let rec = io::read_trajectory(p)?;
        return Ok(Some((rec.trajectory, p.display().to_string())));
    }
    let name = match &a.heldout_system {
        Some(n) => n.clone(),
        None if system_by_name(&data.provenance).is_ok() => data.provenance.clone(),
        None => {
            log::info!("no reference system for '{}'; keeping the training slack", data.provenance);
            return Ok(None);
        }
    };
    let sys = system(&name)?;
    if sys.n_q() != data.n_q {
        return Err(usage(format!("system '{name}' has n_q = {}, dataset has {}", sys.n_q(), data.n_q)));
    }
    let forced = data.triplets.iter().any(|t| t.u_prev.amax() > 0.0 || t.u_curr.amax() > 0.0);
    let plan = BenchmarkPlan { seed: cfg.seed, forced, train: cfg.clone(), ..Default::default() };
    let run = RunSpec { run_id: 0, method: Method::Physics, mode, n_q: data.n_q, n_train: data.len(), h_train: data.h_train };
    Ok(Some((plan.heldout(sys.as_ref(), &run)?, name)))
}

#[derive(Serialize)]
struct TrainReport {
    kernel: String,
    mode: String,
    n_train: usize,
    h_train: f64,
    heldout: Option<String>,
    fit: FitReport,
}

fn train(cli: &Cli, a: &TrainArgs) -> CliResult<()> {
    let data = io::read_dataset(&a.data)?;
    let kernels = KernelPair::by_name(&a.kernel, data.n_q).map_err(|e| usage(e.to_string()))?;
    let mode: OperatorMode = a.mode.parse().map_err(usage)?;
    let cfg = train_config(cli, a)?;
    let held = heldout(a, &data, mode, &cfg)?;
    let (model, report) = fit(&data, &kernels, &cfg, mode, held.as_ref().map(|(t, _)| t))?;
    let model_path = output_path(cli, &a.out, "model.json")?;
    let report_path = output_path(cli, &a.report, "fit_report.json")?;
    io::write_model(&model_path, &model)?;
    let summary = TrainReport {
        kernel: kernels.name().to_string(),
        mode: mode.name().to_string(),
        n_train: data.len(),
        h_train: data.h_train,
        heldout: held.map(|(_, name)| name),
        fit: report,
    };
    io::write_json(&report_path, &summary)?;
    println!("wrote {} (slack {:e}, objective {:.6})", model_path.display(), summary.fit.slack, summary.fit.objective);
    Ok(())
}

#[derive(Serialize)]
struct RolloutDiagnostics {
    h: f64,
    steps_requested: usize,
    steps_completed: usize,
    convergence_rate: f64,
    failure: Option<String>,
    /// Against the scenario file or the simulated reference, when available.
    rmse: Option<f64>,
    energy: Option<EnergyStats>,
    steps: Vec<StepDiagnostics>,
}

fn rollout_cmd(cli: &Cli, a: &RolloutArgs) -> CliResult<()> {
    let model = io::read_model(&a.model)?;
    let n = model.n_q();
    let h = a.h.unwrap_or(model.h_train());
    check_step(h)?;
    let steps = a.steps;
    let sys = match &a.system {
        Some(name) => Some(system(name)?),
        None if a.scenario.is_none() => system_by_name(&model.dataset.provenance).ok(),
        None => None,
    };
    if let Some(s) = &sys {
        if s.n_q() != n {
            return Err(usage(format!("system '{}' has n_q = {}, model has {n}", s.name(), s.n_q())));
        }
    }
    let (q0, q1, inputs, truth) = if let Some(p) = &a.scenario {
        let rec = io::read_trajectory(p)?;
        let tr = rec.trajectory;
        if tr.q.len() < 2 || tr.u.len() < steps + 1 || tr.q[0].len() != n {
            return Err(usage(format!("{}: need two configurations of size {n} and {} inputs", p.display(), steps + 1)));
        }
        if (tr.h - h).abs() > 1e-12 * h {
            log::warn!("scenario step {} differs from prediction step {h}", tr.h);
        }
        let truth = (tr.q.len() >= steps + 2).then(|| tr.q[..steps + 2].to_vec());
        (tr.q[0].clone(), tr.q[1].clone(), tr.u[..steps + 1].to_vec(), truth)
    } else if let Some(s) = &sys {
        let (q0, qdot0, inputs) = scenario(s.as_ref(), &a.init, seed(cli), steps, h)?;
        let truth = simulate_true(s.as_ref(), &q0, &qdot0, &inputs, h, steps).ok();
        let q1 = &q0 + &qdot0 * h;
        (q0, q1, inputs, truth)
    } else {
        let q0 = vector(&a.init.q0, n, "q0")?.ok_or_else(|| usage("no known system: pass --scenario, --system or --q0"))?;
        let qdot0 = vector(&a.init.qdot0, n, "qdot0")?.unwrap_or_else(|| DVector::zeros(n));
        let q1 = &q0 + &qdot0 * h;
        (q0, q1, zero_inputs(n, steps), None)
    };

    let r = rollout(&model, &q0, &q1, &inputs, h, steps, true)?;
    let len = r.trajectory.len();
    let mut u = inputs.clone();
    u.push(inputs[steps].clone());
    let mut uncertainty = vec![f64::NAN; 2];
    uncertainty.extend(&r.uncertainty);
    let mut converged = vec![true; 2];
    converged.extend(r.diagnostics.iter().map(|d| d.converged));
    let rec = TrajectoryRecord { trajectory: Trajectory { h, q: r.trajectory.clone(), u: u[..len].to_vec() }, uncertainty, converged };

    let diag = RolloutDiagnostics {
        h,
        steps_requested: steps,
        steps_completed: len - 2,
        convergence_rate: r.convergence_rate(),
        failure: r.failure.as_ref().map(|e| e.to_string()),
        rmse: truth.filter(|_| r.completed()).and_then(|t| rmse(&t, &r.trajectory).ok()),
        energy: sys.as_ref().and_then(|s| energy_stats(&r.trajectory, s.as_ref(), h).ok()),
        steps: r.diagnostics.clone(),
    };
    let out = output_path(cli, &a.out, "rollout.csv")?;
    let diag_path = output_path(cli, &a.diagnostics, "rollout_diagnostics.json")?;
    io::write_trajectory(&out, &rec)?;
    io::write_json(&diag_path, &diag)?;
    if let Some(e) = r.failure {
        return Err(CliError::Numerical(format!("rollout stopped after {} of {steps} steps: {e}", len - 2)));
    }
    match diag.rmse {
        Some(x) => println!("wrote {} ({steps} steps, rmse {x:.3e})", out.display()),
        None => println!("wrote {} ({steps} steps)", out.display()),
    }
    Ok(())
}

fn model_label(m: &TrainedLgp) -> String {
    format!("lgp-{}-{}", m.mode.name(), m.kernels.name())
}

fn evaluate(cli: &Cli, a: &EvaluateArgs) -> CliResult<()> {
    if a.scenarios == 0 || a.horizon == 0 {
        return Err(usage("--scenarios and --horizon must be positive"));
    }
    let plan = BenchmarkPlan { scenarios: a.scenarios, horizon: a.horizon, seed: seed(cli), forced: !a.unforced, ..Default::default() };
    let mut rows = Vec::new();
    for (i, path) in a.model.iter().enumerate() {
        let model = io::read_model(path)?;
        let name = a.system.clone().unwrap_or_else(|| model.dataset.provenance.clone());
        let sys = system(&name)?;
        if sys.n_q() != model.n_q() {
            return Err(usage(format!("system '{name}' has n_q = {}, {} has {}", sys.n_q(), path.display(), model.n_q())));
        }
        let h = a.h.unwrap_or(model.h_train());
        check_step(h)?;
        let label = model_label(&model);
        let scores = evaluate_predictor(&plan, sys.as_ref(), &model, h)?;
        for (k, (err, slope, dev, conv)) in scores.into_iter().enumerate() {
            rows.push(MetricsRow {
                run_id: i,
                method: label.clone(),
                n_q: model.n_q(),
                n_train: model.dataset.len(),
                h_train: model.h_train(),
                h_pred: h,
                scenario: k,
                rmse: err,
                energy_slope: slope,
                max_rel_dev: dev,
                convergence_rate: conv,
                wall_time_s: f64::NAN,
            });
        }
    }
    let out = output_path(cli, &a.out, "metrics.csv")?;
    let summary_path = output_path(cli, &a.summary, "summary.csv")?;
    metrics_table(&rows).write(&out)?;
    let summary = summarize(&rows);
    summary_table(&summary).write(&summary_path)?;
    print!("{}", summary_table(&summary).render());
    Ok(())
}

/// Native query point for `(q, q̇)`; discrete models see the segment
/// `(q − h q̇/2, q + h q̇/2)`.
fn native_point(m: &TrainedLgp, q: &DVector<f64>, v: &DVector<f64>) -> Vec<f64> {
    match m.mode {
        OperatorMode::ContinuousMidpoint => q.iter().chain(v.iter()).copied().collect(),
        OperatorMode::Discrete => {
            let half = v * (0.5 * m.h_train());
            let a = q - &half;
            let b = q + &half;
            a.iter().chain(b.iter()).copied().collect()
        }
    }
}

fn export_field(cli: &Cli, a: &ExportFieldArgs) -> CliResult<()> {
    let model = io::read_model(&a.model)?;
    let n = model.n_q();
    if a.dim >= n {
        return Err(usage(format!("--dim must be below n_q = {n}")));
    }
    let qs = a.q_range.points();
    let vs = a.v_range.points();
    let grid: Vec<(f64, f64)> = qs.iter().flat_map(|&q| vs.iter().map(move |&v| (q, v))).collect();
    let eval = |&(qx, vx): &(f64, f64)| -> Result<Vec<(usize, f64, f64)>, ModelError> {
        let mut q = DVector::zeros(n);
        let mut v = DVector::zeros(n);
        q[a.dim] = qx;
        v[a.dim] = vx;
        let z = native_point(&model, &q, &v);
        let post = match a.observable {
            FieldObservable::Lagrangian => model.posterior_lagrangian(&z)?,
            FieldObservable::Hamiltonian => model.posterior_hamiltonian(&z)?,
            FieldObservable::Force => {
                let mut query = vec![a.u; n];
                query.extend(z);
                model.posterior_force(&query)?
            }
        };
        Ok((0..post.mean.len()).map(|c| (c, post.mean[c], post.covariance[(c, c)].max(0.0).sqrt())).collect())
    };
    // fail fast on mode errors before spreading the grid over workers
    eval(&grid[0])?;
    let values = lgp::par::map_indexed(grid.len(), |i| eval(&grid[i]));
    let mut t = Table::new(FIELD_SCHEMA, ["q", "qdot", "component", "mean", "std"].iter().map(|s| s.to_string()).collect());
    let obs = format!("{:?}", a.observable).to_lowercase();
    t.meta.push(("observable".into(), obs));
    t.meta.push(("mode".into(), model.mode.name().into()));
    t.meta.push(("dim".into(), a.dim.to_string()));
    t.meta.push(("u".into(), io::fmt_f64(a.u)));
    for ((q, v), vals) in grid.iter().zip(values) {
        for (c, mean, std) in vals? {
            t.rows.push(vec![io::fmt_f64(*q), io::fmt_f64(*v), c.to_string(), io::fmt_f64(mean), io::fmt_f64(std)]);
        }
    }
    let path = output_path(cli, &a.out, "field.csv")?;
    t.write(&path)?;
    println!("wrote {} ({} grid points)", path.display(), grid.len());
    Ok(())
}

fn read_plan(path: &Path) -> CliResult<BenchmarkPlan> {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn benchmark(cli: &Cli, a: &BenchmarkArgs) -> CliResult<()> {
    let mut plan = read_plan(&a.plan)?;
    if let Some(s) = cli.seed {
        plan.seed = s;
    }
    let out = a.out_dir.clone().unwrap_or_else(|| cli.output_dir.clone());
    std::fs::create_dir_all(&out).map_err(|e| usage(format!("{}: {e}", out.display())))?;
    let result = run_benchmark(&plan)?;
    metrics_table(&result.rows).write(&out.join("metrics.csv"))?;
    summary_table(&result.summary).write(&out.join("summary.csv"))?;
    io::write_json(&out.join("report.json"), &result.reports)?;
    print!("{}", summary_table(&result.summary).render());
    let failed: Vec<_> = result.reports.iter().filter_map(|r| r.error.as_ref().map(|e| format!("run {}: {e}", r.run_id))).collect();
    if failed.len() == result.reports.len() {
        return Err(CliError::Numerical(format!("every run failed; first: {}", failed[0])));
    }
    Ok(())
}
