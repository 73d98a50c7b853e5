//! Seeded benchmark sweeps: train each configuration once, roll it out on a
//! shared set of test scenarios, and summarize the per-scenario errors.

use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{IoError, ModelError, RolloutError, SystemError, TrainError};
use crate::io::{fmt_f64, Table};
use crate::metrics::{energy_stats, rmse};
use crate::model::KernelPair;
use crate::operators::OperatorMode;
use crate::par;
use crate::rollout::{rollout, simulate_true, StepPredictor};
use crate::systems::{make_test_scenario, sample_triplets, system_by_name, zero_inputs, SamplingBounds, SystemModel, TestScenario};
use crate::training::{fit, fit_baseline_gp, TrainConfig, Trajectory};

pub const MAX_RUNS: usize = 10_000;
pub const METRICS_SCHEMA: &str = "lgp-metrics v1";
pub const SUMMARY_SCHEMA: &str = "lgp-summary v1";

/// A model family evaluated by a benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Physics,
    PhysicsPressure,
    Generic,
    Baseline,
}

impl Method {
    pub fn parse(s: &str) -> Result<Self, String> {
        match s {
            "physics" => Ok(Method::Physics),
            "physics-pressure" => Ok(Method::PhysicsPressure),
            "generic" => Ok(Method::Generic),
            "baseline" => Ok(Method::Baseline),
            _ => Err(format!("unknown method '{s}' (physics, physics-pressure, generic, baseline)")),
        }
    }

    pub fn kernels(self, n_q: usize) -> Option<KernelPair> {
        match self {
            Method::Physics => Some(KernelPair::physics(n_q)),
            Method::PhysicsPressure => Some(KernelPair::physics_pressure(n_q)),
            Method::Generic => Some(KernelPair::generic(n_q)),
            Method::Baseline => None,
        }
    }

    pub fn label(self, mode: OperatorMode) -> String {
        match self {
            Method::Baseline => "baseline-gp".to_string(),
            _ => format!("lgp-{}-{}", mode.name(), self.kernels(1).map_or("", |k| k.name())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkPlan {
    /// `pendulum`, `pendulum-conservative` or `oscillator`.
    pub system: String,
    pub n_q: Vec<usize>,
    pub n_train: Vec<usize>,
    pub h_train: Vec<f64>,
    /// Prediction steps; empty means "same as training".
    pub h_pred: Vec<f64>,
    pub methods: Vec<Method>,
    pub modes: Vec<OperatorMode>,
    pub scenarios: usize,
    pub horizon: usize,
    pub seed: u64,
    /// Draw inputs when sampling and in scenarios; off means `u = 0`.
    pub forced: bool,
    pub train: TrainConfig,
}

impl Default for BenchmarkPlan {
    fn default() -> Self {
        BenchmarkPlan {
            system: "pendulum".into(),
            n_q: vec![1],
            n_train: vec![100],
            h_train: vec![0.05],
            h_pred: Vec::new(),
            methods: vec![Method::Physics, Method::Generic, Method::Baseline],
            modes: vec![OperatorMode::ContinuousMidpoint],
            scenarios: 50,
            horizon: 20,
            seed: 0,
            forced: true,
            train: TrainConfig::default(),
        }
    }
}

/// One trained configuration of a plan.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub run_id: usize,
    pub method: Method,
    pub mode: OperatorMode,
    pub n_q: usize,
    pub n_train: usize,
    pub h_train: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum BenchmarkError {
    #[error("invalid plan: {0}")]
    Plan(String),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Io(#[from] IoError),
}

/// SplitMix64 finalizer over a tagged tuple.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    let mut z = base;
    for &t in tags {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(t);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

impl BenchmarkPlan {
    pub fn system_name(&self, n_q: usize) -> String {
        match self.system.as_str() {
            "pendulum" => format!("pendulum{n_q}"),
            "pendulum-conservative" => format!("pendulum{n_q}-conservative"),
            other => other.to_string(),
        }
    }

    pub fn system(&self, n_q: usize) -> Result<Box<dyn SystemModel>, BenchmarkError> {
        let s = system_by_name(&self.system_name(n_q))?;
        if s.n_q() != n_q {
            return Err(BenchmarkError::Plan(format!("system '{}' has n_q = {}, plan asks for {n_q}", self.system, s.n_q())));
        }
        Ok(s)
    }

    pub fn bounds(&self, n_q: usize) -> SamplingBounds {
        if self.forced {
            SamplingBounds::default_for(n_q)
        } else {
            SamplingBounds::unforced(n_q)
        }
    }

    pub fn prediction_steps(&self, h_train: f64) -> Vec<f64> {
        if self.h_pred.is_empty() {
            vec![h_train]
        } else {
            self.h_pred.clone()
        }
    }

    pub fn validate(&self) -> Result<(), BenchmarkError> {
        let empty = self.n_q.is_empty() || self.n_train.is_empty() || self.h_train.is_empty() || self.methods.is_empty() || self.modes.is_empty();
        if empty {
            return Err(BenchmarkError::Plan("every sweep list needs at least one entry".into()));
        }
        if self.scenarios == 0 || self.horizon == 0 {
            return Err(BenchmarkError::Plan("scenarios and horizon must be positive".into()));
        }
        if self.h_train.iter().chain(&self.h_pred).any(|&h| !(h > 0.0 && h.is_finite())) {
            return Err(BenchmarkError::Plan("step sizes must be positive".into()));
        }
        let runs = self.runs().len() * self.h_pred.len().max(1);
        if runs > MAX_RUNS {
            return Err(BenchmarkError::Plan(format!("{runs} runs exceed the limit of {MAX_RUNS}")));
        }
        self.train.validate().map_err(|e| BenchmarkError::Plan(e.to_string()))?;
        for &n in &self.n_q {
            self.system(n)?;
        }
        Ok(())
    }

    /// Cartesian product in a fixed order; the baseline ignores the mode list.
    pub fn runs(&self) -> Vec<RunSpec> {
        let mut out = Vec::new();
        for &n_q in &self.n_q {
            for &n_train in &self.n_train {
                for &h_train in &self.h_train {
                    for &method in &self.methods {
                        let modes: &[OperatorMode] = if method == Method::Baseline { &self.modes[..1] } else { &self.modes };
                        for &mode in modes {
                            out.push(RunSpec { run_id: out.len(), method, mode, n_q, n_train, h_train });
                        }
                    }
                }
            }
        }
        out
    }

    fn data_tags(n_q: usize, n_train: usize, h: f64) -> [u64; 3] {
        [n_q as u64, n_train as u64, h.to_bits()]
    }

    pub fn dataset_seed(&self, r: &RunSpec) -> u64 {
        let t = Self::data_tags(r.n_q, r.n_train, r.h_train);
        derive_seed(self.seed, &[1, t[0], t[1], t[2]])
    }

    pub fn scenario(&self, system: &dyn SystemModel, k: usize, h: f64, steps: usize) -> TestScenario {
        let n = system.n_q();
        let mut s = make_test_scenario(system, derive_seed(self.seed, &[2, n as u64, k as u64]), steps, h, &self.bounds(n));
        if !self.forced {
            s.inputs = zero_inputs(n, steps);
        }
        s
    }

    /// Fresh reference trajectory at the training step for the slack search.
    ///
    /// Initial conditions are redrawn until the whole trajectory stays inside
    /// the sampling box, so the search scores the model where it has data.
    pub fn heldout(&self, system: &dyn SystemModel, r: &RunSpec) -> Result<Trajectory, BenchmarkError> {
        let t = Self::data_tags(r.n_q, r.n_train, r.h_train);
        let n = system.n_q();
        let steps = self.train.heldout_steps;
        let bounds = self.bounds(n);
        let mut last = None;
        for attempt in 0..100u64 {
            let mut s = make_test_scenario(system, derive_seed(self.seed, &[3, t[0], t[1], t[2], attempt]), steps, r.h_train, &bounds);
            if !self.forced {
                s.inputs = zero_inputs(n, steps);
            }
            let Ok(q) = simulate_true(system, &s.q0, &s.qdot0, &s.inputs, r.h_train, steps) else { continue };
            let traj = Trajectory { h: r.h_train, q, u: s.inputs };
            if inside(&traj, &bounds) {
                return Ok(traj);
            }
            last = Some(traj);
        }
        log::warn!("no held-out trajectory stayed inside the sampling box; using the last draw");
        last.ok_or_else(|| BenchmarkError::Plan("could not simulate a held-out trajectory".into()))
    }
}

fn inside(t: &Trajectory, b: &SamplingBounds) -> bool {
    let q_ok = t.q.iter().all(|q| q.iter().zip(&b.q).all(|(v, (lo, hi))| v >= lo && v <= hi));
    let v_ok = t.q.windows(2).all(|w| {
        let v = (&w[1] - &w[0]) / t.h;
        v.iter().zip(&b.qdot).all(|(x, (lo, hi))| x >= lo && x <= hi)
    });
    q_ok && v_ok
}

/// Per-scenario result of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub run_id: usize,
    pub method: String,
    pub n_q: usize,
    pub n_train: usize,
    pub h_train: f64,
    pub h_pred: f64,
    pub scenario: usize,
    /// `+∞` when the rollout stopped early.
    pub rmse: f64,
    pub energy_slope: f64,
    pub max_rel_dev: f64,
    pub convergence_rate: f64,
    /// Training plus rollout time; kept out of the metrics file.
    #[serde(skip)]
    pub wall_time_s: f64,
}

const METRIC_COLUMNS: [&str; 11] =
    ["run_id", "method", "n_q", "n_train", "h_train", "h_pred", "scenario", "rmse", "energy_slope", "max_rel_dev", "convergence_rate"];

pub fn metrics_table(rows: &[MetricsRow]) -> Table {
    let mut t = Table::new(METRICS_SCHEMA, METRIC_COLUMNS.iter().map(|s| s.to_string()).collect());
    for r in rows {
        t.rows.push(vec![
            r.run_id.to_string(),
            r.method.clone(),
            r.n_q.to_string(),
            r.n_train.to_string(),
            fmt_f64(r.h_train),
            fmt_f64(r.h_pred),
            r.scenario.to_string(),
            fmt_f64(r.rmse),
            fmt_f64(r.energy_slope),
            fmt_f64(r.max_rel_dev),
            fmt_f64(r.convergence_rate),
        ]);
    }
    t
}

pub fn metrics_from_table(t: &Table) -> Result<Vec<MetricsRow>, IoError> {
    if t.schema != METRICS_SCHEMA || t.columns != METRIC_COLUMNS {
        return Err(IoError::Schema(format!("expected `{METRICS_SCHEMA}` with columns {}", METRIC_COLUMNS.join(","))));
    }
    let bad = |i: usize, c: &str| IoError::Schema(format!("row {}: bad `{c}`", i + 1));
    t.rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let f = |k: usize| r[k].parse::<f64>().map_err(|_| bad(i, METRIC_COLUMNS[k]));
            let u = |k: usize| r[k].parse::<usize>().map_err(|_| bad(i, METRIC_COLUMNS[k]));
            Ok(MetricsRow {
                run_id: u(0)?,
                method: r[1].clone(),
                n_q: u(2)?,
                n_train: u(3)?,
                h_train: f(4)?,
                h_pred: f(5)?,
                scenario: u(6)?,
                rmse: f(7)?,
                energy_slope: f(8)?,
                max_rel_dev: f(9)?,
                convergence_rate: f(10)?,
                wall_time_s: f64::NAN,
            })
        })
        .collect()
}

/// Sample quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi || sorted[lo] == sorted[hi] {
        sorted[lo]
    } else {
        sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

/// RMSE distribution of one `(run, h_pred)` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub run_id: usize,
    pub method: String,
    pub n_q: usize,
    pub n_train: usize,
    pub h_train: f64,
    pub h_pred: f64,
    pub scenarios: usize,
    pub diverged: usize,
    pub median: f64,
    pub mean: f64,
    pub q1: f64,
    pub q3: f64,
}

pub fn summarize(rows: &[MetricsRow]) -> Vec<SummaryRow> {
    let mut keys: Vec<(usize, u64)> = rows.iter().map(|r| (r.run_id, r.h_pred.to_bits())).collect();
    keys.sort_by(|a, b| a.0.cmp(&b.0).then(f64::from_bits(a.1).total_cmp(&f64::from_bits(b.1))));
    keys.dedup();
    keys.into_iter()
        .map(|(id, hb)| {
            let group: Vec<&MetricsRow> = rows.iter().filter(|r| r.run_id == id && r.h_pred.to_bits() == hb).collect();
            let mut v: Vec<f64> = group.iter().map(|r| r.rmse).collect();
            v.sort_by(f64::total_cmp);
            let first = group[0];
            SummaryRow {
                run_id: id,
                method: first.method.clone(),
                n_q: first.n_q,
                n_train: first.n_train,
                h_train: first.h_train,
                h_pred: first.h_pred,
                scenarios: v.len(),
                diverged: v.iter().filter(|x| !x.is_finite()).count(),
                median: quantile(&v, 0.5),
                mean: v.iter().sum::<f64>() / v.len() as f64,
                q1: quantile(&v, 0.25),
                q3: quantile(&v, 0.75),
            }
        })
        .collect()
}

pub fn summary_table(rows: &[SummaryRow]) -> Table {
    let cols = ["run_id", "method", "n_q", "n_train", "h_train", "h_pred", "scenarios", "diverged", "median_rmse", "mean_rmse", "q1_rmse", "q3_rmse"];
    let mut t = Table::new(SUMMARY_SCHEMA, cols.iter().map(|s| s.to_string()).collect());
    for r in rows {
        t.rows.push(vec![
            r.run_id.to_string(),
            r.method.clone(),
            r.n_q.to_string(),
            r.n_train.to_string(),
            fmt_f64(r.h_train),
            fmt_f64(r.h_pred),
            r.scenarios.to_string(),
            r.diverged.to_string(),
            fmt_f64(r.median),
            fmt_f64(r.mean),
            fmt_f64(r.q1),
            fmt_f64(r.q3),
        ]);
    }
    t
}

/// Timing and fit details that do not belong in the deterministic tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run_id: usize,
    pub method: String,
    pub train_time_s: f64,
    pub eval_time_s: f64,
    pub slack: Option<f64>,
    pub theta: Option<Vec<f64>>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkOutput {
    pub rows: Vec<MetricsRow>,
    pub summary: Vec<SummaryRow>,
    pub reports: Vec<RunReport>,
}

/// Scores one predictor on the plan's scenarios at step `h`.
pub fn evaluate_predictor(
    plan: &BenchmarkPlan,
    system: &dyn SystemModel,
    model: &dyn StepPredictor,
    h: f64,
) -> Result<Vec<(f64, f64, f64, f64)>, RolloutError> {
    let n = system.n_q();
    let steps = plan.horizon;
    let out = par::map_indexed(plan.scenarios, |k| -> Result<(f64, f64, f64, f64), RolloutError> {
        let s = plan.scenario(system, k, h, steps);
        let truth = simulate_true(system, &s.q0, &s.qdot0, &s.inputs, h, steps)?;
        let r = rollout(model, &s.q0, &s.q1, &s.inputs, h, steps, false)?;
        let err = if r.completed() { rmse(&truth, &r.trajectory).unwrap_or(f64::INFINITY) } else { f64::INFINITY };
        let (slope, dev) = match energy_stats(&r.trajectory, system, h) {
            Ok(e) => (e.slope, e.max_rel_dev),
            Err(_) => (f64::NAN, f64::NAN),
        };
        debug_assert_eq!(truth[0].len(), n);
        Ok((err, slope, dev, r.convergence_rate()))
    });
    out.into_iter().collect()
}

enum Trained {
    Lgp(Box<crate::model::TrainedLgp>),
    Baseline(Box<crate::training::BaselineGp>),
}

fn train_run(plan: &BenchmarkPlan, system: &dyn SystemModel, r: &RunSpec) -> Result<(Trained, Option<f64>, Option<Vec<f64>>), String> {
    let data = sample_triplets(system, r.n_train, &plan.bounds(r.n_q), r.h_train, plan.dataset_seed(r)).map_err(|e| e.to_string())?;
    let cfg = TrainConfig { seed: derive_seed(plan.seed, &[4, r.run_id as u64]), ..plan.train.clone() };
    match r.method.kernels(r.n_q) {
        Some(k) => {
            let held = plan.heldout(system, r).map_err(|e| e.to_string())?;
            let (m, rep) = fit(&data, &k, &cfg, r.mode, Some(&held)).map_err(|e: TrainError| e.to_string())?;
            Ok((Trained::Lgp(Box::new(m)), Some(rep.slack), Some(rep.theta.to_flat())))
        }
        None => {
            let gp = fit_baseline_gp(&data, &cfg).map_err(|e| e.to_string())?;
            Ok((Trained::Baseline(Box::new(gp)), None, None))
        }
    }
}

/// Runs the plan; runs execute concurrently and rows are ordered by run id.
pub fn run_benchmark(plan: &BenchmarkPlan) -> Result<BenchmarkOutput, BenchmarkError> {
    plan.validate()?;
    let runs = plan.runs();
    let results = par::map_indexed(runs.len(), |i| {
        let r = &runs[i];
        let label = r.method.label(r.mode);
        let system = plan.system(r.n_q).expect("validated system");
        let start = Instant::now();
        let trained = train_run(plan, system.as_ref(), r);
        let train_time = start.elapsed().as_secs_f64();
        let mut rows = Vec::new();
        let mut report = RunReport { run_id: r.run_id, method: label.clone(), train_time_s: train_time, eval_time_s: 0.0, slack: None, theta: None, error: None };
        let start = Instant::now();
        match trained {
            Ok((model, slack, theta)) => {
                report.slack = slack;
                report.theta = theta;
                let predictor: &dyn StepPredictor = match &model {
                    Trained::Lgp(m) => m.as_ref(),
                    Trained::Baseline(b) => b.as_ref(),
                };
                for h in plan.prediction_steps(r.h_train) {
                    let mismatched = (h - r.h_train).abs() > 1e-12 * r.h_train;
                    if mismatched && (r.method == Method::Baseline || r.mode == OperatorMode::Discrete) {
                        log::info!("run {}: {label} cannot predict at h = {h}; skipped", r.run_id);
                        continue;
                    }
                    let scores = evaluate_predictor(plan, system.as_ref(), predictor, h).unwrap_or_else(|e| {
                        log::warn!("run {}: evaluation failed: {e}", r.run_id);
                        vec![(f64::INFINITY, f64::NAN, f64::NAN, 0.0); plan.scenarios]
                    });
                    for (k, (err, slope, dev, conv)) in scores.into_iter().enumerate() {
                        rows.push(row(r, &label, h, k, err, slope, dev, conv));
                    }
                }
            }
            Err(e) => {
                log::warn!("run {} ({label}) failed to train: {e}", r.run_id);
                report.error = Some(e);
                for h in plan.prediction_steps(r.h_train) {
                    for k in 0..plan.scenarios {
                        rows.push(row(r, &label, h, k, f64::INFINITY, f64::NAN, f64::NAN, 0.0));
                    }
                }
            }
        }
        report.eval_time_s = start.elapsed().as_secs_f64();
        let total = report.train_time_s + report.eval_time_s;
        rows.iter_mut().for_each(|x| x.wall_time_s = total);
        (rows, report)
    });
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for (r, rep) in results {
        rows.extend(r);
        reports.push(rep);
    }
    let summary = summarize(&rows);
    Ok(BenchmarkOutput { rows, summary, reports })
}

#[allow(clippy::too_many_arguments)]
fn row(r: &RunSpec, label: &str, h: f64, k: usize, err: f64, slope: f64, dev: f64, conv: f64) -> MetricsRow {
    MetricsRow {
        run_id: r.run_id,
        method: label.to_string(),
        n_q: r.n_q,
        n_train: r.n_train,
        h_train: r.h_train,
        h_pred: h,
        scenario: k,
        rmse: err,
        energy_slope: slope,
        max_rel_dev: dev,
        convergence_rate: conv,
        wall_time_s: f64::NAN,
    }
}

/// Unforced rollout of a predictor from rest-relative initial conditions.
pub fn unforced_rollout(
    model: &dyn StepPredictor,
    q0: &DVector<f64>,
    qdot0: &DVector<f64>,
    h: f64,
    steps: usize,
) -> Result<Vec<DVector<f64>>, ModelError> {
    let n = q0.len();
    let q1 = q0 + qdot0 * h;
    let r = rollout(model, q0, &q1, &zero_inputs(n, steps), h, steps, false).map_err(|e| ModelError::Domain(e.to_string()))?;
    Ok(r.trajectory)
}
