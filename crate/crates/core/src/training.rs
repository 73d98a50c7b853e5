//! Hyperparameter selection, slack search, and the one-step GP baseline.
//!
//! The objective is the negative log marginal likelihood of the
//! pseudo-measurements plus an independent Gaussian penalty on every
//! log-hyperparameter. Gradients are central differences in log space; the
//! minimizer is a projected limited-memory BFGS on the box bounds.

use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ModelError, RolloutError, TrainError};
use crate::kernels::{HyperParams, KernelSpec};
use crate::metrics::rmse;
use crate::model::{build_prior, AnchorKind, ComponentStats, Dataset, GramLayout, GramSystem, KernelPair, ThetaPair, TrainedLgp};
use crate::operators::{NormalizationSpec, OperatorMode, Triplet};
use crate::par;
use crate::rollout::{rollout, StepDiagnostics, StepPredictor};

/// Geometric grid of `n` points from `lo` to `hi`.
pub fn geometric_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub restarts: usize,
    pub seed: u64,
    pub log_bounds: (f64, f64),
    pub prior_mean: f64,
    pub prior_std: f64,
    pub slack_grid: Vec<f64>,
    pub heldout_steps: usize,
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Residual slack used inside the marginal likelihood while `θ` is
    /// optimized; the final slack comes from the held-out search.
    pub objective_slack: f64,
    pub fd_step: f64,
    /// Optimize `θ` on at most this many triplets (evenly strided).
    pub max_opt_points: Option<usize>,
    /// Noise-variance bounds (log, standardized units) for the baseline GP.
    pub baseline_noise_bounds: (f64, f64),
    pub anchor: AnchorKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            restarts: 8,
            seed: 0,
            log_bounds: (-6.0, 6.0),
            prior_mean: 0.0,
            prior_std: 2.0,
            slack_grid: geometric_grid(1e-8, 1e-1, 15),
            heldout_steps: 100,
            grad_tol: 1e-6,
            max_iter: 500,
            objective_slack: 1e-3,
            fd_step: 1e-5,
            max_opt_points: None,
            baseline_noise_bounds: ((1e-8f64).ln(), 0.0),
            anchor: AnchorKind::Perturbed,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let (lo, hi) = self.log_bounds;
        if !(lo < hi) || !(self.baseline_noise_bounds.0 < self.baseline_noise_bounds.1) {
            return Err(TrainError::Config("bounds must be ordered".into()));
        }
        if self.restarts == 0 || self.slack_grid.is_empty() {
            return Err(TrainError::Config("need at least one restart and one slack value".into()));
        }
        if self.slack_grid.iter().any(|&s| !(s > 0.0)) || self.slack_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(TrainError::Config("slack grid must be positive and increasing".into()));
        }
        if !(self.prior_std > 0.0) || !(self.fd_step > 0.0) || !(self.objective_slack >= 0.0) {
            return Err(TrainError::Config("prior std and fd step must be positive".into()));
        }
        Ok(())
    }
}

/// `0.5·ȳᵀΘ̄†ȳ + 0.5·log det Θ̄` of a factored system.
pub fn nlml(gram: &GramSystem) -> f64 {
    match gram.solve(&gram.rhs) {
        Ok(a) => 0.5 * gram.rhs.dot(&a) + 0.5 * gram.log_det(),
        Err(_) => f64::INFINITY,
    }
}

/// Independent Gaussian penalty `Σ ½((x−μ)/s)²`.
pub fn map_penalty(log_theta: &[f64], mean: f64, std: f64) -> f64 {
    log_theta.iter().map(|x| 0.5 * ((x - mean) / std).powi(2)).sum()
}

/// Marginal likelihood of one dataset with the `θ`-independent parts cached.
struct LgpObjective<'a> {
    dataset: &'a Dataset,
    kernels: KernelPair,
    mode: OperatorMode,
    layout: GramLayout,
    slack: f64,
    bounds: (f64, f64),
    prior_mean: f64,
    prior_std: f64,
}

impl<'a> LgpObjective<'a> {
    fn new(
        dataset: &'a Dataset,
        kernels: KernelPair,
        norm: &NormalizationSpec,
        slack: f64,
        mode: OperatorMode,
        cfg: &TrainConfig,
    ) -> Result<Self, ModelError> {
        let prior = build_prior(dataset, &kernels, &ThetaPair::unit(&kernels), mode)?;
        let layout = GramLayout::build(&prior, dataset, norm)?;
        Ok(LgpObjective {
            dataset,
            kernels,
            mode,
            layout,
            slack,
            bounds: cfg.log_bounds,
            prior_mean: cfg.prior_mean,
            prior_std: cfg.prior_std,
        })
    }

    fn eval(&self, x: &[f64]) -> f64 {
        let x: Vec<f64> = x.iter().map(|v| v.clamp(self.bounds.0, self.bounds.1)).collect();
        let run = || -> Result<f64, ModelError> {
            let th = ThetaPair::from_flat(&self.kernels, &x)?;
            let prior = build_prior(self.dataset, &self.kernels, &th, self.mode)?;
            let g = GramSystem::factorize(self.layout.matrix(&prior, self.slack)?, self.layout.rhs.clone())?;
            Ok(nlml(&g))
        };
        match run() {
            Ok(v) if v.is_finite() => v + map_penalty(&x, self.prior_mean, self.prior_std),
            _ => f64::INFINITY,
        }
    }
}

/// Penalized negative log marginal likelihood; `+∞` when assembly fails.
pub fn objective(
    dataset: &Dataset,
    kernels: &KernelPair,
    log_theta: &[f64],
    normalization: &NormalizationSpec,
    slack: f64,
    mode: OperatorMode,
    cfg: &TrainConfig,
) -> f64 {
    match LgpObjective::new(dataset, *kernels, normalization, slack, mode, cfg) {
        Ok(o) => o.eval(log_theta),
        Err(_) => f64::INFINITY,
    }
}

/// Central-difference gradient in log space, clamped at the bounds.
pub fn fd_gradient(f: &dyn Fn(&[f64]) -> f64, x: &[f64], step: f64, bounds: (f64, f64)) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[i] = (x[i] + step).min(bounds.1);
            xm[i] = (x[i] - step).max(bounds.0);
            let span = xp[i] - xm[i];
            if span <= 0.0 {
                return 0.0;
            }
            let d = (f(&xp) - f(&xm)) / span;
            if d.is_finite() {
                d
            } else {
                0.0
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartResult {
    pub initial: f64,
    pub value: f64,
    pub x: Vec<f64>,
    pub iterations: usize,
}

/// Projected L-BFGS on `[lo, hi]ⁿ`.
pub fn minimize_box(
    f: &dyn Fn(&[f64]) -> f64,
    x0: &[f64],
    bounds: (f64, f64),
    fd_step: f64,
    grad_tol: f64,
    max_iter: usize,
) -> RestartResult {
    const MEMORY: usize = 8;
    let n = x0.len();
    let proj = |x: &mut Vec<f64>| x.iter_mut().for_each(|v| *v = v.clamp(bounds.0, bounds.1));
    let mut x = x0.to_vec();
    proj(&mut x);
    let mut fx = f(&x);
    let initial = fx;
    if !fx.is_finite() {
        return RestartResult { initial, value: fx, x, iterations: 0 };
    }
    let mut g = fd_gradient(f, &x, fd_step, bounds);
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut iterations = 0;
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();

    for it in 0..max_iter {
        iterations = it + 1;
        // variables pinned at a bound by the gradient stay fixed
        let free: Vec<bool> = (0..n)
            .map(|i| !((x[i] <= bounds.0 && g[i] > 0.0) || (x[i] >= bounds.1 && g[i] < 0.0)))
            .collect();
        let pg: f64 = (0..n).filter(|&i| free[i]).map(|i| g[i].abs()).fold(0.0, f64::max);
        if pg <= grad_tol {
            break;
        }
        let mut q: Vec<f64> = (0..n).map(|i| if free[i] { g[i] } else { 0.0 }).collect();
        let m = s_hist.len();
        let mut alpha = vec![0.0; m];
        for k in (0..m).rev() {
            let rho = 1.0 / dot(&y_hist[k], &s_hist[k]);
            alpha[k] = rho * dot(&s_hist[k], &q);
            for i in 0..n {
                q[i] -= alpha[k] * y_hist[k][i];
            }
        }
        if m > 0 {
            let gamma = dot(&s_hist[m - 1], &y_hist[m - 1]) / dot(&y_hist[m - 1], &y_hist[m - 1]);
            q.iter_mut().for_each(|v| *v *= gamma);
        } else {
            // first step moves at most one unit in log space
            let gmax = q.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if gmax > 1.0 {
                q.iter_mut().for_each(|v| *v /= gmax);
            }
        }
        for k in 0..m {
            let rho = 1.0 / dot(&y_hist[k], &s_hist[k]);
            let beta = rho * dot(&y_hist[k], &q);
            for i in 0..n {
                q[i] += s_hist[k][i] * (alpha[k] - beta);
            }
        }
        let mut d: Vec<f64> = (0..n).map(|i| if free[i] { -q[i] } else { 0.0 }).collect();
        if dot(&d, &g) >= 0.0 {
            s_hist.clear();
            y_hist.clear();
            d = (0..n).map(|i| if free[i] { -g[i] } else { 0.0 }).collect();
        }

        let mut t = 1.0;
        let mut next = None;
        for _ in 0..30 {
            let mut xt: Vec<f64> = (0..n).map(|i| x[i] + t * d[i]).collect();
            proj(&mut xt);
            let step: Vec<f64> = (0..n).map(|i| xt[i] - x[i]).collect();
            let ft = f(&xt);
            if ft.is_finite() && ft <= fx + 1e-4 * dot(&g, &step) {
                next = Some((xt, ft, step));
                break;
            }
            t *= 0.5;
        }
        let Some((xn, fnew, s)) = next else {
            if s_hist.is_empty() {
                break;
            }
            s_hist.clear();
            y_hist.clear();
            continue;
        };
        let gn = fd_gradient(f, &xn, fd_step, bounds);
        let y: Vec<f64> = (0..n).map(|i| gn[i] - g[i]).collect();
        let decrease = fx - fnew;
        x = xn;
        g = gn;
        fx = fnew;
        if dot(&s, &y) > 1e-10 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            s_hist.push(s);
            y_hist.push(y);
            if s_hist.len() > MEMORY {
                s_hist.remove(0);
                y_hist.remove(0);
            }
        }
        if decrease <= 1e-12 * (1.0 + fx.abs()) {
            break;
        }
    }
    RestartResult { initial, value: fx, x, iterations }
}

/// Starting points: one at unit lengthscales and variances, the rest uniform.
fn starts(n: usize, cfg: &TrainConfig) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (lo, hi) = cfg.log_bounds;
    let mut out = vec![vec![0.0f64.clamp(lo, hi); n]];
    for _ in 1..cfg.restarts {
        out.push((0..n).map(|_| rng.random_range(lo..hi)).collect());
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub restarts: Vec<RestartResult>,
    pub best_restart: usize,
    pub theta: ThetaPair,
    pub objective: f64,
    pub slack: f64,
    /// `(σ, held-out RMSE)` for each grid value.
    pub slack_curve: Vec<(f64, f64)>,
    pub wall_time_s: f64,
}

/// Evenly strided subset used for the hyperparameter search.
fn optimization_set(dataset: &Dataset, cfg: &TrainConfig) -> Result<Dataset, TrainError> {
    match cfg.max_opt_points {
        Some(m) if m < dataset.len() && m > 0 => {
            let idx: Vec<usize> = (0..m).map(|i| i * dataset.len() / m).collect();
            let mut sub = dataset.subset(&idx)?;
            // keep the full-data scaling so θ transfers
            sub.standardization = dataset.standardization.clone();
            Ok(sub)
        }
        _ => Ok(dataset.clone()),
    }
}

pub fn optimize_hyperparameters(
    dataset: &Dataset,
    kernels: &KernelPair,
    normalization: &NormalizationSpec,
    mode: OperatorMode,
    cfg: &TrainConfig,
) -> Result<(ThetaPair, Vec<RestartResult>, usize), TrainError> {
    cfg.validate()?;
    let data = optimization_set(dataset, cfg)?;
    let obj = LgpObjective::new(&data, *kernels, normalization, cfg.objective_slack, mode, cfg)?;
    let f = |x: &[f64]| obj.eval(x);
    let x0s = starts(kernels.n_params(), cfg);
    let results = par::map_indexed(x0s.len(), |i| minimize_box(&f, &x0s[i], cfg.log_bounds, cfg.fd_step, cfg.grad_tol, cfg.max_iter));
    let best = select_best(&results).ok_or_else(|| {
        let diag: Vec<String> = results.iter().map(|r| format!("{:.3e}", r.value)).collect();
        TrainError::OptimizationFailed(format!("all restarts non-finite: [{}]", diag.join(", ")))
    })?;
    let theta = ThetaPair::from_flat(kernels, &results[best].x)?;
    Ok((theta, results, best))
}

/// Index of the smallest finite value, ties to the lower index.
fn select_best(results: &[RestartResult]) -> Option<usize> {
    results
        .iter()
        .enumerate()
        .filter(|(_, r)| r.value.is_finite())
        .min_by(|a, b| a.1.value.total_cmp(&b.1.value).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
}

/// Positions and inputs of a reference trajectory at a fixed step.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub h: f64,
    pub q: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
}

/// Held-out rollout RMSE for each slack; diverged rollouts score `+∞`.
pub fn slack_scores(
    dataset: &Dataset,
    heldout: &Trajectory,
    kernels: &KernelPair,
    thetas: &ThetaPair,
    normalization: &NormalizationSpec,
    grid: &[f64],
    mode: OperatorMode,
) -> Result<Vec<f64>, TrainError> {
    if heldout.q.len() < 3 || heldout.u.len() < heldout.q.len() - 1 {
        return Err(TrainError::InsufficientData("held-out trajectory needs at least three points with inputs".into()));
    }
    let steps = heldout.q.len() - 2;
    let scores = par::map_indexed(grid.len(), |i| {
        let model = match TrainedLgp::new(dataset.clone(), *kernels, thetas.clone(), normalization.clone(), grid[i], mode) {
            Ok(m) => m,
            Err(_) => return f64::INFINITY,
        };
        match rollout(&model, &heldout.q[0], &heldout.q[1], &heldout.u, heldout.h, steps, false) {
            Ok(r) if r.completed() => rmse(&heldout.q, &r.trajectory).unwrap_or(f64::INFINITY),
            _ => f64::INFINITY,
        }
    });
    Ok(scores)
}

/// Slack with the lowest held-out rollout RMSE; ties go to the larger slack.
pub fn tune_slack(
    dataset: &Dataset,
    heldout: &Trajectory,
    kernels: &KernelPair,
    thetas: &ThetaPair,
    normalization: &NormalizationSpec,
    grid: &[f64],
    mode: OperatorMode,
) -> Result<(f64, Vec<f64>), TrainError> {
    let scores = slack_scores(dataset, heldout, kernels, thetas, normalization, grid, mode)?;
    let mut best: Option<usize> = None;
    for (i, s) in scores.iter().enumerate() {
        if s.is_finite() && best.is_none_or(|b| *s <= scores[b]) {
            best = Some(i);
        }
    }
    match best {
        Some(b) => Ok((grid[b], scores)),
        None => {
            let diag: Vec<String> = grid.iter().zip(&scores).map(|(g, s)| format!("σ={g:.1e}: {s}")).collect();
            Err(TrainError::AllDiverged(diag.join("; ")))
        }
    }
}

/// Standardize, optimize `θ`, search the slack, and condition the final model.
///
/// Without a held-out trajectory the slack stays at `objective_slack`.
pub fn fit(
    dataset: &Dataset,
    kernels: &KernelPair,
    cfg: &TrainConfig,
    mode: OperatorMode,
    heldout: Option<&Trajectory>,
) -> Result<(TrainedLgp, FitReport), TrainError> {
    let start = Instant::now();
    let norm = kernels.normalization(cfg.anchor, mode, dataset);
    let (theta, restarts, best) = optimize_hyperparameters(dataset, kernels, &norm, mode, cfg)?;
    let (slack, curve) = match heldout {
        Some(h) => {
            let (s, scores) = tune_slack(dataset, h, kernels, &theta, &norm, &cfg.slack_grid, mode)?;
            (s, cfg.slack_grid.iter().cloned().zip(scores).collect())
        }
        None => (cfg.objective_slack, Vec::new()),
    };
    let model = TrainedLgp::new(dataset.clone(), *kernels, theta.clone(), norm, slack, mode)?;
    let report = FitReport {
        objective: restarts[best].value,
        restarts,
        best_restart: best,
        theta,
        slack,
        slack_curve: curve,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    Ok((model, report))
}

/// One independent GP per output dimension.
#[derive(Debug, Clone)]
struct BaselineOutput {
    theta: HyperParams,
    log_noise: f64,
    alpha: DVector<f64>,
}

/// Standard GP one-step predictor on `[q_prev, q_curr, u_prev, u_curr]`.
#[derive(Debug, Clone)]
pub struct BaselineGp {
    pub n_q: usize,
    pub h_train: f64,
    pub feature_stats: ComponentStats,
    pub target_stats: ComponentStats,
    spec: KernelSpec,
    features: Vec<Vec<f64>>,
    outputs: Vec<BaselineOutput>,
}

fn baseline_rows(t: &Triplet) -> Vec<f64> {
    let mut f = Vec::with_capacity(4 * t.n_q());
    f.extend_from_slice(t.q_prev.as_slice());
    f.extend_from_slice(t.q_curr.as_slice());
    f.extend_from_slice(t.u_prev.as_slice());
    f.extend_from_slice(t.u_curr.as_slice());
    f
}

fn standardize(x: &[f64], s: &ComponentStats) -> Vec<f64> {
    x.iter().zip(s.mean.iter().zip(&s.std)).map(|(v, (m, sd))| (v - m) / sd).collect()
}

fn baseline_gram(spec: &KernelSpec, theta: &HyperParams, log_noise: f64, x: &[Vec<f64>]) -> Result<DMatrix<f64>, ModelError> {
    let k = spec.resolve(theta)?;
    let n = x.len();
    let noise = log_noise.exp();
    let rows = par::map_indexed(n, |i| (i..n).map(|j| k.value(&x[i], &x[j])).collect::<Vec<f64>>());
    let mut m = DMatrix::zeros(n, n);
    for (i, r) in rows.iter().enumerate() {
        for (o, v) in r.iter().enumerate() {
            m[(i, i + o)] = *v;
            m[(i + o, i)] = *v;
        }
        m[(i, i)] += noise;
    }
    Ok(m)
}

fn baseline_nlml(spec: &KernelSpec, x: &[Vec<f64>], y: &DVector<f64>, p: &[f64]) -> f64 {
    let np = spec.n_params();
    let Ok(theta) = HyperParams::from_flat(spec, &p[..np]) else { return f64::INFINITY };
    let Ok(m) = baseline_gram(spec, &theta, p[np], x) else { return f64::INFINITY };
    match Cholesky::<f64, Dyn>::new(m) {
        Some(c) => {
            let a = c.solve(y);
            let ld = 2.0 * c.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
            0.5 * y.dot(&a) + 0.5 * ld
        }
        None => f64::INFINITY,
    }
}

impl BaselineGp {
    fn prepare(dataset: &Dataset) -> Result<(ComponentStats, ComponentStats, Vec<Vec<f64>>, Vec<DVector<f64>>), TrainError> {
        if dataset.len() < 2 {
            return Err(TrainError::InsufficientData("baseline GP needs at least two triplets".into()));
        }
        let n = dataset.n_q;
        let raw: Vec<Vec<f64>> = dataset.triplets.iter().map(baseline_rows).collect();
        let fs = ComponentStats::from_samples(4 * n, raw.iter().map(|r| r.as_slice()));
        let ts = ComponentStats::from_samples(n, dataset.triplets.iter().map(|t| t.q_next.as_slice()));
        if ts.std.iter().any(|&s| s <= 1e-12) {
            log::warn!("degenerate baseline targets; standard deviation floored at 1e-12");
        }
        let x = raw.iter().map(|r| standardize(r, &fs)).collect();
        let ys = (0..n)
            .map(|d| DVector::from_iterator(dataset.len(), dataset.triplets.iter().map(|t| (t.q_next[d] - ts.mean[d]) / ts.std[d])))
            .collect();
        Ok((fs, ts, x, ys))
    }

    /// Conditions the baseline on fixed hyperparameters.
    pub fn with_hyperparameters(dataset: &Dataset, thetas: &[HyperParams], log_noises: &[f64]) -> Result<Self, TrainError> {
        let (fs, ts, x, ys) = Self::prepare(dataset)?;
        let n = dataset.n_q;
        let spec = KernelSpec::separable_baseline(4 * n);
        if thetas.len() != n || log_noises.len() != n {
            return Err(TrainError::Config(format!("need {n} hyperparameter sets")));
        }
        let mut outputs = Vec::new();
        for d in 0..n {
            let m = baseline_gram(&spec, &thetas[d], log_noises[d], &x)?;
            let g = GramSystem::factorize(m, ys[d].clone())?;
            let alpha = g.solve(&ys[d])?;
            outputs.push(BaselineOutput { theta: thetas[d].clone(), log_noise: log_noises[d], alpha });
        }
        Ok(BaselineGp { n_q: n, h_train: dataset.h_train, feature_stats: fs, target_stats: ts, spec, features: x, outputs })
    }

    /// Per-output hyperparameters `(θ, log noise)`.
    pub fn hyperparameters(&self) -> Vec<(HyperParams, f64)> {
        self.outputs.iter().map(|o| (o.theta.clone(), o.log_noise)).collect()
    }

    pub fn predict(&self, q_prev: &DVector<f64>, q_curr: &DVector<f64>, u_prev: &DVector<f64>, u_curr: &DVector<f64>) -> DVector<f64> {
        let t = Triplet { q_prev: q_prev.clone(), q_curr: q_curr.clone(), q_next: q_curr.clone(), u_prev: u_prev.clone(), u_curr: u_curr.clone() };
        let x = standardize(&baseline_rows(&t), &self.feature_stats);
        DVector::from_fn(self.n_q, |d, _| {
            let o = &self.outputs[d];
            let k = self.spec.resolve(&o.theta).expect("validated hyperparameters");
            let m: f64 = self.features.iter().zip(o.alpha.iter()).map(|(f, a)| k.value(f, &x) * a).sum();
            m * self.target_stats.std[d] + self.target_stats.mean[d]
        })
    }
}

/// Fits one marginal-likelihood GP per output with restarts.
pub fn fit_baseline_gp(dataset: &Dataset, cfg: &TrainConfig) -> Result<BaselineGp, TrainError> {
    cfg.validate()?;
    let (_, _, x, ys) = BaselineGp::prepare(dataset)?;
    let n = dataset.n_q;
    let spec = KernelSpec::separable_baseline(4 * n);
    let np = spec.n_params();
    let (lo, hi) = cfg.log_bounds;
    let (nlo, nhi) = cfg.baseline_noise_bounds;
    let mut thetas = Vec::new();
    let mut noises = Vec::new();
    for (d, y) in ys.iter().enumerate() {
        // map the noise coordinate onto the shared box
        let to_noise = |v: f64| nlo + (v - lo) / (hi - lo) * (nhi - nlo);
        let f = |p: &[f64]| {
            let mut q = p.to_vec();
            q[np] = to_noise(p[np].clamp(lo, hi));
            let v = baseline_nlml(&spec, &x, y, &q);
            if v.is_finite() {
                v + map_penalty(&q[..np], cfg.prior_mean, cfg.prior_std)
            } else {
                v
            }
        };
        let sub = TrainConfig { seed: cfg.seed.wrapping_add(1 + d as u64), ..cfg.clone() };
        let mut x0s = starts(np + 1, &sub);
        // heuristic start: small noise
        x0s[0][np] = lo + 0.25 * (hi - lo);
        let results = par::map_indexed(x0s.len(), |i| minimize_box(&f, &x0s[i], cfg.log_bounds, cfg.fd_step, cfg.grad_tol, cfg.max_iter));
        let best = select_best(&results).ok_or_else(|| TrainError::OptimizationFailed("baseline GP: all restarts non-finite".into()))?;
        let p = &results[best].x;
        thetas.push(HyperParams::from_flat(&spec, &p[..np]).map_err(ModelError::from)?);
        noises.push(to_noise(p[np]));
    }
    BaselineGp::with_hyperparameters(dataset, &thetas, &noises)
}

pub fn baseline_predict(
    gp: &BaselineGp,
    q_prev: &DVector<f64>,
    q_curr: &DVector<f64>,
    u_prev: &DVector<f64>,
    u_curr: &DVector<f64>,
) -> DVector<f64> {
    gp.predict(q_prev, q_curr, u_prev, u_curr)
}

impl StepPredictor for BaselineGp {
    fn n_q(&self) -> usize {
        self.n_q
    }

    fn predict_next(
        &self,
        q_prev: &DVector<f64>,
        q_curr: &DVector<f64>,
        u_prev: &DVector<f64>,
        u_curr: &DVector<f64>,
        h: f64,
    ) -> Result<(DVector<f64>, StepDiagnostics), RolloutError> {
        if (h - self.h_train).abs() > 1e-12 * self.h_train {
            return Err(ModelError::UnsupportedStep { h_train: self.h_train, h_pred: h }.into());
        }
        let q = self.predict(q_prev, q_curr, u_prev, u_curr);
        if q.iter().any(|v| !v.is_finite()) {
            return Err(RolloutError::Diverged { iterations: 0, residual: f64::NAN });
        }
        Ok((q, StepDiagnostics { converged: true, iterations: 0, residual: 0.0, damping: 1.0 }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn synthetic_objectives() {
        let g = GramSystem::factorize(DMatrix::identity(3, 3), DVector::zeros(3)).unwrap();
        assert_eq!(nlml(&g), 0.0);
        let g = GramSystem::factorize(DMatrix::identity(2, 2) * 4.0, DVector::zeros(2)).unwrap();
        assert_relative_eq!(nlml(&g), 1.3862943611198906, epsilon = 1e-14);
        assert_relative_eq!(map_penalty(&[2.0, 0.0], 0.0, 2.0), 0.5);
    }

    #[test]
    fn grid_shape() {
        let g = geometric_grid(1e-8, 1e-1, 15);
        assert_eq!(g.len(), 15);
        assert_relative_eq!(g[0], 1e-8);
        assert_relative_eq!(g[14], 1e-1, epsilon = 1e-15);
        assert!(TrainConfig::default().validate().is_ok());
    }

    #[test]
    fn minimizer_finds_box_constrained_quadratic() {
        let f = |x: &[f64]| (x[0] - 1.0).powi(2) + 3.0 * (x[1] + 8.0).powi(2);
        let r = minimize_box(&f, &[4.0, 0.0], (-6.0, 6.0), 1e-5, 1e-8, 200);
        assert_relative_eq!(r.x[0], 1.0, epsilon = 1e-5);
        assert_eq!(r.x[1], -6.0);
        assert!(r.value <= r.initial);
    }

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let r = minimize_box(&f, &[-1.2, 1.0], (-5.0, 5.0), 1e-6, 1e-7, 500);
        assert_relative_eq!(r.x[0], 1.0, epsilon = 1e-3);
    }
}
