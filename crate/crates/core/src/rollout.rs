//! Root-finding rollout on the learned residual and ground-truth stepping.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ModelError, RolloutError};
use crate::model::TrainedLgp;
use crate::operators::Triplet;
use crate::systems::SystemModel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    pub residual_tol: f64,
    pub step_tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions { residual_tol: 1e-8, step_tol: 1e-10, max_iter: 50, max_halvings: 8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub converged: bool,
    pub iterations: usize,
    pub residual: f64,
    /// Smallest line-search fraction accepted.
    pub damping: f64,
}

fn jacobian<F>(f: &mut F, x: &DVector<f64>, delta: f64) -> Result<DMatrix<f64>, RolloutError>
where
    F: FnMut(&DVector<f64>) -> Result<DVector<f64>, ModelError>,
{
    let n = x.len();
    let mut j = DMatrix::zeros(n, n);
    for c in 0..n {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[c] += delta;
        xm[c] -= delta;
        let d = (f(&xp)? - f(&xm)?) / (2.0 * delta);
        j.set_column(c, &d);
    }
    Ok(j)
}

fn is_degenerate(j: &DMatrix<f64>) -> bool {
    let scale = j.amax();
    if !(scale > 0.0 && scale.is_finite()) {
        return true;
    }
    let sv = j.singular_values();
    sv.min() <= 1e-14 * scale
}

/// Damped Newton with a central-difference Jacobian and halving line search.
pub fn newton_solve<F>(
    mut f: F,
    x0: DVector<f64>,
    fd_step: f64,
    opts: &NewtonOptions,
) -> Result<(DVector<f64>, StepDiagnostics), RolloutError>
where
    F: FnMut(&DVector<f64>) -> Result<DVector<f64>, ModelError>,
{
    let mut x = x0;
    let mut r = f(&x)?;
    let mut rn = r.norm();
    let mut damping = 1.0f64;
    if rn <= opts.residual_tol {
        // a residual that vanishes everywhere pins nothing down
        if is_degenerate(&jacobian(&mut f, &x, fd_step)?) {
            return Err(RolloutError::Diverged { iterations: 0, residual: rn });
        }
        return Ok((x, StepDiagnostics { converged: true, iterations: 0, residual: rn, damping }));
    }
    for it in 1..=opts.max_iter {
        if !rn.is_finite() {
            return Err(RolloutError::Diverged { iterations: it, residual: rn });
        }
        let j = jacobian(&mut f, &x, fd_step)?;
        if is_degenerate(&j) {
            return Err(RolloutError::Diverged { iterations: it, residual: rn });
        }
        let dx = match j.lu().solve(&(-&r)) {
            Some(dx) if dx.iter().all(|v| v.is_finite()) => dx,
            _ => return Err(RolloutError::Diverged { iterations: it, residual: rn }),
        };
        let full_step = dx.norm();
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let xt = &x + &dx * t;
            let rt = f(&xt)?;
            let rtn = rt.norm();
            if rtn.is_finite() && rtn < rn {
                accepted = Some((xt, rt, rtn));
                break;
            }
            t *= 0.5;
        }
        let (xn, rnew, rnn) = match accepted {
            Some(a) => a,
            None => {
                if full_step <= opts.step_tol {
                    return Ok((x, StepDiagnostics { converged: true, iterations: it, residual: rn, damping }));
                }
                return Err(RolloutError::Diverged { iterations: it, residual: rn });
            }
        };
        damping = damping.min(t);
        x = xn;
        r = rnew;
        rn = rnn;
        if rn <= opts.residual_tol || full_step * t <= opts.step_tol {
            return Ok((x, StepDiagnostics { converged: true, iterations: it, residual: rn, damping }));
        }
    }
    Err(RolloutError::Diverged { iterations: opts.max_iter, residual: rn })
}

/// Anything that maps two configurations and inputs to the next configuration.
pub trait StepPredictor: Sync {
    fn n_q(&self) -> usize;

    fn predict_next(
        &self,
        q_prev: &DVector<f64>,
        q_curr: &DVector<f64>,
        u_prev: &DVector<f64>,
        u_curr: &DVector<f64>,
        h: f64,
    ) -> Result<(DVector<f64>, StepDiagnostics), RolloutError>;

    /// Uncertainty proxy for an accepted step; NaN when unavailable.
    fn step_uncertainty(&self, _t: &Triplet, _h: f64) -> f64 {
        f64::NAN
    }
}

fn fd_step(q_curr: &DVector<f64>) -> f64 {
    1e-6 * (1.0 + q_curr.norm())
}

impl StepPredictor for TrainedLgp {
    fn n_q(&self) -> usize {
        self.dataset.n_q
    }

    fn predict_next(
        &self,
        q_prev: &DVector<f64>,
        q_curr: &DVector<f64>,
        u_prev: &DVector<f64>,
        u_curr: &DVector<f64>,
        h: f64,
    ) -> Result<(DVector<f64>, StepDiagnostics), RolloutError> {
        let mut cand = Triplet {
            q_prev: q_prev.clone(),
            q_curr: q_curr.clone(),
            q_next: q_curr.clone(),
            u_prev: u_prev.clone(),
            u_curr: u_curr.clone(),
        };
        // surfaces an unsupported step before any solving
        self.prior().residual(&cand, h)?;
        let guess = q_curr * 2.0 - q_prev;
        let f = |x: &DVector<f64>| {
            cand.q_next.copy_from(x);
            self.residual_mean(&cand, h)
        };
        newton_solve(f, guess, fd_step(q_curr), &NewtonOptions::default())
    }

    fn step_uncertainty(&self, t: &Triplet, h: f64) -> f64 {
        self.posterior_residual(t, h).map(|p| p.trace()).unwrap_or(f64::NAN)
    }
}

/// Midpoint discrete forced Euler–Lagrange residual of an analytic system.
pub fn true_del_residual(
    system: &dyn SystemModel,
    q_prev: &DVector<f64>,
    q_curr: &DVector<f64>,
    q_next: &DVector<f64>,
    u_prev: &DVector<f64>,
    u_curr: &DVector<f64>,
    h: f64,
) -> DVector<f64> {
    let n = q_curr.len();
    let seg = |a: &DVector<f64>, b: &DVector<f64>, u: &DVector<f64>| {
        let q = ((a + b) / 2.0).as_slice().to_vec();
        let v = ((b - a) / h).as_slice().to_vec();
        let (dq, dv) = system.lagrangian_grad(&q, &v);
        let f = system.force(u.as_slice(), &q, &v);
        (dq, dv, f)
    };
    let (dql, dvl, fl) = seg(q_prev, q_curr, u_prev);
    let (dqr, dvr, fr) = seg(q_curr, q_next, u_curr);
    DVector::from_fn(n, |i, _| 0.5 * h * (dql[i] + dqr[i]) + (dvl[i] - dvr[i]) + 0.5 * h * (fl[i] + fr[i]))
}

/// Next configuration of the true midpoint integrator.
pub fn solve_true_del(
    system: &dyn SystemModel,
    q_prev: &DVector<f64>,
    q_curr: &DVector<f64>,
    u_prev: &DVector<f64>,
    u_curr: &DVector<f64>,
    h: f64,
) -> Result<DVector<f64>, RolloutError> {
    TrueSystem(system).predict_next(q_prev, q_curr, u_prev, u_curr, h).map(|(q, _)| q)
}

/// Ground-truth stepping behind the [`StepPredictor`] interface.
pub struct TrueSystem<'a>(pub &'a dyn SystemModel);

impl StepPredictor for TrueSystem<'_> {
    fn n_q(&self) -> usize {
        self.0.n_q()
    }

    fn predict_next(
        &self,
        q_prev: &DVector<f64>,
        q_curr: &DVector<f64>,
        u_prev: &DVector<f64>,
        u_curr: &DVector<f64>,
        h: f64,
    ) -> Result<(DVector<f64>, StepDiagnostics), RolloutError> {
        if !(h > 0.0) {
            return Err(RolloutError::Input(format!("step size must be positive, got {h}")));
        }
        let f = |x: &DVector<f64>| Ok(true_del_residual(self.0, q_prev, q_curr, x, u_prev, u_curr, h));
        newton_solve(f, q_curr * 2.0 - q_prev, fd_step(q_curr), &NewtonOptions::default())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutResult {
    pub trajectory: Vec<DVector<f64>>,
    /// Residual covariance trace per predicted step.
    pub uncertainty: Vec<f64>,
    pub diagnostics: Vec<StepDiagnostics>,
    pub h_pred: f64,
    /// Set when a step failed; the trajectory stops before it.
    pub failure: Option<RolloutError>,
}

impl RolloutResult {
    pub fn completed(&self) -> bool {
        self.failure.is_none()
    }

    /// Fraction of attempted steps that converged.
    pub fn convergence_rate(&self) -> f64 {
        let ok = self.diagnostics.iter().filter(|d| d.converged).count();
        let attempted = self.diagnostics.len() + usize::from(self.failure.is_some());
        if attempted == 0 {
            1.0
        } else {
            ok as f64 / attempted as f64
        }
    }
}

/// Iterates `predict_next` from `(q0, q1)`; step `k` uses inputs `k` and `k+1`.
pub fn rollout(
    model: &dyn StepPredictor,
    q0: &DVector<f64>,
    q1: &DVector<f64>,
    inputs: &[DVector<f64>],
    h_pred: f64,
    steps: usize,
    with_uncertainty: bool,
) -> Result<RolloutResult, RolloutError> {
    let n = model.n_q();
    if q0.len() != n || q1.len() != n {
        return Err(RolloutError::Input(format!("initial configurations must have length {n}")));
    }
    if inputs.len() < steps + 1 {
        return Err(RolloutError::Input(format!("need {} inputs, got {}", steps + 1, inputs.len())));
    }
    if inputs.iter().any(|u| u.len() != n) {
        return Err(RolloutError::Input(format!("inputs must have length {n}")));
    }
    let mut traj = vec![q0.clone(), q1.clone()];
    let mut res = RolloutResult { trajectory: Vec::new(), uncertainty: Vec::new(), diagnostics: Vec::new(), h_pred, failure: None };
    for k in 0..steps {
        let (qp, qc) = (&traj[k], &traj[k + 1]);
        match model.predict_next(qp, qc, &inputs[k], &inputs[k + 1], h_pred) {
            Ok((qn, diag)) => {
                if with_uncertainty {
                    let t = Triplet { q_prev: qp.clone(), q_curr: qc.clone(), q_next: qn.clone(), u_prev: inputs[k].clone(), u_curr: inputs[k + 1].clone() };
                    res.uncertainty.push(model.step_uncertainty(&t, h_pred));
                }
                res.diagnostics.push(diag);
                traj.push(qn);
            }
            Err(RolloutError::Model(e @ ModelError::UnsupportedStep { .. })) => return Err(e.into()),
            Err(e) => {
                res.failure = Some(e);
                break;
            }
        }
    }
    res.trajectory = traj;
    Ok(res)
}

/// Ground-truth trajectory from `q0` and `q1 = q0 + h·q̇0`.
pub fn simulate_true(
    system: &dyn SystemModel,
    q0: &DVector<f64>,
    qdot0: &DVector<f64>,
    inputs: &[DVector<f64>],
    h: f64,
    steps: usize,
) -> Result<Vec<DVector<f64>>, RolloutError> {
    let q1 = q0 + qdot0 * h;
    let r = rollout(&TrueSystem(system), q0, &q1, inputs, h, steps, false)?;
    match r.failure {
        Some(e) => Err(e),
        None => Ok(r.trajectory),
    }
}
