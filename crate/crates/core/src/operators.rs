//! Discrete and midpoint-discretized forced Euler–Lagrange operators.
//!
//! Every quantity the model conditions on or predicts is a linear functional
//! of the Lagrangian and force priors. A [`Functional`] stores those maps in a
//! flat form: kernel points with value weights and gradient weights for the
//! Lagrangian part, and weighted evaluation points for the force part. All
//! covariance blocks then come from one contraction routine, [`Prior::cov`].
//!
//! Force functionals always act as `w · I` on the output because the force
//! prior is `I ⊗ κ̄_F`, so their covariance is a scalar times the identity.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::kernels::{KernelJet, ResolvedKernel};

/// Largest configuration dimension handled by the operator code.
pub const MAX_NQ: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorMode {
    Discrete,
    ContinuousMidpoint,
}

impl OperatorMode {
    pub fn name(self) -> &'static str {
        match self {
            OperatorMode::Discrete => "discrete",
            OperatorMode::ContinuousMidpoint => "continuous",
        }
    }
}

impl std::str::FromStr for OperatorMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "discrete" => Ok(OperatorMode::Discrete),
            "continuous" | "continuous_midpoint" => Ok(OperatorMode::ContinuousMidpoint),
            _ => Err(format!("unknown mode '{s}' (expected discrete or continuous)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Triplet {
    #[serde(with = "crate::io::dvec")]
    pub q_prev: DVector<f64>,
    #[serde(with = "crate::io::dvec")]
    pub q_curr: DVector<f64>,
    #[serde(with = "crate::io::dvec")]
    pub q_next: DVector<f64>,
    #[serde(with = "crate::io::dvec")]
    pub u_prev: DVector<f64>,
    #[serde(with = "crate::io::dvec")]
    pub u_curr: DVector<f64>,
}

impl Triplet {
    pub fn new(
        q_prev: DVector<f64>,
        q_curr: DVector<f64>,
        q_next: DVector<f64>,
        u_prev: DVector<f64>,
        u_curr: DVector<f64>,
    ) -> Result<Self, ModelError> {
        let t = Triplet { q_prev, q_curr, q_next, u_prev, u_curr };
        t.validate()?;
        Ok(t)
    }

    pub fn n_q(&self) -> usize {
        self.q_curr.len()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let n = self.q_curr.len();
        if n == 0 || n > MAX_NQ {
            return Err(ModelError::Dimension(format!("n_q must be in 1..={MAX_NQ}, got {n}")));
        }
        for v in [&self.q_prev, &self.q_next, &self.u_prev, &self.u_curr] {
            if v.len() != n {
                return Err(ModelError::Dimension(format!("triplet vector of length {} vs n_q {n}", v.len())));
            }
        }
        let all = [&self.q_prev, &self.q_curr, &self.q_next, &self.u_prev, &self.u_curr];
        if all.iter().any(|v| v.iter().any(|x| !x.is_finite())) {
            return Err(ModelError::Data("non-finite triplet entry".into()));
        }
        Ok(())
    }
}

/// `z = ((q_prev+q_next)/2, (q_next−q_prev)/h)` with its Jacobians.
#[derive(Debug, Clone, PartialEq)]
pub struct MidpointLift {
    pub q_mid: DVector<f64>,
    pub qdot: DVector<f64>,
    pub j_prev: DMatrix<f64>,
    pub j_next: DMatrix<f64>,
}

pub fn lift_midpoint(q_prev: &DVector<f64>, q_next: &DVector<f64>, h: f64) -> Result<MidpointLift, ModelError> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(ModelError::Domain(format!("step size must be positive, got {h}")));
    }
    let n = q_prev.len();
    if q_next.len() != n {
        return Err(ModelError::Dimension(format!("{} vs {}", n, q_next.len())));
    }
    let q_mid = (q_prev + q_next) / 2.0;
    let qdot = (q_next - q_prev) / h;
    let mut j_prev = DMatrix::zeros(2 * n, n);
    let mut j_next = DMatrix::zeros(2 * n, n);
    for i in 0..n {
        j_prev[(i, i)] = 0.5;
        j_next[(i, i)] = 0.5;
        j_prev[(n + i, i)] = -1.0 / h;
        j_next[(n + i, i)] = 1.0 / h;
    }
    Ok(MidpointLift { q_mid, qdot, j_prev, j_next })
}

/// Per-component divisors applied to kernel inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputScales {
    #[serde(with = "crate::io::dvec")]
    pub q: DVector<f64>,
    #[serde(with = "crate::io::dvec")]
    pub qdot: DVector<f64>,
    #[serde(with = "crate::io::dvec")]
    pub u: DVector<f64>,
}

impl InputScales {
    pub fn unit(n_q: usize) -> Self {
        InputScales { q: DVector::from_element(n_q, 1.0), qdot: DVector::from_element(n_q, 1.0), u: DVector::from_element(n_q, 1.0) }
    }
}

/// Anchor conditions that rule out degenerate Lagrangians.
///
/// Anchors are stored in the mode's native coordinates: `(q̄_a, q̄_b)` for a
/// discrete Lagrangian and `(q̄, q̄̇)` for a continuous one; the force anchor
/// prepends the input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationSpec {
    #[serde(with = "crate::io::dvec")]
    pub anchor_l: DVector<f64>,
    #[serde(with = "crate::io::dvec")]
    pub anchor_f: DVector<f64>,
    pub n_l: f64,
    #[serde(with = "crate::io::dvec")]
    pub n_m: DVector<f64>,
    #[serde(with = "crate::io::dvec")]
    pub n_f: DVector<f64>,
}

impl NormalizationSpec {
    /// Origin anchor with zero momentum, suited to physics kernels.
    pub fn origin(n_q: usize) -> Self {
        NormalizationSpec {
            anchor_l: DVector::zeros(2 * n_q),
            anchor_f: DVector::zeros(3 * n_q),
            n_l: 1.0,
            n_m: DVector::zeros(n_q),
            n_f: DVector::zeros(n_q),
        }
    }

    /// Anchor straddling the origin at velocity `2·10⁻²·σ_q̇`, momentum `10⁻²·σ_q̇`.
    pub fn perturbed(mode: OperatorMode, qdot_std: &DVector<f64>, h_train: f64) -> Self {
        let n = qdot_std.len();
        let delta = qdot_std * (1e-2 * h_train);
        let mut anchor_l = DVector::zeros(2 * n);
        for i in 0..n {
            match mode {
                OperatorMode::Discrete => {
                    anchor_l[i] = -delta[i];
                    anchor_l[n + i] = delta[i];
                }
                OperatorMode::ContinuousMidpoint => anchor_l[n + i] = 2.0 * delta[i] / h_train,
            }
        }
        NormalizationSpec {
            anchor_l,
            anchor_f: DVector::zeros(3 * n),
            n_l: 1.0,
            n_m: qdot_std * 1e-2,
            n_f: DVector::zeros(n),
        }
    }

    pub fn n_q(&self) -> usize {
        self.n_m.len()
    }

    pub fn validate(&self, n_q: usize) -> Result<(), ModelError> {
        if self.anchor_l.len() != 2 * n_q || self.anchor_f.len() != 3 * n_q || self.n_m.len() != n_q || self.n_f.len() != n_q {
            return Err(ModelError::Dimension("normalization spec does not match n_q".into()));
        }
        if self.n_l == 0.0 || !self.n_l.is_finite() {
            return Err(ModelError::Domain("n_L must be finite and non-zero".into()));
        }
        Ok(())
    }
}

/// Which observable of the continuous Lagrangian to query.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observable {
    Hamiltonian,
    Momentum,
    Eval,
}

#[derive(Debug, Clone)]
struct LagTerm {
    point: Vec<f64>,
    /// One weight per output row.
    value: Vec<f64>,
    /// Row-major `rows × d`; empty for pure evaluations.
    grad: Vec<f64>,
}

#[derive(Debug, Clone)]
struct ForceTerm {
    point: Vec<f64>,
    weight: f64,
}

/// A row group of linear functionals of `(L, F)`.
#[derive(Debug, Clone)]
pub struct Functional {
    rows: usize,
    lag: Vec<LagTerm>,
    force: Vec<ForceTerm>,
}

impl Functional {
    pub fn rows(&self) -> usize {
        self.rows
    }
}

/// How a segment `(q_a, q_b)` is mapped to a kernel point.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Embedding {
    /// `(q_a, q_b)` stacked, for discrete generic kernels.
    Slots,
    /// Midpoint lift at step `h`.
    Lift(f64),
}

/// The two GP priors plus the operator geometry of one model.
#[derive(Debug, Clone)]
pub struct Prior {
    pub mode: OperatorMode,
    pub h_train: f64,
    pub n_q: usize,
    pub scales: InputScales,
    pub lagrangian: ResolvedKernel,
    pub force: ResolvedKernel,
}

impl Prior {
    pub fn new(
        mode: OperatorMode,
        h_train: f64,
        scales: InputScales,
        lagrangian: ResolvedKernel,
        force: ResolvedKernel,
    ) -> Result<Self, ModelError> {
        let n = scales.q.len();
        if !(h_train > 0.0 && h_train.is_finite()) {
            return Err(ModelError::Domain(format!("h_train must be positive, got {h_train}")));
        }
        if n == 0 || n > MAX_NQ {
            return Err(ModelError::Dimension(format!("n_q must be in 1..={MAX_NQ}")));
        }
        if lagrangian.dim() != 2 * n || force.dim() != 3 * n {
            return Err(ModelError::Dimension(format!(
                "kernels expect inputs of size {} and {}, need {} and {}",
                lagrangian.dim(),
                force.dim(),
                2 * n,
                3 * n
            )));
        }
        Ok(Prior { mode, h_train, n_q: n, scales, lagrangian, force })
    }

    fn embedding(&self, physics: bool, h: f64) -> Embedding {
        match self.mode {
            OperatorMode::ContinuousMidpoint => Embedding::Lift(h),
            OperatorMode::Discrete if physics => Embedding::Lift(self.h_train),
            OperatorMode::Discrete => Embedding::Slots,
        }
    }

    fn lag_embedding(&self, h: f64) -> Embedding {
        self.embedding(self.lagrangian.spec.family.is_physics(), h)
    }

    fn force_embedding(&self, h: f64) -> Embedding {
        self.embedding(self.force.spec.family.is_physics(), h)
    }

    /// Scaled segment point; `offset` leaves room for a leading input block.
    fn segment_point(&self, e: Embedding, qa: &[f64], qb: &[f64], offset: usize, out: &mut [f64]) {
        let n = self.n_q;
        match e {
            Embedding::Slots => {
                for i in 0..n {
                    out[offset + i] = qa[i] / self.scales.q[i];
                    out[offset + n + i] = qb[i] / self.scales.q[i];
                }
            }
            Embedding::Lift(h) => {
                for i in 0..n {
                    out[offset + i] = (qa[i] + qb[i]) / 2.0 / self.scales.q[i];
                    out[offset + n + i] = (qb[i] - qa[i]) / h / self.scales.qdot[i];
                }
            }
        }
    }

    /// Writes `c · ∂point/∂q_slot[r]` for every `r` into a `n × 2n` block.
    fn segment_jacobian(&self, e: Embedding, second_slot: bool, c: f64, out: &mut [f64]) {
        let n = self.n_q;
        let d = 2 * n;
        out.fill(0.0);
        for r in 0..n {
            match e {
                Embedding::Slots => {
                    let col = if second_slot { n + r } else { r };
                    out[r * d + col] = c / self.scales.q[r];
                }
                Embedding::Lift(h) => {
                    let sign = if second_slot { 1.0 } else { -1.0 };
                    out[r * d + r] = c * 0.5 / self.scales.q[r];
                    out[r * d + n + r] = c * sign / (h * self.scales.qdot[r]);
                }
            }
        }
    }

    fn force_point(&self, e: Embedding, u: &[f64], qa: &[f64], qb: &[f64]) -> Vec<f64> {
        let n = self.n_q;
        let mut p = vec![0.0; 3 * n];
        for i in 0..n {
            p[i] = u[i] / self.scales.u[i];
        }
        self.segment_point(e, qa, qb, n, &mut p);
        p
    }

    fn lag_segment_term(&self, qa: &[f64], qb: &[f64], h: f64, second_slot: bool, c: f64) -> LagTerm {
        let n = self.n_q;
        let e = self.lag_embedding(h);
        let mut point = vec![0.0; 2 * n];
        self.segment_point(e, qa, qb, 0, &mut point);
        let mut grad = vec![0.0; n * 2 * n];
        self.segment_jacobian(e, second_slot, c, &mut grad);
        LagTerm { point, value: vec![0.0; n], grad }
    }

    fn check_step(&self, h: f64) -> Result<(), ModelError> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(ModelError::Domain(format!("step size must be positive, got {h}")));
        }
        if self.mode == OperatorMode::Discrete && (h - self.h_train).abs() > 1e-12 * self.h_train {
            return Err(ModelError::UnsupportedStep { h_train: self.h_train, h_pred: h });
        }
        Ok(())
    }

    /// The residual `𝓛[L] + 𝓕[F]` of one triplet at step `h`.
    pub fn residual(&self, t: &Triplet, h: f64) -> Result<Functional, ModelError> {
        self.check_step(h)?;
        self.check_triplet(t)?;
        let (cl, cf) = match self.mode {
            OperatorMode::Discrete => (1.0, 1.0),
            OperatorMode::ContinuousMidpoint => (h, h / 2.0),
        };
        let (qp, qc, qn) = (t.q_prev.as_slice(), t.q_curr.as_slice(), t.q_next.as_slice());
        let lag = vec![
            self.lag_segment_term(qp, qc, h, true, cl),
            self.lag_segment_term(qc, qn, h, false, cl),
        ];
        let fe = self.force_embedding(h);
        let force = vec![
            ForceTerm { point: self.force_point(fe, t.u_prev.as_slice(), qp, qc), weight: cf },
            ForceTerm { point: self.force_point(fe, t.u_curr.as_slice(), qc, qn), weight: cf },
        ];
        Ok(Functional { rows: self.n_q, lag, force })
    }

    fn check_triplet(&self, t: &Triplet) -> Result<(), ModelError> {
        t.validate()?;
        if t.n_q() != self.n_q {
            return Err(ModelError::Dimension(format!("triplet n_q {} vs model n_q {}", t.n_q(), self.n_q)));
        }
        Ok(())
    }

    /// Scaled Lagrangian kernel point of a native query.
    fn lag_query_point(&self, query: &[f64]) -> Result<Vec<f64>, ModelError> {
        let n = self.n_q;
        if query.len() != 2 * n {
            return Err(ModelError::Dimension(format!("Lagrangian query needs {} entries, got {}", 2 * n, query.len())));
        }
        let mut p = vec![0.0; 2 * n];
        match self.mode {
            OperatorMode::Discrete => self.segment_point(self.lag_embedding(self.h_train), &query[..n], &query[n..], 0, &mut p),
            OperatorMode::ContinuousMidpoint => {
                for i in 0..n {
                    p[i] = query[i] / self.scales.q[i];
                    p[n + i] = query[n + i] / self.scales.qdot[i];
                }
            }
        }
        Ok(p)
    }

    /// Point evaluation `L(query)`.
    pub fn lagrangian_eval(&self, query: &[f64]) -> Result<Functional, ModelError> {
        let point = self.lag_query_point(query)?;
        Ok(Functional { rows: 1, lag: vec![LagTerm { point, value: vec![1.0], grad: Vec::new() }], force: Vec::new() })
    }

    /// Momentum at a native Lagrangian point: `∇₂` in discrete mode, `∂/∂q̇`
    /// in continuous mode.
    pub fn momentum(&self, query: &[f64]) -> Result<Functional, ModelError> {
        let n = self.n_q;
        let point = self.lag_query_point(query)?;
        let mut grad = vec![0.0; n * 2 * n];
        match self.mode {
            OperatorMode::Discrete => self.segment_jacobian(self.lag_embedding(self.h_train), true, 1.0, &mut grad),
            OperatorMode::ContinuousMidpoint => {
                for r in 0..n {
                    grad[r * 2 * n + n + r] = 1.0 / self.scales.qdot[r];
                }
            }
        }
        Ok(Functional { rows: n, lag: vec![LagTerm { point, value: vec![0.0; n], grad }], force: Vec::new() })
    }

    /// Point evaluation `F(query)` at a native force point.
    pub fn force_eval(&self, query: &[f64]) -> Result<Functional, ModelError> {
        let n = self.n_q;
        if query.len() != 3 * n {
            return Err(ModelError::Dimension(format!("force query needs {} entries, got {}", 3 * n, query.len())));
        }
        let point = match self.mode {
            OperatorMode::Discrete => {
                self.force_point(self.force_embedding(self.h_train), &query[..n], &query[n..2 * n], &query[2 * n..])
            }
            OperatorMode::ContinuousMidpoint => {
                let mut p = vec![0.0; 3 * n];
                for i in 0..n {
                    p[i] = query[i] / self.scales.u[i];
                    p[n + i] = query[n + i] / self.scales.q[i];
                    p[2 * n + i] = query[2 * n + i] / self.scales.qdot[i];
                }
                p
            }
        };
        Ok(Functional { rows: n, lag: Vec::new(), force: vec![ForceTerm { point, weight: 1.0 }] })
    }

    /// A linear observable of the continuous Lagrangian at `z = (q, q̇)`.
    pub fn observable(&self, obs: Observable, z: &[f64]) -> Result<Functional, ModelError> {
        if self.mode != OperatorMode::ContinuousMidpoint {
            return Err(ModelError::UnsupportedMode { mode: self.mode.name().into(), what: "observables".into() });
        }
        let n = self.n_q;
        match obs {
            Observable::Eval => self.lagrangian_eval(z),
            Observable::Momentum => self.momentum(z),
            Observable::Hamiltonian => {
                let point = self.lag_query_point(z)?;
                let mut grad = vec![0.0; 2 * n];
                for k in 0..n {
                    grad[n + k] = z[n + k] / self.scales.qdot[k];
                }
                Ok(Functional { rows: 1, lag: vec![LagTerm { point, value: vec![-1.0], grad }], force: Vec::new() })
            }
        }
    }

    /// The three normalization row groups `[𝓔_L, 𝓜_L, 𝓔_F]`.
    pub fn normalization(&self, spec: &NormalizationSpec) -> Result<[Functional; 3], ModelError> {
        spec.validate(self.n_q)?;
        Ok([
            self.lagrangian_eval(spec.anchor_l.as_slice())?,
            self.momentum(spec.anchor_l.as_slice())?,
            self.force_eval(spec.anchor_f.as_slice())?,
        ])
    }

    /// Writes `Cov(a, b)` row-major into `out` (`a.rows × b.rows`).
    pub fn cov_into(&self, a: &Functional, b: &Functional, jet: &mut KernelJet, out: &mut [f64]) {
        let (ra, rb) = (a.rows, b.rows);
        out[..ra * rb].fill(0.0);
        let d = self.lagrangian.dim();
        for ta in &a.lag {
            for tb in &b.lag {
                if ta.grad.is_empty() && tb.grad.is_empty() {
                    let k = self.lagrangian.value(&ta.point, &tb.point);
                    for i in 0..ra {
                        for j in 0..rb {
                            out[i * rb + j] += ta.value[i] * tb.value[j] * k;
                        }
                    }
                    continue;
                }
                self.lagrangian.jet_into(&ta.point, &tb.point, jet);
                let mut ga = [0.0; MAX_NQ];
                let mut gb = [0.0; MAX_NQ];
                let mut gh = [[0.0; 2 * MAX_NQ]; MAX_NQ];
                if !ta.grad.is_empty() {
                    for i in 0..ra {
                        let row = &ta.grad[i * d..(i + 1) * d];
                        for k in 0..d {
                            if row[k] == 0.0 {
                                continue;
                            }
                            ga[i] += row[k] * jet.grad_a[k];
                            for l in 0..d {
                                gh[i][l] += row[k] * jet.hess[k * d + l];
                            }
                        }
                    }
                }
                if !tb.grad.is_empty() {
                    for j in 0..rb {
                        let row = &tb.grad[j * d..(j + 1) * d];
                        gb[j] = (0..d).map(|k| row[k] * jet.grad_b[k]).sum();
                    }
                }
                for i in 0..ra {
                    for j in 0..rb {
                        let mut c = ta.value[i] * tb.value[j] * jet.value + ta.value[i] * gb[j] + ga[i] * tb.value[j];
                        if !ta.grad.is_empty() && !tb.grad.is_empty() {
                            let row = &tb.grad[j * d..(j + 1) * d];
                            for l in 0..d {
                                c += gh[i][l] * row[l];
                            }
                        }
                        out[i * rb + j] += c;
                    }
                }
            }
        }
        if !a.force.is_empty() && !b.force.is_empty() {
            debug_assert_eq!(ra, rb);
            let mut c = 0.0;
            for fa in &a.force {
                for fb in &b.force {
                    c += fa.weight * fb.weight * self.force.value(&fa.point, &fb.point);
                }
            }
            for i in 0..ra {
                out[i * rb + i] += c;
            }
        }
    }

    pub fn cov(&self, a: &Functional, b: &Functional) -> DMatrix<f64> {
        let mut jet = KernelJet::new(self.lagrangian.dim());
        let mut buf = vec![0.0; a.rows * b.rows];
        self.cov_into(a, b, &mut jet, &mut buf);
        DMatrix::from_row_slice(a.rows, b.rows, &buf)
    }

    /// Covariance of two residuals, `𝓛_i k_L 𝓛_j′ + 𝓕_i k_F 𝓕_j′`.
    pub fn residual_cov_block(&self, ti: &Triplet, hi: f64, tj: &Triplet, hj: f64) -> Result<DMatrix<f64>, ModelError> {
        Ok(self.cov(&self.residual(ti, hi)?, &self.residual(tj, hj)?))
    }

    /// Covariance between `L(query)` and the residual at `tj`.
    pub fn cross_cov_lagrangian(&self, query: &[f64], tj: &Triplet, hj: f64) -> Result<DVector<f64>, ModelError> {
        let c = self.cov(&self.lagrangian_eval(query)?, &self.residual(tj, hj)?);
        Ok(c.row(0).transpose())
    }

    /// Covariance between `F(query)` and the residual at `tj`; a multiple of `I`.
    pub fn cross_cov_force(&self, query: &[f64], tj: &Triplet, hj: f64) -> Result<DMatrix<f64>, ModelError> {
        Ok(self.cov(&self.force_eval(query)?, &self.residual(tj, hj)?))
    }

    /// Covariance between an observable at `z` and the residual at `tj`.
    pub fn observable_cross_cov(&self, obs: Observable, z: &[f64], tj: &Triplet, hj: f64) -> Result<DMatrix<f64>, ModelError> {
        Ok(self.cov(&self.observable(obs, z)?, &self.residual(tj, hj)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{HyperParams, KernelSpec};
    use approx::assert_relative_eq;

    fn prior(mode: OperatorMode, n: usize) -> Prior {
        let kl = KernelSpec::squared_exponential(2 * n);
        let kf = KernelSpec::squared_exponential(3 * n);
        Prior::new(
            mode,
            0.1,
            InputScales::unit(n),
            kl.resolve(&HyperParams::unit(&kl)).unwrap(),
            kf.resolve(&HyperParams::unit(&kf)).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn lift_examples() {
        let z = lift_midpoint(&DVector::from_vec(vec![0.0]), &DVector::from_vec(vec![0.1]), 0.1).unwrap();
        assert_relative_eq!(z.q_mid[0], 0.05);
        assert_relative_eq!(z.qdot[0], 1.0);
        let z = lift_midpoint(&DVector::zeros(2), &DVector::zeros(2), 0.05).unwrap();
        assert_relative_eq!(z.j_prev[(2, 0)], -20.0);
        let sum = &z.j_prev + &z.j_next;
        assert_eq!(sum.rows(2, 2), DMatrix::<f64>::zeros(2, 2));
        assert_eq!(sum.rows(0, 2), DMatrix::<f64>::identity(2, 2));
        assert!(lift_midpoint(&DVector::zeros(1), &DVector::zeros(1), 0.0).is_err());
    }

    #[test]
    fn discrete_rejects_other_steps() {
        let p = prior(OperatorMode::Discrete, 1);
        let v = DVector::from_vec(vec![0.1]);
        let t = Triplet::new(v.clone(), v.clone(), v.clone(), v.clone(), v).unwrap();
        assert!(matches!(p.residual(&t, 0.2), Err(ModelError::UnsupportedStep { .. })));
        assert!(p.residual(&t, 0.1).is_ok());
    }

    #[test]
    fn observables_need_continuous_mode() {
        let p = prior(OperatorMode::Discrete, 1);
        assert!(matches!(p.observable(Observable::Hamiltonian, &[0.0, 0.0]), Err(ModelError::UnsupportedMode { .. })));
    }

    #[test]
    fn anchor_corner_matches_kernel() {
        let p = prior(OperatorMode::ContinuousMidpoint, 2);
        let spec = NormalizationSpec::origin(2);
        let [e, m, _] = p.normalization(&spec).unwrap();
        assert_relative_eq!(p.cov(&e, &e)[(0, 0)], 1.0);
        // first derivative of a stationary kernel vanishes at coincidence
        assert_eq!(p.cov(&e, &m).norm(), 0.0);
        assert_relative_eq!(p.cov(&m, &m), DMatrix::identity(2, 2), epsilon = 1e-14);
    }
}
