//! Augmented Gram system, its factorization, and posterior queries.
//!
//! Row layout of `Θ̄`: `N·n_q` residual rows (one group per triplet), then the
//! Lagrangian evaluation at the anchor, the momentum at the anchor (`n_q`
//! rows) and the force evaluation at the force anchor (`n_q` rows). The
//! pseudo-measurements are `[0, …, 0, n_L, n_M, n_F]`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::kernels::{HyperParams, KernelFamily, KernelJet, KernelSpec};
use crate::operators::{Functional, InputScales, NormalizationSpec, Observable, OperatorMode, Prior, Triplet, MAX_NQ};
use crate::par;

const STD_FLOOR: f64 = 1e-12;

/// Per-component mean and standard deviation of a set of vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ComponentStats {
    pub fn from_samples<'a>(n: usize, samples: impl Iterator<Item = &'a [f64]> + Clone) -> Self {
        let count = samples.clone().count().max(1) as f64;
        let mut mean = vec![0.0; n];
        for s in samples.clone() {
            for i in 0..n {
                mean[i] += s[i] / count;
            }
        }
        let mut var = vec![0.0; n];
        for s in samples {
            for i in 0..n {
                var[i] += (s[i] - mean[i]).powi(2) / count;
            }
        }
        let std = var.into_iter().map(|v| v.sqrt().max(STD_FLOOR)).collect();
        ComponentStats { mean, std }
    }

    fn unit(n: usize) -> Self {
        ComponentStats { mean: vec![0.0; n], std: vec![1.0; n] }
    }

    /// Divisors for kernel inputs; degenerate components stay unscaled.
    fn scales(&self) -> DVector<f64> {
        DVector::from_iterator(self.std.len(), self.std.iter().map(|&s| if s > STD_FLOOR { s } else { 1.0 }))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub q: ComponentStats,
    /// Statistics of the finite-difference velocities of both segments.
    pub qdot: ComponentStats,
    pub u: ComponentStats,
}

impl Standardization {
    pub fn from_triplets(n: usize, triplets: &[Triplet], h: f64) -> Self {
        let qs: Vec<&[f64]> = triplets
            .iter()
            .flat_map(|t| [t.q_prev.as_slice(), t.q_curr.as_slice(), t.q_next.as_slice()])
            .collect();
        let vs: Vec<Vec<f64>> = triplets
            .iter()
            .flat_map(|t| [(&t.q_curr - &t.q_prev) / h, (&t.q_next - &t.q_curr) / h])
            .map(|v| v.as_slice().to_vec())
            .collect();
        let us: Vec<&[f64]> = triplets.iter().flat_map(|t| [t.u_prev.as_slice(), t.u_curr.as_slice()]).collect();
        Standardization {
            q: ComponentStats::from_samples(n, qs.iter().copied()),
            qdot: ComponentStats::from_samples(n, vs.iter().map(|v| v.as_slice())),
            u: ComponentStats::from_samples(n, us.iter().copied()),
        }
    }

    pub fn input_scales(&self) -> InputScales {
        InputScales { q: self.q.scales(), qdot: self.qdot.scales(), u: self.u.scales() }
    }
}

/// Training triplets recorded at a common step size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub n_q: usize,
    pub h_train: f64,
    pub triplets: Vec<Triplet>,
    pub standardization: Standardization,
    pub provenance: String,
}

impl Dataset {
    pub fn new(triplets: Vec<Triplet>, h_train: f64, provenance: impl Into<String>) -> Result<Self, ModelError> {
        let first = triplets.first().ok_or_else(|| ModelError::Data("dataset needs at least one triplet".into()))?;
        let n = first.n_q();
        if !(h_train > 0.0 && h_train.is_finite()) {
            return Err(ModelError::Domain(format!("h_train must be positive, got {h_train}")));
        }
        for t in &triplets {
            t.validate()?;
            if t.n_q() != n {
                return Err(ModelError::Dimension("triplets disagree on n_q".into()));
            }
        }
        let standardization = Standardization::from_triplets(n, &triplets, h_train);
        Ok(Dataset { n_q: n, h_train, triplets, standardization, provenance: provenance.into() })
    }

    /// No triplets, unit standardization: only the anchor rows remain.
    pub fn anchor_only(n_q: usize, h_train: f64) -> Self {
        let unit = ComponentStats::unit(n_q);
        Dataset {
            n_q,
            h_train,
            triplets: Vec::new(),
            standardization: Standardization { q: unit.clone(), qdot: unit.clone(), u: unit },
            provenance: "anchor-only".into(),
        }
    }

    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }

    /// The same triplets with statistics recomputed, e.g. after subsetting.
    pub fn subset(&self, idx: &[usize]) -> Result<Self, ModelError> {
        let t = idx.iter().map(|&i| self.triplets[i].clone()).collect();
        Dataset::new(t, self.h_train, self.provenance.clone())
    }
}

/// Lagrangian and force kernel families of a model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelPair {
    pub lagrangian: KernelSpec,
    pub force: KernelSpec,
}

impl KernelPair {
    pub fn physics(n_q: usize) -> Self {
        KernelPair { lagrangian: KernelSpec::physics_lagrangian(n_q), force: KernelSpec::physics_force(n_q) }
    }

    pub fn physics_pressure(n_q: usize) -> Self {
        KernelPair { lagrangian: KernelSpec::physics_lagrangian(n_q), force: KernelSpec::pressure_dissipation(n_q) }
    }

    pub fn generic(n_q: usize) -> Self {
        KernelPair { lagrangian: KernelSpec::squared_exponential(2 * n_q), force: KernelSpec::squared_exponential(3 * n_q) }
    }

    /// `physics`, `physics-pressure` or `generic`.
    pub fn by_name(name: &str, n_q: usize) -> Result<Self, ModelError> {
        match name {
            "physics" => Ok(Self::physics(n_q)),
            "physics-pressure" => Ok(Self::physics_pressure(n_q)),
            "generic" => Ok(Self::generic(n_q)),
            _ => Err(ModelError::Data(format!("unknown kernel family '{name}' (physics, physics-pressure, generic)"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match (self.lagrangian.family, self.force.family) {
            (KernelFamily::PhysicsLagrangian, KernelFamily::PhysicsForcePressureDissipation) => "physics-pressure",
            (KernelFamily::PhysicsLagrangian, _) => "physics",
            _ => "generic",
        }
    }

    pub fn n_params(&self) -> usize {
        self.lagrangian.n_params() + self.force.n_params()
    }

    /// Anchor conditions of the given kind for this dataset.
    pub fn normalization(&self, kind: AnchorKind, mode: OperatorMode, dataset: &Dataset) -> NormalizationSpec {
        match kind {
            AnchorKind::Origin => NormalizationSpec::origin(dataset.n_q),
            AnchorKind::Perturbed => {
                let s = dataset.standardization.qdot.scales();
                NormalizationSpec::perturbed(mode, &s, dataset.h_train)
            }
        }
    }

    /// The perturbed anchor with non-zero momentum, for every family.
    ///
    /// With the origin anchor and zero momentum nothing pins the kinetic
    /// scale, and marginal-likelihood training shrinks the physics kernel's
    /// kinetic variance until the posterior is close to a null Lagrangian.
    pub fn default_normalization(&self, mode: OperatorMode, dataset: &Dataset) -> NormalizationSpec {
        self.normalization(AnchorKind::Perturbed, mode, dataset)
    }
}

/// Where the normalization conditions are imposed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorKind {
    /// Origin with zero momentum.
    Origin,
    /// Anchor displaced by `±1e-2·σ_q̇·h` with momentum `1e-2·σ_q̇`.
    #[default]
    Perturbed,
}

impl std::str::FromStr for AnchorKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "origin" => Ok(AnchorKind::Origin),
            "perturbed" => Ok(AnchorKind::Perturbed),
            _ => Err(format!("unknown anchor '{s}' (origin, perturbed)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaPair {
    pub lagrangian: HyperParams,
    pub force: HyperParams,
}

impl ThetaPair {
    pub fn unit(k: &KernelPair) -> Self {
        ThetaPair { lagrangian: HyperParams::unit(&k.lagrangian), force: HyperParams::unit(&k.force) }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.lagrangian.to_flat();
        v.extend(self.force.to_flat());
        v
    }

    pub fn from_flat(k: &KernelPair, flat: &[f64]) -> Result<Self, ModelError> {
        let nl = k.lagrangian.n_params();
        if flat.len() != k.n_params() {
            return Err(ModelError::Dimension(format!("expected {} hyperparameters, got {}", k.n_params(), flat.len())));
        }
        Ok(ThetaPair {
            lagrangian: HyperParams::from_flat(&k.lagrangian, &flat[..nl])?,
            force: HyperParams::from_flat(&k.force, &flat[nl..])?,
        })
    }
}

pub fn build_prior(
    dataset: &Dataset,
    kernels: &KernelPair,
    thetas: &ThetaPair,
    mode: OperatorMode,
) -> Result<Prior, ModelError> {
    Prior::new(
        mode,
        dataset.h_train,
        dataset.standardization.input_scales(),
        kernels.lagrangian.resolve(&thetas.lagrangian)?,
        kernels.force.resolve(&thetas.force)?,
    )
}

/// The row groups of `Θ̄` and the pseudo-measurements; independent of `θ`.
#[derive(Debug, Clone)]
pub struct GramLayout {
    pub groups: Vec<Functional>,
    pub offsets: Vec<usize>,
    pub rhs: DVector<f64>,
    pub n_residual_rows: usize,
}

impl GramLayout {
    pub fn build(prior: &Prior, dataset: &Dataset, norm: &NormalizationSpec) -> Result<Self, ModelError> {
        if dataset.n_q != prior.n_q {
            return Err(ModelError::Dimension("dataset and kernels disagree on n_q".into()));
        }
        let mut groups = Vec::with_capacity(dataset.len() + 3);
        for t in &dataset.triplets {
            groups.push(prior.residual(t, dataset.h_train)?);
        }
        groups.extend(prior.normalization(norm)?);
        let mut offsets = Vec::with_capacity(groups.len() + 1);
        let mut total = 0;
        for g in &groups {
            offsets.push(total);
            total += g.rows();
        }
        offsets.push(total);
        let n = prior.n_q;
        let n_res = dataset.len() * n;
        let mut rhs = DVector::zeros(total);
        rhs[n_res] = norm.n_l;
        rhs.rows_mut(n_res + 1, n).copy_from(&norm.n_m);
        rhs.rows_mut(n_res + 1 + n, n).copy_from(&norm.n_f);
        Ok(GramLayout { groups, offsets, rhs, n_residual_rows: n_res })
    }

    pub fn size(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    /// `Θ̄` with `slack` on the residual diagonal.
    pub fn matrix(&self, prior: &Prior, slack: f64) -> Result<DMatrix<f64>, ModelError> {
        let m = self.groups.len();
        let d = prior.lagrangian.dim();
        let rows: Vec<Vec<f64>> = par::map_indexed(m, |i| {
            let mut jet = KernelJet::new(d);
            let gi = &self.groups[i];
            let mut out = Vec::new();
            let mut buf = [0.0; MAX_NQ * MAX_NQ];
            for gj in &self.groups[i..] {
                prior.cov_into(gi, gj, &mut jet, &mut buf);
                out.extend_from_slice(&buf[..gi.rows() * gj.rows()]);
            }
            out
        });
        let size = self.size();
        let mut k = DMatrix::zeros(size, size);
        for (i, blocks) in rows.iter().enumerate() {
            let ri = self.groups[i].rows();
            let mut pos = 0;
            for j in i..m {
                let rj = self.groups[j].rows();
                let (oi, oj) = (self.offsets[i], self.offsets[j]);
                for a in 0..ri {
                    for b in 0..rj {
                        let v = blocks[pos + a * rj + b];
                        if !v.is_finite() {
                            return Err(ModelError::Assembly(format!("({i}, {j})")));
                        }
                        k[(oi + a, oj + b)] = v;
                        k[(oj + b, oi + a)] = v;
                    }
                }
                if i == j {
                    for a in 0..ri {
                        for b in a + 1..ri {
                            let s = 0.5 * (blocks[pos + a * ri + b] + blocks[pos + b * ri + a]);
                            k[(oi + a, oi + b)] = s;
                            k[(oi + b, oi + a)] = s;
                        }
                    }
                }
                pos += ri * rj;
            }
        }
        for i in 0..self.n_residual_rows {
            k[(i, i)] += slack;
        }
        Ok(k)
    }

    /// Covariances between every row of `Θ̄` and the query group.
    pub fn cross(&self, prior: &Prior, q: &Functional) -> DMatrix<f64> {
        let rq = q.rows();
        let mut k = DMatrix::zeros(self.size(), rq);
        let mut jet = KernelJet::new(prior.lagrangian.dim());
        let mut buf = [0.0; MAX_NQ * MAX_NQ];
        for (g, &off) in self.groups.iter().zip(&self.offsets) {
            prior.cov_into(g, q, &mut jet, &mut buf);
            for a in 0..g.rows() {
                for b in 0..rq {
                    k[(off + a, b)] = buf[a * rq + b];
                }
            }
        }
        k
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    Cholesky,
    PseudoInverse,
}

#[derive(Debug, Clone)]
enum Factor {
    Chol(Cholesky<f64, Dyn>),
    Eigen { vectors: DMatrix<f64>, inv_values: DVector<f64>, log_det: f64 },
}

/// `Θ̄`, `ȳ` and a factorization of `Θ̄`.
#[derive(Debug, Clone)]
pub struct GramSystem {
    pub matrix: DMatrix<f64>,
    pub rhs: DVector<f64>,
    pub method: SolveMethod,
    pub jitter_used: f64,
    factor: Factor,
}

impl GramSystem {
    /// Cholesky first, then with jitter `10⁻¹⁰·tr/n` growing tenfold over at
    /// most six retries, then an eigendecomposition pseudo-inverse with
    /// relative cutoff `10⁻¹²`.
    pub fn factorize(matrix: DMatrix<f64>, rhs: DVector<f64>) -> Result<Self, ModelError> {
        let n = matrix.nrows();
        if matrix.ncols() != n || rhs.len() != n {
            return Err(ModelError::Dimension(format!("{}x{} system with rhs {}", n, matrix.ncols(), rhs.len())));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::Assembly("non-finite entry".into()));
        }
        if let Some(c) = Cholesky::new(matrix.clone()) {
            return Ok(GramSystem { matrix, rhs, method: SolveMethod::Cholesky, jitter_used: 0.0, factor: Factor::Chol(c) });
        }
        let mut jitter = 1e-10 * matrix.trace().abs().max(f64::MIN_POSITIVE) / n.max(1) as f64;
        for _ in 0..=6 {
            let mut m = matrix.clone();
            for i in 0..n {
                m[(i, i)] += jitter;
            }
            if let Some(c) = Cholesky::new(m) {
                return Ok(GramSystem { matrix, rhs, method: SolveMethod::Cholesky, jitter_used: jitter, factor: Factor::Chol(c) });
            }
            jitter *= 10.0;
        }
        let eig = SymmetricEigen::new(matrix.clone());
        let lmax = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !(lmax > 0.0 && lmax.is_finite()) {
            return Err(ModelError::Singular("no positive eigenvalues".into()));
        }
        let cutoff = 1e-12 * lmax;
        let mut log_det = 0.0;
        let inv_values = eig.eigenvalues.map(|l| {
            if l > cutoff {
                log_det += l.ln();
                1.0 / l
            } else {
                0.0
            }
        });
        Ok(GramSystem {
            matrix,
            rhs,
            method: SolveMethod::PseudoInverse,
            jitter_used: 0.0,
            factor: Factor::Eigen { vectors: eig.eigenvectors, inv_values, log_det },
        })
    }

    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }

    /// `Θ̄† b`.
    pub fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>, ModelError> {
        if b.len() != self.size() {
            return Err(ModelError::Dimension(format!("rhs {} vs system {}", b.len(), self.size())));
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::Data("non-finite right-hand side".into()));
        }
        Ok(match &self.factor {
            Factor::Chol(c) => c.solve(b),
            Factor::Eigen { vectors, inv_values, .. } => {
                let y = vectors.tr_mul(b).component_mul(inv_values);
                vectors * y
            }
        })
    }

    /// `Kᵀ Θ̄† K` without forming the inverse.
    pub fn quad_form(&self, k: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.factor {
            Factor::Chol(c) => {
                let v = c.l_dirty().solve_lower_triangular(k).expect("non-singular factor");
                v.tr_mul(&v)
            }
            Factor::Eigen { vectors, inv_values, .. } => {
                let mut y = vectors.tr_mul(k);
                for (mut row, w) in y.row_iter_mut().zip(inv_values.iter()) {
                    row *= w.sqrt();
                }
                y.tr_mul(&y)
            }
        }
    }

    /// `log det` of the factored matrix (retained eigenvalues only for the
    /// pseudo-inverse path).
    pub fn log_det(&self) -> f64 {
        match &self.factor {
            Factor::Chol(c) => 2.0 * c.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>(),
            Factor::Eigen { log_det, .. } => *log_det,
        }
    }
}

/// Standalone form of [`GramSystem::solve`].
pub fn solve(gram: &GramSystem, rhs: &DVector<f64>) -> Result<DVector<f64>, ModelError> {
    gram.solve(rhs)
}

/// Assembles and factors `Θ̄` for a dataset.
pub fn assemble(
    dataset: &Dataset,
    kernels: &KernelPair,
    thetas: &ThetaPair,
    normalization: &NormalizationSpec,
    slack: f64,
    mode: OperatorMode,
) -> Result<GramSystem, ModelError> {
    if !(slack >= 0.0 && slack.is_finite()) {
        return Err(ModelError::Domain(format!("slack must be non-negative, got {slack}")));
    }
    let prior = build_prior(dataset, kernels, thetas, mode)?;
    let layout = GramLayout::build(&prior, dataset, normalization)?;
    GramSystem::factorize(layout.matrix(&prior, slack)?, layout.rhs.clone())
}

/// Posterior mean and (clamped) covariance of a group of functionals.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorEval {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    /// Smallest eigenvalue before clamping.
    pub unclamped_min: f64,
    /// Trace of the prior covariance of the same functionals.
    pub prior_trace: f64,
}

impl PosteriorEval {
    pub fn scalar_mean(&self) -> f64 {
        self.mean[0]
    }

    pub fn scalar_variance(&self) -> f64 {
        self.covariance[(0, 0)]
    }

    pub fn trace(&self) -> f64 {
        self.covariance.trace()
    }
}

/// A conditioned model ready for posterior queries.
#[derive(Debug, Clone)]
pub struct TrainedLgp {
    pub mode: OperatorMode,
    pub kernels: KernelPair,
    pub thetas: ThetaPair,
    pub normalization: NormalizationSpec,
    pub slack: f64,
    pub dataset: Dataset,
    pub gram: GramSystem,
    pub alpha: DVector<f64>,
    prior: Prior,
    layout: GramLayout,
}

impl TrainedLgp {
    pub fn new(
        dataset: Dataset,
        kernels: KernelPair,
        thetas: ThetaPair,
        normalization: NormalizationSpec,
        slack: f64,
        mode: OperatorMode,
    ) -> Result<Self, ModelError> {
        if !(slack >= 0.0 && slack.is_finite()) {
            return Err(ModelError::Domain(format!("slack must be non-negative, got {slack}")));
        }
        let prior = build_prior(&dataset, &kernels, &thetas, mode)?;
        let layout = GramLayout::build(&prior, &dataset, &normalization)?;
        let gram = GramSystem::factorize(layout.matrix(&prior, slack)?, layout.rhs.clone())?;
        let alpha = gram.solve(&layout.rhs)?;
        Ok(TrainedLgp { mode, kernels, thetas, normalization, slack, dataset, gram, alpha, prior, layout })
    }

    /// The same model conditioned with a different slack.
    pub fn with_slack(&self, slack: f64) -> Result<Self, ModelError> {
        TrainedLgp::new(self.dataset.clone(), self.kernels, self.thetas.clone(), self.normalization.clone(), slack, self.mode)
    }

    pub fn n_q(&self) -> usize {
        self.dataset.n_q
    }

    pub fn h_train(&self) -> f64 {
        self.dataset.h_train
    }

    pub fn prior(&self) -> &Prior {
        &self.prior
    }

    /// Posterior of an arbitrary functional group.
    pub fn posterior(&self, q: &Functional) -> PosteriorEval {
        let k = self.layout.cross(&self.prior, q);
        let mean = k.tr_mul(&self.alpha);
        let prior_cov = self.prior.cov(q, q);
        let mut cov = &prior_cov - self.gram.quad_form(&k);
        cov = (&cov + cov.transpose()) * 0.5;
        let (covariance, unclamped_min) = clamp_psd(cov);
        PosteriorEval { mean, covariance, unclamped_min, prior_trace: prior_cov.trace() }
    }

    /// Posterior mean only; skips the variance solve.
    pub fn posterior_mean(&self, q: &Functional) -> DVector<f64> {
        self.layout.cross(&self.prior, q).tr_mul(&self.alpha)
    }

    /// `L` at `(q_a, q_b)` (discrete) or `(q, q̇)` (continuous).
    pub fn posterior_lagrangian(&self, query: &[f64]) -> Result<PosteriorEval, ModelError> {
        Ok(self.posterior(&self.prior.lagrangian_eval(query)?))
    }

    /// `F` at `(u, q_a, q_b)` (discrete) or `(u, q, q̇)` (continuous).
    pub fn posterior_force(&self, query: &[f64]) -> Result<PosteriorEval, ModelError> {
        Ok(self.posterior(&self.prior.force_eval(query)?))
    }

    pub fn posterior_residual(&self, candidate: &Triplet, h_pred: f64) -> Result<PosteriorEval, ModelError> {
        Ok(self.posterior(&self.prior.residual(candidate, h_pred)?))
    }

    pub fn residual_mean(&self, candidate: &Triplet, h_pred: f64) -> Result<DVector<f64>, ModelError> {
        Ok(self.posterior_mean(&self.prior.residual(candidate, h_pred)?))
    }

    pub fn posterior_hamiltonian(&self, z: &[f64]) -> Result<PosteriorEval, ModelError> {
        Ok(self.posterior(&self.prior.observable(Observable::Hamiltonian, z)?))
    }

    pub fn posterior_momentum(&self, z: &[f64]) -> Result<PosteriorEval, ModelError> {
        Ok(self.posterior(&self.prior.observable(Observable::Momentum, z)?))
    }
}

/// Symmetric eigenvalue clamp at zero; returns the smallest raw eigenvalue.
fn clamp_psd(m: DMatrix<f64>) -> (DMatrix<f64>, f64) {
    if m.nrows() == 1 {
        let v = m[(0, 0)];
        return (DMatrix::from_element(1, 1, v.max(0.0)), v);
    }
    let eig = SymmetricEigen::new(m.clone());
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min >= 0.0 {
        return (m, min);
    }
    let clamped = eig.eigenvalues.map(|l| l.max(0.0));
    let v = &eig.eigenvectors;
    (v * DMatrix::from_diagonal(&clamped) * v.transpose(), min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn identity_solve() {
        let g = GramSystem::factorize(DMatrix::identity(3, 3), DVector::zeros(3)).unwrap();
        let e1 = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        assert_eq!(g.solve(&e1).unwrap(), e1);
        assert_eq!(g.method, SolveMethod::Cholesky);
        assert_eq!(g.jitter_used, 0.0);
    }

    #[test]
    fn rank_deficient_min_norm() {
        // rank one: v vᵀ with v = (1, 2, 2)
        let v = DVector::from_vec(vec![1.0, 2.0, 2.0]);
        let m = &v * v.transpose();
        let b = &v * 3.0;
        let g = GramSystem::factorize(m.clone(), b.clone()).unwrap();
        let x = g.solve(&b).unwrap();
        let oracle = m.clone().pseudo_inverse(1e-12).unwrap() * &b;
        assert_relative_eq!((&m * &x - &b).norm(), 0.0, epsilon = 1e-6 * b.norm());
        // jitter may perturb the minimum-norm answer slightly
        assert_relative_eq!(x, oracle, epsilon = 1e-3);
    }

    #[test]
    fn forced_pseudo_inverse_is_min_norm() {
        let neg = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0]);
        let g = GramSystem::factorize(neg.clone(), DVector::zeros(3)).unwrap();
        assert_eq!(g.method, SolveMethod::PseudoInverse);
        let x = g.solve(&DVector::from_vec(vec![2.0, 0.0, 0.0])).unwrap();
        assert_relative_eq!(x, DVector::from_vec(vec![2.0, 0.0, 0.0]), epsilon = 1e-12);
    }

    #[test]
    fn log_det_of_scaled_identity() {
        let g = GramSystem::factorize(DMatrix::identity(2, 2) * 4.0, DVector::zeros(2)).unwrap();
        assert_relative_eq!(g.log_det(), 2.0 * 4f64.ln(), epsilon = 1e-14);
    }
}
