//! Scalar covariance functions with analytic gradients and cross-Hessians.
//!
//! Every family is built from squared-exponential ARD sub-kernels multiplied
//! by hyperparameter-free polynomial factors. Derivatives come from the
//! product rule over those pieces, so the same code path serves values,
//! gradients in either argument and the mixed Hessian `∂²k/∂a∂b`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::KernelError;

/// Largest input dimension for which derivative jets are available.
pub const MAX_JET_DIM: usize = 12;
const MAX_BLOCK: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    SquaredExponentialArd,
    PhysicsLagrangian,
    PhysicsForce,
    PhysicsForcePressureDissipation,
    SeparableBaseline,
}

impl KernelFamily {
    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::SquaredExponentialArd => "squared_exponential_ard",
            KernelFamily::PhysicsLagrangian => "physics_lagrangian",
            KernelFamily::PhysicsForce => "physics_force",
            KernelFamily::PhysicsForcePressureDissipation => "physics_force_pressure_dissipation",
            KernelFamily::SeparableBaseline => "separable_baseline",
        }
    }

    /// Physics families carry polynomial factors that pin the origin.
    pub fn is_physics(self) -> bool {
        matches!(
            self,
            KernelFamily::PhysicsLagrangian
                | KernelFamily::PhysicsForce
                | KernelFamily::PhysicsForcePressureDissipation
        )
    }
}

/// One squared-exponential factor acting on a contiguous slice of the input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubKernel {
    pub name: &'static str,
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub input_dim: usize,
    /// Configuration dimension for physics families, zero otherwise.
    pub n_q: usize,
}

impl KernelSpec {
    pub fn squared_exponential(dim: usize) -> Self {
        KernelSpec { family: KernelFamily::SquaredExponentialArd, input_dim: dim, n_q: 0 }
    }

    pub fn separable_baseline(dim: usize) -> Self {
        KernelSpec { family: KernelFamily::SeparableBaseline, input_dim: dim, n_q: 0 }
    }

    /// Energy-structured prior over `(q, q̇)`.
    pub fn physics_lagrangian(n_q: usize) -> Self {
        KernelSpec { family: KernelFamily::PhysicsLagrangian, input_dim: 2 * n_q, n_q }
    }

    /// Control- and velocity-affine force prior over `(u, q, q̇)`.
    pub fn physics_force(n_q: usize) -> Self {
        KernelSpec { family: KernelFamily::PhysicsForce, input_dim: 3 * n_q, n_q }
    }

    /// Force prior whose damping depends on the input as well as `q`.
    pub fn pressure_dissipation(n_q: usize) -> Self {
        KernelSpec {
            family: KernelFamily::PhysicsForcePressureDissipation,
            input_dim: 3 * n_q,
            n_q,
        }
    }

    /// Rebuilds a spec from its family name and configuration dimension.
    pub fn from_family(family: KernelFamily, dim: usize, n_q: usize) -> Result<Self, KernelError> {
        let spec = match family {
            KernelFamily::SquaredExponentialArd => Self::squared_exponential(dim),
            KernelFamily::SeparableBaseline => Self::separable_baseline(dim),
            KernelFamily::PhysicsLagrangian => Self::physics_lagrangian(n_q),
            KernelFamily::PhysicsForce => Self::physics_force(n_q),
            KernelFamily::PhysicsForcePressureDissipation => Self::pressure_dissipation(n_q),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), KernelError> {
        if self.input_dim == 0 {
            return Err(KernelError::InvalidSpec("input dimension must be positive".into()));
        }
        if self.family.is_physics() && (self.n_q == 0 || 2 * self.n_q > MAX_BLOCK) {
            return Err(KernelError::InvalidSpec(format!(
                "physics kernels support 1..={} configuration dimensions, got {}",
                MAX_BLOCK / 2,
                self.n_q
            )));
        }
        Ok(())
    }

    pub fn sub_kernels(&self) -> Vec<SubKernel> {
        let n = self.n_q;
        match self.family {
            KernelFamily::SquaredExponentialArd | KernelFamily::SeparableBaseline => {
                vec![SubKernel { name: "se", offset: 0, len: self.input_dim }]
            }
            KernelFamily::PhysicsLagrangian => vec![
                SubKernel { name: "kinetic", offset: 0, len: n },
                SubKernel { name: "potential", offset: 0, len: n },
                SubKernel { name: "spring", offset: 0, len: n },
            ],
            KernelFamily::PhysicsForce => vec![
                SubKernel { name: "actuation", offset: n, len: n },
                SubKernel { name: "dissipation", offset: n, len: n },
            ],
            KernelFamily::PhysicsForcePressureDissipation => {
                vec![SubKernel { name: "dissipation", offset: 0, len: 2 * n }]
            }
        }
    }

    pub fn n_params(&self) -> usize {
        self.sub_kernels().iter().map(|s| 1 + s.len).sum()
    }

    fn check_point(&self, p: &[f64]) -> Result<(), KernelError> {
        if p.len() != self.input_dim {
            return Err(KernelError::Shape { expected: self.input_dim, got: p.len() });
        }
        Ok(())
    }

    /// Exponentiates the hyperparameters once for repeated evaluation.
    pub fn resolve(&self, theta: &HyperParams) -> Result<ResolvedKernel, KernelError> {
        self.validate()?;
        theta.check(self)?;
        let subs = self.sub_kernels();
        let variances = theta.log_signal_variances.iter().map(|v| v.exp()).collect();
        let inv_l2 = theta
            .log_lengthscales
            .iter()
            .map(|ls| ls.iter().map(|l| (-2.0 * l).exp()).collect())
            .collect();
        Ok(ResolvedKernel { spec: *self, subs, variances, inv_l2 })
    }
}

/// Log-space hyperparameters, one block per sub-kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub log_signal_variances: Vec<f64>,
    pub log_lengthscales: Vec<Vec<f64>>,
}

impl HyperParams {
    /// Unit variances and unit lengthscales.
    pub fn unit(spec: &KernelSpec) -> Self {
        let subs = spec.sub_kernels();
        HyperParams {
            log_signal_variances: vec![0.0; subs.len()],
            log_lengthscales: subs.iter().map(|s| vec![0.0; s.len]).collect(),
        }
    }

    /// Flattened as `[log σ²₀, log ℓ₀…, log σ²₁, log ℓ₁…, …]`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (v, ls) in self.log_signal_variances.iter().zip(&self.log_lengthscales) {
            out.push(*v);
            out.extend_from_slice(ls);
        }
        out
    }

    pub fn from_flat(spec: &KernelSpec, flat: &[f64]) -> Result<Self, KernelError> {
        if flat.len() != spec.n_params() {
            return Err(KernelError::Shape { expected: spec.n_params(), got: flat.len() });
        }
        let mut vars = Vec::new();
        let mut lens = Vec::new();
        let mut i = 0;
        for s in spec.sub_kernels() {
            vars.push(flat[i]);
            lens.push(flat[i + 1..i + 1 + s.len].to_vec());
            i += 1 + s.len;
        }
        let theta = HyperParams { log_signal_variances: vars, log_lengthscales: lens };
        theta.check(spec)?;
        Ok(theta)
    }

    pub fn check(&self, spec: &KernelSpec) -> Result<(), KernelError> {
        let subs = spec.sub_kernels();
        if self.log_signal_variances.len() != subs.len() || self.log_lengthscales.len() != subs.len()
        {
            return Err(KernelError::Shape { expected: subs.len(), got: self.log_signal_variances.len() });
        }
        for (s, ls) in subs.iter().zip(&self.log_lengthscales) {
            if ls.len() != s.len {
                return Err(KernelError::Shape { expected: s.len, got: ls.len() });
            }
        }
        let finite = self.log_signal_variances.iter().chain(self.log_lengthscales.iter().flatten());
        for v in finite {
            // exp must stay strictly positive and finite
            if !v.is_finite() || v.abs() > 300.0 {
                return Err(KernelError::NonFinite);
            }
        }
        Ok(())
    }
}

/// Value, argument gradients and mixed Hessian of `k(a, b)`.
///
/// Only the leading `dim` entries are meaningful; the Hessian is stored
/// row-major with stride `dim`.
#[derive(Clone)]
pub struct KernelJet {
    pub dim: usize,
    pub value: f64,
    pub grad_a: [f64; MAX_JET_DIM],
    pub grad_b: [f64; MAX_JET_DIM],
    pub hess: [f64; MAX_JET_DIM * MAX_JET_DIM],
}

impl KernelJet {
    pub fn new(dim: usize) -> Self {
        assert!(dim <= MAX_JET_DIM);
        KernelJet {
            dim,
            value: 0.0,
            grad_a: [0.0; MAX_JET_DIM],
            grad_b: [0.0; MAX_JET_DIM],
            hess: [0.0; MAX_JET_DIM * MAX_JET_DIM],
        }
    }

    fn reset(&mut self, dim: usize) {
        self.dim = dim;
        self.value = 0.0;
        self.grad_a[..dim].fill(0.0);
        self.grad_b[..dim].fill(0.0);
        self.hess[..dim * dim].fill(0.0);
    }

    #[inline]
    pub fn h(&self, i: usize, j: usize) -> f64 {
        self.hess[i * self.dim + j]
    }
}

/// A factor restricted to `[off, off + len)` of the input.
struct Factor {
    off: usize,
    len: usize,
    v: f64,
    ga: [f64; MAX_BLOCK],
    gb: [f64; MAX_BLOCK],
    h: [f64; MAX_BLOCK * MAX_BLOCK],
}

impl Factor {
    fn zero(off: usize, len: usize) -> Self {
        Factor {
            off,
            len,
            v: 0.0,
            ga: [0.0; MAX_BLOCK],
            gb: [0.0; MAX_BLOCK],
            h: [0.0; MAX_BLOCK * MAX_BLOCK],
        }
    }

    fn se(a: &[f64], b: &[f64], off: usize, len: usize, var: f64, inv_l2: &[f64]) -> Self {
        let mut f = Factor::zero(off, len);
        let mut r = [0.0; MAX_BLOCK];
        let mut s = 0.0;
        for i in 0..len {
            let d = a[off + i] - b[off + i];
            s += d * d * inv_l2[i];
            r[i] = d * inv_l2[i];
        }
        let e = var * (-0.5 * s).exp();
        f.v = e;
        for i in 0..len {
            f.ga[i] = -r[i] * e;
            f.gb[i] = r[i] * e;
            for j in 0..len {
                let diag = if i == j { inv_l2[i] } else { 0.0 };
                f.h[i * len + j] = (diag - r[i] * r[j]) * e;
            }
        }
        f
    }

    /// `aᵀb` over the block.
    fn dot(a: &[f64], b: &[f64], off: usize, len: usize) -> Self {
        let mut f = Factor::zero(off, len);
        for i in 0..len {
            f.v += a[off + i] * b[off + i];
            f.ga[i] = b[off + i];
            f.gb[i] = a[off + i];
            f.h[i * len + i] = 1.0;
        }
        f
    }

    /// `(aᵀb)²` over the block.
    fn dot_sq(a: &[f64], b: &[f64], off: usize, len: usize) -> Self {
        let mut f = Factor::zero(off, len);
        let mut s = 0.0;
        for i in 0..len {
            s += a[off + i] * b[off + i];
        }
        f.v = s * s;
        for i in 0..len {
            f.ga[i] = 2.0 * s * b[off + i];
            f.gb[i] = 2.0 * s * a[off + i];
            for j in 0..len {
                let diag = if i == j { 2.0 * s } else { 0.0 };
                f.h[i * len + j] = 2.0 * b[off + i] * a[off + j] + diag;
            }
        }
        f
    }
}

fn add_factor(out: &mut KernelJet, f: &Factor) {
    let d = out.dim;
    out.value += f.v;
    for i in 0..f.len {
        out.grad_a[f.off + i] += f.ga[i];
        out.grad_b[f.off + i] += f.gb[i];
        for j in 0..f.len {
            out.hess[(f.off + i) * d + f.off + j] += f.h[i * f.len + j];
        }
    }
}

fn add_product(out: &mut KernelJet, f: &Factor, g: &Factor) {
    let d = out.dim;
    out.value += f.v * g.v;
    for i in 0..f.len {
        out.grad_a[f.off + i] += f.ga[i] * g.v;
        out.grad_b[f.off + i] += f.gb[i] * g.v;
        for j in 0..f.len {
            out.hess[(f.off + i) * d + f.off + j] += f.h[i * f.len + j] * g.v;
        }
    }
    for i in 0..g.len {
        out.grad_a[g.off + i] += f.v * g.ga[i];
        out.grad_b[g.off + i] += f.v * g.gb[i];
        for j in 0..g.len {
            out.hess[(g.off + i) * d + g.off + j] += f.v * g.h[i * g.len + j];
        }
    }
    for i in 0..f.len {
        for j in 0..g.len {
            out.hess[(f.off + i) * d + g.off + j] += f.ga[i] * g.gb[j];
            out.hess[(g.off + j) * d + f.off + i] += g.ga[j] * f.gb[i];
        }
    }
}

/// A kernel with exponentiated hyperparameters, ready for hot loops.
#[derive(Debug, Clone)]
pub struct ResolvedKernel {
    pub spec: KernelSpec,
    subs: Vec<SubKernel>,
    variances: Vec<f64>,
    inv_l2: Vec<Vec<f64>>,
}

impl ResolvedKernel {
    pub fn dim(&self) -> usize {
        self.spec.input_dim
    }

    fn se_value(&self, k: usize, a: &[f64], b: &[f64]) -> f64 {
        let s = &self.subs[k];
        let il = &self.inv_l2[k];
        let mut acc = 0.0;
        for i in 0..s.len {
            let d = a[s.offset + i] - b[s.offset + i];
            acc += d * d * il[i];
        }
        self.variances[k] * (-0.5 * acc).exp()
    }

    /// Kernel value without derivatives.
    pub fn value(&self, a: &[f64], b: &[f64]) -> f64 {
        let n = self.spec.n_q;
        let dot = |off: usize, len: usize| -> f64 {
            let mut s = 0.0;
            for i in off..off + len {
                s += a[i] * b[i];
            }
            s
        };
        match self.spec.family {
            KernelFamily::SquaredExponentialArd | KernelFamily::SeparableBaseline => {
                self.se_value(0, a, b)
            }
            KernelFamily::PhysicsLagrangian => {
                let v = dot(n, n);
                let q = dot(0, n);
                self.se_value(0, a, b) * v * v + self.se_value(1, a, b) + self.se_value(2, a, b) * q * q
            }
            KernelFamily::PhysicsForce => {
                self.se_value(0, a, b) * dot(0, n) + self.se_value(1, a, b) * dot(2 * n, n)
            }
            KernelFamily::PhysicsForcePressureDissipation => {
                dot(0, n) + self.se_value(0, a, b) * dot(2 * n, n)
            }
        }
    }

    /// Fills `out` with the value, both gradients and the mixed Hessian.
    pub fn jet_into(&self, a: &[f64], b: &[f64], out: &mut KernelJet) {
        let d = self.spec.input_dim;
        let n = self.spec.n_q;
        debug_assert!(d <= MAX_JET_DIM && a.len() == d && b.len() == d);
        out.reset(d);
        let se = |k: usize| {
            let s = &self.subs[k];
            Factor::se(a, b, s.offset, s.len, self.variances[k], &self.inv_l2[k])
        };
        match self.spec.family {
            KernelFamily::SquaredExponentialArd | KernelFamily::SeparableBaseline => {
                let il = &self.inv_l2[0];
                let mut r = [0.0; MAX_JET_DIM];
                let mut s = 0.0;
                for i in 0..d {
                    let diff = a[i] - b[i];
                    s += diff * diff * il[i];
                    r[i] = diff * il[i];
                }
                let e = self.variances[0] * (-0.5 * s).exp();
                out.value = e;
                for i in 0..d {
                    out.grad_a[i] = -r[i] * e;
                    out.grad_b[i] = r[i] * e;
                    for j in 0..d {
                        let diag = if i == j { il[i] } else { 0.0 };
                        out.hess[i * d + j] = (diag - r[i] * r[j]) * e;
                    }
                }
            }
            KernelFamily::PhysicsLagrangian => {
                add_product(out, &se(0), &Factor::dot_sq(a, b, n, n));
                add_factor(out, &se(1));
                add_product(out, &se(2), &Factor::dot_sq(a, b, 0, n));
            }
            KernelFamily::PhysicsForce => {
                add_product(out, &se(0), &Factor::dot(a, b, 0, n));
                add_product(out, &se(1), &Factor::dot(a, b, 2 * n, n));
            }
            KernelFamily::PhysicsForcePressureDissipation => {
                add_factor(out, &Factor::dot(a, b, 0, n));
                add_product(out, &se(0), &Factor::dot(a, b, 2 * n, n));
            }
        }
    }

    pub fn jet(&self, a: &[f64], b: &[f64]) -> KernelJet {
        let mut out = KernelJet::new(self.spec.input_dim);
        self.jet_into(a, b, &mut out);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arg {
    First,
    Second,
}

fn checked(
    spec: &KernelSpec,
    theta: &HyperParams,
    a: &[f64],
    b: &[f64],
) -> Result<ResolvedKernel, KernelError> {
    spec.check_point(a)?;
    spec.check_point(b)?;
    spec.resolve(theta)
}

fn jet_checked(spec: &KernelSpec, theta: &HyperParams, a: &[f64], b: &[f64]) -> Result<KernelJet, KernelError> {
    let k = checked(spec, theta, a, b)?;
    if spec.input_dim > MAX_JET_DIM {
        return Err(KernelError::InvalidSpec(format!(
            "derivatives need input dimension <= {MAX_JET_DIM}, got {}",
            spec.input_dim
        )));
    }
    Ok(k.jet(a, b))
}

pub fn kernel_eval(spec: &KernelSpec, theta: &HyperParams, a: &[f64], b: &[f64]) -> Result<f64, KernelError> {
    let v = checked(spec, theta, a, b)?.value(a, b);
    if !v.is_finite() {
        return Err(KernelError::NonFinite);
    }
    Ok(v)
}

pub fn kernel_grad(
    spec: &KernelSpec,
    theta: &HyperParams,
    a: &[f64],
    b: &[f64],
    wrt: Arg,
) -> Result<DVector<f64>, KernelError> {
    let jet = jet_checked(spec, theta, a, b)?;
    let g = match wrt {
        Arg::First => &jet.grad_a,
        Arg::Second => &jet.grad_b,
    };
    Ok(DVector::from_column_slice(&g[..jet.dim]))
}

/// `H[i][j] = ∂²k / ∂a_i ∂b_j`.
pub fn kernel_cross_hessian(
    spec: &KernelSpec,
    theta: &HyperParams,
    a: &[f64],
    b: &[f64],
) -> Result<DMatrix<f64>, KernelError> {
    let jet = jet_checked(spec, theta, a, b)?;
    let d = jet.dim;
    Ok(DMatrix::from_fn(d, d, |i, j| jet.h(i, j)))
}

/// Largest relative deviation of the analytic gradients and mixed Hessian
/// from central differences of [`kernel_eval`].
///
/// Each entry is compared relative to the largest magnitude in its object
/// (gradient vector or Hessian), floored at machine scale.
pub fn fd_check(spec: &KernelSpec, theta: &HyperParams, a: &[f64], b: &[f64], eps: f64) -> Result<f64, KernelError> {
    if !(eps > 1e-8 && eps < 1e-2) {
        return Err(KernelError::InvalidSpec(format!("finite-difference step {eps} outside (1e-8, 1e-2)")));
    }
    let jet = jet_checked(spec, theta, a, b)?;
    let k = spec.resolve(theta)?;
    let d = spec.input_dim;
    let shift = |x: &[f64], i: usize, s: f64| {
        let mut y = x.to_vec();
        y[i] += s;
        y
    };

    let mut fd_ga = vec![0.0; d];
    let mut fd_gb = vec![0.0; d];
    for i in 0..d {
        fd_ga[i] = (k.value(&shift(a, i, eps), b) - k.value(&shift(a, i, -eps), b)) / (2.0 * eps);
        fd_gb[i] = (k.value(a, &shift(b, i, eps)) - k.value(a, &shift(b, i, -eps))) / (2.0 * eps);
    }
    let mut fd_h = vec![0.0; d * d];
    for i in 0..d {
        let ap = shift(a, i, eps);
        let am = shift(a, i, -eps);
        for j in 0..d {
            let bp = shift(b, j, eps);
            let bm = shift(b, j, -eps);
            fd_h[i * d + j] = (k.value(&ap, &bp) - k.value(&ap, &bm) - k.value(&am, &bp) + k.value(&am, &bm))
                / (4.0 * eps * eps);
        }
    }

    fn worst(analytic: &[f64], fd: &[f64]) -> f64 {
        let scale = fd.iter().chain(analytic).fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        analytic
            .iter()
            .zip(fd)
            .map(|(x, y)| (x - y).abs() / scale)
            .fold(0.0, f64::max)
    }
    let err = worst(&jet.grad_a[..d], &fd_ga)
        .max(worst(&jet.grad_b[..d], &fd_gb))
        .max(worst(&jet.hess[..d * d], &fd_h));
    Ok(err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn se_values() {
        let spec = KernelSpec::squared_exponential(1);
        let th = HyperParams::unit(&spec);
        assert_eq!(kernel_eval(&spec, &th, &[0.0], &[0.0]).unwrap(), 1.0);
        assert_relative_eq!(kernel_eval(&spec, &th, &[0.0], &[1.0]).unwrap(), (-0.5f64).exp(), epsilon = 1e-15);
        let g = kernel_grad(&spec, &th, &[0.0], &[1.0], Arg::First).unwrap();
        assert_relative_eq!(g[0], 0.60653065971, epsilon = 1e-10);
    }

    #[test]
    fn se_hessian_at_coincidence() {
        let spec = KernelSpec::squared_exponential(2);
        let th = HyperParams { log_signal_variances: vec![0.0], log_lengthscales: vec![vec![0.0, 2f64.ln()]] };
        let h = kernel_cross_hessian(&spec, &th, &[0.3, -0.2], &[0.3, -0.2]).unwrap();
        assert_relative_eq!(h, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.25]), epsilon = 1e-14);
    }

    #[test]
    fn lagrangian_origin_is_potential_variance() {
        let spec = KernelSpec::physics_lagrangian(2);
        let mut th = HyperParams::unit(&spec);
        th.log_signal_variances = vec![1.3, 0.7, -0.4];
        let z = [0.0; 4];
        assert_relative_eq!(kernel_eval(&spec, &th, &z, &z).unwrap(), 0.7f64.exp(), epsilon = 1e-14);
    }

    #[test]
    fn force_u_gradient_vanishes_at_origin() {
        let spec = KernelSpec::physics_force(1);
        let th = HyperParams::unit(&spec);
        let g = kernel_grad(&spec, &th, &[0.0, 0.2, 0.5], &[0.0, -0.1, 0.3], Arg::First).unwrap();
        assert_eq!(g[0], 0.0);
    }

    #[test]
    fn flat_round_trip() {
        let spec = KernelSpec::physics_force(2);
        let flat: Vec<f64> = (0..spec.n_params()).map(|i| i as f64 * 0.1).collect();
        let th = HyperParams::from_flat(&spec, &flat).unwrap();
        assert_eq!(th.to_flat(), flat);
    }

    #[test]
    fn shape_errors() {
        let spec = KernelSpec::squared_exponential(2);
        let th = HyperParams::unit(&spec);
        assert!(matches!(kernel_eval(&spec, &th, &[0.0], &[0.0, 1.0]), Err(KernelError::Shape { .. })));
        assert!(fd_check(&spec, &th, &[0.0, 0.0], &[0.0, 0.0], 1e-9).is_err());
    }
}
