//! Analytic benchmark systems, dataset sampling and test scenarios.
//!
//! Random draws use ChaCha8 streams: sample `i` of a dataset reads stream `i`
//! of the generator seeded with the user seed, so every sample is
//! reproducible on its own and across platforms.

use std::f64::consts::PI;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::SystemError;
use crate::model::Dataset;
use crate::operators::Triplet;
use crate::par;
use crate::rollout::solve_true_del;

/// A mechanical system with analytic Lagrangian and generalized forces.
pub trait SystemModel: Send + Sync {
    fn name(&self) -> String;
    fn n_q(&self) -> usize;
    fn lagrangian(&self, q: &[f64], qdot: &[f64]) -> f64;
    /// `(∂L/∂q, ∂L/∂q̇)`.
    fn lagrangian_grad(&self, q: &[f64], qdot: &[f64]) -> (Vec<f64>, Vec<f64>);
    fn force(&self, u: &[f64], q: &[f64], qdot: &[f64]) -> Vec<f64>;
    fn hamiltonian(&self, q: &[f64], qdot: &[f64]) -> f64;
    fn stable_equilibria(&self) -> Vec<Vec<f64>>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct PendulumParams {
    pub masses: Vec<f64>,
    pub lengths: Vec<f64>,
    pub damping: f64,
    pub gravity: f64,
}

fn linspace_desc(hi: f64, lo: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![hi];
    }
    (0..n).map(|i| hi + (lo - hi) * i as f64 / (n - 1) as f64).collect()
}

impl PendulumParams {
    /// Masses 2 → 1 kg and lengths 1 → 0.8 m along the chain, `b = 0.8`.
    pub fn default_for(n_q: usize) -> Self {
        PendulumParams { masses: linspace_desc(2.0, 1.0, n_q), lengths: linspace_desc(1.0, 0.8, n_q), damping: 0.8, gravity: 9.81 }
    }

    pub fn conservative(n_q: usize) -> Self {
        PendulumParams { damping: 0.0, ..Self::default_for(n_q) }
    }
}

/// Multi-link pendulum in absolute angles from the downward vertical.
#[derive(Debug, Clone)]
pub struct Pendulum {
    p: PendulumParams,
}

pub fn pendulum_system(params: PendulumParams) -> Result<Pendulum, SystemError> {
    let n = params.masses.len();
    if !(1..=3).contains(&n) || params.lengths.len() != n {
        return Err(SystemError::Params(format!("pendulum needs 1..=3 links with matching lengths, got {n}")));
    }
    let positive = params.masses.iter().chain(&params.lengths).all(|&v| v > 0.0) && params.gravity > 0.0;
    if !positive || !(params.damping >= 0.0) {
        return Err(SystemError::Params("masses, lengths and gravity must be positive, damping non-negative".into()));
    }
    Ok(Pendulum { p: params })
}

impl Pendulum {
    /// Cartesian velocities of each bob.
    fn velocities(&self, q: &[f64], qdot: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = q.len();
        let (mut vh, mut vv) = (vec![0.0; n], vec![0.0; n]);
        let (mut h, mut v) = (0.0, 0.0);
        for i in 0..n {
            h += self.p.lengths[i] * qdot[i] * q[i].cos();
            v += self.p.lengths[i] * qdot[i] * q[i].sin();
            vh[i] = h;
            vv[i] = v;
        }
        (vh, vv)
    }

    fn kinetic(&self, q: &[f64], qdot: &[f64]) -> f64 {
        let (vh, vv) = self.velocities(q, qdot);
        (0..q.len()).map(|i| 0.5 * self.p.masses[i] * (vh[i] * vh[i] + vv[i] * vv[i])).sum()
    }

    /// `Σ m_i g h_i` with `h_i = −Σ_{j≤i} l_j cos q_j`.
    fn potential(&self, q: &[f64]) -> f64 {
        let mut h = 0.0;
        let mut v = 0.0;
        for i in 0..q.len() {
            h -= self.p.lengths[i] * q[i].cos();
            v += self.p.masses[i] * self.p.gravity * h;
        }
        v
    }

    pub fn params(&self) -> &PendulumParams {
        &self.p
    }
}

impl SystemModel for Pendulum {
    fn name(&self) -> String {
        format!("pendulum{}", self.p.masses.len())
    }

    fn n_q(&self) -> usize {
        self.p.masses.len()
    }

    fn lagrangian(&self, q: &[f64], qdot: &[f64]) -> f64 {
        self.kinetic(q, qdot) - self.potential(q)
    }

    fn lagrangian_grad(&self, q: &[f64], qdot: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = q.len();
        let (vh, vv) = self.velocities(q, qdot);
        let (mut dq, mut dv) = (vec![0.0; n], vec![0.0; n]);
        for k in 0..n {
            let (c, s, l) = (q[k].cos(), q[k].sin(), self.p.lengths[k]);
            for i in k..n {
                let m = self.p.masses[i];
                dv[k] += m * l * (vh[i] * c + vv[i] * s);
                dq[k] += m * l * qdot[k] * (-vh[i] * s + vv[i] * c);
                dq[k] -= m * self.p.gravity * l * s;
            }
        }
        (dq, dv)
    }

    fn force(&self, u: &[f64], _q: &[f64], qdot: &[f64]) -> Vec<f64> {
        let n = u.len();
        let tau: Vec<f64> = (0..n)
            .map(|i| {
                let rel = if i == 0 { qdot[0] } else { qdot[i] - qdot[i - 1] };
                u[i] - self.p.damping * rel
            })
            .collect();
        (0..n).map(|i| tau[i] - if i + 1 < n { tau[i + 1] } else { 0.0 }).collect()
    }

    fn hamiltonian(&self, q: &[f64], qdot: &[f64]) -> f64 {
        self.kinetic(q, qdot) + self.potential(q)
    }

    fn stable_equilibria(&self) -> Vec<Vec<f64>> {
        vec![vec![0.0; self.n_q()]]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OscillatorParams {
    pub m: f64,
    pub k: f64,
    pub c: f64,
    pub b: f64,
}

impl Default for OscillatorParams {
    fn default() -> Self {
        OscillatorParams { m: 1.0, k: 1.0, c: 2.0, b: 0.1 }
    }
}

/// `L = ½mq̇² − (¼kq² + c·cos q)`, `F = u − b·q̇`.
#[derive(Debug, Clone)]
pub struct Oscillator {
    p: OscillatorParams,
}

pub fn oscillator_system(params: OscillatorParams) -> Result<Oscillator, SystemError> {
    if !(params.m > 0.0 && params.k > 0.0 && params.c >= 0.0 && params.b >= 0.0) {
        return Err(SystemError::Params("oscillator needs m, k > 0 and c, b >= 0".into()));
    }
    Ok(Oscillator { p: params })
}

impl Oscillator {
    /// Positive root of `½kq = c·sin q` by bisection, if `c > k/2`.
    pub fn equilibrium(&self) -> Option<f64> {
        let g = |q: f64| 0.5 * self.p.k * q - self.p.c * q.sin();
        if self.p.c <= 0.5 * self.p.k {
            return None;
        }
        // g < 0 just right of zero and g(π) > 0
        let (mut lo, mut hi) = (1e-6, PI);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(0.5 * (lo + hi))
    }
}

impl SystemModel for Oscillator {
    fn name(&self) -> String {
        "oscillator".into()
    }

    fn n_q(&self) -> usize {
        1
    }

    fn lagrangian(&self, q: &[f64], qdot: &[f64]) -> f64 {
        0.5 * self.p.m * qdot[0] * qdot[0] - (0.25 * self.p.k * q[0] * q[0] + self.p.c * q[0].cos())
    }

    fn lagrangian_grad(&self, q: &[f64], qdot: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (vec![-0.5 * self.p.k * q[0] + self.p.c * q[0].sin()], vec![self.p.m * qdot[0]])
    }

    fn force(&self, u: &[f64], _q: &[f64], qdot: &[f64]) -> Vec<f64> {
        vec![u[0] - self.p.b * qdot[0]]
    }

    fn hamiltonian(&self, q: &[f64], qdot: &[f64]) -> f64 {
        0.5 * self.p.m * qdot[0] * qdot[0] + 0.25 * self.p.k * q[0] * q[0] + self.p.c * q[0].cos()
    }

    fn stable_equilibria(&self) -> Vec<Vec<f64>> {
        match self.equilibrium() {
            Some(q) => vec![vec![q], vec![-q]],
            None => vec![vec![0.0]],
        }
    }
}

/// Looks up a shipped system: `pendulum{1,2,3}`, `pendulum{1,2,3}-conservative`
/// or `oscillator`.
pub fn system_by_name(name: &str) -> Result<Box<dyn SystemModel>, SystemError> {
    if name == "oscillator" {
        return Ok(Box::new(oscillator_system(OscillatorParams::default())?));
    }
    if let Some(rest) = name.strip_prefix("pendulum") {
        let (n, conservative) = match rest.strip_suffix("-conservative") {
            Some(n) => (n, true),
            None => (rest, false),
        };
        if let Ok(n) = n.parse::<usize>() {
            let p = if conservative { PendulumParams::conservative(n) } else { PendulumParams::default_for(n) };
            return Ok(Box::new(pendulum_system(p)?));
        }
    }
    Err(SystemError::Params(format!("unknown system '{name}'")))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingBounds {
    pub q: Vec<(f64, f64)>,
    pub qdot: Vec<(f64, f64)>,
    pub u: Vec<(f64, f64)>,
}

impl SamplingBounds {
    /// `q ∈ [−π, π]`, `q̇ ∈ [−4, 4]`, `u ∈ [−1, 1]`.
    pub fn default_for(n_q: usize) -> Self {
        SamplingBounds { q: vec![(-PI, PI); n_q], qdot: vec![(-4.0, 4.0); n_q], u: vec![(-1.0, 1.0); n_q] }
    }

    /// Default state box with zero input.
    pub fn unforced(n_q: usize) -> Self {
        SamplingBounds { u: vec![(0.0, 0.0); n_q], ..Self::default_for(n_q) }
    }

    fn check(&self, n: usize) -> Result<(), SystemError> {
        let all = self.q.iter().chain(&self.qdot).chain(&self.u);
        if self.q.len() != n || self.qdot.len() != n || self.u.len() != n || all.clone().any(|(a, b)| !(a <= b)) {
            return Err(SystemError::Params("sampling bounds must match n_q and be ordered".into()));
        }
        Ok(())
    }
}

fn draw(rng: &mut ChaCha8Rng, bounds: &[(f64, f64)]) -> DVector<f64> {
    DVector::from_iterator(
        bounds.len(),
        bounds.iter().map(|&(lo, hi)| if hi > lo { rng.random_range(lo..hi) } else { lo }),
    )
}

fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Draws `(q_curr, q̇, u_prev, u_curr)` uniformly, sets `q_prev = q_curr − h·q̇`
/// and solves the true discrete equations for `q_next`.
pub fn sample_triplets(
    system: &dyn SystemModel,
    n: usize,
    bounds: &SamplingBounds,
    h: f64,
    seed: u64,
) -> Result<Dataset, SystemError> {
    if n == 0 || !(h > 0.0) {
        return Err(SystemError::Params("need N >= 1 and h > 0".into()));
    }
    let nq = system.n_q();
    bounds.check(nq)?;
    // each sample gets up to ten attempts on its own stream
    let results = par::map_indexed(n, |i| {
        let mut rng = stream(seed, i as u64);
        for _ in 0..10 {
            let q = draw(&mut rng, &bounds.q);
            let v = draw(&mut rng, &bounds.qdot);
            let up = draw(&mut rng, &bounds.u);
            let uc = draw(&mut rng, &bounds.u);
            let qp = &q - &v * h;
            if let Ok(qn) = solve_true_del(system, &qp, &q, &up, &uc, h) {
                return Some(Triplet { q_prev: qp, q_curr: q, q_next: qn, u_prev: up, u_curr: uc });
            }
        }
        None
    });
    let mut triplets = Vec::with_capacity(n);
    for (i, r) in results.into_iter().enumerate() {
        triplets.push(r.ok_or_else(|| SystemError::Generation(format!("sample {i} failed ten true solves")))?);
    }
    Dataset::new(triplets, h, system.name()).map_err(|e| SystemError::Generation(e.to_string()))
}

/// Initial pair and sinusoidal input sequence for one test rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct TestScenario {
    pub q0: DVector<f64>,
    pub qdot0: DVector<f64>,
    pub q1: DVector<f64>,
    /// `steps + 1` inputs `u(t_0) … u(t_steps)`.
    pub inputs: Vec<DVector<f64>>,
}

/// `u_i(t) = A_i sin(ω_i t + φ_i)` with `A ~ U[0,1]`, `ω ~ U[0.5, 2]`,
/// `φ ~ U[0, 2π)`; `(q0, q̇0)` uniform in the state box.
pub fn make_test_scenario(system: &dyn SystemModel, seed: u64, steps: usize, h: f64, bounds: &SamplingBounds) -> TestScenario {
    let n = system.n_q();
    let mut rng = stream(seed, u64::MAX);
    let q0 = draw(&mut rng, &bounds.q);
    let qdot0 = draw(&mut rng, &bounds.qdot);
    let amp: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    let omega: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
    let phase: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
    let q1 = &q0 + &qdot0 * h;
    let inputs = (0..=steps)
        .map(|k| {
            let t = k as f64 * h;
            DVector::from_iterator(n, (0..n).map(|i| amp[i] * (omega[i] * t + phase[i]).sin()))
        })
        .collect();
    TestScenario { q0, qdot0, q1, inputs }
}

/// Zero input sequence of `steps + 1` entries.
pub fn zero_inputs(n_q: usize, steps: usize) -> Vec<DVector<f64>> {
    vec![DVector::zeros(n_q); steps + 1]
}
