//! Rollout error and energy statistics.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::systems::SystemModel;

/// Root-mean-square error over every predicted component.
///
/// The first two entries are initial conditions and are not scored.
pub fn rmse(truth: &[DVector<f64>], pred: &[DVector<f64>]) -> Result<f64, ModelError> {
    if truth.len() != pred.len() {
        return Err(ModelError::Dimension(format!("trajectory lengths differ: {} vs {}", truth.len(), pred.len())));
    }
    if truth.len() < 3 {
        return Err(ModelError::Dimension("need at least one predicted step".into()));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for (a, b) in truth.iter().zip(pred).skip(2) {
        if a.len() != b.len() {
            return Err(ModelError::Dimension(format!("configuration sizes differ: {} vs {}", a.len(), b.len())));
        }
        sum += (a - b).norm_squared();
        count += a.len();
    }
    Ok((sum / count as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyStats {
    pub max_rel_dev: f64,
    /// Least-squares slope of energy per step.
    pub slope: f64,
    pub h0: f64,
}

/// True energy at each interior point using central velocities.
pub fn energy_trace(trajectory: &[DVector<f64>], system: &dyn SystemModel, h: f64) -> Vec<f64> {
    trajectory
        .windows(3)
        .map(|w| {
            let v = (&w[2] - &w[0]) / (2.0 * h);
            system.hamiltonian(w[1].as_slice(), v.as_slice())
        })
        .collect()
}

/// Least-squares slope of `y` against its index.
pub fn linear_slope(y: &[f64]) -> f64 {
    let n = y.len() as f64;
    if y.len() < 2 {
        return 0.0;
    }
    let xm = (n - 1.0) / 2.0;
    let ym = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, v) in y.iter().enumerate() {
        let dx = i as f64 - xm;
        sxy += dx * (v - ym);
        sxx += dx * dx;
    }
    sxy / sxx
}

/// Maximum relative deviation from the first value.
pub fn max_rel_dev(energy: &[f64]) -> f64 {
    let Some(&h0) = energy.first() else { return 0.0 };
    let denom = h0.abs().max(1e-12);
    energy.iter().map(|e| (e - h0).abs() / denom).fold(0.0, f64::max)
}

pub fn energy_stats(trajectory: &[DVector<f64>], system: &dyn SystemModel, h: f64) -> Result<EnergyStats, ModelError> {
    if trajectory.len() < 3 {
        return Err(ModelError::Dimension("energy statistics need at least three points".into()));
    }
    let e = energy_trace(trajectory, system, h);
    Ok(EnergyStats { max_rel_dev: max_rel_dev(&e), slope: linear_slope(&e), h0: e[0] })
}
