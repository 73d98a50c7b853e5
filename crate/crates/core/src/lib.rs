//! Lagrangian Gaussian processes: learn forced mechanical dynamics from
//! position snapshots by conditioning GP priors on the discrete Euler–Lagrange
//! residual, then predict by root-finding the learned residual.
//!
//! The pieces, bottom up:
//!
//! - [`kernels`]: covariance families with analytic first and mixed second
//!   derivatives.
//! - [`operators`]: linear functionals of the Lagrangian/force pair and the
//!   covariances they induce.
//! - [`model`]: the augmented Gram system, its factorization and posteriors.
//! - [`training`]: marginal-likelihood hyperparameters, slack search and the
//!   one-step GP baseline.
//! - [`rollout`]: Newton-based multi-step prediction.
//! - [`systems`]: analytic pendulum and oscillator simulators.
//! - [`experiments`], [`metrics`], [`io`]: benchmark sweeps and file formats.
//!
//! Heavy loops go through [`par`], which uses rayon when the `parallel`
//! feature is enabled and can be switched off at runtime.

pub mod error;
pub mod experiments;
pub mod io;
pub mod kernels;
pub mod metrics;
pub mod model;
pub mod operators;
pub mod par;
pub mod rollout;
pub mod systems;
pub mod training;

pub use error::{IoError, KernelError, ModelError, RolloutError, SystemError, TrainError};
pub use kernels::{HyperParams, KernelFamily, KernelSpec};
pub use model::{Dataset, KernelPair, ThetaPair, TrainedLgp};
pub use operators::{NormalizationSpec, Observable, OperatorMode, Triplet};
pub use rollout::{rollout, RolloutResult, StepPredictor};
pub use systems::SystemModel;
pub use training::{fit, TrainConfig, Trajectory};
