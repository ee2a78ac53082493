//! Joint multivariate longitudinal-survival modeling.
//!
//! A two-biomarker Gaussian-process longitudinal model with a separable
//! (Kronecker-structured) cross-covariance is coupled to a Weibull
//! proportional-hazards survival model whose subject-specific baseline
//! intercepts follow a truncated Dirichlet-process mixture. Posteriors are
//! sampled by Hamiltonian Monte Carlo with analytic gradients. Simulation
//! generators and baseline comparators (independent-GP fits and a
//! last-observation-carried-forward Cox fitter) support the bundled
//! experiment runner.

pub mod baselines;
pub mod error;
pub mod linalg_kron;
pub mod longitudinal;
pub mod model;
pub mod sampler;
pub mod simgen;
pub mod survival;

pub use error::{Error, Result};
