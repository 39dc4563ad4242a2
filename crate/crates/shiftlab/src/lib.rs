//! Asymptotic test error, bias and variance of random feature ridge regression
//! when the test covariance differs from the training covariance, plus a
//! finite-size Monte Carlo simulator to check the asymptotics against.
//!
//! The crate is organised around five modules:
//!
//! * [`ljsd`]: finite-atom joint spectral distributions of (λ, r).
//! * [`activation`]: Gaussian moment constants (η, ρ, ζ, ω) of an activation.
//! * [`theory`]: the self-consistent solver and every closed-form quantity built on it.
//! * [`simulator`]: random feature regression at finite size.
//! * [`cli`]: sweep runner, CSV output and the `shiftlab` command.

pub mod activation;
pub mod cli;
pub mod error;
pub mod ljsd;
pub mod simulator;
pub mod theory;

pub use activation::{gaussian_constants, xi, ActivationSpec, GaussianStats};
pub use error::{Error, Result};
pub use ljsd::{Atom, Ljsd, PartialOrderVerdict, Verdict};
pub use theory::{predict, solve_self_consistent, ModelConfig, TheoryPrediction};
