//! Free-energy minimization over finite alphabets.
//!
//! The objective `J(q) = E_q[L] + T·D(q)` is minimized over the probability
//! simplex for three complexity penalties (negative entropy, KL to a prior,
//! squared Euclidean distance to a prior). The same machinery drives
//! maximum-entropy fitting, Bayesian and generalized-Bayesian posteriors,
//! EM for mixtures, Gibbs posteriors with PAC-Bayes bounds,
//! Donsker-Varadhan KL estimation, and exponentiated-gradient descent.

pub mod error;
pub mod figure;
pub mod free_energy;
pub mod gen_bayes;
pub mod kl_estimate;
pub mod latent_em;
pub mod maxent;
pub mod mirror_descent;
pub mod pac_bayes;
pub mod simplex;

pub use error::{Error, Result};
pub use free_energy::{ComplexityPenalty, FreeEnergyProblem, Solution};
pub use simplex::{FiniteDistribution, LossVector};
