//! Exact posteriors, log-partition functions and the ELBO on finite alphabets.
//!
//! With `L(x) = −log p̃(x)`, `T = 1` and the entropy penalty, the minimum free
//! energy is `−log Z` and the minimizer is `p̃ / Z`; for any `q`,
//! `ELBO(q) = −J(q) ≤ log Z` with gap `KL(q ‖ p̃/Z)`.

use serde::{Deserialize, Serialize};

use crate::error::{check_dims, Error, Result};
use crate::free_energy::{minimize_closed_form, ComplexityPenalty, FreeEnergyProblem};
use crate::simplex::{entropy, log_sum_exp, FiniteDistribution, LossVector};

/// Unnormalized distribution stored as `log p̃(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelRepr", into = "ModelRepr")]
pub struct UnnormalizedModel {
    log_tilde_p: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelRepr {
    log_tilde_p: Vec<f64>,
}

impl TryFrom<ModelRepr> for UnnormalizedModel {
    type Error = Error;

    fn try_from(repr: ModelRepr) -> Result<Self> {
        UnnormalizedModel::new(repr.log_tilde_p)
    }
}

impl From<UnnormalizedModel> for ModelRepr {
    fn from(m: UnnormalizedModel) -> Self {
        ModelRepr {
            log_tilde_p: m.log_tilde_p,
        }
    }
}

impl UnnormalizedModel {
    /// Symbols with `p̃(x) = 0` must be pruned beforehand; every entry must
    /// be finite.
    pub fn new(log_tilde_p: Vec<f64>) -> Result<Self> {
        if log_tilde_p.is_empty() {
            return Err(Error::EmptyInput("model has no symbols"));
        }
        if let Some((i, v)) = log_tilde_p.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite(format!("log_tilde_p[{i}] = {v}")));
        }
        Ok(UnnormalizedModel { log_tilde_p })
    }

    /// From a joint table `p(x, y)` at the observed `y` (linear scale).
    pub fn from_joint_column(joint: &[f64]) -> Result<Self> {
        if let Some((i, v)) = joint.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "joint entry {i} is {v}; prune zero-probability symbols first"
            )));
        }
        UnnormalizedModel::new(joint.iter().map(|p| p.ln()).collect())
    }

    pub fn log_tilde_p(&self) -> &[f64] {
        &self.log_tilde_p
    }

    pub fn alphabet_size(&self) -> usize {
        self.log_tilde_p.len()
    }

    /// The free-energy problem whose minimizer is the posterior:
    /// `L = −log p̃`, `T = 1`, negative-entropy penalty.
    pub fn as_free_energy_problem(&self) -> Result<FreeEnergyProblem> {
        let loss = LossVector::new(self.log_tilde_p.iter().map(|v| -v).collect())?;
        FreeEnergyProblem::new(loss, 1.0, ComplexityPenalty::NegEntropy)
    }
}

/// `log Z = log Σ_x p̃(x)`.
pub fn log_partition(model: &UnnormalizedModel) -> f64 {
    log_sum_exp(&model.log_tilde_p).expect("model entries are finite and nonempty")
}

/// `p̃ / Z`.
pub fn posterior(model: &UnnormalizedModel) -> FiniteDistribution {
    FiniteDistribution::from_log_weights(&model.log_tilde_p)
        .expect("model entries are finite and nonempty")
}

/// `E_q[log p̃] + H(q)`; symbols with `q(x) = 0` contribute nothing.
pub fn elbo(model: &UnnormalizedModel, q: &FiniteDistribution) -> Result<f64> {
    check_dims(model.alphabet_size(), q.alphabet_size())?;
    Ok(q.expectation(&model.log_tilde_p)? + entropy(q))
}

/// Generalized posterior `q(x) ∝ p(x) exp(−L(x)/T)`.
pub fn generalized_posterior(
    prior: &FiniteDistribution,
    loss: &LossVector,
    temperature: f64,
) -> Result<FiniteDistribution> {
    let problem = FreeEnergyProblem::new(
        loss.clone(),
        temperature,
        ComplexityPenalty::KlToPrior(prior.clone()),
    )?;
    Ok(minimize_closed_form(&problem)?.q_opt)
}

/// Mean-field variational inference on a two-variable model
/// `p̃(x₁, x₂)` with `q(x₁, x₂) = q₁(x₁) q₂(x₂)`.
#[derive(Debug, Clone)]
pub struct MeanFieldPair {
    /// `log p̃(x₁, x₂)`, rows indexed by `x₁`.
    log_joint: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct MeanFieldFit {
    pub q1: FiniteDistribution,
    pub q2: FiniteDistribution,
    /// ELBO before any update, then after every full sweep.
    pub elbo_trace: Vec<f64>,
}

impl MeanFieldPair {
    pub fn new(log_joint: Vec<Vec<f64>>) -> Result<Self> {
        let cols = log_joint
            .first()
            .map(Vec::len)
            .ok_or(Error::EmptyInput("joint table has no rows"))?;
        if cols == 0 {
            return Err(Error::EmptyInput("joint table has no columns"));
        }
        for row in &log_joint {
            check_dims(cols, row.len())?;
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("log joint entry".into()));
            }
        }
        Ok(MeanFieldPair { log_joint })
    }

    /// The joint as a flat model over `x₁ · n₂ + x₂`.
    pub fn flattened(&self) -> UnnormalizedModel {
        UnnormalizedModel {
            log_tilde_p: self.log_joint.iter().flatten().copied().collect(),
        }
    }

    /// ELBO of the product `q₁ q₂`.
    pub fn elbo(&self, q1: &FiniteDistribution, q2: &FiniteDistribution) -> Result<f64> {
        check_dims(self.log_joint.len(), q1.alphabet_size())?;
        check_dims(self.log_joint[0].len(), q2.alphabet_size())?;
        let energy: f64 = self
            .log_joint
            .iter()
            .zip(q1.probs())
            .filter(|(_, &a)| a > 0.0)
            .map(|(row, a)| a * q2.expectation(row).unwrap_or(0.0))
            .sum();
        Ok(energy + entropy(q1) + entropy(q2))
    }

    /// Coordinate ascent: each factor is set to its exact conditional
    /// optimum `q₁(x₁) ∝ exp(E_{q₂}[log p̃(x₁, ·)])`, and vice versa.
    pub fn coordinate_ascent(
        &self,
        init_q2: FiniteDistribution,
        sweeps: usize,
    ) -> Result<MeanFieldFit> {
        check_dims(self.log_joint[0].len(), init_q2.alphabet_size())?;
        let n1 = self.log_joint.len();
        let n2 = self.log_joint[0].len();
        let mut q1 = FiniteDistribution::uniform(n1)?;
        let mut q2 = init_q2;
        let mut elbo_trace = vec![self.elbo(&q1, &q2)?];
        for _ in 0..sweeps {
            let s1: Vec<f64> = self
                .log_joint
                .iter()
                .map(|row| q2.expectation(row))
                .collect::<Result<_>>()?;
            q1 = FiniteDistribution::from_log_weights(&s1)?;
            let s2: Vec<f64> = (0..n2)
                .map(|j| {
                    let col: Vec<f64> = self.log_joint.iter().map(|row| row[j]).collect();
                    q1.expectation(&col)
                })
                .collect::<Result<_>>()?;
            q2 = FiniteDistribution::from_log_weights(&s2)?;
            elbo_trace.push(self.elbo(&q1, &q2)?);
        }
        Ok(MeanFieldFit { q1, q2, elbo_trace })
    }
}
