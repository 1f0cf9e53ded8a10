//! Distributions on a finite alphabet and the numerically stable primitives
//! everything else is built from.
//!
//! Symbols are 0-based indices `0..alphabet_size`. Logarithms are natural
//! throughout and `0 · log 0 = 0`.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dims, Error, Result};

/// Maximum allowed `|Σ probs − 1|` at construction.
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// Entries at or below this value count as exact zeros in support checks.
pub const ZERO_THRESHOLD: f64 = 1e-15;

/// A probability vector over `{0, …, N−1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DistributionRepr", into = "DistributionRepr")]
pub struct FiniteDistribution {
    probs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct DistributionRepr {
    probs: Vec<f64>,
}

impl TryFrom<DistributionRepr> for FiniteDistribution {
    type Error = Error;

    fn try_from(repr: DistributionRepr) -> Result<Self> {
        FiniteDistribution::new(repr.probs)
    }
}

impl From<FiniteDistribution> for DistributionRepr {
    fn from(d: FiniteDistribution) -> Self {
        DistributionRepr { probs: d.probs }
    }
}

impl FiniteDistribution {
    /// Validates nonnegativity and normalization (within [`NORMALIZATION_TOL`]).
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::EmptyInput("distribution has no symbols"));
        }
        for (i, &p) in probs.iter().enumerate() {
            if !p.is_finite() {
                return Err(Error::InvalidDistribution(format!(
                    "entry {i} is not finite ({p})"
                )));
            }
            if p < 0.0 {
                return Err(Error::InvalidDistribution(format!(
                    "entry {i} is negative ({p})"
                )));
            }
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidDistribution(format!(
                "entries sum to {total}, not 1"
            )));
        }
        Ok(FiniteDistribution { probs })
    }

    /// Rescales nonnegative weights by their sum.
    pub fn renormalized(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::EmptyInput("distribution has no symbols"));
        }
        if let Some((i, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !w.is_finite() || **w < 0.0)
        {
            return Err(Error::InvalidDistribution(format!(
                "weight {i} is negative or not finite ({w})"
            )));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidDistribution("weights sum to zero".into()));
        }
        Ok(FiniteDistribution {
            probs: weights.into_iter().map(|w| w / total).collect(),
        })
    }

    /// Normalizes `exp(log_weights)` in log space. Entries may be `-inf`
    /// (zero weight) as long as at least one is finite.
    pub fn from_log_weights(log_weights: &[f64]) -> Result<Self> {
        let log_z = log_sum_exp(log_weights)?;
        if log_z == f64::NEG_INFINITY {
            return Err(Error::InvalidDistribution(
                "all log-weights are -inf".into(),
            ));
        }
        let probs: Vec<f64> = log_weights.iter().map(|&lw| (lw - log_z).exp()).collect();
        // exp rounding leaves the sum a few ulps off one
        let total: f64 = probs.iter().sum();
        Ok(FiniteDistribution {
            probs: probs.into_iter().map(|p| p / total).collect(),
        })
    }

    pub fn uniform(alphabet_size: usize) -> Result<Self> {
        if alphabet_size == 0 {
            return Err(Error::EmptyInput("distribution has no symbols"));
        }
        Ok(FiniteDistribution {
            probs: vec![1.0 / alphabet_size as f64; alphabet_size],
        })
    }

    pub fn point_mass(alphabet_size: usize, symbol: usize) -> Result<Self> {
        if symbol >= alphabet_size {
            return Err(Error::SymbolOutOfRange {
                symbol,
                size: alphabet_size,
            });
        }
        let mut probs = vec![0.0; alphabet_size];
        probs[symbol] = 1.0;
        Ok(FiniteDistribution { probs })
    }

    /// Draws a distribution uniformly from the simplex (flat Dirichlet).
    pub fn random<R: Rng + ?Sized>(alphabet_size: usize, rng: &mut R) -> Result<Self> {
        let weights: Vec<f64> = (0..alphabet_size)
            .map(|_| -(1.0 - rng.random::<f64>()).ln())
            .collect();
        FiniteDistribution::renormalized(weights)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_probs(self) -> Vec<f64> {
        self.probs
    }

    pub fn alphabet_size(&self) -> usize {
        self.probs.len()
    }

    pub fn prob(&self, symbol: usize) -> f64 {
        self.probs[symbol]
    }

    /// `E_q[values]`, with zero-probability symbols contributing nothing even
    /// when the value there is infinite.
    pub fn expectation(&self, values: &[f64]) -> Result<f64> {
        check_dims(self.probs.len(), values.len())?;
        Ok(self
            .probs
            .iter()
            .zip(values)
            .filter(|(&q, _)| q > 0.0)
            .map(|(q, v)| q * v)
            .sum())
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.probs.iter().all(|&p| p > ZERO_THRESHOLD)
    }

    pub fn first_zero(&self) -> Option<usize> {
        self.probs.iter().position(|&p| p <= ZERO_THRESHOLD)
    }

    /// `log q(x)` per symbol, `-inf` on zeros.
    pub fn log_probs(&self) -> Vec<f64> {
        self.probs
            .iter()
            .map(|&p| if p > 0.0 { p.ln() } else { f64::NEG_INFINITY })
            .collect()
    }

    pub fn total_variation(&self, other: &FiniteDistribution) -> Result<f64> {
        check_dims(self.probs.len(), other.probs.len())?;
        Ok(0.5
            * self
                .probs
                .iter()
                .zip(&other.probs)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.sampler().sample(rng)
    }

    /// Reusable sampler for drawing many symbols.
    pub fn sampler(&self) -> WeightedIndex<f64> {
        WeightedIndex::new(&self.probs).expect("validated distribution has positive mass")
    }
}

/// Per-symbol losses; all entries finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LossRepr", into = "LossRepr")]
pub struct LossVector {
    losses: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct LossRepr {
    losses: Vec<f64>,
}

impl TryFrom<LossRepr> for LossVector {
    type Error = Error;

    fn try_from(repr: LossRepr) -> Result<Self> {
        LossVector::new(repr.losses)
    }
}

impl From<LossVector> for LossRepr {
    fn from(l: LossVector) -> Self {
        LossRepr { losses: l.losses }
    }
}

impl LossVector {
    pub fn new(losses: Vec<f64>) -> Result<Self> {
        if losses.is_empty() {
            return Err(Error::EmptyInput("loss vector has no symbols"));
        }
        if let Some((i, l)) = losses.iter().enumerate().find(|(_, l)| !l.is_finite()) {
            return Err(Error::NonFinite(format!("loss entry {i} is {l}")));
        }
        Ok(LossVector { losses })
    }

    pub fn constant(alphabet_size: usize, value: f64) -> Result<Self> {
        LossVector::new(vec![value; alphabet_size])
    }

    pub fn values(&self) -> &[f64] {
        &self.losses
    }

    pub fn len(&self) -> usize {
        self.losses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.losses.is_empty()
    }

    pub fn shifted(&self, c: f64) -> Result<Self> {
        LossVector::new(self.losses.iter().map(|l| l + c).collect())
    }

    pub fn scaled(&self, s: f64) -> Result<Self> {
        LossVector::new(self.losses.iter().map(|l| l * s).collect())
    }
}

/// Shannon entropy `H(q) = −Σ q log q`.
pub fn entropy(q: &FiniteDistribution) -> f64 {
    -q.probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>()
}

/// `KL(q‖p) = Σ q log(q/p)`.
pub fn kl_divergence(q: &FiniteDistribution, p: &FiniteDistribution) -> Result<f64> {
    check_dims(q.alphabet_size(), p.alphabet_size())?;
    let mut total = 0.0;
    for (i, (&qi, &pi)) in q.probs.iter().zip(&p.probs).enumerate() {
        if qi <= ZERO_THRESHOLD {
            continue;
        }
        if pi <= ZERO_THRESHOLD {
            return Err(Error::SupportViolation { index: i });
        }
        total += qi * (qi / pi).ln();
    }
    // Gibbs inequality; negative values are rounding only
    Ok(total.max(0.0))
}

/// `½‖q − p‖²`.
pub fn half_sq_l2(q: &FiniteDistribution, p: &FiniteDistribution) -> Result<f64> {
    check_dims(q.alphabet_size(), p.alphabet_size())?;
    Ok(0.5
        * q.probs
            .iter()
            .zip(&p.probs)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>())
}

/// `log Σ exp(v_i)` with a max shift.
///
/// `-inf` entries are zero terms; an all `-inf` input returns `-inf`.
/// NaN and `+inf` are rejected.
pub fn log_sum_exp(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput("log_sum_exp of an empty vector"));
    }
    if let Some(v) = values.iter().find(|v| v.is_nan() || **v == f64::INFINITY) {
        return Err(Error::NonFinite(format!("log_sum_exp input {v}")));
    }
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    Ok(max + sum.ln())
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
