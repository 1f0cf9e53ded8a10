//! Gibbs posteriors, the Donsker-Varadhan generalization inequality and the
//! PAC-Bayes bound for finite hypothesis classes with tabular losses.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{check_dims, Error, Result};
use crate::free_energy::{minimize_closed_form, ComplexityPenalty, FreeEnergyProblem};
use crate::simplex::{kl_divergence, log_sum_exp, FiniteDistribution, LossVector};

pub const MIN_TRIALS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProblemRepr", into = "ProblemRepr")]
pub struct LearningProblem {
    /// `loss_table[x][z] = ℓ(x, z)`.
    loss_table: Vec<Vec<f64>>,
    a: f64,
    b: f64,
    prior: FiniteDistribution,
    data_model: FiniteDistribution,
}

#[derive(Serialize, Deserialize)]
struct ProblemRepr {
    loss_table: Vec<Vec<f64>>,
    a: f64,
    b: f64,
    prior: Vec<f64>,
    data_model: Vec<f64>,
}

impl TryFrom<ProblemRepr> for LearningProblem {
    type Error = Error;

    fn try_from(r: ProblemRepr) -> Result<Self> {
        LearningProblem::new(
            r.loss_table,
            r.a,
            r.b,
            FiniteDistribution::new(r.prior)?,
            FiniteDistribution::new(r.data_model)?,
        )
    }
}

impl From<LearningProblem> for ProblemRepr {
    fn from(p: LearningProblem) -> Self {
        ProblemRepr {
            loss_table: p.loss_table,
            a: p.a,
            b: p.b,
            prior: p.prior.into_probs(),
            data_model: p.data_model.into_probs(),
        }
    }
}

impl LearningProblem {
    pub fn new(
        loss_table: Vec<Vec<f64>>,
        a: f64,
        b: f64,
        prior: FiniteDistribution,
        data_model: FiniteDistribution,
    ) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::InvalidParameter(format!(
                "loss range requires finite a < b, got [{a}, {b}]"
            )));
        }
        if loss_table.is_empty() {
            return Err(Error::EmptyInput("no hypotheses"));
        }
        check_dims(loss_table.len(), prior.alphabet_size())?;
        if let Some(index) = prior.probs().iter().position(|p| *p <= 0.0) {
            return Err(Error::NonPositivePrior { index });
        }
        for (x, row) in loss_table.iter().enumerate() {
            check_dims(data_model.alphabet_size(), row.len())?;
            if let Some((z, v)) = row
                .iter()
                .enumerate()
                .find(|(_, v)| !(**v >= a && **v <= b))
            {
                return Err(Error::InvalidParameter(format!(
                    "loss({x}, {z}) = {v} outside [{a}, {b}]"
                )));
            }
        }
        Ok(LearningProblem {
            loss_table,
            a,
            b,
            prior,
            data_model,
        })
    }

    pub fn loss_table(&self) -> &[Vec<f64>] {
        &self.loss_table
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    pub fn prior(&self) -> &FiniteDistribution {
        &self.prior
    }

    pub fn data_model(&self) -> &FiniteDistribution {
        &self.data_model
    }

    pub fn hypotheses(&self) -> usize {
        self.loss_table.len()
    }

    /// Same problem with every loss shifted by `c` and the range moved along.
    pub fn with_shifted_losses(&self, c: f64) -> Result<Self> {
        LearningProblem::new(
            self.loss_table
                .iter()
                .map(|r| r.iter().map(|v| v + c).collect())
                .collect(),
            self.a + c,
            self.b + c,
            self.prior.clone(),
            self.data_model.clone(),
        )
    }

    fn check_samples(&self, samples: &[usize]) -> Result<()> {
        if samples.is_empty() {
            return Err(Error::EmptyInput("empty training set"));
        }
        let size = self.data_model.alphabet_size();
        match samples.iter().find(|&&z| z >= size) {
            Some(&symbol) => Err(Error::SymbolOutOfRange { symbol, size }),
            None => Ok(()),
        }
    }

    fn check_hypothesis(&self, x: usize) -> Result<()> {
        if x < self.hypotheses() {
            Ok(())
        } else {
            Err(Error::SymbolOutOfRange {
                symbol: x,
                size: self.hypotheses(),
            })
        }
    }

    /// `L_s(x) = (1/m) Σ_i ℓ(x, z_i)`.
    pub fn training_loss(&self, x: usize, samples: &[usize]) -> Result<f64> {
        self.check_hypothesis(x)?;
        self.check_samples(samples)?;
        Ok(self.training_loss_unchecked(x, samples))
    }

    fn training_loss_unchecked(&self, x: usize, samples: &[usize]) -> f64 {
        let row = &self.loss_table[x];
        samples.iter().map(|&z| row[z]).sum::<f64>() / samples.len() as f64
    }

    pub fn training_losses(&self, samples: &[usize]) -> Result<Vec<f64>> {
        self.check_samples(samples)?;
        Ok((0..self.hypotheses())
            .map(|x| self.training_loss_unchecked(x, samples))
            .collect())
    }

    /// `E_{z∼p(z)}[ℓ(x, z)]`.
    pub fn test_loss(&self, x: usize) -> Result<f64> {
        self.check_hypothesis(x)?;
        self.data_model.expectation(&self.loss_table[x])
    }

    pub fn test_losses(&self) -> Vec<f64> {
        (0..self.hypotheses())
            .map(|x| {
                self.data_model
                    .expectation(&self.loss_table[x])
                    .expect("rows match the data alphabet")
            })
            .collect()
    }

    /// Test loss minus training loss for every hypothesis.
    pub fn generalization_gaps(&self, samples: &[usize]) -> Result<Vec<f64>> {
        let train = self.training_losses(samples)?;
        Ok(self
            .test_losses()
            .iter()
            .zip(&train)
            .map(|(t, l)| t - l)
            .collect())
    }

    pub fn sample_training_set<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Vec<usize> {
        let s = self.data_model.sampler();
        (0..m)
            .map(|_| rand::distr::Distribution::sample(&s, rng))
            .collect()
    }

    /// `E_q[L_s] + KL(q ‖ p) / β`.
    pub fn information_risk(
        &self,
        q: &FiniteDistribution,
        samples: &[usize],
        beta: f64,
    ) -> Result<f64> {
        check_beta(beta)?;
        check_dims(self.hypotheses(), q.alphabet_size())?;
        let train = self.training_losses(samples)?;
        Ok(q.expectation(&train)? + kl_divergence(q, &self.prior)? / beta)
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "beta must be positive, got {beta}"
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GibbsPosterior {
    pub q: FiniteDistribution,
    pub beta: f64,
    /// Hex digest identifying the training set the posterior was fitted on.
    pub training_set_id: String,
}

pub fn training_set_id(samples: &[usize]) -> String {
    let mut h = Sha256::new();
    for &z in samples {
        h.update((z as u64).to_le_bytes());
    }
    h.finalize()
        .iter()
        .take(8)
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Minimizer of the information risk: `q(x) ∝ p(x) exp(−β L_s(x))`.
pub fn gibbs_posterior(
    problem: &LearningProblem,
    samples: &[usize],
    beta: f64,
) -> Result<GibbsPosterior> {
    check_beta(beta)?;
    let train = problem.training_losses(samples)?;
    let fe = FreeEnergyProblem::new(
        LossVector::new(train)?,
        1.0 / beta,
        ComplexityPenalty::KlToPrior(problem.prior.clone()),
    )?;
    Ok(GibbsPosterior {
        q: minimize_closed_form(&fe)?.q_opt,
        beta,
        training_set_id: training_set_id(samples),
    })
}

/// Both sides of `E_q[βΔ] ≤ KL(q ‖ p) + log E_p[exp(βΔ)]`, with `Δ` the
/// generalization gap.
pub fn dv_check(
    problem: &LearningProblem,
    q: &FiniteDistribution,
    samples: &[usize],
    beta: f64,
) -> Result<(f64, f64)> {
    check_beta(beta)?;
    check_dims(problem.hypotheses(), q.alphabet_size())?;
    let gaps = problem.generalization_gaps(samples)?;
    let kl = kl_divergence(q, &problem.prior)?;
    let scaled: Vec<f64> = gaps.iter().map(|g| beta * g).collect();
    let lhs = q.expectation(&scaled)?;
    let shifted: Vec<f64> = problem
        .prior
        .log_probs()
        .iter()
        .zip(&scaled)
        .map(|(lp, s)| lp + s)
        .collect();
    Ok((lhs, kl + log_sum_exp(&shifted)?))
}

/// `√((b − a)² / (2m) · (kl + ln(1/δ)))`.
pub fn pac_bayes_bound(kl: f64, m: usize, delta: f64, a: f64, b: f64) -> Result<f64> {
    if !(kl >= 0.0 && kl.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "kl must be nonnegative, got {kl}"
        )));
    }
    if m == 0 {
        return Err(Error::InvalidParameter("m must be at least 1".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "delta must lie in (0, 1), got {delta}"
        )));
    }
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(Error::InvalidParameter(format!(
            "requires a < b, got [{a}, {b}]"
        )));
    }
    let range = b - a;
    Ok((range * range / (2.0 * m as f64) * (kl + (1.0 / delta).ln())).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageReport {
    pub violation_rate: f64,
    pub violations: usize,
    pub mean_gap: f64,
    pub mean_bound: f64,
    pub trials: usize,
    pub m: usize,
    pub beta: f64,
    pub delta: f64,
    pub seed: u64,
}

impl CoverageReport {
    /// `δ + 2√(δ(1 − δ)/trials)`.
    pub fn allowed_rate(&self) -> f64 {
        binomial_allowance(self.delta, self.trials)
    }
}

pub fn binomial_allowance(delta: f64, trials: usize) -> f64 {
    delta + 2.0 * (delta * (1.0 - delta) / trials as f64).sqrt()
}

/// The RNG used for trial `trial` of an experiment seeded with `seed`.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Monte Carlo check of the PAC-Bayes bound: per trial, draw `s ∼ p(z)^m`,
/// fit the Gibbs posterior and compare the exact averaged gap with the bound.
pub fn coverage_experiment(
    problem: &LearningProblem,
    beta: f64,
    m: usize,
    delta: f64,
    trials: usize,
    seed: u64,
) -> Result<CoverageReport> {
    if trials < MIN_TRIALS {
        return Err(Error::InvalidParameter(format!(
            "at least {MIN_TRIALS} trials required, got {trials}"
        )));
    }
    check_beta(beta)?;
    pac_bayes_bound(0.0, m, delta, problem.a, problem.b)?;
    let tests = problem.test_losses();
    let (mut violations, mut gap_sum, mut bound_sum) = (0usize, 0.0, 0.0);
    for trial in 0..trials {
        let mut rng = trial_rng(seed, trial as u64);
        let s = problem.sample_training_set(m, &mut rng);
        let post = gibbs_posterior(problem, &s, beta)?;
        let train = problem.training_losses(&s)?;
        let gaps: Vec<f64> = tests.iter().zip(&train).map(|(t, l)| t - l).collect();
        let gap = post.q.expectation(&gaps)?;
        let kl = kl_divergence(&post.q, &problem.prior)?;
        let bound = pac_bayes_bound(kl, m, delta, problem.a, problem.b)?;
        if gap > bound {
            violations += 1;
        }
        gap_sum += gap;
        bound_sum += bound;
    }
    let t = trials as f64;
    Ok(CoverageReport {
        violation_rate: violations as f64 / t,
        violations,
        mean_gap: gap_sum / t,
        mean_bound: bound_sum / t,
        trials,
        m,
        beta,
        delta,
        seed,
    })
}

/// Threshold classifiers on a noisy one-dimensional task with 0/1 loss.
///
/// Data symbols encode `z = 2u + y` with feature `u ∈ {0..features}` drawn
/// uniformly and label `y = 1(u ≥ features/2)` flipped with probability
/// `noise`. Hypothesis `t` predicts `1(u ≥ t + 1)`. Uniform prior.
pub fn threshold_classification(
    hypotheses: usize,
    features: usize,
    noise: f64,
) -> Result<LearningProblem> {
    if hypotheses == 0 || features < 2 {
        return Err(Error::InvalidParameter(
            "need hypotheses ≥ 1 and features ≥ 2".into(),
        ));
    }
    if !(0.0..=1.0).contains(&noise) {
        return Err(Error::InvalidParameter(format!(
            "noise must lie in [0, 1], got {noise}"
        )));
    }
    let mut data = vec![0.0; 2 * features];
    for u in 0..features {
        let clean = usize::from(u >= features / 2);
        data[2 * u + clean] += (1.0 - noise) / features as f64;
        data[2 * u + 1 - clean] += noise / features as f64;
    }
    let table = (0..hypotheses)
        .map(|t| {
            (0..2 * features)
                .map(|z| {
                    let (u, y) = (z / 2, z % 2);
                    if usize::from(u > t) == y {
                        0.0
                    } else {
                        1.0
                    }
                })
                .collect()
        })
        .collect();
    LearningProblem::new(
        table,
        0.0,
        1.0,
        FiniteDistribution::uniform(hypotheses)?,
        FiniteDistribution::new(data)?,
    )
}

/// Real-valued losses in `[0, 1]` drawn uniformly, random prior and data
/// model.
pub fn random_bounded_problem<R: Rng + ?Sized>(
    hypotheses: usize,
    symbols: usize,
    rng: &mut R,
) -> Result<LearningProblem> {
    let table = (0..hypotheses)
        .map(|_| (0..symbols).map(|_| rng.random::<f64>()).collect())
        .collect();
    let prior = loop {
        let p = FiniteDistribution::random(hypotheses, rng)?;
        if p.probs().iter().all(|v| *v > 1e-6) {
            break p;
        }
    };
    LearningProblem::new(
        table,
        0.0,
        1.0,
        prior,
        FiniteDistribution::random(symbols, rng)?,
    )
}
