//! The free-energy objective `J(q) = E_q[L] + T·D(q)` over the simplex, its
//! closed-form minimizers, a grid-enumeration oracle, and the Fenchel-Young gap.
//!
//! Minimizing `J` is the same as evaluating the convex conjugate of
//! `D + I_S` at `v = −l/T`: the optimal value satisfies `f*(v) = −J_opt/T`
//! and the maximizer is `q_opt`.
//!
//! | penalty `D(q)`  | `q_opt(x)`                        | `J_opt`                           |
//! |-----------------|-----------------------------------|-----------------------------------|
//! | `−H(q)`         | `exp(−L/T) / Σ exp(−L/T)`         | `−T log Σ exp(−L/T)`              |
//! | `KL(q‖p)`       | `p exp(−L/T) / E_p[exp(−L/T)]`    | `−T log E_p[exp(−L/T)]`           |
//! | `½‖q − p‖²`     | `(p − L/T − τ)⁺`                  | `J(q_opt)`                        |

use serde::{Deserialize, Serialize};

use crate::error::{check_dims, Error, Result};
use crate::simplex::{
    dot, entropy, half_sq_l2, kl_divergence, log_sum_exp, FiniteDistribution, LossVector,
    ZERO_THRESHOLD,
};

/// Largest alphabet the grid oracle will enumerate.
pub const BRUTE_FORCE_MAX_ALPHABET: usize = 5;

/// Coarsest grid step the oracle accepts.
pub const BRUTE_FORCE_MAX_STEP: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub enum ComplexityPenalty {
    /// `D(q) = −H(q)`
    NegEntropy,
    /// `D(q) = KL(q‖p)`
    KlToPrior(FiniteDistribution),
    /// `D(q) = ½‖q − p‖²`
    HalfSqL2ToPrior(FiniteDistribution),
}

impl ComplexityPenalty {
    pub fn prior(&self) -> Option<&FiniteDistribution> {
        match self {
            ComplexityPenalty::NegEntropy => None,
            ComplexityPenalty::KlToPrior(p) | ComplexityPenalty::HalfSqL2ToPrior(p) => Some(p),
        }
    }

    /// Wire name: `neg_entropy`, `kl` or `half_sq_l2`.
    pub fn kind_name(&self) -> &'static str {
        match self {
            ComplexityPenalty::NegEntropy => "neg_entropy",
            ComplexityPenalty::KlToPrior(_) => "kl",
            ComplexityPenalty::HalfSqL2ToPrior(_) => "half_sq_l2",
        }
    }

    /// `D(q)`.
    pub fn value(&self, q: &FiniteDistribution) -> Result<f64> {
        match self {
            ComplexityPenalty::NegEntropy => Ok(-entropy(q)),
            ComplexityPenalty::KlToPrior(p) => kl_divergence(q, p),
            ComplexityPenalty::HalfSqL2ToPrior(p) => half_sq_l2(q, p),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct PenaltyRepr {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    prior: Option<Vec<f64>>,
}

impl Serialize for ComplexityPenalty {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PenaltyRepr {
            kind: self.kind_name().to_string(),
            prior: self.prior().map(|p| p.probs().to_vec()),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ComplexityPenalty {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = PenaltyRepr::deserialize(d)?;
        let prior = |p: Option<Vec<f64>>| -> std::result::Result<FiniteDistribution, D::Error> {
            let p = p.ok_or_else(|| {
                D::Error::custom(format!("penalty '{}' needs a prior", repr.kind))
            })?;
            FiniteDistribution::new(p).map_err(D::Error::custom)
        };
        match repr.kind.as_str() {
            "neg_entropy" => {
                if repr.prior.is_some() {
                    return Err(D::Error::custom("penalty 'neg_entropy' takes no prior"));
                }
                Ok(ComplexityPenalty::NegEntropy)
            }
            "kl" => Ok(ComplexityPenalty::KlToPrior(prior(repr.prior.clone())?)),
            "half_sq_l2" => Ok(ComplexityPenalty::HalfSqL2ToPrior(prior(
                repr.prior.clone(),
            )?)),
            other => Err(D::Error::custom(format!("unknown penalty kind '{other}'"))),
        }
    }
}

/// `minimize_q E_q[L] + T·D(q)` over the simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct FreeEnergyProblem {
    loss: LossVector,
    temperature: f64,
    penalty: ComplexityPenalty,
}

#[derive(Serialize, Deserialize)]
struct ProblemRepr {
    losses: Vec<f64>,
    temperature: f64,
    penalty: ComplexityPenalty,
}

impl Serialize for FreeEnergyProblem {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ProblemRepr {
            losses: self.loss.values().to_vec(),
            temperature: self.temperature,
            penalty: self.penalty.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for FreeEnergyProblem {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = ProblemRepr::deserialize(d)?;
        let loss = LossVector::new(repr.losses).map_err(D::Error::custom)?;
        FreeEnergyProblem::new(loss, repr.temperature, repr.penalty).map_err(D::Error::custom)
    }
}

impl FreeEnergyProblem {
    pub fn new(loss: LossVector, temperature: f64, penalty: ComplexityPenalty) -> Result<Self> {
        if !(temperature.is_finite() && temperature > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "temperature must be positive and finite, got {temperature}"
            )));
        }
        if let Some(p) = penalty.prior() {
            check_dims(loss.len(), p.alphabet_size())?;
        }
        Ok(FreeEnergyProblem {
            loss,
            temperature,
            penalty,
        })
    }

    pub fn loss(&self) -> &LossVector {
        &self.loss
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn penalty(&self) -> &ComplexityPenalty {
        &self.penalty
    }

    pub fn alphabet_size(&self) -> usize {
        self.loss.len()
    }

    /// Same penalty and temperature, losses shifted by `c`.
    pub fn with_shifted_loss(&self, c: f64) -> Result<Self> {
        FreeEnergyProblem::new(
            self.loss.shifted(c)?,
            self.temperature,
            self.penalty.clone(),
        )
    }
}

/// Minimizer of a [`FreeEnergyProblem`].
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub q_opt: FiniteDistribution,
    pub j_opt: f64,
    /// Water-filling threshold; only set for the `½‖q − p‖²` penalty.
    pub tau: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct SolutionRepr {
    q_opt: Vec<f64>,
    j_opt: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tau: Option<f64>,
}

impl Serialize for Solution {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        SolutionRepr {
            q_opt: self.q_opt.probs().to_vec(),
            j_opt: self.j_opt,
            tau: self.tau,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Solution {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = SolutionRepr::deserialize(d)?;
        Ok(Solution {
            q_opt: FiniteDistribution::new(repr.q_opt).map_err(D::Error::custom)?,
            j_opt: repr.j_opt,
            tau: repr.tau,
        })
    }
}

/// `J(q) = E_q[L] + T·D(q)`.
pub fn free_energy(problem: &FreeEnergyProblem, q: &FiniteDistribution) -> Result<f64> {
    let energy = q.expectation(problem.loss.values())?;
    Ok(energy + problem.temperature * problem.penalty.value(q)?)
}

pub fn minimize_closed_form(problem: &FreeEnergyProblem) -> Result<Solution> {
    let t = problem.temperature;
    let losses = problem.loss.values();
    match &problem.penalty {
        ComplexityPenalty::NegEntropy => {
            let logits: Vec<f64> = losses.iter().map(|l| -l / t).collect();
            let log_z = log_sum_exp(&logits)?;
            Ok(Solution {
                q_opt: FiniteDistribution::from_log_weights(&logits)?,
                j_opt: -t * log_z,
                tau: None,
            })
        }
        ComplexityPenalty::KlToPrior(prior) => {
            if let Some(index) = prior.first_zero() {
                return Err(Error::NonPositivePrior { index });
            }
            let logits: Vec<f64> = prior
                .probs()
                .iter()
                .zip(losses)
                .map(|(p, l)| p.ln() - l / t)
                .collect();
            // log E_p[exp(−L/T)] = log Σ exp(log p − L/T)
            let log_mgf = log_sum_exp(&logits)?;
            Ok(Solution {
                q_opt: FiniteDistribution::from_log_weights(&logits)?,
                j_opt: -t * log_mgf,
                tau: None,
            })
        }
        ComplexityPenalty::HalfSqL2ToPrior(prior) => {
            let tau = solve_tau(prior, &problem.loss, t)?;
            let clipped: Vec<f64> = prior
                .probs()
                .iter()
                .zip(losses)
                .map(|(p, l)| (p - l / t - tau).max(0.0))
                .collect();
            let q_opt = FiniteDistribution::renormalized(clipped)?;
            let j_opt = free_energy(problem, &q_opt)?;
            Ok(Solution {
                q_opt,
                j_opt,
                tau: Some(tau),
            })
        }
    }
}

/// Threshold `τ` with `Σ (v_i − τ)⁺ = 1`, by sorting `v` descending and
/// scanning for the last index still above the running pivot.
pub fn simplex_threshold(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput("simplex projection of an empty vector"));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("projection input {v}")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = sorted[0] - 1.0;
    for (k, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - 1.0) / (k + 1) as f64;
        if u - candidate > 0.0 {
            tau = candidate;
        } else {
            break;
        }
    }
    Ok(tau)
}

/// `τ` such that `Σ_x (p(x) − L(x)/T − τ)⁺ = 1`.
pub fn solve_tau(p: &FiniteDistribution, l: &LossVector, temperature: f64) -> Result<f64> {
    check_dims(p.alphabet_size(), l.len())?;
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "temperature must be positive and finite, got {temperature}"
        )));
    }
    let v: Vec<f64> = p
        .probs()
        .iter()
        .zip(l.values())
        .map(|(pi, li)| pi - li / temperature)
        .collect();
    simplex_threshold(&v)
}

/// Euclidean projection of `v` onto the probability simplex.
pub fn project_onto_simplex(values: &[f64]) -> Result<FiniteDistribution> {
    let tau = simplex_threshold(values)?;
    FiniteDistribution::renormalized(values.iter().map(|v| (v - tau).max(0.0)).collect())
}

/// Exhaustive minimization over grid points of the simplex whose coordinates
/// are multiples of `grid_step`.
///
/// The objective is separable, so each coordinate's contribution is
/// tabulated once and the enumeration only adds table entries. Ties go to
/// the lexicographically smallest grid point. Grid points outside the
/// prior's support are skipped for the KL penalty.
pub fn brute_force_minimize(problem: &FreeEnergyProblem, grid_step: f64) -> Result<Solution> {
    let n_x = problem.alphabet_size();
    if n_x > BRUTE_FORCE_MAX_ALPHABET {
        return Err(Error::AlphabetTooLarge {
            size: n_x,
            max: BRUTE_FORCE_MAX_ALPHABET,
        });
    }
    if !(grid_step > 0.0 && grid_step <= BRUTE_FORCE_MAX_STEP) {
        return Err(Error::InvalidParameter(format!(
            "grid_step must lie in (0, {BRUTE_FORCE_MAX_STEP}], got {grid_step}"
        )));
    }
    let n = (1.0 / grid_step).round() as usize;
    if ((n as f64) * grid_step - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "grid_step {grid_step} does not divide 1"
        )));
    }

    let t = problem.temperature;
    let losses = problem.loss.values();
    let table: Vec<Vec<f64>> = (0..n_x)
        .map(|i| {
            (0..=n)
                .map(|k| {
                    let q = k as f64 / n as f64;
                    let xlogx = if k == 0 { 0.0 } else { q * q.ln() };
                    let d = match &problem.penalty {
                        ComplexityPenalty::NegEntropy => xlogx,
                        ComplexityPenalty::KlToPrior(p) => {
                            let pi = p.prob(i);
                            if k == 0 {
                                0.0
                            } else if pi <= ZERO_THRESHOLD {
                                f64::INFINITY
                            } else {
                                xlogx - q * pi.ln()
                            }
                        }
                        ComplexityPenalty::HalfSqL2ToPrior(p) => {
                            let diff = q - p.prob(i);
                            0.5 * diff * diff
                        }
                    };
                    q * losses[i] + t * d
                })
                .collect()
        })
        .collect();

    let mut best_value = f64::INFINITY;
    let mut best = vec![0usize; n_x];
    let mut current = vec![0usize; n_x];
    enumerate_compositions(&table, 0, n, 0.0, &mut current, &mut best_value, &mut best);
    if !best_value.is_finite() {
        return Err(Error::InvalidParameter(
            "no grid point inside the prior's support".into(),
        ));
    }

    let q_opt = FiniteDistribution::new(best.iter().map(|&k| k as f64 / n as f64).collect())?;
    let j_opt = free_energy(problem, &q_opt)?;
    Ok(Solution {
        q_opt,
        j_opt,
        tau: None,
    })
}

fn enumerate_compositions(
    table: &[Vec<f64>],
    coord: usize,
    remaining: usize,
    partial: f64,
    current: &mut [usize],
    best_value: &mut f64,
    best: &mut [usize],
) {
    if coord + 1 == table.len() {
        current[coord] = remaining;
        let value = partial + table[coord][remaining];
        if value < *best_value {
            *best_value = value;
            best.copy_from_slice(current);
        }
        return;
    }
    for k in 0..=remaining {
        current[coord] = k;
        let partial = partial + table[coord][k];
        if partial.is_finite() {
            enumerate_compositions(
                table,
                coord + 1,
                remaining - k,
                partial,
                current,
                best_value,
                best,
            );
        }
    }
}

/// `J(q) − J_opt`; nonnegative, zero exactly at `q_opt`.
pub fn fenchel_young_gap(problem: &FreeEnergyProblem, q: &FiniteDistribution) -> Result<f64> {
    let opt = minimize_closed_form(problem)?;
    Ok(free_energy(problem, q)? - opt.j_opt)
}

/// Convex conjugate of `D + I_S` at slope `v`:
/// `f*(v) = max_{q ∈ S} qᵀv − D(q)`, returned with its maximizer.
pub fn simplex_conjugate(
    penalty: &ComplexityPenalty,
    slope: &[f64],
) -> Result<(f64, FiniteDistribution)> {
    let loss = LossVector::new(slope.iter().map(|v| -v).collect())?;
    let problem = FreeEnergyProblem::new(loss, 1.0, penalty.clone())?;
    let sol = minimize_closed_form(&problem)?;
    Ok((-sol.j_opt, sol.q_opt))
}

/// `qᵀv − D(q)`, the right-hand side of the Fenchel-Young inequality.
pub fn fenchel_young_lower(
    penalty: &ComplexityPenalty,
    slope: &[f64],
    q: &FiniteDistribution,
) -> Result<f64> {
    check_dims(q.alphabet_size(), slope.len())?;
    Ok(dot(q.probs(), slope) - penalty.value(q)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dist(p: &[f64]) -> FiniteDistribution {
        FiniteDistribution::new(p.to_vec()).unwrap()
    }

    fn problem(l: &[f64], t: f64, penalty: ComplexityPenalty) -> FreeEnergyProblem {
        FreeEnergyProblem::new(LossVector::new(l.to_vec()).unwrap(), t, penalty).unwrap()
    }

    /// Independent τ oracle: bisection on the monotone map τ ↦ Σ (v − τ)⁺.
    fn tau_bisection(v: &[f64]) -> f64 {
        let f = |tau: f64| v.iter().map(|x| (x - tau).max(0.0)).sum::<f64>() - 1.0;
        let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (mut lo, mut hi) = (max - 1.0, max);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn free_energy_examples() {
        let p = problem(&[0.0, 0.0], 1.0, ComplexityPenalty::NegEntropy);
        let u = FiniteDistribution::uniform(2).unwrap();
        assert!((free_energy(&p, &u).unwrap() + 2f64.ln()).abs() < 1e-15);

        let p = problem(&[0.0, 3f64.ln()], 1.0, ComplexityPenalty::NegEntropy);
        let q = dist(&[0.75, 0.25]);
        let oracle = 0.25 * 3f64.ln() - (-0.75 * 0.75f64.ln() - 0.25 * 0.25f64.ln());
        assert!((free_energy(&p, &q).unwrap() - oracle).abs() < 1e-15);

        let prior = dist(&[0.3, 0.7]);
        let p = problem(
            &[1.0, 1.0],
            2.0,
            ComplexityPenalty::KlToPrior(prior.clone()),
        );
        assert!((free_energy(&p, &prior).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn free_energy_propagates_support_violation() {
        let p = problem(
            &[0.0, 0.0],
            1.0,
            ComplexityPenalty::KlToPrior(dist(&[1.0, 0.0])),
        );
        assert_eq!(
            free_energy(&p, &dist(&[0.5, 0.5])),
            Err(Error::SupportViolation { index: 1 })
        );
    }

    #[test]
    fn closed_form_examples() {
        let p = problem(&[0.0, 3f64.ln()], 1.0, ComplexityPenalty::NegEntropy);
        let sol = minimize_closed_form(&p).unwrap();
        assert!((sol.q_opt.prob(0) - 0.75).abs() < 1e-15);
        assert!((sol.j_opt + (4.0f64 / 3.0).ln()).abs() < 1e-15);
        let oracle = brute_force_minimize(&p, 1e-4).unwrap();
        assert!((oracle.q_opt.prob(0) - 0.75).abs() < 1e-4 + 1e-12);
        assert!((oracle.j_opt - sol.j_opt).abs() < 1e-6);

        let p = problem(&[2.5; 4], 1.0, ComplexityPenalty::NegEntropy);
        let sol = minimize_closed_form(&p).unwrap();
        for &q in sol.q_opt.probs() {
            assert!((q - 0.25).abs() < 1e-15);
        }
        assert!((sol.j_opt - (2.5 - 4f64.ln())).abs() < 1e-14);

        let p = problem(
            &[0.0, 1.0],
            1.0,
            ComplexityPenalty::HalfSqL2ToPrior(dist(&[0.5, 0.5])),
        );
        let sol = minimize_closed_form(&p).unwrap();
        assert!((sol.tau.unwrap() + 0.5).abs() < 1e-15);
        assert_eq!(sol.q_opt.probs(), &[1.0, 0.0]);
        let oracle = brute_force_minimize(&p, 1e-3).unwrap();
        assert_eq!(oracle.q_opt.probs(), &[1.0, 0.0]);
    }

    #[test]
    fn closed_form_rejects_zero_prior() {
        let p = problem(
            &[0.0, 1.0],
            1.0,
            ComplexityPenalty::KlToPrior(dist(&[1.0, 0.0])),
        );
        assert_eq!(
            minimize_closed_form(&p),
            Err(Error::NonPositivePrior { index: 1 })
        );
    }

    #[test]
    fn closed_form_survives_large_loss_range() {
        let p = problem(&[0.0, 1500.0, -1200.0], 1.0, ComplexityPenalty::NegEntropy);
        let sol = minimize_closed_form(&p).unwrap();
        assert!(sol.j_opt.is_finite());
        assert!((sol.q_opt.prob(2) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn tau_examples() {
        let p = dist(&[0.2, 0.3, 0.5]);
        let zero = LossVector::constant(3, 0.0).unwrap();
        assert!(solve_tau(&p, &zero, 1.0).unwrap().abs() < 1e-15);

        let half = dist(&[0.5, 0.5]);
        let l = LossVector::new(vec![0.0, 1.0]).unwrap();
        assert!((solve_tau(&half, &l, 1.0).unwrap() + 0.5).abs() < 1e-15);
        assert!((tau_bisection(&[0.5, -0.5]) + 0.5).abs() < 1e-12);

        let l = LossVector::new(vec![0.1, -0.1]).unwrap();
        let tau = solve_tau(&half, &l, 1.0).unwrap();
        assert!(tau.abs() < 1e-15);
        let p = problem(&[0.1, -0.1], 1.0, ComplexityPenalty::HalfSqL2ToPrior(half));
        let sol = minimize_closed_form(&p).unwrap();
        assert!((sol.q_opt.prob(0) - 0.4).abs() < 1e-15);
        assert!((sol.q_opt.prob(1) - 0.6).abs() < 1e-15);
    }

    #[test]
    fn tau_matches_bisection_and_has_tiny_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..300 {
            let n = rng.random_range(1..12);
            let p = FiniteDistribution::random(n, &mut rng).unwrap();
            let l = LossVector::new((0..n).map(|_| rng.random_range(-3.0..3.0)).collect()).unwrap();
            let t = rng.random_range(0.1..5.0);
            let tau = solve_tau(&p, &l, t).unwrap();
            let v: Vec<f64> = p
                .probs()
                .iter()
                .zip(l.values())
                .map(|(a, b)| a - b / t)
                .collect();
            let residual = v.iter().map(|x| (x - tau).max(0.0)).sum::<f64>() - 1.0;
            assert!(residual.abs() <= 1e-12, "residual {residual}");
            assert!((tau - tau_bisection(&v)).abs() <= 1e-10);
        }
    }

    #[test]
    fn brute_force_examples_and_errors() {
        let p = problem(&[0.0, 0.0], 1.0, ComplexityPenalty::NegEntropy);
        let sol = brute_force_minimize(&p, 1e-3).unwrap();
        assert!((sol.q_opt.prob(0) - 0.5).abs() <= 1e-3);

        let p = problem(&[0.0, 10.0], 0.1, ComplexityPenalty::NegEntropy);
        let sol = brute_force_minimize(&p, 1e-3).unwrap();
        let exact = minimize_closed_form(&p).unwrap();
        assert_eq!(sol.q_opt.probs(), &[1.0, 0.0]);
        assert!(exact.q_opt.prob(0) >= 1.0 - 1e-12);

        let p6 = problem(&[0.0; 6], 1.0, ComplexityPenalty::NegEntropy);
        assert!(matches!(
            brute_force_minimize(&p6, 0.01),
            Err(Error::AlphabetTooLarge { size: 6, .. })
        ));
        assert!(brute_force_minimize(&p, 0.05).is_err());
        assert!(brute_force_minimize(&p, 0.003).is_err());
    }

    #[test]
    fn brute_force_skips_points_outside_support() {
        let p = problem(
            &[1.0, 0.0, 0.0],
            1.0,
            ComplexityPenalty::KlToPrior(dist(&[0.5, 0.0, 0.5])),
        );
        let sol = brute_force_minimize(&p, 0.01).unwrap();
        assert_eq!(sol.q_opt.prob(1), 0.0);
    }

    #[test]
    fn gibbs_shift_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let n = rng.random_range(2..7);
            let l = LossVector::new((0..n).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
            let t = rng.random_range(0.2..3.0);
            let c = rng.random_range(-5.0..5.0);
            let prior = FiniteDistribution::random(n, &mut rng).unwrap();
            for penalty in [
                ComplexityPenalty::NegEntropy,
                ComplexityPenalty::KlToPrior(prior.clone()),
            ] {
                let base = FreeEnergyProblem::new(l.clone(), t, penalty).unwrap();
                let shifted = base.with_shifted_loss(c).unwrap();
                let a = minimize_closed_form(&base).unwrap();
                let b = minimize_closed_form(&shifted).unwrap();
                assert!(a.q_opt.total_variation(&b.q_opt).unwrap() <= 1e-12);
                assert!((b.j_opt - a.j_opt - c).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn temperature_limits() {
        let l = [0.3, 1.7, -0.4, 2.2];
        let hot = minimize_closed_form(&problem(&l, 1e4, ComplexityPenalty::NegEntropy)).unwrap();
        let u = FiniteDistribution::uniform(4).unwrap();
        assert!(hot.q_opt.total_variation(&u).unwrap() <= 1e-3);
        let cold = minimize_closed_form(&problem(&l, 1e-4, ComplexityPenalty::NegEntropy)).unwrap();
        assert!(cold.q_opt.prob(2) >= 1.0 - 1e-6);
    }

    #[test]
    fn fenchel_young_gap_equals_scaled_kl_to_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let n = rng.random_range(2..6);
            let l = LossVector::new((0..n).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
            let t = rng.random_range(0.2..3.0);
            let prior = FiniteDistribution::random(n, &mut rng).unwrap();
            let q = FiniteDistribution::random(n, &mut rng).unwrap();
            for penalty in [
                ComplexityPenalty::NegEntropy,
                ComplexityPenalty::KlToPrior(prior.clone()),
            ] {
                let p = FreeEnergyProblem::new(l.clone(), t, penalty).unwrap();
                let gap = fenchel_young_gap(&p, &q).unwrap();
                let opt = minimize_closed_form(&p).unwrap();
                let kl = kl_divergence(&q, &opt.q_opt).unwrap();
                assert!(
                    (gap - t * kl).abs() <= 1e-10,
                    "gap {gap} vs T·KL {}",
                    t * kl
                );
            }
        }
    }

    #[test]
    fn conjugate_satisfies_fenchel_young_inequality() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let prior = dist(&[0.2, 0.5, 0.3]);
        for penalty in [
            ComplexityPenalty::NegEntropy,
            ComplexityPenalty::KlToPrior(prior.clone()),
            ComplexityPenalty::HalfSqL2ToPrior(prior.clone()),
        ] {
            for _ in 0..50 {
                let v: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
                let (fstar, u_opt) = simplex_conjugate(&penalty, &v).unwrap();
                let u = FiniteDistribution::random(3, &mut rng).unwrap();
                assert!(fstar >= fenchel_young_lower(&penalty, &v, &u).unwrap() - 1e-12);
                let at_opt = fenchel_young_lower(&penalty, &v, &u_opt).unwrap();
                assert!((fstar - at_opt).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn json_round_trip() {
        let p = problem(
            &[0.0, 1.0],
            0.5,
            ComplexityPenalty::KlToPrior(dist(&[0.4, 0.6])),
        );
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(
            json,
            r#"{"losses":[0.0,1.0],"temperature":0.5,"penalty":{"kind":"kl","prior":[0.4,0.6]}}"#
        );
        let back: FreeEnergyProblem = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);

        let bad = r#"{"losses":[0.0,1.0],"temperature":0.0,"penalty":{"kind":"neg_entropy"}}"#;
        assert!(serde_json::from_str::<FreeEnergyProblem>(bad).is_err());
        let bad = r#"{"losses":[0.0,1.0],"temperature":1.0,"penalty":{"kind":"kl"}}"#;
        assert!(serde_json::from_str::<FreeEnergyProblem>(bad).is_err());

        let sol = minimize_closed_form(&problem(
            &[0.0, 1.0],
            1.0,
            ComplexityPenalty::HalfSqL2ToPrior(dist(&[0.5, 0.5])),
        ))
        .unwrap();
        let json = serde_json::to_string(&sol).unwrap();
        assert!(json.contains(r#""tau":-0.5"#));
        let back: Solution = serde_json::from_str(&json).unwrap();
        assert_eq!(back, sol);
    }
}
