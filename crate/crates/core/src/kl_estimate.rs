//! Variational KL estimation from samples through the Donsker-Varadhan
//! objective `E_p[−L] − log E_q[exp(−L)] ≤ KL(p ‖ q)`.
//!
//! Function classes are tabular or linear in fixed features, so the
//! objective is concave in the parameters and the equality case is exact.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{check_dims, Error, Result};
use crate::simplex::{dot, kl_divergence, FiniteDistribution, ZERO_THRESHOLD};

const MAX_HALVINGS: usize = 60;
const INIT_SCALE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Representation {
    Tabular {
        values: Vec<f64>,
    },
    /// `L(x) = wᵀ f(x)`, `features[x]` is `f(x)`.
    LinearFeatures {
        features: Vec<Vec<f64>>,
        weights: Vec<f64>,
    },
}

/// A function `L` on a finite alphabet. Excluded symbols take the value
/// `+∞`: they carry no mass in `exp(−L)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FunctionClass {
    #[serde(flatten)]
    repr: Representation,
    excluded: Vec<usize>,
    #[serde(skip)]
    mask: Vec<bool>,
}

impl FunctionClass {
    pub fn tabular(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput("function table is empty"));
        }
        check_finite(&values, "table entry")?;
        let n = values.len();
        Ok(FunctionClass {
            repr: Representation::Tabular { values },
            excluded: Vec::new(),
            mask: vec![false; n],
        })
    }

    pub fn linear(features: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::EmptyInput("feature table is empty"));
        }
        if weights.is_empty() {
            return Err(Error::EmptyInput("feature dimension is zero"));
        }
        for row in &features {
            check_dims(weights.len(), row.len())?;
            check_finite(row, "feature")?;
        }
        check_finite(&weights, "weight")?;
        let n = features.len();
        Ok(FunctionClass {
            repr: Representation::LinearFeatures { features, weights },
            excluded: Vec::new(),
            mask: vec![false; n],
        })
    }

    /// Mark symbols as excluded.
    pub fn with_excluded(mut self, symbols: &[usize]) -> Result<Self> {
        let n = self.alphabet_size();
        for &s in symbols {
            if s >= n {
                return Err(Error::SymbolOutOfRange { symbol: s, size: n });
            }
            self.mask[s] = true;
        }
        self.excluded = (0..n).filter(|&i| self.mask[i]).collect();
        if self.excluded.len() == n {
            return Err(Error::InvalidParameter("every symbol is excluded".into()));
        }
        Ok(self)
    }

    pub fn representation(&self) -> &Representation {
        &self.repr
    }

    pub fn excluded(&self) -> &[usize] {
        &self.excluded
    }

    pub fn alphabet_size(&self) -> usize {
        self.mask.len()
    }

    pub fn parameters(&self) -> &[f64] {
        match &self.repr {
            Representation::Tabular { values } => values,
            Representation::LinearFeatures { weights, .. } => weights,
        }
    }

    fn with_parameters(&self, params: Vec<f64>) -> Self {
        let repr = match &self.repr {
            Representation::Tabular { .. } => Representation::Tabular { values: params },
            Representation::LinearFeatures { features, .. } => Representation::LinearFeatures {
                features: features.clone(),
                weights: params,
            },
        };
        FunctionClass {
            repr,
            excluded: self.excluded.clone(),
            mask: self.mask.clone(),
        }
    }

    /// `L(x)` for every symbol, `+∞` on excluded symbols.
    pub fn evaluate(&self) -> Vec<f64> {
        let raw: Vec<f64> = match &self.repr {
            Representation::Tabular { values } => values.clone(),
            Representation::LinearFeatures { features, weights } => {
                features.iter().map(|f| dot(f, weights)).collect()
            }
        };
        raw.into_iter()
            .zip(&self.mask)
            .map(|(v, &ex)| if ex { f64::INFINITY } else { v })
            .collect()
    }

    /// Pull a gradient with respect to `L` back to the parameters.
    fn pull_back(&self, grad_l: &[f64]) -> Vec<f64> {
        match &self.repr {
            Representation::Tabular { .. } => grad_l.to_vec(),
            Representation::LinearFeatures { features, weights } => {
                let mut g = vec![0.0; weights.len()];
                for (f, gl) in features.iter().zip(grad_l) {
                    for (gi, fi) in g.iter_mut().zip(f) {
                        *gi += fi * gl;
                    }
                }
                g
            }
        }
    }

    /// The same function shifted by a constant. Linear classes need a
    /// feature that is constant across symbols for this to be exact.
    pub fn shifted(&self, c: f64) -> Result<Self> {
        match &self.repr {
            Representation::Tabular { values } => {
                Ok(self.with_parameters(values.iter().map(|v| v + c).collect()))
            }
            Representation::LinearFeatures { .. } => Err(Error::InvalidParameter(
                "shift is only defined for tabular classes".into(),
            )),
        }
    }
}

fn check_finite(v: &[f64], what: &str) -> Result<()> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(Error::NonFinite(format!("{what} {i}"))),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplePair {
    samples_p: Vec<usize>,
    samples_q: Vec<usize>,
    alphabet_size: usize,
}

impl SamplePair {
    pub fn new(samples_p: Vec<usize>, samples_q: Vec<usize>, alphabet_size: usize) -> Result<Self> {
        if samples_p.is_empty() {
            return Err(Error::EmptyInput("no samples from p"));
        }
        if samples_q.is_empty() {
            return Err(Error::EmptyInput("no samples from q"));
        }
        if let Some(&symbol) = samples_p
            .iter()
            .chain(&samples_q)
            .find(|&&s| s >= alphabet_size)
        {
            return Err(Error::SymbolOutOfRange {
                symbol,
                size: alphabet_size,
            });
        }
        Ok(SamplePair {
            samples_p,
            samples_q,
            alphabet_size,
        })
    }

    /// Alphabet inferred as one past the largest symbol seen.
    pub fn inferred(samples_p: Vec<usize>, samples_q: Vec<usize>) -> Result<Self> {
        let n = samples_p
            .iter()
            .chain(&samples_q)
            .max()
            .map_or(0, |m| m + 1);
        SamplePair::new(samples_p, samples_q, n)
    }

    pub fn draw<R: Rng + ?Sized>(
        p: &FiniteDistribution,
        q: &FiniteDistribution,
        n_p: usize,
        n_q: usize,
        rng: &mut R,
    ) -> Result<Self> {
        check_dims(p.alphabet_size(), q.alphabet_size())?;
        let sp: Vec<usize> = (0..n_p).map(|_| p.sample(rng)).collect();
        let sq: Vec<usize> = (0..n_q).map(|_| q.sample(rng)).collect();
        SamplePair::new(sp, sq, p.alphabet_size())
    }

    pub fn samples_p(&self) -> &[usize] {
        &self.samples_p
    }

    pub fn samples_q(&self) -> &[usize] {
        &self.samples_q
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    fn counts(samples: &[usize], n: usize) -> Vec<f64> {
        let mut c = vec![0.0; n];
        for &s in samples {
            c[s] += 1.0;
        }
        c
    }

    /// Symbol counts in `samples_p`.
    pub fn counts_p(&self) -> Vec<f64> {
        Self::counts(&self.samples_p, self.alphabet_size)
    }

    /// Symbol counts in `samples_q`.
    pub fn counts_q(&self) -> Vec<f64> {
        Self::counts(&self.samples_q, self.alphabet_size)
    }
}

/// `Σ_x p(x)(−L(x)) − log Σ_x q(x) exp(−L(x))` for nonnegative weight
/// vectors `p`, `q`, each normalized by its own total.
fn weighted_objective(l: &[f64], p: &[f64], q: &[f64]) -> f64 {
    let (mut first, mut p_total) = (0.0, 0.0);
    for (pi, li) in p.iter().zip(l) {
        if *pi > 0.0 {
            first -= pi * li;
            p_total += pi;
        }
    }
    let shift = q
        .iter()
        .zip(l)
        .filter(|(qi, _)| **qi > 0.0)
        .map(|(_, li)| *li)
        .fold(f64::INFINITY, f64::min);
    if !shift.is_finite() {
        return f64::NAN;
    }
    let (mut sum, mut q_total) = (0.0, 0.0);
    for (qi, li) in q.iter().zip(l) {
        if *qi > 0.0 {
            sum += qi * (shift - li).exp();
            q_total += qi;
        }
    }
    first / p_total + shift - (sum / q_total).ln()
}

/// Empirical objective `(1/n_p) Σ −L(x_i) − log((1/n_q) Σ exp(−L(x_j)))`.
pub fn dv_objective(l: &FunctionClass, samples: &SamplePair) -> Result<f64> {
    check_dims(samples.alphabet_size(), l.alphabet_size())?;
    Ok(weighted_objective(
        &l.evaluate(),
        &samples.counts_p(),
        &samples.counts_q(),
    ))
}

/// Population objective `E_p[−L] − log E_q[exp(−L)]`.
pub fn dv_objective_population(
    l: &FunctionClass,
    p: &FiniteDistribution,
    q: &FiniteDistribution,
) -> Result<f64> {
    check_dims(p.alphabet_size(), l.alphabet_size())?;
    check_dims(q.alphabet_size(), l.alphabet_size())?;
    Ok(weighted_objective(&l.evaluate(), p.probs(), q.probs()))
}

/// `L*(x) = −log(p(x)/q(x))`, which attains `KL(p ‖ q)`. Symbols with
/// `p(x) = 0` are excluded.
pub fn exact_dv_optimum(p: &FiniteDistribution, q: &FiniteDistribution) -> Result<FunctionClass> {
    kl_divergence(p, q)?;
    let zero: Vec<usize> = (0..p.alphabet_size())
        .filter(|&i| p.prob(i) <= ZERO_THRESHOLD)
        .collect();
    let values = p
        .probs()
        .iter()
        .zip(q.probs())
        .map(|(pi, qi)| {
            if *pi > ZERO_THRESHOLD {
                -(pi / qi).ln()
            } else {
                0.0
            }
        })
        .collect();
    FunctionClass::tabular(values)?.with_excluded(&zero)
}

fn count_gradient(f: &FunctionClass, p_counts: &[f64], q_counts: &[f64]) -> Result<Vec<f64>> {
    let l = f.evaluate();
    let lw: Vec<f64> = q_counts
        .iter()
        .zip(&l)
        .map(|(c, li)| {
            if *c > 0.0 {
                c.ln() - li
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let w = FiniteDistribution::from_log_weights(&lw)?;
    let n_p: f64 = p_counts.iter().sum();
    // ∂J/∂L(x) = w(x) − p̂(x), with w the q̂-tilted softmax of −L
    let grad_l: Vec<f64> = w
        .probs()
        .iter()
        .zip(p_counts)
        .map(|(wi, c)| wi - c / n_p)
        .collect();
    Ok(f.pull_back(&grad_l))
}

/// Gradient of the empirical objective with respect to the parameters of
/// `f`: `w − p̂` for tabular classes, `Fᵀ(w − p̂)` for linear ones.
pub fn dv_gradient(f: &FunctionClass, samples: &SamplePair) -> Result<Vec<f64>> {
    check_dims(samples.alphabet_size(), f.alphabet_size())?;
    count_gradient(f, &samples.counts_p(), &samples.counts_q())
}

/// The same class with new parameters.
pub fn with_parameters(f: &FunctionClass, params: Vec<f64>) -> Result<FunctionClass> {
    check_dims(f.parameters().len(), params.len())?;
    check_finite(&params, "parameter")?;
    Ok(f.with_parameters(params))
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClassSpec {
    Tabular,
    /// Feature table, one row per symbol.
    LinearFeatures(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DvFit {
    pub function: FunctionClass,
    pub kl_estimate: f64,
    /// Objective at the initial parameters, then after every step.
    pub trace: Vec<f64>,
}

/// Full-batch gradient ascent on the empirical objective with step halving.
/// Symbols never observed in `samples_p` are excluded; parameters start
/// uniformly in `[−0.01, 0.01]` from `seed`.
pub fn fit_dv(
    spec: &ClassSpec,
    samples: &SamplePair,
    steps: usize,
    learning_rate: f64,
    seed: u64,
) -> Result<DvFit> {
    if steps == 0 {
        return Err(Error::InvalidParameter("steps must be at least 1".into()));
    }
    if !(learning_rate > 0.0 && learning_rate.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "learning rate must be positive, got {learning_rate}"
        )));
    }
    let n = samples.alphabet_size();
    let (p_counts, q_counts) = (samples.counts_p(), samples.counts_q());
    let unseen: Vec<usize> = (0..n).filter(|&i| p_counts[i] == 0.0).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut init = |d: usize| -> Vec<f64> {
        (0..d)
            .map(|_| rng.random_range(-INIT_SCALE..INIT_SCALE))
            .collect()
    };
    let mut current = match spec {
        ClassSpec::Tabular => FunctionClass::tabular(init(n))?,
        ClassSpec::LinearFeatures(features) => {
            check_dims(n, features.len())?;
            let d = features.first().map_or(0, Vec::len);
            FunctionClass::linear(features.clone(), init(d))?
        }
    }
    .with_excluded(&unseen)?;

    let objective = |f: &FunctionClass| weighted_objective(&f.evaluate(), &p_counts, &q_counts);
    let mut value = objective(&current);
    let mut trace = vec![value];
    for _ in 0..steps {
        let grad = count_gradient(&current, &p_counts, &q_counts)?;
        if grad.iter().all(|g| *g == 0.0) {
            break;
        }
        let mut eta = learning_rate;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let params: Vec<f64> = current
                .parameters()
                .iter()
                .zip(&grad)
                .map(|(t, g)| t + eta * g)
                .collect();
            if params.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "parameters diverged after {} steps (last objective {value})",
                    trace.len() - 1
                )));
            }
            let candidate = current.with_parameters(params);
            let v = objective(&candidate);
            if v >= value {
                accepted = Some((candidate, v));
                break;
            }
            eta *= 0.5;
        }
        match accepted {
            Some((c, v)) => {
                current = c;
                value = v;
                trace.push(v);
            }
            None => break,
        }
    }
    if !value.is_finite() {
        return Err(Error::NonFinite(format!(
            "objective is {value} after {} steps",
            trace.len() - 1
        )));
    }
    Ok(DvFit {
        function: current,
        kl_estimate: value,
        trace,
    })
}

/// `I(x; y) = KL(p(x, y) ‖ p(x) p(y))` for a joint table.
pub fn mutual_information(joint: &[Vec<f64>]) -> Result<f64> {
    let (joint, product) = joint_and_product(joint)?;
    kl_divergence(&joint, &product)
}

/// The joint table flattened to `x · n_y + y` and the product of its
/// marginals on the same alphabet.
pub fn joint_and_product(joint: &[Vec<f64>]) -> Result<(FiniteDistribution, FiniteDistribution)> {
    let ny = joint
        .first()
        .map(Vec::len)
        .ok_or(Error::EmptyInput("joint table has no rows"))?;
    for row in joint {
        check_dims(ny, row.len())?;
    }
    let flat = FiniteDistribution::new(joint.iter().flatten().copied().collect())?;
    let px: Vec<f64> = joint.iter().map(|r| r.iter().sum()).collect();
    let py: Vec<f64> = (0..ny).map(|j| joint.iter().map(|r| r[j]).sum()).collect();
    let product = FiniteDistribution::renormalized(
        px.iter()
            .flat_map(|a| py.iter().map(move |b| a * b))
            .collect(),
    )?;
    Ok((flat, product))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(p: &[f64]) -> FiniteDistribution {
        FiniteDistribution::new(p.to_vec()).unwrap()
    }

    fn tab(v: &[f64]) -> FunctionClass {
        FunctionClass::tabular(v.to_vec()).unwrap()
    }

    #[test]
    fn empirical_objective_examples() {
        let s = SamplePair::new(vec![0, 0, 1], vec![0, 1, 1, 1], 2).unwrap();
        assert_eq!(dv_objective(&tab(&[0.0, 0.0]), &s).unwrap(), 0.0);
        assert!(dv_objective(&tab(&[2.7, 2.7]), &s).unwrap().abs() < 1e-15);
        // −(1/3)(−log 3) − log((1/4)(1 + 3·3))
        let v = dv_objective(&tab(&[0.0, -(3f64.ln())]), &s).unwrap();
        let expected = 3f64.ln() / 3.0 - 2.5f64.ln();
        assert!((v - expected).abs() < 1e-15);
        assert!(SamplePair::new(vec![], vec![0], 2).is_err());
        assert!(SamplePair::new(vec![0], vec![], 2).is_err());
        assert_eq!(
            SamplePair::new(vec![0], vec![2], 2),
            Err(Error::SymbolOutOfRange { symbol: 2, size: 2 })
        );
    }

    #[test]
    fn population_examples() {
        let p = dist(&[0.8, 0.2]);
        let q = dist(&[0.5, 0.5]);
        let kl = 0.8 * 1.6f64.ln() + 0.2 * 0.4f64.ln();
        let star = exact_dv_optimum(&p, &q).unwrap();
        assert!((dv_objective_population(&star, &p, &q).unwrap() - kl).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..5 {
            let l = tab(&[rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)]);
            assert!(dv_objective_population(&l, &p, &q).unwrap() <= kl + 1e-12);
        }
        let l = tab(&[0.4, -1.1]);
        assert!(dv_objective_population(&l, &q, &q).unwrap() <= 0.0);
        assert!(
            dv_objective_population(&tab(&[5.0, 5.0]), &q, &q)
                .unwrap()
                .abs()
                < 1e-15
        );
    }

    #[test]
    fn exact_optimum_examples() {
        let q = dist(&[0.5, 0.5]);
        assert_eq!(exact_dv_optimum(&q, &q).unwrap().evaluate(), vec![0.0, 0.0]);
        let l = exact_dv_optimum(&dist(&[0.75, 0.25]), &q)
            .unwrap()
            .evaluate();
        assert!((l[0] + 1.5f64.ln()).abs() < 1e-15 && (l[1] + 0.5f64.ln()).abs() < 1e-15);
        let f = exact_dv_optimum(&dist(&[0.0, 0.6, 0.4]), &dist(&[0.2, 0.3, 0.5])).unwrap();
        assert_eq!(f.excluded(), &[0]);
        assert_eq!(f.evaluate()[0], f64::INFINITY);
        assert_eq!(
            exact_dv_optimum(&dist(&[0.5, 0.5]), &dist(&[1.0, 0.0])),
            Err(Error::SupportViolation { index: 1 })
        );
    }

    #[test]
    fn lower_bound_and_equality() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..500 {
            let n = rng.random_range(1..8);
            let p = FiniteDistribution::random(n, &mut rng).unwrap();
            let q = FiniteDistribution::random(n, &mut rng).unwrap();
            let l = tab(&(0..n)
                .map(|_| rng.random_range(-5.0..5.0))
                .collect::<Vec<_>>());
            let kl = kl_divergence(&p, &q).unwrap();
            assert!(dv_objective_population(&l, &p, &q).unwrap() <= kl + 1e-12);
            let star = exact_dv_optimum(&p, &q).unwrap();
            assert!((dv_objective_population(&star, &p, &q).unwrap() - kl).abs() <= 1e-12);
        }
    }

    #[test]
    fn shift_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = dist(&[0.1, 0.6, 0.3]);
        let q = dist(&[0.3, 0.3, 0.4]);
        let s = SamplePair::draw(&p, &q, 50, 70, &mut rng).unwrap();
        for _ in 0..100 {
            let l = tab(&(0..3)
                .map(|_| rng.random_range(-5.0..5.0))
                .collect::<Vec<_>>());
            let c = rng.random_range(-50.0..50.0);
            let ls = l.shifted(c).unwrap();
            assert!((dv_objective(&l, &s).unwrap() - dv_objective(&ls, &s).unwrap()).abs() < 1e-12);
            let a = dv_objective_population(&l, &p, &q).unwrap();
            let b = dv_objective_population(&ls, &p, &q).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn fit_errors() {
        let s = SamplePair::new(vec![0, 1], vec![1, 0], 2).unwrap();
        assert!(fit_dv(&ClassSpec::Tabular, &s, 0, 0.1, 0).is_err());
        assert!(fit_dv(&ClassSpec::Tabular, &s, 10, 0.0, 0).is_err());
        assert!(fit_dv(&ClassSpec::LinearFeatures(vec![vec![1.0]]), &s, 10, 0.1, 0).is_err());
    }

    #[test]
    fn fit_equal_distributions() {
        let p = dist(&[0.2, 0.5, 0.3]);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = SamplePair::draw(&p, &p, 10_000, 10_000, &mut rng).unwrap();
        let fit = fit_dv(&ClassSpec::Tabular, &s, 500, 1.0, 3).unwrap();
        assert!(fit.kl_estimate.abs() < 0.05);
        for w in fit.trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9);
        }
    }

    #[test]
    fn fit_recovers_kl() {
        let p = dist(&[0.6, 0.3, 0.1]);
        let q = dist(&[0.2, 0.3, 0.5]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = SamplePair::draw(&p, &q, 100_000, 100_000, &mut rng).unwrap();
        let fit = fit_dv(&ClassSpec::Tabular, &s, 500, 1.0, 3).unwrap();
        let kl = kl_divergence(&p, &q).unwrap();
        assert!(
            (fit.kl_estimate - kl).abs() < 0.02,
            "{} vs {kl}",
            fit.kl_estimate
        );
        for w in fit.trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9);
        }
    }

    #[test]
    fn unseen_symbols_are_excluded() {
        let s = SamplePair::new(vec![0, 0, 1], vec![0, 1, 2, 2], 3).unwrap();
        let fit = fit_dv(&ClassSpec::Tabular, &s, 2000, 1.0, 0).unwrap();
        assert_eq!(fit.function.excluded(), &[2]);
        // empirical optimum is KL(p̂ ‖ q̂)
        let expected =
            (2.0 / 3.0) * ((2.0 / 3.0) / 0.25f64).ln() + (1.0 / 3.0) * ((1.0 / 3.0) / 0.25f64).ln();
        assert!((fit.kl_estimate - expected).abs() < 1e-6);
    }

    #[test]
    fn linear_features_match_tabular() {
        let p = dist(&[0.35, 0.15, 0.3, 0.2]);
        let q = dist(&[0.25, 0.25, 0.1, 0.4]);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let s = SamplePair::draw(&p, &q, 20_000, 20_000, &mut rng).unwrap();
        let mixing: Vec<Vec<f64>> = (0..4)
            .map(|i| {
                (0..4)
                    .map(|j| {
                        if i == j {
                            1.0
                        } else {
                            rng.random_range(-0.3..0.3)
                        }
                    })
                    .collect()
            })
            .collect();
        let a = fit_dv(&ClassSpec::Tabular, &s, 3000, 1.0, 1).unwrap();
        let b = fit_dv(&ClassSpec::LinearFeatures(mixing), &s, 3000, 1.0, 1).unwrap();
        assert!((a.kl_estimate - b.kl_estimate).abs() < 1e-6);
        let pa = dv_objective_population(&a.function, &p, &q).unwrap();
        let pb = dv_objective_population(&b.function, &p, &q).unwrap();
        assert!((pa - pb).abs() < 1e-6, "{pa} vs {pb}");
        for w in b.trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9);
        }
    }

    #[test]
    fn mutual_information_recovery() {
        let joint = vec![
            vec![0.25, 0.05, 0.02],
            vec![0.04, 0.2, 0.06],
            vec![0.03, 0.05, 0.3],
        ];
        let (pj, prod) = joint_and_product(&joint).unwrap();
        let mi = mutual_information(&joint).unwrap();
        assert!(mi > 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s = SamplePair::draw(&pj, &prod, 100_000, 100_000, &mut rng).unwrap();
        let fit = fit_dv(&ClassSpec::Tabular, &s, 1000, 1.0, 2).unwrap();
        assert!(
            (fit.kl_estimate - mi).abs() < 0.02,
            "{} vs {mi}",
            fit.kl_estimate
        );
        let indep = vec![vec![0.12, 0.28], vec![0.18, 0.42]];
        assert!(mutual_information(&indep).unwrap().abs() < 1e-15);
    }

    #[test]
    fn function_class_json() {
        let f = tab(&[0.5, 1.0]).with_excluded(&[1]).unwrap();
        assert_eq!(
            serde_json::to_string(&f).unwrap(),
            r#"{"kind":"tabular","values":[0.5,1.0],"excluded":[1]}"#
        );
    }
}
