//! Gradient and mirror descent on the probability simplex.
//!
//! The normalized exponentiated gradient step `q' ∝ q exp(−α ∇g(q))` is the
//! KL-penalized free-energy minimizer with loss `∇g(q)`, prior `q` and
//! temperature `1/α`.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{check_dims, Error, Result};
use crate::free_energy::project_onto_simplex;
use crate::simplex::{dot, log_sum_exp, FiniteDistribution};

pub const FD_STEP: f64 = 1e-6;
pub const FD_POINTS: usize = 20;
pub const FD_TOLERANCE: f64 = 1e-4;

/// Coordinates are floored here in NEG runs.
pub const NEG_FLOOR: f64 = 1e-300;

const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;

/// A differentiable function on (a neighbourhood of) the simplex.
pub trait Objective {
    fn dimension(&self) -> usize;
    fn descriptor(&self) -> String;
    /// Value and gradient at `x`.
    fn evaluate(&self, x: &[f64]) -> (f64, Vec<f64>);
}

/// `g(q) = lᵀq`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub l: Vec<f64>,
}

impl Objective for Linear {
    fn dimension(&self) -> usize {
        self.l.len()
    }

    fn descriptor(&self) -> String {
        "linear".into()
    }

    fn evaluate(&self, x: &[f64]) -> (f64, Vec<f64>) {
        (dot(&self.l, x), self.l.clone())
    }
}

/// `g(q) = ½‖q − target‖²`.
#[derive(Debug, Clone)]
pub struct QuadraticToTarget {
    pub target: Vec<f64>,
}

impl Objective for QuadraticToTarget {
    fn dimension(&self) -> usize {
        self.target.len()
    }

    fn descriptor(&self) -> String {
        "quadratic-to-target".into()
    }

    fn evaluate(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let d: Vec<f64> = x.iter().zip(&self.target).map(|(a, b)| a - b).collect();
        (0.5 * dot(&d, &d), d)
    }
}

/// `g(q) = lᵀq + T Σ q ln q`, minimized on the simplex by `softmax(−l/T)`.
#[derive(Debug, Clone)]
pub struct EntropyRegularizedLinear {
    pub l: Vec<f64>,
    pub temperature: f64,
}

impl Objective for EntropyRegularizedLinear {
    fn dimension(&self) -> usize {
        self.l.len()
    }

    fn descriptor(&self) -> String {
        "entropy-regularized-linear".into()
    }

    fn evaluate(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let t = self.temperature;
        let mut value = 0.0;
        let grad = x
            .iter()
            .zip(&self.l)
            .map(|(&q, &l)| {
                value += l * q;
                if q > 0.0 {
                    value += t * q * q.ln();
                }
                l + t * (q.ln() + 1.0)
            })
            .collect();
        (value, grad)
    }
}

pub const BUILTIN_ORACLES: [&str; 3] = [
    "linear",
    "quadratic-to-target",
    "entropy-regularized-linear",
];

/// Parameters for the built-in objectives.
#[derive(Debug, Clone, Default)]
pub struct OracleParams {
    pub l: Option<Vec<f64>>,
    pub target: Option<Vec<f64>>,
    pub temperature: Option<f64>,
}

/// An objective whose gradient has passed the finite-difference check.
pub struct ObjectiveOracle {
    inner: Box<dyn Objective>,
}

impl std::fmt::Debug for ObjectiveOracle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ObjectiveOracle")
            .field("descriptor", &self.inner.descriptor())
            .field("dimension", &self.inner.dimension())
            .finish()
    }
}

impl ObjectiveOracle {
    /// Validate central differences against the reported gradient at
    /// `FD_POINTS` random interior points:
    /// `‖g_fd − g‖∞ ≤ 1e-4 · max(1, ‖g‖∞)`.
    pub fn register(objective: Box<dyn Objective>, seed: u64) -> Result<Self> {
        let n = objective.dimension();
        if n == 0 {
            return Err(Error::EmptyInput("objective has dimension zero"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for point in 0..FD_POINTS {
            let r = FiniteDistribution::random(n, &mut rng)?;
            let x: Vec<f64> = r.probs().iter().map(|p| 0.5 * p + 0.5 / n as f64).collect();
            let (value, grad) = objective.evaluate(&x);
            if !value.is_finite() || grad.len() != n || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::GradientMismatch {
                    descriptor: objective.descriptor(),
                    max_error: f64::INFINITY,
                    point,
                });
            }
            let scale = grad.iter().fold(1.0f64, |m, g| m.max(g.abs()));
            let mut max_error = 0.0f64;
            for i in 0..n {
                let mut hi = x.clone();
                let mut lo = x.clone();
                hi[i] += FD_STEP;
                lo[i] -= FD_STEP;
                let fd = (objective.evaluate(&hi).0 - objective.evaluate(&lo).0) / (2.0 * FD_STEP);
                max_error = max_error.max((fd - grad[i]).abs());
            }
            if !(max_error <= FD_TOLERANCE * scale) {
                return Err(Error::GradientMismatch {
                    descriptor: objective.descriptor(),
                    max_error,
                    point,
                });
            }
        }
        Ok(ObjectiveOracle { inner: objective })
    }

    pub fn builtin(descriptor: &str, params: &OracleParams) -> Result<Self> {
        let need = |v: &Option<Vec<f64>>, name: &str| {
            v.clone().ok_or_else(|| {
                Error::InvalidParameter(format!("oracle '{descriptor}' requires {name}"))
            })
        };
        let objective: Box<dyn Objective> = match descriptor {
            "linear" => Box::new(Linear {
                l: finite(need(&params.l, "l")?)?,
            }),
            "quadratic-to-target" => Box::new(QuadraticToTarget {
                target: finite(need(&params.target, "target")?)?,
            }),
            "entropy-regularized-linear" => {
                let temperature = params.temperature.ok_or_else(|| {
                    Error::InvalidParameter(format!("oracle '{descriptor}' requires temperature"))
                })?;
                if !(temperature > 0.0 && temperature.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "temperature must be positive, got {temperature}"
                    )));
                }
                Box::new(EntropyRegularizedLinear {
                    l: finite(need(&params.l, "l")?)?,
                    temperature,
                })
            }
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown oracle '{other}'; expected one of {BUILTIN_ORACLES:?}"
                )))
            }
        };
        ObjectiveOracle::register(objective, 0)
    }

    pub fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    pub fn descriptor(&self) -> String {
        self.inner.descriptor()
    }

    pub fn evaluate(&self, x: &[f64]) -> (f64, Vec<f64>) {
        self.inner.evaluate(x)
    }
}

fn finite(v: Vec<f64>) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::EmptyInput("oracle vector is empty"));
    }
    match v.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(Error::NonFinite(format!("oracle parameter {i}"))),
        None => Ok(v),
    }
}

fn exact_zero(q: &FiniteDistribution) -> Option<usize> {
    q.probs().iter().position(|p| *p == 0.0)
}

/// `x − α · grad`.
pub fn euclidean_gd_step(x: &[f64], grad: &[f64], alpha: f64) -> Result<Vec<f64>> {
    check_dims(x.len(), grad.len())?;
    Ok(x.iter().zip(grad).map(|(a, g)| a - alpha * g).collect())
}

/// `q'(x) ∝ q(x) exp(−α grad_x)`, in log space.
pub fn neg_step(q: &FiniteDistribution, grad: &[f64], alpha: f64) -> Result<FiniteDistribution> {
    check_dims(q.alphabet_size(), grad.len())?;
    if let Some(index) = exact_zero(q) {
        return Err(Error::ZeroCoordinate { index });
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "step size must be positive, got {alpha}"
        )));
    }
    let lw: Vec<f64> = q
        .log_probs()
        .iter()
        .zip(grad)
        .map(|(l, g)| l - alpha * g)
        .collect();
    FiniteDistribution::from_log_weights(&lw)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Euclidean,
    Neg,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum StepSchedule {
    Constant {
        alpha: f64,
    },
    /// `α_i = alpha / √(i + 1)` for step `i = 0, 1, …`.
    InvSqrt {
        alpha: f64,
    },
    /// Start from `alpha` each step and halve until the Armijo condition
    /// `g(x') ≤ g(x) + 1e-4 · ∇g(x)ᵀ(x' − x)` holds.
    Backtracking {
        alpha: f64,
    },
}

impl StepSchedule {
    pub fn initial(&self) -> f64 {
        match *self {
            StepSchedule::Constant { alpha }
            | StepSchedule::InvSqrt { alpha }
            | StepSchedule::Backtracking { alpha } => alpha,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FloorEvent {
    pub iteration: usize,
    pub coordinate: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DescentTrace {
    pub iterates: Vec<FiniteDistribution>,
    pub values: Vec<f64>,
    /// Step size used to produce `iterates[i + 1]`.
    pub step_sizes: Vec<f64>,
    pub floor_events: Vec<FloorEvent>,
    pub converged: bool,
}

impl DescentTrace {
    pub fn len(&self) -> usize {
        self.iterates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterates.is_empty()
    }

    pub fn last(&self) -> &FiniteDistribution {
        self.iterates
            .last()
            .expect("trace holds the starting point")
    }

    /// CSV with header `iter,value,x0,x1,…`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let n = self.iterates[0].alphabet_size();
        let mut header = vec!["iter".to_string(), "value".to_string()];
        header.extend((0..n).map(|i| format!("x{i}")));
        let io = |e: csv::Error| Error::InvalidParameter(format!("csv write failed: {e}"));
        w.write_record(&header).map_err(io)?;
        for (i, (x, v)) in self.iterates.iter().zip(&self.values).enumerate() {
            let mut rec = vec![i.to_string(), format!("{v:.16e}")];
            rec.extend(x.probs().iter().map(|p| format!("{p:.16e}")));
            w.write_record(&rec).map_err(io)?;
        }
        w.flush()
            .map_err(|e| Error::InvalidParameter(format!("csv write failed: {e}")))
    }
}

fn checked_eval(
    oracle: &ObjectiveOracle,
    x: &FiniteDistribution,
    iteration: usize,
) -> Result<(f64, Vec<f64>)> {
    let (v, g) = oracle.evaluate(x.probs());
    check_dims(x.alphabet_size(), g.len())?;
    if !v.is_finite() || g.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite(format!(
            "objective '{}' at iteration {iteration}",
            oracle.descriptor()
        )));
    }
    Ok((v, g))
}

/// NEG from log-probabilities; returns the new log-probabilities, flooring
/// coordinates below `NEG_FLOOR`.
fn neg_log_update(
    log_q: &[f64],
    grad: &[f64],
    alpha: f64,
    floored: &mut Vec<usize>,
) -> Result<Vec<f64>> {
    let lw: Vec<f64> = log_q.iter().zip(grad).map(|(l, g)| l - alpha * g).collect();
    let z = log_sum_exp(&lw)?;
    let floor = NEG_FLOOR.ln();
    let mut out: Vec<f64> = lw.iter().map(|l| l - z).collect();
    floored.clear();
    for (i, l) in out.iter_mut().enumerate() {
        if *l < floor {
            *l = floor;
            floored.push(i);
        }
    }
    if !floored.is_empty() {
        let z = log_sum_exp(&out)?;
        out.iter_mut().for_each(|l| *l -= z);
    }
    Ok(out)
}

fn from_log(log_q: &[f64]) -> Result<FiniteDistribution> {
    FiniteDistribution::from_log_weights(log_q)
}

/// Iterate until `|g(x⁽ⁱ⁺¹⁾) − g(x⁽ⁱ⁾)| < tol` or `max_iter` steps. The
/// Euclidean method projects every step back onto the simplex.
pub fn run_descent(
    oracle: &ObjectiveOracle,
    x0: &FiniteDistribution,
    method: Method,
    schedule: StepSchedule,
    max_iter: usize,
    tol: f64,
) -> Result<DescentTrace> {
    check_dims(oracle.dimension(), x0.alphabet_size())?;
    let a0 = schedule.initial();
    if !(a0 > 0.0 && a0.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "step size must be positive, got {a0}"
        )));
    }
    if !(tol >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tol must be nonnegative, got {tol}"
        )));
    }
    if method == Method::Neg {
        if let Some(index) = exact_zero(x0) {
            return Err(Error::ZeroCoordinate { index });
        }
    }
    let mut x = x0.clone();
    let mut log_x = x.log_probs();
    let (mut value, mut grad) = checked_eval(oracle, &x, 0)?;
    let mut trace = DescentTrace {
        iterates: vec![x.clone()],
        values: vec![value],
        step_sizes: Vec::new(),
        floor_events: Vec::new(),
        converged: false,
    };
    let mut floored = Vec::new();
    for i in 0..max_iter {
        if grad.iter().all(|g| *g == 0.0) {
            trace.converged = true;
            break;
        }
        let propose =
            |alpha: f64, floored: &mut Vec<usize>| -> Result<(FiniteDistribution, Vec<f64>)> {
                match method {
                    Method::Euclidean => {
                        let y = project_onto_simplex(&euclidean_gd_step(x.probs(), &grad, alpha)?)?;
                        let ly = y.log_probs();
                        Ok((y, ly))
                    }
                    Method::Neg => {
                        let ly = neg_log_update(&log_x, &grad, alpha, floored)?;
                        Ok((from_log(&ly)?, ly))
                    }
                }
            };
        let (alpha, next, log_next) = match schedule {
            StepSchedule::Constant { alpha } => {
                let (y, ly) = propose(alpha, &mut floored)?;
                (alpha, y, ly)
            }
            StepSchedule::InvSqrt { alpha } => {
                let a = alpha / ((i + 1) as f64).sqrt();
                let (y, ly) = propose(a, &mut floored)?;
                (a, y, ly)
            }
            StepSchedule::Backtracking { alpha } => {
                let mut a = alpha;
                let mut chosen = None;
                for _ in 0..=MAX_HALVINGS {
                    let (y, ly) = propose(a, &mut floored)?;
                    let dir: Vec<f64> = y
                        .probs()
                        .iter()
                        .zip(x.probs())
                        .map(|(p, q)| p - q)
                        .collect();
                    let (v, _) = oracle.evaluate(y.probs());
                    if v <= value + ARMIJO * dot(&grad, &dir) {
                        chosen = Some((a, y, ly));
                        break;
                    }
                    a *= 0.5;
                }
                match chosen {
                    Some(c) => c,
                    None => {
                        trace.converged = true;
                        break;
                    }
                }
            }
        };
        if next.probs() == x.probs() {
            trace.converged = true;
            break;
        }
        let iteration = i + 1;
        trace
            .floor_events
            .extend(floored.iter().map(|&coordinate| FloorEvent {
                iteration,
                coordinate,
            }));
        let (v, g) = checked_eval(oracle, &next, iteration)?;
        let change = (v - value).abs();
        x = next;
        log_x = log_next;
        value = v;
        grad = g;
        trace.iterates.push(x.clone());
        trace.values.push(value);
        trace.step_sizes.push(alpha);
        if change < tol {
            trace.converged = true;
            break;
        }
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::free_energy::{minimize_closed_form, ComplexityPenalty, FreeEnergyProblem};
    use crate::simplex::LossVector;
    use rand::Rng;

    fn dist(p: &[f64]) -> FiniteDistribution {
        FiniteDistribution::new(p.to_vec()).unwrap()
    }

    fn linear(l: &[f64]) -> ObjectiveOracle {
        ObjectiveOracle::builtin(
            "linear",
            &OracleParams {
                l: Some(l.to_vec()),
                ..Default::default()
            },
        )
        .unwrap()
    }

    fn quadratic(t: &[f64]) -> ObjectiveOracle {
        ObjectiveOracle::builtin(
            "quadratic-to-target",
            &OracleParams {
                target: Some(t.to_vec()),
                ..Default::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn euclidean_step_examples() {
        assert_eq!(
            euclidean_gd_step(&[0.3, 0.7], &[0.0, 0.0], 2.0).unwrap(),
            vec![0.3, 0.7]
        );
        assert_eq!(
            euclidean_gd_step(&[1.0, 0.0], &[1.0, -1.0], 0.5).unwrap(),
            vec![0.5, 0.5]
        );
        assert_eq!(
            euclidean_gd_step(&[0.3, 0.7], &[4.0, 1.0], 0.0).unwrap(),
            vec![0.3, 0.7]
        );
        assert!(euclidean_gd_step(&[0.3, 0.7], &[4.0], 1.0).is_err());
    }

    #[test]
    fn neg_step_examples() {
        let q = dist(&[0.2, 0.5, 0.3]);
        let same = neg_step(&q, &[4.0, 4.0, 4.0], 0.7).unwrap();
        assert!(same.total_variation(&q).unwrap() < 1e-15);
        let u = FiniteDistribution::uniform(2).unwrap();
        let r = neg_step(&u, &[0.0, 1.0], 3f64.ln()).unwrap();
        assert!((r.prob(0) - 0.75).abs() < 1e-15 && (r.prob(1) - 0.25).abs() < 1e-15);
        assert_eq!(
            neg_step(&dist(&[0.0, 1.0]), &[0.0, 1.0], 1.0),
            Err(Error::ZeroCoordinate { index: 0 })
        );
        assert!(neg_step(&u, &[0.0, 1.0], 0.0).is_err());
    }

    #[test]
    fn neg_step_matches_free_energy_minimizer() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..300 {
            let n = rng.random_range(1..8);
            let q = FiniteDistribution::random(n, &mut rng).unwrap();
            if !q.is_strictly_positive() {
                continue;
            }
            let g: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let alpha = rng.random_range(0.01..10.0);
            let ours = neg_step(&q, &g, alpha).unwrap();
            let fe = FreeEnergyProblem::new(
                LossVector::new(g).unwrap(),
                1.0 / alpha,
                ComplexityPenalty::KlToPrior(q),
            )
            .unwrap();
            let oracle = minimize_closed_form(&fe).unwrap().q_opt;
            for i in 0..n {
                assert!((ours.prob(i) - oracle.prob(i)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn linear_neg_recursion() {
        let o = linear(&[0.0, 1.0]);
        let u = FiniteDistribution::uniform(2).unwrap();
        let t = run_descent(
            &o,
            &u,
            Method::Neg,
            StepSchedule::Constant { alpha: 1.0 },
            30,
            0.0,
        )
        .unwrap();
        assert_eq!(t.len(), 31);
        for (i, q) in t.iterates.iter().enumerate() {
            let expected = 1.0 / (1.0 + (-(i as f64)).exp());
            assert!((q.prob(0) - expected).abs() < 1e-14);
        }
        for w in t.values.windows(2) {
            assert!(w[1] < w[0]);
        }
    }

    #[test]
    fn both_methods_reach_interior_target() {
        let target = [0.1, 0.25, 0.4, 0.25];
        let o = quadratic(&target);
        let x0 = dist(&[0.7, 0.1, 0.1, 0.1]);
        for method in [Method::Euclidean, Method::Neg] {
            let t = run_descent(
                &o,
                &x0,
                method,
                StepSchedule::Constant { alpha: 0.5 },
                10_000,
                1e-18,
            )
            .unwrap();
            assert!(t.len() <= 10_001);
            let last = t.last();
            for i in 0..4 {
                assert!(
                    (last.prob(i) - target[i]).abs() < 1e-6,
                    "{method:?}: {:?}",
                    last.probs()
                );
            }
        }
    }

    #[test]
    fn stationary_start_gives_single_entry() {
        let o = linear(&[0.0, 0.0, 0.0]);
        let u = FiniteDistribution::uniform(3).unwrap();
        for method in [Method::Euclidean, Method::Neg] {
            let t = run_descent(
                &o,
                &u,
                method,
                StepSchedule::Constant { alpha: 1.0 },
                100,
                1e-12,
            )
            .unwrap();
            assert_eq!(t.len(), 1);
            assert!(t.converged);
        }
    }

    #[test]
    fn neg_iterates_stay_on_simplex() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let n = rng.random_range(2..6);
            let l: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let o = ObjectiveOracle::builtin(
                "entropy-regularized-linear",
                &OracleParams {
                    l: Some(l),
                    temperature: Some(rng.random_range(0.1..2.0)),
                    ..Default::default()
                },
            )
            .unwrap();
            let x0 = FiniteDistribution::uniform(n).unwrap();
            let t = run_descent(
                &o,
                &x0,
                Method::Neg,
                StepSchedule::Constant { alpha: 0.3 },
                300,
                0.0,
            )
            .unwrap();
            for q in &t.iterates {
                assert!((q.probs().iter().sum::<f64>() - 1.0).abs() <= 1e-9);
                assert!(q.probs().iter().all(|p| *p > 0.0));
            }
        }
    }

    #[test]
    fn entropy_regularized_converges_to_gibbs() {
        let l = vec![0.5, -1.0, 2.0];
        let temperature = 0.8;
        let o = ObjectiveOracle::builtin(
            "entropy-regularized-linear",
            &OracleParams {
                l: Some(l.clone()),
                temperature: Some(temperature),
                ..Default::default()
            },
        )
        .unwrap();
        let t = run_descent(
            &o,
            &FiniteDistribution::uniform(3).unwrap(),
            Method::Neg,
            StepSchedule::Constant { alpha: 0.5 },
            5000,
            1e-16,
        )
        .unwrap();
        let fe = FreeEnergyProblem::new(
            LossVector::new(l).unwrap(),
            temperature,
            ComplexityPenalty::NegEntropy,
        )
        .unwrap();
        let gibbs = minimize_closed_form(&fe).unwrap().q_opt;
        assert!(t.last().total_variation(&gibbs).unwrap() < 1e-7);
    }

    #[test]
    fn descent_property_under_small_constant_steps() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let n = rng.random_range(2..6);
            let target = FiniteDistribution::random(n, &mut rng)
                .unwrap()
                .into_probs();
            let o = quadratic(&target);
            let lo = linear(
                &(0..n)
                    .map(|_| rng.random_range(-2.0..2.0))
                    .collect::<Vec<_>>(),
            );
            let x0 = FiniteDistribution::uniform(n).unwrap();
            // gradient Lipschitz constant is 1 for the quadratic, 0 for the linear
            for oracle in [&o, &lo] {
                for method in [Method::Euclidean, Method::Neg] {
                    let t = run_descent(
                        oracle,
                        &x0,
                        method,
                        StepSchedule::Constant { alpha: 1.0 },
                        200,
                        0.0,
                    )
                    .unwrap();
                    for w in t.values.windows(2) {
                        assert!(w[1] <= w[0] + 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn schedules() {
        let o = quadratic(&[0.2, 0.3, 0.5]);
        let x0 = FiniteDistribution::uniform(3).unwrap();
        let t = run_descent(
            &o,
            &x0,
            Method::Neg,
            StepSchedule::InvSqrt { alpha: 2.0 },
            5,
            0.0,
        )
        .unwrap();
        for (i, a) in t.step_sizes.iter().enumerate() {
            assert!((a - 2.0 / ((i + 1) as f64).sqrt()).abs() < 1e-15);
        }
        let t = run_descent(
            &o,
            &x0,
            Method::Euclidean,
            StepSchedule::Backtracking { alpha: 50.0 },
            100,
            1e-16,
        )
        .unwrap();
        for w in t.values.windows(2) {
            assert!(w[1] <= w[0]);
        }
        assert!(t.step_sizes.iter().all(|a| *a < 50.0));
        assert!(t.last().total_variation(&dist(&[0.2, 0.3, 0.5])).unwrap() < 1e-6);
    }

    #[test]
    fn flooring_is_reported() {
        let o = linear(&[0.0, 1.0]);
        let u = FiniteDistribution::uniform(2).unwrap();
        let t = run_descent(
            &o,
            &u,
            Method::Neg,
            StepSchedule::Constant { alpha: 800.0 },
            3,
            0.0,
        )
        .unwrap();
        assert!(!t.floor_events.is_empty());
        assert_eq!(
            t.floor_events[0],
            FloorEvent {
                iteration: 1,
                coordinate: 1
            }
        );
        assert!(t
            .iterates
            .iter()
            .all(|q| q.probs().iter().all(|p| *p > 0.0)));
    }

    #[test]
    fn neg_rejects_boundary_start() {
        let o = linear(&[0.0, 1.0]);
        assert_eq!(
            run_descent(
                &o,
                &dist(&[1.0, 0.0]),
                Method::Neg,
                StepSchedule::Constant { alpha: 1.0 },
                3,
                0.0
            ),
            Err(Error::ZeroCoordinate { index: 1 })
        );
    }

    struct Wrong;

    impl Objective for Wrong {
        fn dimension(&self) -> usize {
            2
        }
        fn descriptor(&self) -> String {
            "wrong".into()
        }
        fn evaluate(&self, x: &[f64]) -> (f64, Vec<f64>) {
            (x[0] * x[0], vec![x[0], 0.0])
        }
    }

    #[test]
    fn gradient_validation() {
        for name in BUILTIN_ORACLES {
            let p = OracleParams {
                l: Some(vec![0.3, -1.0, 2.0]),
                target: Some(vec![0.2, 0.3, 0.5]),
                temperature: Some(0.5),
            };
            assert!(ObjectiveOracle::builtin(name, &p).is_ok());
        }
        match ObjectiveOracle::register(Box::new(Wrong), 0) {
            Err(Error::GradientMismatch {
                descriptor, point, ..
            }) => {
                assert_eq!(descriptor, "wrong");
                assert_eq!(point, 0);
            }
            other => panic!("{other:?}"),
        }
        assert!(ObjectiveOracle::builtin("cubic", &OracleParams::default()).is_err());
        assert!(ObjectiveOracle::builtin("linear", &OracleParams::default()).is_err());
    }

    #[test]
    fn csv_export() {
        let o = linear(&[0.0, 1.0]);
        let u = FiniteDistribution::uniform(2).unwrap();
        let t = run_descent(
            &o,
            &u,
            Method::Neg,
            StepSchedule::Constant { alpha: 1.0 },
            2,
            0.0,
        )
        .unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "iter,value,x0,x1");
        assert_eq!(lines.len(), 4);
        assert_eq!(
            lines[1],
            "0,5.0000000000000000e-1,5.0000000000000000e-1,5.0000000000000000e-1"
        );
        let parsed: f64 = lines[3].split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(parsed, t.values[2]);
    }
}
