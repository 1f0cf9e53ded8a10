//! Maximum-entropy distributions under moment constraints.
//!
//! `max H(q) s.t. E_q[f_k] = α_k` is solved through its concave dual
//! `λᵀα − log Σ_x exp(Σ_k λ_k f_k(x))`, whose maximizer gives the
//! exponential-family solution `q(x) ∝ exp(Σ_k λ_k f_k(x))`. For fixed `λ`
//! this is the Gibbs minimizer of the free energy with `L(x) = −Σ_k λ_k f_k(x)`,
//! `T = 1` and the negative-entropy penalty.

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dims, Error, Result};
use crate::simplex::{log_sum_exp, FiniteDistribution};

/// Interior margin below which the LP treats the target as on the boundary.
const INTERIOR_MARGIN: f64 = 1e-9;

/// Hessian conditioning below which Newton falls back to gradient ascent.
const MIN_CONDITIONING: f64 = 1e-12;

const MAX_HALVINGS: usize = 60;

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 200;

/// One constraint `E_q[f] = α`, with `f` tabulated per symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentConstraint {
    pub feature: Vec<f64>,
    pub target: f64,
}

impl MomentConstraint {
    pub fn new(feature: Vec<f64>, target: f64) -> Result<Self> {
        if feature.is_empty() {
            return Err(Error::EmptyInput("feature table has no symbols"));
        }
        if feature.iter().any(|v| !v.is_finite()) || !target.is_finite() {
            return Err(Error::NonFinite("moment constraint entries".into()));
        }
        Ok(MomentConstraint { feature, target })
    }

    fn range(&self) -> (f64, f64) {
        self.feature
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

/// A set of constraints sharing one alphabet.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentConstraints {
    alphabet_size: usize,
    constraints: Vec<MomentConstraint>,
}

/// Wire format `{"features": [[..], ..], "targets": [..]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstraintFile {
    pub features: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    /// Needed only when there are no constraints.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alphabet_size: Option<usize>,
}

impl MomentConstraints {
    pub fn new(alphabet_size: usize, constraints: Vec<MomentConstraint>) -> Result<Self> {
        if alphabet_size == 0 {
            return Err(Error::EmptyInput("alphabet has no symbols"));
        }
        for c in &constraints {
            check_dims(alphabet_size, c.feature.len())?;
        }
        Ok(MomentConstraints {
            alphabet_size,
            constraints,
        })
    }

    pub fn from_file(file: &ConstraintFile) -> Result<Self> {
        if file.features.len() != file.targets.len() {
            return Err(Error::DimensionMismatch {
                expected: file.features.len(),
                found: file.targets.len(),
            });
        }
        let alphabet_size = match (file.features.first(), file.alphabet_size) {
            (Some(f), _) => f.len(),
            (None, Some(n)) => n,
            (None, None) => {
                return Err(Error::InvalidParameter(
                    "alphabet_size is required when no constraints are given".into(),
                ))
            }
        };
        let constraints = file
            .features
            .iter()
            .zip(&file.targets)
            .map(|(f, &a)| MomentConstraint::new(f.clone(), a))
            .collect::<Result<Vec<_>>>()?;
        MomentConstraints::new(alphabet_size, constraints)
    }

    pub fn to_file(&self) -> ConstraintFile {
        ConstraintFile {
            features: self.constraints.iter().map(|c| c.feature.clone()).collect(),
            targets: self.constraints.iter().map(|c| c.target).collect(),
            alphabet_size: Some(self.alphabet_size),
        }
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    pub fn constraints(&self) -> &[MomentConstraint] {
        &self.constraints
    }

    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    /// `Σ_k λ_k f_k(x)` per symbol.
    pub fn natural_scores(&self, lambdas: &[f64]) -> Vec<f64> {
        (0..self.alphabet_size)
            .map(|x| {
                self.constraints
                    .iter()
                    .zip(lambdas)
                    .map(|(c, l)| l * c.feature[x])
                    .sum()
            })
            .collect()
    }

    /// Exponential-family member `q(x) ∝ exp(Σ_k λ_k f_k(x))`.
    pub fn exponential_family(&self, lambdas: &[f64]) -> Result<FiniteDistribution> {
        check_dims(self.len(), lambdas.len())?;
        FiniteDistribution::from_log_weights(&self.natural_scores(lambdas))
    }

    /// `E_q[f_k]` for every constraint.
    pub fn moments(&self, q: &FiniteDistribution) -> Result<Vec<f64>> {
        self.constraints
            .iter()
            .map(|c| q.expectation(&c.feature))
            .collect()
    }

    /// Gradient of the dual, `α − E_q[f]`, at the exponential-family
    /// member `q` of some `λ`.
    pub fn dual_gradient_at(&self, q: &FiniteDistribution) -> Result<Vec<f64>> {
        Ok(self
            .constraints
            .iter()
            .zip(self.moments(q)?)
            .map(|(c, mu)| c.target - mu)
            .collect())
    }

    pub fn dual_gradient(&self, lambdas: &[f64]) -> Result<Vec<f64>> {
        self.dual_gradient_at(&self.exponential_family(lambdas)?)
    }

    /// Dual objective `λᵀα − log Σ_x exp(Σ_k λ_k f_k(x))`.
    pub fn dual(&self, lambdas: &[f64]) -> Result<f64> {
        check_dims(self.len(), lambdas.len())?;
        let lin: f64 = self
            .constraints
            .iter()
            .zip(lambdas)
            .map(|(c, l)| l * c.target)
            .sum();
        Ok(lin - log_sum_exp(&self.natural_scores(lambdas))?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RangeCheck {
    pub index: usize,
    pub min: f64,
    pub max: f64,
    pub target: f64,
    /// Target strictly inside `(min, max)`.
    pub in_open_range: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityReport {
    pub feasible: bool,
    pub per_constraint: Vec<RangeCheck>,
    /// Constraints whose target falls outside its own open range.
    pub violated: Vec<usize>,
    /// A strictly positive `q` meets every constraint at once.
    pub jointly_feasible: bool,
    /// Largest achievable `min_x q(x)` among feasible `q` (`None` if none).
    pub interior_margin: Option<f64>,
}

/// Checks that the targets lie strictly inside the convex hull of the
/// feature vectors, one constraint at a time and jointly.
///
/// The joint test solves the LP `max t s.t. Σ_x q(x) f(x) = α, Σ q = 1,
/// q(x) ≥ t`, so a positive optimum certifies a strictly positive feasible
/// `q`.
pub fn check_feasibility(constraints: &MomentConstraints) -> FeasibilityReport {
    let per_constraint: Vec<RangeCheck> = constraints
        .constraints
        .iter()
        .enumerate()
        .map(|(index, c)| {
            let (min, max) = c.range();
            RangeCheck {
                index,
                min,
                max,
                target: c.target,
                in_open_range: c.target > min && c.target < max,
            }
        })
        .collect();
    let violated: Vec<usize> = per_constraint
        .iter()
        .filter(|r| !r.in_open_range)
        .map(|r| r.index)
        .collect();

    let interior_margin = if constraints.is_empty() {
        Some(1.0 / constraints.alphabet_size as f64)
    } else {
        interior_margin_lp(constraints)
    };
    let jointly_feasible = interior_margin.is_some_and(|t| t > INTERIOR_MARGIN);
    FeasibilityReport {
        feasible: violated.is_empty() && jointly_feasible,
        per_constraint,
        violated,
        jointly_feasible,
        interior_margin,
    }
}

fn interior_margin_lp(constraints: &MomentConstraints) -> Option<f64> {
    let n = constraints.alphabet_size;
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let q: Vec<_> = (0..n).map(|_| lp.add_var(0.0, (0.0, 1.0))).collect();
    let t = lp.add_var(1.0, (0.0, 1.0));
    for c in &constraints.constraints {
        let row: Vec<_> = q.iter().zip(&c.feature).map(|(&v, &f)| (v, f)).collect();
        lp.add_constraint(row.as_slice(), ComparisonOp::Eq, c.target);
    }
    let ones: Vec<_> = q.iter().map(|&v| (v, 1.0)).collect();
    lp.add_constraint(ones.as_slice(), ComparisonOp::Eq, 1.0);
    for &v in &q {
        lp.add_constraint([(v, 1.0), (t, -1.0)], ComparisonOp::Ge, 0.0);
    }
    lp.solve().ok().map(|sol| sol.objective())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaxEntSolution {
    pub lambdas: Vec<f64>,
    pub q: FiniteDistribution,
    pub iterations: usize,
    /// `max_k |E_q[f_k] − α_k|`.
    pub residual: f64,
    /// Dual objective after each accepted step, starting at `λ = 0`.
    pub dual_trace: Vec<f64>,
}

/// Damped Newton ascent on the dual from `λ = 0`.
///
/// The Newton system uses `Cov_q(f)`; when its conditioning drops below
/// `1e-12` the step is gradient ascent with step `1 / max_x Σ_k f_k(x)²`.
/// Steps are halved until the dual does not decrease.
pub fn solve_maxent(
    constraints: &MomentConstraints,
    tol: f64,
    max_iter: usize,
) -> Result<MaxEntSolution> {
    let n = constraints.alphabet_size;
    let m = constraints.len();
    if m == 0 {
        return Ok(MaxEntSolution {
            lambdas: vec![],
            q: FiniteDistribution::uniform(n)?,
            iterations: 0,
            residual: 0.0,
            dual_trace: vec![-(n as f64).ln()],
        });
    }
    if m > n - 1 {
        return Err(Error::InvalidParameter(format!(
            "{m} constraints on an alphabet of {n} symbols (at most {} allowed)",
            n - 1
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tol must be positive, got {tol}"
        )));
    }
    let report = check_feasibility(constraints);
    if !report.feasible {
        return Err(Error::Infeasible {
            violated: report.violated,
            joint: !report.jointly_feasible,
        });
    }

    let gd_step = 1.0
        / (0..n)
            .map(|x| {
                constraints
                    .constraints
                    .iter()
                    .map(|c| c.feature[x] * c.feature[x])
                    .sum::<f64>()
            })
            .fold(f64::MIN_POSITIVE, f64::max);

    let mut lambdas = vec![0.0; m];
    let mut dual = constraints.dual(&lambdas)?;
    let mut dual_trace = vec![dual];
    let mut iterations = 0;
    loop {
        let q = constraints.exponential_family(&lambdas)?;
        let moments = constraints.moments(&q)?;
        let grad = constraints.dual_gradient_at(&q)?;
        let residual = grad.iter().fold(0.0f64, |acc, g| acc.max(g.abs()));
        if residual <= tol {
            return Ok(MaxEntSolution {
                lambdas,
                q,
                iterations,
                residual,
                dual_trace,
            });
        }
        if iterations >= max_iter {
            return Err(Error::NotConverged {
                iterations,
                residual,
            });
        }
        iterations += 1;

        let direction = newton_direction(constraints, &q, &moments, &grad)
            .unwrap_or_else(|| grad.iter().map(|g| g * gd_step).collect());

        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let candidate: Vec<f64> = lambdas
                .iter()
                .zip(&direction)
                .map(|(l, d)| l + step * d)
                .collect();
            let value = constraints.dual(&candidate)?;
            if value >= dual {
                lambdas = candidate;
                dual = value;
                dual_trace.push(dual);
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // no representable ascent left
            return Err(Error::NotConverged {
                iterations,
                residual,
            });
        }
    }
}

fn newton_direction(
    constraints: &MomentConstraints,
    q: &FiniteDistribution,
    moments: &[f64],
    grad: &[f64],
) -> Option<Vec<f64>> {
    let m = moments.len();
    let cs = &constraints.constraints;
    let cov = DMatrix::from_fn(m, m, |j, k| {
        q.probs()
            .iter()
            .enumerate()
            .map(|(x, &qx)| qx * (cs[j].feature[x] - moments[j]) * (cs[k].feature[x] - moments[k]))
            .sum()
    });
    let eig = cov.clone().symmetric_eigen();
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(max > 0.0) || min / max < MIN_CONDITIONING {
        return None;
    }
    let chol = cov.cholesky()?;
    let d = chol.solve(&DVector::from_column_slice(grad));
    Some(d.iter().copied().collect())
}
