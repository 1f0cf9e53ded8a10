//! Expectation-Maximization for finite mixtures, viewed as alternating
//! minimization of the free energy over `q(x | y)` and the parameters.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dims, Error, Result};
use crate::simplex::{log_sum_exp, FiniteDistribution};

pub const VARIANCE_FLOOR: f64 = 1e-6;

/// Components whose total responsibility falls below this are degenerate.
pub const DEGENERATE_MASS: f64 = 1e-12;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, PartialEq)]
pub enum EmissionFamily {
    /// `K × V` table, row `k` is the emission distribution of component `k`.
    Categorical(Vec<FiniteDistribution>),
    Gaussian1D {
        means: Vec<f64>,
        variances: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Observations {
    /// Zero-based symbols.
    Symbols(Vec<usize>),
    Reals(Vec<f64>),
}

impl Observations {
    pub fn len(&self) -> usize {
        match self {
            Observations::Symbols(s) => s.len(),
            Observations::Reals(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelRepr", into = "ModelRepr")]
pub struct MixtureModel {
    weights: FiniteDistribution,
    family: EmissionFamily,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum FamilyTag {
    Categorical,
    Gaussian1d,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum EmissionsRepr {
    Table(Vec<Vec<f64>>),
    Gaussian { means: Vec<f64>, vars: Vec<f64> },
}

#[derive(Serialize, Deserialize)]
struct ModelRepr {
    weights: Vec<f64>,
    family: FamilyTag,
    emissions: EmissionsRepr,
}

impl TryFrom<ModelRepr> for MixtureModel {
    type Error = Error;

    fn try_from(r: ModelRepr) -> Result<Self> {
        let weights = FiniteDistribution::new(r.weights)?;
        let family = match (r.family, r.emissions) {
            (FamilyTag::Categorical, EmissionsRepr::Table(rows)) => EmissionFamily::Categorical(
                rows.into_iter()
                    .map(FiniteDistribution::new)
                    .collect::<Result<_>>()?,
            ),
            (FamilyTag::Gaussian1d, EmissionsRepr::Gaussian { means, vars }) => {
                EmissionFamily::Gaussian1D {
                    means,
                    variances: vars,
                }
            }
            _ => {
                return Err(Error::InvalidParameter(
                    "emissions do not match the declared family".into(),
                ))
            }
        };
        MixtureModel::new(weights, family)
    }
}

impl From<MixtureModel> for ModelRepr {
    fn from(m: MixtureModel) -> Self {
        match m.family {
            EmissionFamily::Categorical(rows) => ModelRepr {
                weights: m.weights.into_probs(),
                family: FamilyTag::Categorical,
                emissions: EmissionsRepr::Table(rows.into_iter().map(|r| r.into_probs()).collect()),
            },
            EmissionFamily::Gaussian1D { means, variances } => ModelRepr {
                weights: m.weights.into_probs(),
                family: FamilyTag::Gaussian1d,
                emissions: EmissionsRepr::Gaussian {
                    means,
                    vars: variances,
                },
            },
        }
    }
}

impl MixtureModel {
    pub fn new(weights: FiniteDistribution, family: EmissionFamily) -> Result<Self> {
        let k = weights.alphabet_size();
        match &family {
            EmissionFamily::Categorical(rows) => {
                check_dims(k, rows.len())?;
                let v = rows[0].alphabet_size();
                for row in rows {
                    check_dims(v, row.alphabet_size())?;
                }
            }
            EmissionFamily::Gaussian1D { means, variances } => {
                check_dims(k, means.len())?;
                check_dims(k, variances.len())?;
                if means.iter().any(|m| !m.is_finite()) {
                    return Err(Error::NonFinite("component mean".into()));
                }
                if let Some(v) = variances
                    .iter()
                    .find(|v| !(v.is_finite() && **v >= VARIANCE_FLOOR))
                {
                    return Err(Error::InvalidParameter(format!(
                        "variance {v} below the floor {VARIANCE_FLOOR}"
                    )));
                }
            }
        }
        Ok(MixtureModel { weights, family })
    }

    pub fn weights(&self) -> &FiniteDistribution {
        &self.weights
    }

    pub fn family(&self) -> &EmissionFamily {
        &self.family
    }

    pub fn components(&self) -> usize {
        self.weights.alphabet_size()
    }

    fn check_data(&self, data: &Observations) -> Result<()> {
        if data.is_empty() {
            return Err(Error::EmptyInput("no observations"));
        }
        match (&self.family, data) {
            (EmissionFamily::Categorical(rows), Observations::Symbols(s)) => {
                let size = rows[0].alphabet_size();
                match s.iter().find(|&&y| y >= size) {
                    Some(&symbol) => Err(Error::SymbolOutOfRange { symbol, size }),
                    None => Ok(()),
                }
            }
            (EmissionFamily::Gaussian1D { .. }, Observations::Reals(r)) => {
                match r.iter().position(|y| !y.is_finite()) {
                    Some(i) => Err(Error::NonFinite(format!("observation {i}"))),
                    None => Ok(()),
                }
            }
            _ => Err(Error::InvalidParameter(
                "observation type does not match the emission family".into(),
            )),
        }
    }

    /// `log p_θ(x = k, y_i)` for every component `k`.
    fn joint_log_weights(&self, data: &Observations, i: usize) -> Vec<f64> {
        let lw = self.weights.log_probs();
        match (&self.family, data) {
            (EmissionFamily::Categorical(rows), Observations::Symbols(s)) => rows
                .iter()
                .zip(&lw)
                .map(|(row, w)| w + row.prob(s[i]).ln())
                .collect(),
            (EmissionFamily::Gaussian1D { means, variances }, Observations::Reals(r)) => means
                .iter()
                .zip(variances)
                .zip(&lw)
                .map(|((m, v), w)| w + gaussian_log_density(r[i], *m, *v))
                .collect(),
            _ => unreachable!("checked by check_data"),
        }
    }

    /// The unnormalized per-datum posterior `p̃(x) = p_θ(x, y_i)` in log scale.
    pub fn datum_log_joint(&self, data: &Observations, i: usize) -> Result<Vec<f64>> {
        self.check_data(data)?;
        if i >= data.len() {
            return Err(Error::SymbolOutOfRange {
                symbol: i,
                size: data.len(),
            });
        }
        Ok(self.joint_log_weights(data, i))
    }

    /// Relabel components: new component `j` is old component `perm[j]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let k = self.components();
        check_dims(k, perm.len())?;
        let mut seen = vec![false; k];
        for &p in perm {
            if p >= k || seen[p] {
                return Err(Error::InvalidParameter("not a permutation".into()));
            }
            seen[p] = true;
        }
        let weights =
            FiniteDistribution::new(perm.iter().map(|&p| self.weights.prob(p)).collect())?;
        let family = match &self.family {
            EmissionFamily::Categorical(rows) => {
                EmissionFamily::Categorical(perm.iter().map(|&p| rows[p].clone()).collect())
            }
            EmissionFamily::Gaussian1D { means, variances } => EmissionFamily::Gaussian1D {
                means: perm.iter().map(|&p| means[p]).collect(),
                variances: perm.iter().map(|&p| variances[p]).collect(),
            },
        };
        MixtureModel::new(weights, family)
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Observations {
        let picker = self.weights.sampler();
        match &self.family {
            EmissionFamily::Categorical(rows) => {
                let samplers: Vec<_> = rows.iter().map(|r| r.sampler()).collect();
                Observations::Symbols(
                    (0..n)
                        .map(|_| samplers[picker.sample(rng)].sample(rng))
                        .collect(),
                )
            }
            EmissionFamily::Gaussian1D { means, variances } => {
                let normals: Vec<_> = means
                    .iter()
                    .zip(variances)
                    .map(|(m, v)| Normal::new(*m, v.sqrt()).expect("valid variance"))
                    .collect();
                Observations::Reals(
                    (0..n)
                        .map(|_| normals[picker.sample(rng)].sample(rng))
                        .collect(),
                )
            }
        }
    }
}

pub fn gaussian_log_density(y: f64, mean: f64, variance: f64) -> f64 {
    let d = y - mean;
    -0.5 * (LN_2PI + variance.ln() + d * d / variance)
}

/// `Σ_i log Σ_k w_k p_k(y_i)`.
pub fn marginal_log_likelihood(model: &MixtureModel, data: &Observations) -> Result<f64> {
    model.check_data(data)?;
    let mut total = 0.0;
    for i in 0..data.len() {
        let v = log_sum_exp(&model.joint_log_weights(data, i))?;
        if v == f64::NEG_INFINITY {
            return Err(Error::ZeroLikelihood { index: i });
        }
        total += v;
    }
    Ok(total)
}

/// Row `i` is `q(x | y_i)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Responsibilities {
    rows: Vec<FiniteDistribution>,
}

impl Responsibilities {
    pub fn new(rows: Vec<FiniteDistribution>) -> Result<Self> {
        let first = rows
            .first()
            .ok_or(Error::EmptyInput("no responsibility rows"))?;
        let k = first.alphabet_size();
        for r in &rows {
            check_dims(k, r.alphabet_size())?;
        }
        Ok(Responsibilities { rows })
    }

    pub fn rows(&self) -> &[FiniteDistribution] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn components(&self) -> usize {
        self.rows[0].alphabet_size()
    }

    /// `Σ_i resp_ik` for each `k`.
    pub fn column_mass(&self) -> Vec<f64> {
        let mut mass = vec![0.0; self.components()];
        for r in &self.rows {
            for (m, p) in mass.iter_mut().zip(r.probs()) {
                *m += p;
            }
        }
        mass
    }
}

/// Per-datum exact posterior over components.
pub fn e_step(model: &MixtureModel, data: &Observations) -> Result<Responsibilities> {
    model.check_data(data)?;
    let rows = (0..data.len())
        .map(|i| {
            FiniteDistribution::from_log_weights(&model.joint_log_weights(data, i))
                .map_err(|_| Error::ZeroLikelihood { index: i })
        })
        .collect::<Result<_>>()?;
    Responsibilities::new(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DegeneratePolicy {
    /// Fail with `DegenerateComponent`.
    Reject,
    /// Keep the component's previous emission parameters and give it
    /// weight `max(mass, 1e-12) / normalizer`.
    #[default]
    KeepPrevious,
}

/// Weighted maximum-likelihood update for fixed responsibilities.
pub fn m_step(
    model: &MixtureModel,
    data: &Observations,
    resp: &Responsibilities,
    policy: DegeneratePolicy,
) -> Result<MixtureModel> {
    model.check_data(data)?;
    check_dims(data.len(), resp.len())?;
    check_dims(model.components(), resp.components())?;
    let mass = resp.column_mass();
    let degenerate: Vec<bool> = mass.iter().map(|m| *m < DEGENERATE_MASS).collect();
    if policy == DegeneratePolicy::Reject {
        if let Some(component) = degenerate.iter().position(|d| *d) {
            return Err(Error::DegenerateComponent { component });
        }
    }
    let weights =
        FiniteDistribution::renormalized(mass.iter().map(|m| m.max(DEGENERATE_MASS)).collect())?;
    let family = match (&model.family, data) {
        (EmissionFamily::Categorical(prev), Observations::Symbols(s)) => {
            let v = prev[0].alphabet_size();
            let mut counts = vec![vec![0.0; v]; prev.len()];
            for (r, &y) in resp.rows.iter().zip(s) {
                for (c, p) in counts.iter_mut().zip(r.probs()) {
                    c[y] += p;
                }
            }
            let rows = counts
                .into_iter()
                .zip(prev)
                .zip(&degenerate)
                .map(|((c, old), &d)| {
                    if d {
                        Ok(old.clone())
                    } else {
                        FiniteDistribution::renormalized(c)
                    }
                })
                .collect::<Result<_>>()?;
            EmissionFamily::Categorical(rows)
        }
        (EmissionFamily::Gaussian1D { means, variances }, Observations::Reals(y)) => {
            let mut new_means = means.clone();
            let mut new_vars = variances.clone();
            for k in 0..means.len() {
                if degenerate[k] {
                    continue;
                }
                let mu = resp
                    .rows
                    .iter()
                    .zip(y)
                    .map(|(r, v)| r.prob(k) * v)
                    .sum::<f64>()
                    / mass[k];
                let var = resp
                    .rows
                    .iter()
                    .zip(y)
                    .map(|(r, v)| r.prob(k) * (v - mu) * (v - mu))
                    .sum::<f64>()
                    / mass[k];
                new_means[k] = mu;
                new_vars[k] = var.max(VARIANCE_FLOOR);
            }
            EmissionFamily::Gaussian1D {
                means: new_means,
                variances: new_vars,
            }
        }
        _ => unreachable!("checked by check_data"),
    };
    MixtureModel::new(weights, family)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmFit {
    pub model: MixtureModel,
    /// Marginal log-likelihood after each M-step.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Alternate E and M steps until the log-likelihood changes by less than
/// `tol` or `max_iter` iterations have run.
pub fn em_fit(
    init: &MixtureModel,
    data: &Observations,
    tol: f64,
    max_iter: usize,
) -> Result<EmFit> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "tol must be positive, got {tol}"
        )));
    }
    let mut model = init.clone();
    let mut prev = marginal_log_likelihood(&model, data)?;
    let mut trace = Vec::new();
    let mut converged = false;
    while trace.len() < max_iter {
        let resp = e_step(&model, data)?;
        model = m_step(&model, data, &resp, DegeneratePolicy::KeepPrevious)?;
        let ll = marginal_log_likelihood(&model, data)?;
        trace.push(ll);
        if (ll - prev).abs() < tol {
            converged = true;
            break;
        }
        prev = ll;
    }
    Ok(EmFit {
        model,
        iterations: trace.len(),
        trace,
        converged,
    })
}

/// Uniform weights; emission rows are the empirical symbol frequencies
/// (with add-one smoothing) multiplied by independent factors in `[0.5, 1.5)`.
pub fn init_categorical(
    data: &[usize],
    components: usize,
    alphabet_size: usize,
    seed: u64,
) -> Result<MixtureModel> {
    if data.is_empty() {
        return Err(Error::EmptyInput("no observations"));
    }
    if components == 0 || alphabet_size == 0 {
        return Err(Error::InvalidParameter(
            "components and alphabet size must be positive".into(),
        ));
    }
    if let Some(&symbol) = data.iter().find(|&&y| y >= alphabet_size) {
        return Err(Error::SymbolOutOfRange {
            symbol,
            size: alphabet_size,
        });
    }
    let mut freq = vec![1.0; alphabet_size];
    for &y in data {
        freq[y] += 1.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..components)
        .map(|_| {
            FiniteDistribution::renormalized(
                freq.iter()
                    .map(|f| f * rng.random_range(0.5..1.5))
                    .collect(),
            )
        })
        .collect::<Result<_>>()?;
    MixtureModel::new(
        FiniteDistribution::uniform(components)?,
        EmissionFamily::Categorical(rows),
    )
}

/// Uniform weights, means at the `(k + 1/2)/K` empirical quantiles and the
/// pooled sample variance for every component.
pub fn init_gaussian(data: &[f64], components: usize) -> Result<MixtureModel> {
    if data.is_empty() {
        return Err(Error::EmptyInput("no observations"));
    }
    if components == 0 {
        return Err(Error::InvalidParameter(
            "components must be positive".into(),
        ));
    }
    if data.iter().any(|y| !y.is_finite()) {
        return Err(Error::NonFinite("observation".into()));
    }
    let mut sorted = data.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let means = (0..components)
        .map(|k| {
            let pos = ((k as f64 + 0.5) / components as f64 * n as f64).floor() as usize;
            sorted[pos.min(n - 1)]
        })
        .collect();
    let mean = data.iter().sum::<f64>() / n as f64;
    let var = data.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n as f64;
    MixtureModel::new(
        FiniteDistribution::uniform(components)?,
        EmissionFamily::Gaussian1D {
            means,
            variances: vec![var.max(VARIANCE_FLOOR); components],
        },
    )
}
