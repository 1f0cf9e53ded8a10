//! Data for the loss-versus-optimal-solution figure: a one-dimensional grid,
//! a loss on it, a discretized standard normal prior and the closed-form
//! minimizers for the three penalties at several temperatures.

use std::io::Write;

use serde::Serialize;

use crate::error::{check_dims, Error, Result};
use crate::free_energy::{minimize_closed_form, ComplexityPenalty, FreeEnergyProblem};
use crate::simplex::{FiniteDistribution, LossVector};

pub const MIN_POINTS: usize = 10;
pub const DEFAULT_TEMPERATURES: [f64; 4] = [10.0, 1.0, 0.1, 0.01];
pub const DEFAULT_LOSS: &str = "tilted-double-well";
pub const NAMED_LOSSES: [&str; 3] = ["tilted-double-well", "double-well", "quadratic"];
/// Named losses are rescaled to `[0, LOSS_RANGE]` on the grid.
pub const LOSS_RANGE: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Grid {
    pub x_min: f64,
    pub x_max: f64,
    pub n_points: usize,
}

impl Default for Grid {
    fn default() -> Self {
        Grid {
            x_min: -4.0,
            x_max: 4.0,
            n_points: 81,
        }
    }
}

impl Grid {
    pub fn new(x_min: f64, x_max: f64, n_points: usize) -> Result<Self> {
        if n_points < MIN_POINTS {
            return Err(Error::InvalidParameter(format!(
                "grid needs at least {MIN_POINTS} points, got {n_points}"
            )));
        }
        if !(x_min.is_finite() && x_max.is_finite() && x_min < x_max) {
            return Err(Error::InvalidParameter(format!(
                "grid requires finite x_min < x_max, got [{x_min}, {x_max}]"
            )));
        }
        Ok(Grid {
            x_min,
            x_max,
            n_points,
        })
    }

    pub fn points(&self) -> Vec<f64> {
        let h = (self.x_max - self.x_min) / (self.n_points - 1) as f64;
        (0..self.n_points)
            .map(|i| self.x_min + i as f64 * h)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum LossSpec {
    Named(String),
    Table(Vec<f64>),
}

impl Default for LossSpec {
    fn default() -> Self {
        LossSpec::Named(DEFAULT_LOSS.into())
    }
}

fn named_raw(name: &str, x: f64) -> Option<f64> {
    let a = (x - 1.0) * (x - 1.0);
    let well = 0.5 * a * (x + 1.5) * (x + 1.5);
    match name {
        // the right-hand minimum at x = 1 is strictly deeper
        "tilted-double-well" => Some((well + 0.5 * a).powf(0.8)),
        "double-well" => Some(well),
        "quadratic" => Some(x * x),
        _ => None,
    }
}

/// The loss evaluated on the grid.
pub fn loss_on_grid(grid: &Grid, spec: &LossSpec) -> Result<LossVector> {
    match spec {
        LossSpec::Table(values) => {
            check_dims(grid.n_points, values.len())?;
            LossVector::new(values.clone())
        }
        LossSpec::Named(name) => {
            let raw: Vec<f64> = grid
                .points()
                .iter()
                .map(|&x| named_raw(name, x))
                .collect::<Option<_>>()
                .ok_or_else(|| {
                    Error::InvalidParameter(format!(
                        "unknown loss '{name}'; expected one of {NAMED_LOSSES:?}"
                    ))
                })?;
            let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            LossVector::new(
                raw.iter()
                    .map(|v| LOSS_RANGE * (v - lo) / (hi - lo))
                    .collect(),
            )
        }
    }
}

/// `p(x) ∝ exp(−x²/2)` on the grid.
pub fn gaussian_prior(grid: &Grid) -> Result<FiniteDistribution> {
    let lw: Vec<f64> = grid.points().iter().map(|x| -0.5 * x * x).collect();
    FiniteDistribution::from_log_weights(&lw)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FigureColumn {
    pub penalty: &'static str,
    pub temperature: f64,
    pub q: FiniteDistribution,
}

impl FigureColumn {
    pub fn name(&self) -> String {
        format!("q_{}_T{}", self.penalty, self.temperature)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FigureData {
    pub x: Vec<f64>,
    pub loss: LossVector,
    pub prior: FiniteDistribution,
    pub columns: Vec<FigureColumn>,
}

pub fn figure_data(grid: &Grid, spec: &LossSpec, temperatures: &[f64]) -> Result<FigureData> {
    if temperatures.is_empty() {
        return Err(Error::EmptyInput("no temperatures"));
    }
    let loss = loss_on_grid(grid, spec)?;
    let prior = gaussian_prior(grid)?;
    let penalties = [
        ComplexityPenalty::NegEntropy,
        ComplexityPenalty::KlToPrior(prior.clone()),
        ComplexityPenalty::HalfSqL2ToPrior(prior.clone()),
    ];
    let mut columns = Vec::new();
    for &t in temperatures {
        for penalty in &penalties {
            let problem = FreeEnergyProblem::new(loss.clone(), t, penalty.clone())?;
            columns.push(FigureColumn {
                penalty: penalty.kind_name(),
                temperature: t,
                q: minimize_closed_form(&problem)?.q_opt,
            });
        }
    }
    Ok(FigureData {
        x: grid.points(),
        loss,
        prior,
        columns,
    })
}

impl FigureData {
    pub fn column(&self, penalty: &str, temperature: f64) -> Option<&FiniteDistribution> {
        self.columns
            .iter()
            .find(|c| c.penalty == penalty && c.temperature == temperature)
            .map(|c| &c.q)
    }

    /// Index of the smallest loss, if unique.
    pub fn unique_argmin(&self) -> Option<usize> {
        let v = self.loss.values();
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hits: Vec<usize> = (0..v.len()).filter(|&i| v[i] == lo).collect();
        (hits.len() == 1).then(|| hits[0])
    }

    /// Columns `x, L, prior, q_…` with 17 significant digits.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::InvalidParameter(format!("csv write failed: {e}"));
        let mut header = vec!["x".to_string(), "L".to_string(), "prior".to_string()];
        header.extend(self.columns.iter().map(FigureColumn::name));
        w.write_record(&header).map_err(io)?;
        for i in 0..self.x.len() {
            let mut rec = vec![
                format!("{:.16e}", self.x[i]),
                format!("{:.16e}", self.loss.values()[i]),
                format!("{:.16e}", self.prior.prob(i)),
            ];
            rec.extend(self.columns.iter().map(|c| format!("{:.16e}", c.q.prob(i))));
            w.write_record(&rec).map_err(io)?;
        }
        w.flush()
            .map_err(|e| Error::InvalidParameter(format!("csv write failed: {e}")))
    }
}

/// Mass of `q` within `radius` grid cells of `center`.
pub fn window_mass(q: &FiniteDistribution, center: usize, radius: usize) -> f64 {
    let lo = center.saturating_sub(radius);
    let hi = (center + radius).min(q.alphabet_size() - 1);
    q.probs()[lo..=hi].iter().sum()
}
