use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use femin::figure::{self, Grid, LossSpec};
use femin::free_energy::{
    brute_force_minimize, fenchel_young_gap, minimize_closed_form, FreeEnergyProblem,
};
use femin::gen_bayes::{elbo, generalized_posterior, log_partition, posterior, UnnormalizedModel};
use femin::kl_estimate::{fit_dv, ClassSpec, SamplePair};
use femin::latent_em::{em_fit, EmissionFamily, MixtureModel, Observations};
use femin::maxent::{self, check_feasibility, solve_maxent, ConstraintFile, MomentConstraints};
use femin::mirror_descent::{run_descent, Method, ObjectiveOracle, OracleParams, StepSchedule};
use femin::pac_bayes::{coverage_experiment, LearningProblem};
use femin::{Error, FiniteDistribution, LossVector};

pub const SCHEMA_VERSION: u32 = 1;

pub const EXIT_MALFORMED: u8 = 2;
pub const EXIT_DOMAIN: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "femin", version, about = "Free-energy minimization toolkit")]
pub struct Cli {
    /// Write the result here instead of standard output.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Seed for commands that draw random numbers.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Convergence tolerance override.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Suppress informational messages on standard error.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Minimize the free energy of a problem file.
    Solve(SolveArgs),
    /// Maximum-entropy distribution under moment constraints.
    Maxent(MaxentArgs),
    /// Exact or generalized posterior.
    Posterior(PosteriorArgs),
    /// ELBO of a distribution under an unnormalized model.
    Elbo(ElboArgs),
    /// Fit a mixture model by EM.
    Em(EmArgs),
    /// PAC-Bayes coverage experiment.
    Pacbayes(PacBayesArgs),
    /// Donsker-Varadhan KL estimate from two sample files.
    Klest(KlestArgs),
    /// Gradient or exponentiated-gradient descent on the simplex.
    Mirror(MirrorArgs),
    /// Emit the loss and optimal solutions on a grid as CSV.
    Figure1(FigureArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum SolveMethod {
    ClosedForm,
    BruteForce,
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[arg(long)]
    problem: PathBuf,
    /// Also report the Fenchel-Young gap of this distribution.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    q: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value = "closed-form")]
    method: SolveMethod,
    #[arg(long, default_value_t = 0.01)]
    grid_step: f64,
}

#[derive(Debug, Args)]
struct MaxentArgs {
    #[arg(long)]
    constraints: PathBuf,
    #[arg(long, default_value_t = maxent::DEFAULT_MAX_ITER)]
    max_iter: usize,
}

#[derive(Debug, Args)]
struct PosteriorArgs {
    /// Unnormalized model file `{"log_tilde_p": [..]}`.
    #[arg(long, conflicts_with_all = ["prior", "losses"])]
    model: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', requires = "losses")]
    prior: Option<Vec<f64>>,
    #[arg(
        long,
        value_delimiter = ',',
        allow_hyphen_values = true,
        requires = "prior"
    )]
    losses: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
}

#[derive(Debug, Args)]
struct ElboArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    q: Vec<f64>,
}

#[derive(Debug, Args)]
struct EmArgs {
    #[arg(long)]
    model: PathBuf,
    /// CSV with one observation per line.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
}

#[derive(Debug, Args)]
struct PacBayesArgs {
    #[arg(long)]
    problem: PathBuf,
    #[arg(long)]
    beta: f64,
    #[arg(long)]
    m: usize,
    #[arg(long)]
    delta: f64,
    #[arg(long, default_value_t = 2000)]
    trials: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum ClassKind {
    Tabular,
    Linear,
}

#[derive(Debug, Args)]
struct KlestArgs {
    #[arg(long, value_enum, default_value = "tabular")]
    class: ClassKind,
    /// JSON feature table, one row per symbol (linear class only).
    #[arg(long, required_if_eq("class", "linear"))]
    features: Option<PathBuf>,
    #[arg(long)]
    samples_p: PathBuf,
    #[arg(long)]
    samples_q: PathBuf,
    /// Defaults to one past the largest symbol observed.
    #[arg(long)]
    alphabet_size: Option<usize>,
    #[arg(long, default_value_t = 500)]
    steps: usize,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum MethodArg {
    Euclidean,
    Neg,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum ScheduleArg {
    Constant,
    InvSqrt,
    Backtracking,
}

#[derive(Debug, Args)]
struct MirrorArgs {
    #[arg(long)]
    oracle: String,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    l: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    target: Option<Vec<f64>>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long, value_enum, default_value = "neg")]
    method: MethodArg,
    #[arg(long, value_enum, default_value = "constant")]
    schedule: ScheduleArg,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, default_value_t = 200)]
    iters: usize,
    /// Starting point; uniform by default.
    #[arg(long, value_delimiter = ',')]
    x0: Option<Vec<f64>>,
    /// Also write the trace as CSV here.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FigureArgs {
    #[arg(long, default_value_t = -4.0, allow_hyphen_values = true)]
    x_min: f64,
    #[arg(long, default_value_t = 4.0, allow_hyphen_values = true)]
    x_max: f64,
    #[arg(long, default_value_t = 81)]
    n_points: usize,
    /// Built-in loss name.
    #[arg(long, default_value = figure::DEFAULT_LOSS, conflicts_with = "loss_table")]
    loss: String,
    /// CSV with one loss value per grid point.
    #[arg(long)]
    loss_table: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = figure::DEFAULT_TEMPERATURES)]
    temperatures: Vec<f64>,
}

#[derive(Debug)]
pub enum CliError {
    Malformed(String),
    Domain(Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Malformed(_) => EXIT_MALFORMED,
            CliError::Domain(_) => EXIT_DOMAIN,
        }
    }

    pub fn to_json(&self) -> Value {
        let (kind, message) = match self {
            CliError::Malformed(m) => ("malformed_input", m.clone()),
            CliError::Domain(e) => (e.kind(), e.to_string()),
        };
        json!({
            "schema_version": SCHEMA_VERSION,
            "error": { "kind": kind, "message": message },
            "exit_code": self.exit_code(),
        })
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Domain(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn malformed(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Malformed(format!("{}: {e}", path.display()))
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| malformed(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| malformed(path, e))
}

/// Single-column CSV without header.
fn read_column<T: std::str::FromStr>(path: &Path) -> CliResult<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    let text = read_text(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| malformed(path, e))?;
        if rec.len() != 1 {
            return Err(malformed(
                path,
                format!(
                    "record {}: expected one value, found {}",
                    line + 1,
                    rec.len()
                ),
            ));
        }
        let v = rec[0]
            .parse::<T>()
            .map_err(|e| malformed(path, format!("record {}: '{}': {e}", line + 1, &rec[0])))?;
        out.push(v);
    }
    Ok(out)
}

fn input<T>(r: femin::Result<T>, what: &str) -> CliResult<T> {
    r.map_err(|e| CliError::Malformed(format!("{what}: {e}")))
}

fn envelope(command: &str, config: Value, result: Value) -> Value {
    json!({
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config": config,
        "result": result,
    })
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("result types serialize")
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

enum Output {
    Json(Value),
    Text(String),
}

pub fn run(cli: Cli) -> CliResult<()> {
    let out = match &cli.command {
        Command::Solve(a) => solve(a)?,
        Command::Maxent(a) => maxent_cmd(a, cli.tol)?,
        Command::Posterior(a) => posterior_cmd(a)?,
        Command::Elbo(a) => elbo_cmd(a)?,
        Command::Em(a) => em_cmd(a, cli.tol)?,
        Command::Pacbayes(a) => pacbayes(a, cli.seed)?,
        Command::Klest(a) => klest(a, cli.seed)?,
        Command::Mirror(a) => mirror(a, cli.tol)?,
        Command::Figure1(a) => figure1(a)?,
    };
    let text = match out {
        Output::Json(v) => {
            let mut s = serde_json::to_string_pretty(&v).expect("json values serialize");
            s.push('\n');
            s
        }
        Output::Text(s) => s,
    };
    match &cli.output {
        Some(path) => {
            fs::write(path, text).map_err(|e| malformed(path, e))?;
            if !cli.quiet {
                eprintln!("wrote {}", path.display());
            }
        }
        None => {
            std::io::stdout()
                .write_all(text.as_bytes())
                .map_err(|e| CliError::Malformed(format!("stdout: {e}")))?;
        }
    }
    Ok(())
}

fn solve(a: &SolveArgs) -> CliResult<Output> {
    let problem: FreeEnergyProblem = read_json(&a.problem)?;
    let q = match &a.q {
        Some(v) => Some(input(FiniteDistribution::new(v.clone()), "--q")?),
        None => None,
    };
    let solution = match a.method {
        SolveMethod::ClosedForm => minimize_closed_form(&problem)?,
        SolveMethod::BruteForce => brute_force_minimize(&problem, a.grid_step)?,
    };
    let mut result = to_value(&solution);
    result["penalty"] = json!(problem.penalty().kind_name());
    if let Some(q) = &q {
        result["fenchel_young_gap"] = json!(fenchel_young_gap(&problem, q)?);
    }
    let config = json!({
        "problem": path_str(&a.problem),
        "method": a.method,
        "grid_step": matches!(a.method, SolveMethod::BruteForce).then_some(a.grid_step),
        "q": a.q,
        "resolved_problem": to_value(&problem),
    });
    Ok(Output::Json(envelope("solve", config, result)))
}

fn maxent_cmd(a: &MaxentArgs, tol: Option<f64>) -> CliResult<Output> {
    let file: ConstraintFile = read_json(&a.constraints)?;
    let constraints = input(MomentConstraints::from_file(&file), "constraints")?;
    let tol = tol.unwrap_or(maxent::DEFAULT_TOL);
    let feasibility = check_feasibility(&constraints);
    let solution = solve_maxent(&constraints, tol, a.max_iter)?;
    let config = json!({
        "constraints": path_str(&a.constraints),
        "tol": tol,
        "max_iter": a.max_iter,
    });
    let result = json!({ "feasibility": to_value(&feasibility), "solution": to_value(&solution) });
    Ok(Output::Json(envelope("maxent", config, result)))
}

fn posterior_cmd(a: &PosteriorArgs) -> CliResult<Output> {
    if let Some(path) = &a.model {
        let model: UnnormalizedModel = read_json(path)?;
        let config = json!({ "model": path_str(path) });
        let result = json!({
            "posterior": posterior(&model).probs(),
            "log_partition": log_partition(&model),
        });
        return Ok(Output::Json(envelope("posterior", config, result)));
    }
    let (Some(prior), Some(losses)) = (&a.prior, &a.losses) else {
        return Err(CliError::Malformed(
            "either --model or --prior with --losses is required".into(),
        ));
    };
    let p = input(FiniteDistribution::new(prior.clone()), "--prior")?;
    let l = input(LossVector::new(losses.clone()), "--losses")?;
    if !(a.temperature > 0.0 && a.temperature.is_finite()) {
        return Err(CliError::Malformed(format!(
            "--temperature must be positive, got {}",
            a.temperature
        )));
    }
    let q = generalized_posterior(&p, &l, a.temperature)?;
    let config = json!({ "prior": prior, "losses": losses, "temperature": a.temperature });
    Ok(Output::Json(envelope(
        "posterior",
        config,
        json!({ "posterior": q.probs() }),
    )))
}

fn elbo_cmd(a: &ElboArgs) -> CliResult<Output> {
    let model: UnnormalizedModel = read_json(&a.model)?;
    let q = input(FiniteDistribution::new(a.q.clone()), "--q")?;
    let value = elbo(&model, &q)?;
    let log_z = log_partition(&model);
    let config = json!({ "model": path_str(&a.model), "q": a.q });
    let result = json!({ "elbo": value, "log_partition": log_z, "gap": log_z - value });
    Ok(Output::Json(envelope("elbo", config, result)))
}

fn em_cmd(a: &EmArgs, tol: Option<f64>) -> CliResult<Output> {
    let model: MixtureModel = read_json(&a.model)?;
    let data = match model.family() {
        EmissionFamily::Categorical(_) => Observations::Symbols(read_column(&a.data)?),
        EmissionFamily::Gaussian1D { .. } => Observations::Reals(read_column(&a.data)?),
    };
    let tol = tol.unwrap_or(1e-8);
    let fit = em_fit(&model, &data, tol, a.max_iter)?;
    let config = json!({
        "model": path_str(&a.model),
        "data": path_str(&a.data),
        "n_observations": data.len(),
        "tol": tol,
        "max_iter": a.max_iter,
    });
    Ok(Output::Json(envelope("em", config, to_value(&fit))))
}

fn pacbayes(a: &PacBayesArgs, seed: Option<u64>) -> CliResult<Output> {
    let problem: LearningProblem = read_json(&a.problem)?;
    let seed = seed.unwrap_or(0);
    let report = coverage_experiment(&problem, a.beta, a.m, a.delta, a.trials, seed)?;
    let mut result = to_value(&report);
    result["allowed_rate"] = json!(report.allowed_rate());
    let config = json!({
        "problem": path_str(&a.problem),
        "beta": a.beta,
        "m": a.m,
        "delta": a.delta,
        "trials": a.trials,
        "seed": seed,
    });
    Ok(Output::Json(envelope("pacbayes", config, result)))
}

fn klest(a: &KlestArgs, seed: Option<u64>) -> CliResult<Output> {
    let sp: Vec<usize> = read_column(&a.samples_p)?;
    let sq: Vec<usize> = read_column(&a.samples_q)?;
    let samples = input(
        match a.alphabet_size {
            Some(n) => SamplePair::new(sp, sq, n),
            None => SamplePair::inferred(sp, sq),
        },
        "samples",
    )?;
    let spec = match (a.class, &a.features) {
        (ClassKind::Tabular, _) => ClassSpec::Tabular,
        (ClassKind::Linear, Some(path)) => ClassSpec::LinearFeatures(read_json(path)?),
        (ClassKind::Linear, None) => {
            return Err(CliError::Malformed(
                "--features is required for the linear class".into(),
            ))
        }
    };
    let seed = seed.unwrap_or(0);
    let fit = fit_dv(&spec, &samples, a.steps, a.lr, seed)?;
    let config = json!({
        "class": a.class,
        "features": a.features.as_deref().map(path_str),
        "samples_p": path_str(&a.samples_p),
        "samples_q": path_str(&a.samples_q),
        "alphabet_size": samples.alphabet_size(),
        "steps": a.steps,
        "lr": a.lr,
        "seed": seed,
    });
    Ok(Output::Json(envelope("klest", config, to_value(&fit))))
}

fn mirror(a: &MirrorArgs, tol: Option<f64>) -> CliResult<Output> {
    let params = OracleParams {
        l: a.l.clone(),
        target: a.target.clone(),
        temperature: a.temperature,
    };
    let oracle = input(ObjectiveOracle::builtin(&a.oracle, &params), "--oracle")?;
    let x0 = match &a.x0 {
        Some(v) => input(FiniteDistribution::new(v.clone()), "--x0")?,
        None => FiniteDistribution::uniform(oracle.dimension())?,
    };
    let method = match a.method {
        MethodArg::Euclidean => Method::Euclidean,
        MethodArg::Neg => Method::Neg,
    };
    let schedule = match a.schedule {
        ScheduleArg::Constant => StepSchedule::Constant { alpha: a.alpha },
        ScheduleArg::InvSqrt => StepSchedule::InvSqrt { alpha: a.alpha },
        ScheduleArg::Backtracking => StepSchedule::Backtracking { alpha: a.alpha },
    };
    let tol = tol.unwrap_or(1e-12);
    let trace = run_descent(&oracle, &x0, method, schedule, a.iters, tol)?;
    if let Some(path) = &a.csv {
        let mut buf = Vec::new();
        trace.write_csv(&mut buf)?;
        fs::write(path, buf).map_err(|e| malformed(path, e))?;
    }
    let config = json!({
        "oracle": a.oracle,
        "l": a.l,
        "target": a.target,
        "temperature": a.temperature,
        "method": a.method,
        "schedule": a.schedule,
        "alpha": a.alpha,
        "iters": a.iters,
        "tol": tol,
        "x0": x0.probs(),
        "csv": a.csv.as_deref().map(path_str),
    });
    let result = json!({
        "final": trace.last().probs(),
        "final_value": trace.values.last(),
        "iterations": trace.len() - 1,
        "converged": trace.converged,
        "trace": to_value(&trace),
    });
    Ok(Output::Json(envelope("mirror", config, result)))
}

fn figure1(a: &FigureArgs) -> CliResult<Output> {
    let grid = input(Grid::new(a.x_min, a.x_max, a.n_points), "grid")?;
    let spec = match &a.loss_table {
        Some(path) => LossSpec::Table(read_column(path)?),
        None => LossSpec::Named(a.loss.clone()),
    };
    input(figure::loss_on_grid(&grid, &spec), "loss")?;
    if a.temperatures.is_empty() {
        return Err(CliError::Malformed("--temperatures is empty".into()));
    }
    let data = figure::figure_data(&grid, &spec, &a.temperatures)?;
    let config = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "figure1",
        "config": {
            "grid": grid,
            "loss": a.loss_table.as_deref().map_or(a.loss.clone(), path_str),
            "temperatures": a.temperatures,
            "prior": "normal(0, 1) on the grid",
        }
    });
    let mut buf = format!(
        "# {}\n",
        serde_json::to_string(&config).expect("json values serialize")
    )
    .into_bytes();
    data.write_csv(&mut buf)?;
    Ok(Output::Text(String::from_utf8(buf).expect("csv is utf-8")))
}
