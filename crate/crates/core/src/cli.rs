//! Command-line interface.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::bspline::BSplineBasis;
use crate::design::{DesignMatrices, FunctionalDataset};
use crate::error::{Result, SflrError};
use crate::io::{
    fmt_opt, interpolate, read_column, read_curve, read_dataset, read_model, write_dataset_file, write_json,
    write_table_file,
};
use crate::metrics::{classification_metrics, complement, ise, normalize_intervals, pmse, MetricsReport};
use crate::model::{classify, SflrModel};
use crate::simulate::{replicate_experiment, simulate, write_replicate_table, ExperimentConfig, Scenario, ScenarioSpec};
use crate::solver::{fit, SolverConfig};
use crate::tuning::{tune, write_score_table, Criterion, CvLoss, TuningGrid};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;

/// Comma-separated list of floats.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatList(pub Vec<f64>);

impl FromStr for FloatList {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let v: std::result::Result<Vec<f64>, _> = s.split(',').map(|x| x.trim().parse::<f64>()).collect();
        match v {
            Ok(v) if !v.is_empty() => Ok(FloatList(v)),
            _ => Err(format!("'{s}' is not a comma-separated list of numbers")),
        }
    }
}

/// `auto` or an explicit subinterval count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Intervals {
    Auto,
    Fixed(usize),
}

impl FromStr for Intervals {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "auto" {
            return Ok(Intervals::Auto);
        }
        match s.parse::<usize>() {
            Ok(m) if m > 0 => Ok(Intervals::Fixed(m)),
            _ => Err(format!("expected 'auto' or a positive integer, got '{s}'")),
        }
    }
}

impl Intervals {
    fn resolve(self, n_points: usize) -> usize {
        match self {
            Intervals::Auto => BSplineBasis::default_interval_count(n_points),
            Intervals::Fixed(m) => m,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "sflr", version, about = "Sparse functional logistic regression")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model at fixed (λ, γ).
    Fit(FitArgs),
    /// Predict class probabilities for new curves.
    Predict(PredictArgs),
    /// Select (λ, γ) over a grid.
    Tune(TuneArgs),
    /// Generate a synthetic train/test pair.
    Simulate(SimulateArgs),
    /// Score a model on labelled test data.
    Evaluate(EvaluateArgs),
    /// Run a replicated simulation experiment.
    Replicate(ReplicateArgs),
}

#[derive(Debug, Args)]
pub struct BasisArgs {
    #[arg(long, default_value_t = 3)]
    pub degree: usize,
    /// Roughness derivative order.
    #[arg(long, default_value_t = 2)]
    pub m: usize,
    #[arg(long, default_value = "auto")]
    pub intervals: Intervals,
    #[arg(long, default_value_t = 100)]
    pub max_iterations: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tolerance: f64,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub lambda: f64,
    #[arg(long)]
    pub gamma: f64,
    #[command(flatten)]
    pub basis: BasisArgs,
    #[arg(long, default_value = "model.json")]
    pub out: PathBuf,
    /// β̂ curve CSV; defaults to `<out stem>_curve.csv`.
    #[arg(long)]
    pub curve: Option<PathBuf>,
    #[arg(long, default_value_t = 1001)]
    pub curve_points: usize,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "predictions.csv")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub lambda_grid: FloatList,
    #[arg(long)]
    pub gamma_grid: FloatList,
    #[arg(long, default_value = "bic")]
    pub criterion: Criterion,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// Held-out loss for cross-validation: deviance or mcr.
    #[arg(long, default_value = "deviance")]
    pub cv_loss: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub basis: BasisArgs,
    #[arg(long, default_value = "scores.csv")]
    pub out: PathBuf,
    /// JSON file receiving the selected pair.
    #[arg(long)]
    pub best: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub scenario: Scenario,
    #[arg(long)]
    pub n_train: usize,
    #[arg(long)]
    pub n_test: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub snr: Option<f64>,
    #[arg(long, default_value_t = 101)]
    pub grid_size: usize,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 2001)]
    pub beta_points: usize,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    /// CSV with columns `t, beta`.
    #[arg(long)]
    pub true_beta: PathBuf,
    /// True null region as `a:b,c:d`; defaults to the zero set of the true curve.
    #[arg(long)]
    pub null_regions: Option<String>,
    /// CSV with a `p_true` column, enabling PMSE.
    #[arg(long)]
    pub true_probs: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    #[arg(long, default_value_t = 2001)]
    pub ise_points: usize,
    #[arg(long, default_value = "metrics.json")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReplicateArgs {
    #[arg(long)]
    pub scenario: Scenario,
    #[arg(long)]
    pub n_train: usize,
    #[arg(long)]
    pub n_test: usize,
    #[arg(long, default_value_t = 25)]
    pub replicates: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub snr: Option<f64>,
    #[arg(long)]
    pub lambda_grid: Option<FloatList>,
    #[arg(long)]
    pub gamma_grid: Option<FloatList>,
    #[arg(long, default_value = "bic")]
    pub criterion: Criterion,
    /// Skip tuning and use this λ (requires --gamma).
    #[arg(long, requires = "gamma")]
    pub lambda: Option<f64>,
    #[arg(long, requires = "lambda")]
    pub gamma: Option<f64>,
    #[arg(long, default_value = "replicates.csv")]
    pub out: PathBuf,
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &SflrError) -> i32 {
    match e {
        SflrError::InvalidArgument(_) | SflrError::DerivativeOrder { .. } | SflrError::IndexOutOfRange { .. } => {
            EXIT_USAGE
        }
        SflrError::NotConverged(_) => EXIT_NOT_CONVERGED,
        _ => EXIT_DATA,
    }
}

pub fn execute(cmd: &Command) -> Result<i32> {
    match cmd {
        Command::Fit(a) => cmd_fit(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Tune(a) => cmd_tune(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Replicate(a) => cmd_replicate(a),
    }
}

fn labelled(data: &FunctionalDataset, path: &Path) -> Result<Vec<u8>> {
    data.labels()
        .map(<[u8]>::to_vec)
        .ok_or_else(|| SflrError::Data(format!("{} has no labels", path.display())))
}

fn basis_for(data: &FunctionalDataset, args: &BasisArgs) -> Result<BSplineBasis> {
    let grid = data.grid();
    let (start, end) = (grid[0], grid[grid.len() - 1]);
    if start != 0.0 {
        return Err(SflrError::Data(format!("grid must start at 0, starts at {start}")));
    }
    BSplineBasis::new(end, args.degree, args.intervals.resolve(grid.len()))
}

fn solver_config(lambda: f64, gamma: f64, args: &BasisArgs) -> SolverConfig {
    SolverConfig {
        lambda,
        gamma,
        m: args.m,
        max_iterations: args.max_iterations,
        tolerance: args.tolerance,
        ..SolverConfig::default()
    }
}

fn curve_path(out: &Path, curve: &Option<PathBuf>) -> PathBuf {
    curve.clone().unwrap_or_else(|| {
        let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
        out.with_file_name(format!("{stem}_curve.csv"))
    })
}

fn cmd_fit(a: &FitArgs) -> Result<i32> {
    let data = read_dataset(&a.data)?;
    let y = labelled(&data, &a.data)?;
    let basis = basis_for(&data, &a.basis)?;
    let config = solver_config(a.lambda, a.gamma, &a.basis);
    config.validate()?;
    let design = DesignMatrices::build(&data, &basis, config.m)?;
    let result = fit(&design, &y, &basis, &config)?;
    let model = SflrModel::from_fit(basis.clone(), &result, config.m)?;

    let mut doc = serde_json::to_value(model.to_file())?;
    doc["seed"] = Value::Null;
    doc["config"] = json!({
        "data": a.data.display().to_string(),
        "solver": config,
        "status": result.status,
        "iterations": result.iterations,
        "objective": result.final_objective,
        "loglik": result.loglik,
        "df": result.df,
    });
    write_json(&a.out, &doc)?;

    let comments = vec![
        "seed: none".to_string(),
        format!(
            "lambda={} gamma={} degree={} M={} m={}",
            a.lambda,
            a.gamma,
            basis.degree(),
            basis.intervals(),
            config.m
        ),
    ];
    let rows: Vec<Vec<String>> = model
        .curve(a.curve_points)?
        .into_iter()
        .map(|(t, b, n)| vec![format!("{t:?}"), format!("{b:?}"), (n as u8).to_string()])
        .collect();
    write_table_file(curve_path(&a.out, &a.curve), &["t", "beta_hat", "is_null"], &rows, &comments)?;

    println!(
        "status={:?} iterations={} null_subintervals={}/{}",
        result.status,
        result.iterations,
        result.null_mask.iter().filter(|&&n| n).count(),
        result.null_mask.len()
    );
    if result.converged {
        Ok(EXIT_OK)
    } else {
        eprintln!("warning: fit did not converge ({:?})", result.status);
        Ok(EXIT_NOT_CONVERGED)
    }
}

fn cmd_predict(a: &PredictArgs) -> Result<i32> {
    let model = read_model(&a.model)?;
    let data = read_dataset(&a.data)?;
    let p = model.predict_proba(&data)?;
    let classes = classify(&p, a.threshold);
    let rows: Vec<Vec<String>> = p
        .iter()
        .zip(&classes)
        .enumerate()
        .map(|(i, (p, c))| vec![i.to_string(), format!("{p:?}"), c.to_string()])
        .collect();
    let comments = vec![
        "seed: none".to_string(),
        format!("model={} threshold={}", a.model.display(), a.threshold),
    ];
    write_table_file(&a.out, &["row", "probability", "class"], &rows, &comments)?;
    Ok(EXIT_OK)
}

fn cmd_tune(a: &TuneArgs) -> Result<i32> {
    let data = read_dataset(&a.data)?;
    labelled(&data, &a.data)?;
    let basis = basis_for(&data, &a.basis)?;
    let config = solver_config(0.0, 0.0, &a.basis);
    let cv_loss = match a.cv_loss.as_str() {
        "deviance" => CvLoss::Deviance,
        "mcr" => CvLoss::Mcr,
        other => return Err(SflrError::InvalidArgument(format!("unknown cv loss '{other}'"))),
    };
    let grid = TuningGrid {
        folds: a.folds,
        cv_loss,
        seed: a.seed,
        ..TuningGrid::new(a.lambda_grid.0.clone(), a.gamma_grid.0.clone(), a.criterion)
    };
    let result = tune(&data, &basis, &grid, &config)?;
    let comments = vec![
        format!("seed: {}", a.seed),
        format!(
            "criterion={} folds={} degree={} M={} m={} data={}",
            a.criterion,
            a.folds,
            basis.degree(),
            basis.intervals(),
            config.m,
            a.data.display()
        ),
        format!("best: lambda={} gamma={} score={}", result.lambda, result.gamma, result.score),
    ];
    let file = std::fs::File::create(&a.out)?;
    write_score_table(std::io::BufWriter::new(file), &result.table, &comments)?;
    if let Some(best) = &a.best {
        write_json(
            best,
            &json!({
                "lambda": result.lambda,
                "gamma": result.gamma,
                "score": result.score,
                "seed": a.seed,
                "config": { "criterion": a.criterion, "folds": a.folds, "grid": grid, "degree": basis.degree(), "M": basis.intervals() },
            }),
        )?;
    }
    println!("lambda={} gamma={} score={}", result.lambda, result.gamma, result.score);
    Ok(EXIT_OK)
}

fn cmd_simulate(a: &SimulateArgs) -> Result<i32> {
    let spec = ScenarioSpec {
        scenario: a.scenario,
        n_train: a.n_train,
        n_test: a.n_test,
        grid_size: a.grid_size,
        alpha_true: a.alpha,
        snr: a.snr,
        seed: a.seed,
    };
    let sim = simulate(&spec)?;
    std::fs::create_dir_all(&a.out_dir)?;
    let comments = vec![
        format!("seed: {}", a.seed),
        format!(
            "scenario={} n_train={} n_test={} grid_size={} snr={} alpha={}",
            a.scenario,
            a.n_train,
            a.n_test,
            a.grid_size,
            a.snr.map_or("none".to_string(), |s| s.to_string()),
            sim.alpha
        ),
    ];
    write_dataset_file(a.out_dir.join("train.csv"), &sim.train, &comments)?;
    write_dataset_file(a.out_dir.join("test.csv"), &sim.test, &comments)?;
    let n = a.beta_points.max(2);
    let rows: Vec<Vec<String>> = (0..n)
        .map(|k| {
            let t = k as f64 / (n - 1) as f64;
            vec![format!("{t:?}"), format!("{:?}", a.scenario.beta(t))]
        })
        .collect();
    let mut beta_comments = comments.clone();
    let nulls: Vec<String> = a.scenario.null_region().iter().map(|(x, y)| format!("{x}:{y}")).collect();
    beta_comments.push(format!("null_regions={}", nulls.join(",")));
    write_table_file(a.out_dir.join("true_beta.csv"), &["t", "beta"], &rows, &beta_comments)?;
    for (name, data, probs) in [
        ("train_truth.csv", &sim.train, &sim.train_probabilities),
        ("test_truth.csv", &sim.test, &sim.test_probabilities),
    ] {
        let labels = data.labels().expect("simulated data is labelled");
        let rows: Vec<Vec<String>> = probs
            .iter()
            .zip(labels)
            .enumerate()
            .map(|(i, (p, y))| vec![i.to_string(), format!("{p:?}"), y.to_string()])
            .collect();
        write_table_file(a.out_dir.join(name), &["row", "p_true", "label"], &rows, &comments)?;
    }
    Ok(EXIT_OK)
}

/// Parses `a:b,c:d` into intervals.
pub fn parse_regions(s: &str) -> Result<Vec<(f64, f64)>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|part| {
            let (a, b) = part
                .split_once(':')
                .ok_or_else(|| SflrError::InvalidArgument(format!("region '{part}' is not of the form a:b")))?;
            let parse = |v: &str| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| SflrError::InvalidArgument(format!("bad region bound '{v}'")))
            };
            Ok((parse(a)?, parse(b)?))
        })
        .collect()
}

/// Maximal runs of exact zeros of a sampled curve, as intervals.
pub fn zero_regions(curve: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut start: Option<f64> = None;
    let mut last = 0.0;
    for &(t, v) in curve {
        if v == 0.0 {
            start.get_or_insert(t);
            last = t;
        } else if let Some(s) = start.take() {
            if last > s {
                out.push((s, last));
            }
        }
    }
    if let Some(s) = start {
        if last > s {
            out.push((s, last));
        }
    }
    out
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<i32> {
    let model = read_model(&a.model)?;
    let test = read_dataset(&a.test)?;
    let y = labelled(&test, &a.test)?;
    let truth = read_curve(&a.true_beta)?;
    let (_, t_end) = model.basis().domain();
    let regions = match &a.null_regions {
        Some(s) => parse_regions(s)?,
        None => zero_regions(&truth),
    };
    let regions = normalize_intervals(&regions, t_end)?;
    let p_hat = model.predict_proba(&test)?;
    let cls = classification_metrics(&y, &classify(&p_hat, a.threshold))?;
    let pm = match &a.true_probs {
        Some(path) => Some(pmse(&read_column(path, "p_true")?, &p_hat)?),
        None => None,
    };
    let true_beta = |t: f64| interpolate(&truth, t).unwrap_or(f64::NAN);
    let ise_pair = ise(|t| model.beta_hat(t).unwrap_or(f64::NAN), true_beta, &regions, t_end, a.ise_points)?;
    if ise_pair.0.is_some_and(f64::is_nan) || ise_pair.1.is_some_and(f64::is_nan) {
        return Err(SflrError::Data("true beta curve does not cover the model domain".into()));
    }
    let report = MetricsReport::new(&cls, pm, ise_pair);
    let mut doc = serde_json::to_value(report)?;
    doc["seed"] = Value::Null;
    doc["config"] = json!({
        "model": a.model.display().to_string(),
        "test": a.test.display().to_string(),
        "true_beta": a.true_beta.display().to_string(),
        "null_regions": regions,
        "signal_regions": complement(&regions, t_end),
        "threshold": a.threshold,
    });
    write_json(&a.out, &doc)?;
    println!("mcr={} pmse={} ise0={} ise1={}", fmt_opt(report.mcr), fmt_opt(report.pmse), fmt_opt(report.ise0), fmt_opt(report.ise1));
    Ok(EXIT_OK)
}

fn cmd_replicate(a: &ReplicateArgs) -> Result<i32> {
    let mut spec = ScenarioSpec::new(a.scenario, a.n_train, a.n_test, a.seed);
    spec.snr = a.snr;
    let mut cfg = ExperimentConfig::new(spec);
    if let Some(l) = &a.lambda_grid {
        cfg.grid.lambdas = l.0.clone();
    }
    if let Some(g) = &a.gamma_grid {
        cfg.grid.gammas = g.0.clone();
    }
    cfg.grid.criterion = a.criterion;
    if let (Some(l), Some(g)) = (a.lambda, a.gamma) {
        cfg.fixed = Some((l, g));
    }
    let summary = replicate_experiment(&cfg, a.replicates)?;
    let comments = vec![
        format!("seed: {} (replicate r uses seed + r)", a.seed),
        format!(
            "scenario={} n_train={} n_test={} snr={} criterion={} lambdas={:?} gammas={:?} fixed={:?}",
            a.scenario,
            a.n_train,
            a.n_test,
            a.snr.map_or("none".to_string(), |s| s.to_string()),
            a.criterion,
            cfg.grid.lambdas,
            cfg.grid.gammas,
            cfg.fixed
        ),
    ];
    let file = std::fs::File::create(&a.out)?;
    write_replicate_table(std::io::BufWriter::new(file), &summary, &comments)?;
    let m = &summary.medians;
    println!(
        "median mcr={} sensitivity={} specificity={} ise0={} ise1={} failed={}",
        fmt_opt(m.mcr),
        fmt_opt(m.sensitivity),
        fmt_opt(m.specificity),
        fmt_opt(m.ise0),
        fmt_opt(m.ise1),
        summary.failed
    );
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_list_parsing() {
        assert_eq!("1, 2.5,3e-1".parse::<FloatList>().unwrap().0, vec![1.0, 2.5, 0.3]);
        assert!("1,abc".parse::<FloatList>().is_err());
    }

    #[test]
    fn intervals_parsing() {
        assert_eq!("auto".parse::<Intervals>().unwrap(), Intervals::Auto);
        assert_eq!("12".parse::<Intervals>().unwrap(), Intervals::Fixed(12));
        assert!("0".parse::<Intervals>().is_err());
        assert_eq!(Intervals::Auto.resolve(101), 30);
    }

    #[test]
    fn regions() {
        assert_eq!(parse_regions("0.3:0.7").unwrap(), vec![(0.3, 0.7)]);
        assert_eq!(parse_regions("0:0.05, 0.95:1").unwrap().len(), 2);
        assert!(parse_regions("0.3-0.7").is_err());
        let curve = vec![(0.0, 1.0), (0.25, 0.0), (0.5, 0.0), (0.75, 2.0), (1.0, 0.0)];
        assert_eq!(zero_regions(&curve), vec![(0.25, 0.5)]);
    }

    #[test]
    fn usage_errors() {
        assert_eq!(run(["sflr", "fit", "--data", "x.csv", "--lambda", "abc", "--gamma", "0"]), EXIT_USAGE);
        assert_eq!(run(["sflr", "frobnicate"]), EXIT_USAGE);
        assert_eq!(run(["sflr", "tune", "--data", "x", "--lambda-grid", "1,x", "--gamma-grid", "1"]), EXIT_USAGE);
        assert_eq!(run(["sflr", "--help"]), EXIT_OK);
    }

    #[test]
    fn missing_file_is_data_error() {
        assert_eq!(
            run(["sflr", "fit", "--data", "/nonexistent/file.csv", "--lambda", "1", "--gamma", "0"]),
            EXIT_DATA
        );
    }
}
