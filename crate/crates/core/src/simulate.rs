//! Synthetic data: the locally sparse test coefficient functions, spline-built
//! and spectra-like predictor curves, Bernoulli responses, and the replicated
//! Monte Carlo experiment.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bspline::BSplineBasis;
use crate::design::{basis_matrix, DesignMatrices, FunctionalDataset};
use crate::error::{Result, SflrError};
use crate::metrics::{classification_metrics, ise, pmse, MetricsReport};
use crate::model::{classify, SflrModel};
use crate::quadrature::trapezoid_weights;
use crate::solver::{fit, logistic, SolverConfig};
use crate::tuning::{tune_with_design, Criterion, TuningGrid};

/// Degree and interval count of the basis that generates Setting-1 curves
/// (74 order-5 functions).
pub const PREDICTOR_DEGREE: usize = 4;
pub const PREDICTOR_INTERVALS: usize = 70;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    OneNull,
    ThreeNull,
    Spectra,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::OneNull => "one-null",
            Scenario::ThreeNull => "three-null",
            Scenario::Spectra => "spectra",
        })
    }
}

impl FromStr for Scenario {
    type Err = SflrError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "one-null" => Ok(Scenario::OneNull),
            "three-null" => Ok(Scenario::ThreeNull),
            "spectra" => Ok(Scenario::Spectra),
            other => Err(SflrError::InvalidArgument(format!("unknown scenario '{other}'"))),
        }
    }
}

impl Scenario {
    pub fn beta(&self, t: f64) -> f64 {
        match self {
            Scenario::OneNull => one_null_value(t),
            Scenario::ThreeNull => three_null_value(t),
            Scenario::Spectra => spectra_beta(t),
        }
    }

    /// Region on which the true coefficient function vanishes.
    pub fn null_region(&self) -> Vec<(f64, f64)> {
        match self {
            Scenario::OneNull => vec![(0.3, 0.7)],
            Scenario::ThreeNull => vec![(0.0, 0.05), (0.3, 0.7), (0.95, 1.0)],
            Scenario::Spectra => {
                let mut out = vec![(0.0, SPECTRA_REGIONS[0].0)];
                out.push((SPECTRA_REGIONS[0].1, SPECTRA_REGIONS[1].0));
                out.push((SPECTRA_REGIONS[1].1, 1.0));
                out
            }
        }
    }

    /// Default tuning grids `(λ, γ)` for the scenario.
    pub fn default_grids(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            Scenario::OneNull => (
                [0.4, 0.5, 0.6, 0.7].iter().map(|v| v * 17.0).collect(),
                [1e-5, 1e-6].iter().map(|v| v * 15.0).collect(),
            ),
            Scenario::ThreeNull => (
                [0.6, 0.7, 0.8, 0.9, 0.95, 1.0].iter().map(|v| v * 17.0).collect(),
                [1e-5, 1e-6, 1e-7, 5e-8].iter().map(|v| v * 15.0).collect(),
            ),
            Scenario::Spectra => (
                (2..=10).map(|k| 2.0 * k as f64).collect(),
                [2e-6, 3e-6, 4e-6].to_vec(),
            ),
        }
    }
}

fn check_unit(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(SflrError::OutOfDomain { t, start: 0.0, end: 1.0 });
    }
    Ok(())
}

fn one_null_value(t: f64) -> f64 {
    if t <= 0.3 {
        15.0 * (1.0 - t) * (2.0 * PI * (t + 0.2)).sin()
    } else if t < 0.7 {
        0.0
    } else {
        15.0 * t * (2.0 * PI * (t - 0.2)).sin()
    }
}

fn three_null_value(t: f64) -> f64 {
    if t < 0.05 {
        0.0
    } else if t <= 0.3 {
        180.0 * (t - 0.5) * (4.0 * PI * (t + 0.7)).sin()
    } else if t < 0.7 {
        0.0
    } else if t <= 0.95 {
        45.0 * t * (4.0 * PI * (t + 0.3)).sin()
    } else {
        0.0
    }
}

/// Coefficient function with one null region, `(0.3, 0.7)`.
pub fn beta_one_null(t: f64) -> Result<f64> {
    check_unit(t)?;
    Ok(one_null_value(t))
}

/// Coefficient function with null regions `[0, 0.05)`, `(0.3, 0.7)`, `(0.95, 1]`.
pub fn beta_three_null(t: f64) -> Result<f64> {
    check_unit(t)?;
    Ok(three_null_value(t))
}

// Spectra-like setting: two smooth bumps of opposite sign, zero elsewhere.
const SPECTRA_REGIONS: [(f64, f64); 2] = [(0.22, 0.38), (0.62, 0.82)];
const SPECTRA_AMPLITUDES: [f64; 2] = [8.0, -8.0];

fn spectra_beta(t: f64) -> f64 {
    for ((a, b), amp) in SPECTRA_REGIONS.iter().zip(SPECTRA_AMPLITUDES) {
        if t > *a && t < *b {
            return amp * (PI * (t - a) / (b - a)).sin().powi(2);
        }
    }
    0.0
}

// (centre, width, height) of the Gaussian peaks of the two mean spectra; they
// differ only in the peaks at 0.30 and 0.72, inside the two bumps of β.
const SPECTRUM_A: [(f64, f64, f64); 6] = [
    (0.12, 0.030, 8.0),
    (0.30, 0.025, 12.0),
    (0.45, 0.040, 6.0),
    (0.62, 0.020, 10.0),
    (0.72, 0.030, 9.0),
    (0.88, 0.035, 7.0),
];
const SPECTRUM_B: [(f64, f64, f64); 6] = [
    (0.12, 0.030, 8.0),
    (0.30, 0.025, 15.0),
    (0.45, 0.040, 6.0),
    (0.62, 0.020, 10.0),
    (0.72, 0.030, 6.0),
    (0.88, 0.035, 7.0),
];

/// The two mean spectra at `t`.
pub fn mean_spectra(t: f64) -> (f64, f64) {
    let eval = |peaks: &[(f64, f64, f64); 6]| {
        peaks
            .iter()
            .map(|(c, w, h)| h * (-0.5 * ((t - c) / w).powi(2)).exp())
            .sum::<f64>()
    };
    (eval(&SPECTRUM_A), eval(&SPECTRUM_B))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    pub n_train: usize,
    pub n_test: usize,
    /// Equally spaced sampling points on `[0, 1]`.
    pub grid_size: usize,
    /// Intercept; `None` means 0, or auto-calibrated for the spectra scenario.
    pub alpha_true: Option<f64>,
    /// Signal-to-noise variance ratio of added predictor noise.
    pub snr: Option<f64>,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn new(scenario: Scenario, n_train: usize, n_test: usize, seed: u64) -> Self {
        Self {
            scenario,
            n_train,
            n_test,
            grid_size: 101,
            alpha_true: None,
            snr: None,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_train == 0 || self.n_test == 0 {
            return Err(SflrError::InvalidArgument("sample sizes must be positive".into()));
        }
        if self.grid_size < 2 {
            return Err(SflrError::InvalidArgument("grid needs at least two points".into()));
        }
        if let Some(s) = self.snr {
            if !(s > 0.0) || !s.is_finite() {
                return Err(SflrError::InvalidArgument(format!("snr must be positive, got {s}")));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Vec<f64> {
        let n = self.grid_size;
        (0..n).map(|k| k as f64 / (n - 1) as f64).collect()
    }
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Noise-free curves for `n` samples.
fn draw_signal(spec: &ScenarioSpec, n: usize, rng: &mut ChaCha8Rng) -> Result<DMatrix<f64>> {
    let grid = spec.grid();
    match spec.scenario {
        Scenario::OneNull | Scenario::ThreeNull => {
            let basis = BSplineBasis::new(1.0, PREDICTOR_DEGREE, PREDICTOR_INTERVALS)?;
            let e = basis_matrix(&grid, &basis)?;
            let coef = DMatrix::from_fn(n, basis.len(), |_, _| standard_normal(rng));
            Ok(coef * e.transpose())
        }
        Scenario::Spectra => {
            let means: Vec<(f64, f64)> = grid.iter().map(|&t| mean_spectra(t)).collect();
            let first_group = n.div_ceil(2);
            Ok(DMatrix::from_fn(n, grid.len(), |i, k| {
                let m = if i < first_group { means[k].0 } else { means[k].1 };
                m + standard_normal(rng)
            }))
        }
    }
}

fn add_noise(x: &DMatrix<f64>, snr: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let count = x.len() as f64;
    let mean = x.iter().sum::<f64>() / count;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1.0).max(1.0);
    let sd = (var / snr).sqrt();
    x.map(|v| v + sd * standard_normal(rng))
}

/// Unlabelled training predictors for `spec` (with noise when `snr` is set).
pub fn generate_predictors(spec: &ScenarioSpec) -> Result<FunctionalDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let signal = draw_signal(spec, spec.n_train, &mut rng)?;
    let observed = match spec.snr {
        Some(s) => add_noise(&signal, s, &mut rng),
        None => signal,
    };
    FunctionalDataset::new(spec.grid(), observed, None)
}

/// Sampled responses together with the probabilities they were drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct Responses {
    pub labels: Vec<u8>,
    pub probabilities: Vec<f64>,
}

/// Linear predictors `α + ∫βx_i` by the trapezoid rule on the data grid.
pub fn linear_predictors(x: &FunctionalDataset, beta: &impl Fn(f64) -> f64, alpha: f64) -> Vec<f64> {
    let w = trapezoid_weights(x.grid());
    let bw: Vec<f64> = x.grid().iter().zip(&w).map(|(&t, wk)| beta(t) * wk).collect();
    x.values()
        .row_iter()
        .map(|row| alpha + row.iter().zip(&bw).map(|(a, b)| a * b).sum::<f64>())
        .collect()
}

fn draw_responses(eta: &[f64], rng: &mut ChaCha8Rng) -> Responses {
    let probabilities: Vec<f64> = eta.iter().map(|&e| logistic(e)).collect();
    let labels = probabilities.iter().map(|&p| (rng.random::<f64>() < p) as u8).collect();
    Responses { labels, probabilities }
}

/// Bernoulli responses from the functional logistic model.
pub fn generate_responses(
    x: &FunctionalDataset,
    beta: impl Fn(f64) -> f64,
    alpha: f64,
    seed: u64,
) -> Responses {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    draw_responses(&linear_predictors(x, &beta, alpha), &mut rng)
}

/// Intercept making the mean probability 1/2, by bisection.
pub fn calibrate_alpha(eta_without_alpha: &[f64]) -> f64 {
    let mean_p = |a: f64| eta_without_alpha.iter().map(|e| logistic(e + a)).sum::<f64>() / eta_without_alpha.len() as f64;
    let (mut lo, mut hi) = (-1e3, 1e3);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_p(mid) < 0.5 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// One simulated train/test pair.
#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub train: FunctionalDataset,
    pub test: FunctionalDataset,
    pub train_probabilities: Vec<f64>,
    pub test_probabilities: Vec<f64>,
    pub alpha: f64,
}

/// Draws training and test sets from one seeded stream. Responses use the
/// noise-free curves; the returned datasets carry the observed (noisy) ones.
pub fn simulate(spec: &ScenarioSpec) -> Result<SimulatedData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let grid = spec.grid();
    let beta = |t: f64| spec.scenario.beta(t);

    let train_signal = draw_signal(spec, spec.n_train, &mut rng)?;
    let test_signal = draw_signal(spec, spec.n_test, &mut rng)?;
    let train_clean = FunctionalDataset::new(grid.clone(), train_signal, None)?;
    let test_clean = FunctionalDataset::new(grid.clone(), test_signal, None)?;
    let eta_train = linear_predictors(&train_clean, &beta, 0.0);
    let eta_test = linear_predictors(&test_clean, &beta, 0.0);
    let alpha = match (spec.alpha_true, spec.scenario) {
        (Some(a), _) => a,
        (None, Scenario::Spectra) => calibrate_alpha(&eta_train),
        (None, _) => 0.0,
    };
    let shift = |eta: Vec<f64>| eta.into_iter().map(|e| e + alpha).collect::<Vec<_>>();
    let train_resp = draw_responses(&shift(eta_train), &mut rng);
    let test_resp = draw_responses(&shift(eta_test), &mut rng);

    let observe = |clean: FunctionalDataset, rng: &mut ChaCha8Rng| -> DMatrix<f64> {
        match spec.snr {
            Some(s) => add_noise(clean.values(), s, rng),
            None => clean.values().clone(),
        }
    };
    let train_x = observe(train_clean, &mut rng);
    let test_x = observe(test_clean, &mut rng);
    Ok(SimulatedData {
        train: FunctionalDataset::new(grid.clone(), train_x, Some(train_resp.labels))?,
        test: FunctionalDataset::new(grid, test_x, Some(test_resp.labels))?,
        train_probabilities: train_resp.probabilities,
        test_probabilities: test_resp.probabilities,
        alpha,
    })
}

/// Settings shared by every replicate.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub spec: ScenarioSpec,
    pub grid: TuningGrid,
    pub solver: SolverConfig,
    pub degree: usize,
    /// `None` applies the interval-count rule to the sampling grid size.
    pub intervals: Option<usize>,
    /// Skip tuning and use this `(λ, γ)` for every replicate.
    pub fixed: Option<(f64, f64)>,
}

impl ExperimentConfig {
    /// BIC over the scenario's default grids, cubic splines, `m = 2`.
    pub fn new(spec: ScenarioSpec) -> Self {
        let (lambdas, gammas) = spec.scenario.default_grids();
        Self {
            grid: TuningGrid::new(lambdas, gammas, Criterion::Bic),
            spec,
            solver: SolverConfig::default(),
            degree: 3,
            intervals: None,
            fixed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub seed: u64,
    pub metrics: Option<MetricsReport>,
    pub lambda: f64,
    pub gamma: f64,
    pub converged: bool,
    /// Fraction of the true null region declared null by the fit.
    pub null_coverage: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MedianRow {
    pub mcr: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub fdr: Option<f64>,
    pub miss_rate: Option<f64>,
    pub ise0: Option<f64>,
    pub ise1: Option<f64>,
    pub pmse: Option<f64>,
    pub lambda: Option<f64>,
    pub gamma: Option<f64>,
    pub null_coverage: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSummary {
    pub records: Vec<ReplicateRecord>,
    pub medians: MedianRow,
    pub failed: usize,
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

fn run_replicate(cfg: &ExperimentConfig, replicate: usize) -> ReplicateRecord {
    let seed = cfg.spec.seed.wrapping_add(replicate as u64);
    let mut record = ReplicateRecord {
        replicate,
        seed,
        metrics: None,
        lambda: f64::NAN,
        gamma: f64::NAN,
        converged: false,
        null_coverage: None,
        error: None,
    };
    match replicate_inner(cfg, seed, &mut record) {
        Ok(()) => {}
        Err(e) => {
            log::warn!("replicate {replicate} (seed {seed}) failed: {e}");
            record.error = Some(e.to_string());
        }
    }
    record
}

fn replicate_inner(cfg: &ExperimentConfig, seed: u64, record: &mut ReplicateRecord) -> Result<()> {
    let spec = ScenarioSpec { seed, ..cfg.spec.clone() };
    let sim = simulate(&spec)?;
    let y = sim.train.labels().expect("simulated data is labelled");
    if !(y.contains(&0) && y.contains(&1)) {
        return Err(SflrError::Data("training labels contain a single class".into()));
    }
    let intervals = cfg
        .intervals
        .unwrap_or_else(|| BSplineBasis::default_interval_count(spec.grid_size));
    let basis = BSplineBasis::new(1.0, cfg.degree, intervals)?;
    let design = DesignMatrices::build(&sim.train, &basis, cfg.solver.m)?;
    let (lambda, gamma) = match cfg.fixed {
        Some(p) => p,
        None => {
            let grid = TuningGrid { seed, ..cfg.grid.clone() };
            let t = tune_with_design(&design, y, &basis, &grid, &cfg.solver)?;
            (t.lambda, t.gamma)
        }
    };
    record.lambda = lambda;
    record.gamma = gamma;
    let solver = SolverConfig { lambda, gamma, ..cfg.solver.clone() };
    let f = fit(&design, y, &basis, &solver)?;
    record.converged = f.converged;
    let model = SflrModel::from_fit(basis.clone(), &f, solver.m)?;

    let p_hat = model.predict_proba(&sim.test)?;
    let y_test = sim.test.labels().expect("simulated data is labelled");
    let cls = classification_metrics(y_test, &classify(&p_hat, 0.5))?;
    let pm = pmse(&sim.test_probabilities, &p_hat)?;
    let scenario = spec.scenario;
    let null_region = scenario.null_region();
    let ise_pair = ise(
        |t| model.beta_hat(t).unwrap_or(f64::NAN),
        |t| scenario.beta(t),
        &null_region,
        1.0,
        2001,
    )?;
    record.metrics = Some(MetricsReport::new(&cls, Some(pm), ise_pair));
    record.null_coverage = Some(null_coverage(&model, &null_region));
    Ok(())
}

/// Fraction (by length) of `region` lying inside subintervals the model
/// declares null.
pub fn null_coverage(model: &SflrModel, region: &[(f64, f64)]) -> f64 {
    let total: f64 = region.iter().map(|(a, b)| b - a).sum();
    if total <= 0.0 {
        return 0.0;
    }
    let mut covered = 0.0;
    for (lo, hi) in model.null_regions() {
        for &(a, b) in region {
            covered += (hi.min(b) - lo.max(a)).max(0.0);
        }
    }
    covered / total
}

/// Runs `n_replicates` seeded replicates (seed = base seed + index) in
/// parallel and summarizes them by medians over the successful ones.
pub fn replicate_experiment(cfg: &ExperimentConfig, n_replicates: usize) -> Result<ExperimentSummary> {
    if n_replicates == 0 {
        return Err(SflrError::InvalidArgument("at least one replicate is required".into()));
    }
    cfg.spec.validate()?;
    let records: Vec<ReplicateRecord> = (0..n_replicates)
        .into_par_iter()
        .map(|r| run_replicate(cfg, r))
        .collect();
    let ok: Vec<&ReplicateRecord> = records.iter().filter(|r| r.metrics.is_some()).collect();
    let failed = records.len() - ok.len();
    let col = |f: &dyn Fn(&ReplicateRecord) -> Option<f64>| -> Option<f64> {
        let v: Vec<f64> = ok.iter().filter_map(|r| f(r)).collect();
        median(&v)
    };
    let medians = MedianRow {
        mcr: col(&|r| r.metrics.and_then(|m| m.mcr)),
        sensitivity: col(&|r| r.metrics.and_then(|m| m.sensitivity)),
        specificity: col(&|r| r.metrics.and_then(|m| m.specificity)),
        fdr: col(&|r| r.metrics.and_then(|m| m.fdr)),
        miss_rate: col(&|r| r.metrics.and_then(|m| m.miss_rate)),
        ise0: col(&|r| r.metrics.and_then(|m| m.ise0)),
        ise1: col(&|r| r.metrics.and_then(|m| m.ise1)),
        pmse: col(&|r| r.metrics.and_then(|m| m.pmse)),
        lambda: col(&|r| Some(r.lambda).filter(|v| v.is_finite())),
        gamma: col(&|r| Some(r.gamma).filter(|v| v.is_finite())),
        null_coverage: col(&|r| r.null_coverage),
    };
    Ok(ExperimentSummary { records, medians, failed })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "NA".into())
}

/// Per-replicate CSV (`replicate, mcr, sensitivity, specificity, fdr,
/// miss_rate, ise0, ise1, pmse, lambda, gamma, converged`) followed by a
/// `median` row.
pub fn write_replicate_table<W: Write>(out: W, summary: &ExperimentSummary, comments: &[String]) -> Result<()> {
    let mut out = out;
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    writeln!(out, "# failed replicates: {}", summary.failed)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "replicate", "mcr", "sensitivity", "specificity", "fdr", "miss_rate", "ise0", "ise1", "pmse", "lambda",
        "gamma", "converged",
    ])?;
    for r in &summary.records {
        let m = r.metrics;
        w.write_record([
            r.replicate.to_string(),
            opt(m.and_then(|m| m.mcr)),
            opt(m.and_then(|m| m.sensitivity)),
            opt(m.and_then(|m| m.specificity)),
            opt(m.and_then(|m| m.fdr)),
            opt(m.and_then(|m| m.miss_rate)),
            opt(m.and_then(|m| m.ise0)),
            opt(m.and_then(|m| m.ise1)),
            opt(m.and_then(|m| m.pmse)),
            opt(Some(r.lambda).filter(|v| v.is_finite())),
            opt(Some(r.gamma).filter(|v| v.is_finite())),
            if r.error.is_some() { "failed".into() } else { r.converged.to_string() },
        ])?;
    }
    let md = &summary.medians;
    w.write_record([
        "median".to_string(),
        opt(md.mcr),
        opt(md.sensitivity),
        opt(md.specificity),
        opt(md.fdr),
        opt(md.miss_rate),
        opt(md.ise0),
        opt(md.ise1),
        opt(md.pmse),
        opt(md.lambda),
        opt(md.gamma),
        String::new(),
    ])?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn one_null_values() {
        assert_eq!(beta_one_null(0.5).unwrap(), 0.0);
        assert_abs_diff_eq!(beta_one_null(0.2).unwrap(), 12.0 * (0.8 * PI).sin(), epsilon = 1e-12);
        assert_abs_diff_eq!(beta_one_null(0.2).unwrap(), 7.0534, epsilon = 1e-4);
        assert_abs_diff_eq!(beta_one_null(1.0).unwrap(), -14.2658, epsilon = 1e-4);
        assert!(beta_one_null(1.2).is_err());
    }

    #[test]
    fn three_null_values() {
        assert_eq!(beta_three_null(0.02).unwrap(), 0.0);
        assert_abs_diff_eq!(beta_three_null(0.1).unwrap(), 42.3205, epsilon = 1e-4);
        assert_abs_diff_eq!(beta_three_null(0.8).unwrap(), 34.2380, epsilon = 1e-4);
        assert!(beta_three_null(-0.01).is_err());
    }

    #[test]
    fn betas_vanish_on_null_regions() {
        for scenario in [Scenario::OneNull, Scenario::ThreeNull, Scenario::Spectra] {
            for (a, b) in scenario.null_region() {
                for k in 1..10_000 {
                    let t = a + (b - a) * k as f64 / 10_000.0;
                    assert_eq!(scenario.beta(t), 0.0, "{scenario} at {t}");
                }
            }
        }
    }

    #[test]
    fn predictors_are_reproducible() {
        let spec = ScenarioSpec::new(Scenario::OneNull, 20, 5, 7);
        assert_eq!(generate_predictors(&spec).unwrap(), generate_predictors(&spec).unwrap());
    }

    #[test]
    fn responses_with_zero_beta() {
        let spec = ScenarioSpec::new(Scenario::OneNull, 30, 5, 1);
        let x = generate_predictors(&spec).unwrap();
        let r = generate_responses(&x, |_| 0.0, 0.0, 3);
        assert!(r.probabilities.iter().all(|&p| p == 0.5));
        let r = generate_responses(&x, |_| 0.0, 3.0, 3);
        for p in r.probabilities {
            assert_abs_diff_eq!(p, 0.9526, epsilon = 1e-4);
        }
    }

    #[test]
    fn alpha_calibration_balances_classes() {
        let eta: Vec<f64> = (0..50).map(|i| 5.0 + 0.1 * i as f64).collect();
        let a = calibrate_alpha(&eta);
        let m = eta.iter().map(|e| logistic(e + a)).sum::<f64>() / 50.0;
        assert_abs_diff_eq!(m, 0.5, epsilon = 1e-10);
    }

    #[test]
    fn median_basic() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn scenario_parsing() {
        assert_eq!("one-null".parse::<Scenario>().unwrap(), Scenario::OneNull);
        assert_eq!("three_null".parse::<Scenario>().unwrap(), Scenario::ThreeNull);
        assert!("two-null".parse::<Scenario>().is_err());
    }

    #[test]
    fn default_grids_scale() {
        let (l, g) = Scenario::OneNull.default_grids();
        assert_eq!(l.len(), 4);
        assert_abs_diff_eq!(l[0], 6.8, epsilon = 1e-12);
        assert_abs_diff_eq!(g[1], 1.5e-5, epsilon = 1e-18);
    }
}
