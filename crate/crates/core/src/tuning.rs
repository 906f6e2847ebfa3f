//! Selection of (λ, γ) over a grid by BIC, AIC or stratified k-fold CV.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bspline::BSplineBasis;
use crate::design::{DesignMatrices, FunctionalDataset};
use crate::error::{Result, SflrError};
use crate::solver::{clamped_probability, fit, FitResult, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Bic,
    Aic,
    Cv,
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::Bic => "bic",
            Criterion::Aic => "aic",
            Criterion::Cv => "cv",
        })
    }
}

impl FromStr for Criterion {
    type Err = SflrError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bic" => Ok(Criterion::Bic),
            "aic" => Ok(Criterion::Aic),
            "cv" => Ok(Criterion::Cv),
            other => Err(SflrError::InvalidArgument(format!("unknown criterion '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CvLoss {
    /// Mean binomial deviance on the held-out fold.
    #[default]
    Deviance,
    /// Held-out misclassification rate at threshold 0.5.
    Mcr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningGrid {
    pub lambdas: Vec<f64>,
    pub gammas: Vec<f64>,
    pub criterion: Criterion,
    pub folds: usize,
    pub cv_loss: CvLoss,
    pub seed: u64,
}

impl TuningGrid {
    pub fn new(lambdas: Vec<f64>, gammas: Vec<f64>, criterion: Criterion) -> Self {
        Self {
            lambdas,
            gammas,
            criterion,
            folds: 5,
            cv_loss: CvLoss::Deviance,
            seed: 0,
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.lambdas.is_empty() || self.gammas.is_empty() {
            return Err(SflrError::InvalidArgument("tuning grids must be nonempty".into()));
        }
        if self.lambdas.iter().chain(&self.gammas).any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(SflrError::InvalidArgument(
                "tuning grid values must be finite and nonnegative".into(),
            ));
        }
        if self.criterion == Criterion::Cv && (self.folds < 2 || self.folds > n) {
            return Err(SflrError::InvalidArgument(format!(
                "fold count {} must lie in 2..={n}",
                self.folds
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub lambda: f64,
    pub gamma: f64,
    pub criterion: Criterion,
    pub score: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningResult {
    pub lambda: f64,
    pub gamma: f64,
    pub score: f64,
    /// One row per grid pair, λ-major in grid order.
    pub table: Vec<ScoreRow>,
}

/// `BIC = −2 loglik + log(N) df`, `AIC = −2 loglik + 2 df`.
pub fn score_ic(fit: &FitResult, n: usize, criterion: Criterion) -> Result<f64> {
    if !fit.converged {
        return Err(SflrError::NotConverged(format!(
            "fit at lambda={}, gamma={} ended with status {:?}",
            fit.lambda, fit.gamma, fit.status
        )));
    }
    let penalty = match criterion {
        Criterion::Bic => (n as f64).ln(),
        Criterion::Aic => 2.0,
        Criterion::Cv => {
            return Err(SflrError::InvalidArgument(
                "cross-validation is not an information criterion".into(),
            ))
        }
    };
    Ok(-2.0 * fit.loglik + penalty * fit.df)
}

/// Fold index for every sample; each class is shuffled with the seeded
/// generator and dealt round-robin so fold class proportions match the data.
pub fn stratified_folds(y: &[u8], k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold = vec![0; y.len()];
    let mut next = 0;
    for class in [0u8, 1u8] {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        idx.shuffle(&mut rng);
        for i in idx {
            fold[i] = next % k;
            next += 1;
        }
    }
    fold
}

fn held_out_loss(fit: &FitResult, design: &DesignMatrices, y: &[u8], loss: CvLoss, clamp: f64) -> f64 {
    let b = DVector::from_column_slice(&fit.b);
    let eta = &design.u * b;
    let n = y.len() as f64;
    match loss {
        CvLoss::Deviance => {
            let s: f64 = eta
                .iter()
                .zip(y)
                .map(|(&e, &yi)| {
                    let p = clamped_probability(e + fit.alpha, clamp);
                    if yi == 1 { p.ln() } else { (1.0 - p).ln() }
                })
                .sum();
            -2.0 * s / n
        }
        CvLoss::Mcr => {
            let wrong = eta
                .iter()
                .zip(y)
                .filter(|(&e, &yi)| {
                    let pred = (crate::solver::logistic(e + fit.alpha) >= 0.5) as u8;
                    pred != yi
                })
                .count();
            wrong as f64 / n
        }
    }
}

fn subset_design(design: &DesignMatrices, rows: &[usize]) -> DesignMatrices {
    DesignMatrices {
        u: design.u.select_rows(rows),
        v: design.v.clone(),
        w_blocks: design.w_blocks.clone(),
        m: design.m,
    }
}

/// Fits every grid pair and returns the minimizer plus the full score table.
///
/// Ties go to the larger λ, then the larger γ. Pairs whose fit fails or does
/// not converge score `+∞`.
pub fn tune(
    data: &FunctionalDataset,
    basis: &BSplineBasis,
    grid: &TuningGrid,
    config: &SolverConfig,
) -> Result<TuningResult> {
    let y = data
        .labels()
        .ok_or_else(|| SflrError::Data("tuning requires labelled data".into()))?;
    let n = y.len();
    grid.validate(n)?;
    if !(y.contains(&0) && y.contains(&1)) {
        return Err(SflrError::Data("both classes must be present for tuning".into()));
    }
    let design = DesignMatrices::build(data, basis, config.m)?;
    tune_with_design(&design, y, basis, grid, config)
}

/// As [`tune`], with precomputed design matrices.
pub fn tune_with_design(
    design: &DesignMatrices,
    y: &[u8],
    basis: &BSplineBasis,
    grid: &TuningGrid,
    config: &SolverConfig,
) -> Result<TuningResult> {
    let n = y.len();
    grid.validate(n)?;
    let pairs: Vec<(f64, f64)> = grid
        .lambdas
        .iter()
        .flat_map(|&l| grid.gammas.iter().map(move |&g| (l, g)))
        .collect();

    let folds = (grid.criterion == Criterion::Cv).then(|| {
        let assignment = stratified_folds(y, grid.folds, grid.seed);
        (0..grid.folds)
            .map(|f| {
                let train: Vec<usize> = (0..n).filter(|&i| assignment[i] != f).collect();
                let test: Vec<usize> = (0..n).filter(|&i| assignment[i] == f).collect();
                let y_train: Vec<u8> = train.iter().map(|&i| y[i]).collect();
                let y_test: Vec<u8> = test.iter().map(|&i| y[i]).collect();
                (subset_design(design, &train), y_train, subset_design(design, &test), y_test)
            })
            .collect::<Vec<_>>()
    });

    let table: Vec<ScoreRow> = pairs
        .par_iter()
        .map(|&(lambda, gamma)| {
            let cfg = SolverConfig {
                lambda,
                gamma,
                ..config.clone()
            };
            let (score, converged) = match &folds {
                None => match fit(design, y, basis, &cfg) {
                    Ok(f) if f.converged => (score_ic(&f, n, grid.criterion).unwrap_or(f64::INFINITY), true),
                    _ => (f64::INFINITY, false),
                },
                Some(folds) => {
                    let mut total = 0.0;
                    let mut ok = true;
                    for (train_d, y_train, test_d, y_test) in folds {
                        match fit(train_d, y_train, basis, &cfg) {
                            Ok(f) if f.converged => {
                                total += held_out_loss(&f, test_d, y_test, grid.cv_loss, cfg.prob_clamp_delta)
                            }
                            _ => {
                                ok = false;
                                break;
                            }
                        }
                    }
                    if ok {
                        (total / folds.len() as f64, true)
                    } else {
                        (f64::INFINITY, false)
                    }
                }
            };
            ScoreRow {
                lambda,
                gamma,
                criterion: grid.criterion,
                score,
                converged,
            }
        })
        .collect();

    let best = select_best(&table)
        .ok_or_else(|| SflrError::NotConverged("no grid point produced a converged fit".into()))?;
    Ok(TuningResult {
        lambda: best.lambda,
        gamma: best.gamma,
        score: best.score,
        table,
    })
}

fn select_best(table: &[ScoreRow]) -> Option<&ScoreRow> {
    let mut best: Option<&ScoreRow> = None;
    for row in table.iter().filter(|r| r.score.is_finite()) {
        best = match best {
            None => Some(row),
            Some(b) => {
                let better = row.score < b.score
                    || (row.score == b.score
                        && (row.lambda > b.lambda || (row.lambda == b.lambda && row.gamma > b.gamma)));
                Some(if better { row } else { b })
            }
        };
    }
    best
}

/// CSV with columns `lambda, gamma, criterion, score, converged`, preceded by
/// `#` comment lines.
pub fn write_score_table<W: Write>(out: W, table: &[ScoreRow], comments: &[String]) -> Result<()> {
    let mut out = out;
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["lambda", "gamma", "criterion", "score", "converged"])?;
    for r in table {
        w.write_record([
            r.lambda.to_string(),
            r.gamma.to_string(),
            r.criterion.to_string(),
            r.score.to_string(),
            r.converged.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
