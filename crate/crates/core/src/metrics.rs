//! Classification and estimation accuracy measures.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SflrError};
use crate::quadrature::simpson_weights;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Rates with a zero denominator are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub counts: ConfusionCounts,
    pub mcr: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    /// FP / (TP + FP).
    pub fdr: Option<f64>,
    /// FN / (TP + FN), i.e. 1 − sensitivity.
    pub miss_rate: Option<f64>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn classification_metrics(y_true: &[u8], y_pred: &[u8]) -> Result<ClassificationMetrics> {
    if y_true.len() != y_pred.len() {
        return Err(SflrError::DimensionMismatch(format!(
            "{} true labels vs {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    let mut c = ConfusionCounts::default();
    for (&t, &p) in y_true.iter().zip(y_pred) {
        match (t, p) {
            (1, 1) => c.tp += 1,
            (0, 1) => c.fp += 1,
            (0, 0) => c.tn += 1,
            (1, 0) => c.fn_ += 1,
            _ => {
                return Err(SflrError::InvalidArgument(format!(
                    "labels must be 0 or 1, got ({t}, {p})"
                )))
            }
        }
    }
    Ok(from_counts(c))
}

pub fn from_counts(c: ConfusionCounts) -> ClassificationMetrics {
    ClassificationMetrics {
        counts: c,
        mcr: ratio(c.fp + c.fn_, c.total()),
        sensitivity: ratio(c.tp, c.tp + c.fn_),
        specificity: ratio(c.tn, c.tn + c.fp),
        fdr: ratio(c.fp, c.tp + c.fp),
        miss_rate: ratio(c.fn_, c.tp + c.fn_),
    }
}

/// Mean squared difference between true and predicted probabilities.
pub fn pmse(p_true: &[f64], p_hat: &[f64]) -> Result<f64> {
    if p_true.len() != p_hat.len() {
        return Err(SflrError::DimensionMismatch(format!(
            "{} true probabilities vs {} predictions",
            p_true.len(),
            p_hat.len()
        )));
    }
    if p_true.is_empty() {
        return Err(SflrError::EmptyDataset);
    }
    let s: f64 = p_true.iter().zip(p_hat).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(s / p_true.len() as f64)
}

/// Sorts and merges intervals after validating them against `[0, t_end]`.
pub fn normalize_intervals(intervals: &[(f64, f64)], t_end: f64) -> Result<Vec<(f64, f64)>> {
    let mut v: Vec<(f64, f64)> = Vec::with_capacity(intervals.len());
    for &(a, b) in intervals {
        if !(a < b) || a < 0.0 || b > t_end || !a.is_finite() || !b.is_finite() {
            return Err(SflrError::InvalidArgument(format!(
                "interval [{a}, {b}] is empty or outside [0, {t_end}]"
            )));
        }
        v.push((a, b));
    }
    v.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for (a, b) in v {
        match merged.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => merged.push((a, b)),
        }
    }
    Ok(merged)
}

/// Complement of sorted disjoint intervals within `[0, t_end]`.
pub fn complement(intervals: &[(f64, f64)], t_end: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut cursor = 0.0;
    for &(a, b) in intervals {
        if a > cursor {
            out.push((cursor, a));
        }
        cursor = b;
    }
    if cursor < t_end {
        out.push((cursor, t_end));
    }
    out
}

fn simpson_over(f: &impl Fn(f64) -> f64, a: f64, b: f64, points: usize) -> f64 {
    let w = simpson_weights(a, b, points);
    let n = points - 1;
    w.iter()
        .enumerate()
        .map(|(k, wk)| {
            let t = if k == n { b } else { a + (b - a) * k as f64 / n as f64 };
            wk * f(t)
        })
        .sum()
}

/// Length-normalized integrated squared error over the null region and over its
/// complement: `(ISE₀, ISE₁)`. A component is `None` when its region is empty.
///
/// Each maximal piece is integrated separately by composite Simpson, with the
/// `grid_points` budget distributed in proportion to piece length.
pub fn ise(
    beta_hat: impl Fn(f64) -> f64,
    beta_true: impl Fn(f64) -> f64,
    null_region: &[(f64, f64)],
    t_end: f64,
    grid_points: usize,
) -> Result<(Option<f64>, Option<f64>)> {
    if grid_points < 3 || grid_points % 2 == 0 {
        return Err(SflrError::InvalidArgument(format!(
            "grid_points must be odd and at least 3, got {grid_points}"
        )));
    }
    let zero = normalize_intervals(null_region, t_end)?;
    let rest = complement(&zero, t_end);
    let sq = |t: f64| (beta_hat(t) - beta_true(t)).powi(2);
    let component = |pieces: &[(f64, f64)]| -> Option<f64> {
        let len: f64 = pieces.iter().map(|(a, b)| b - a).sum();
        if len <= 0.0 {
            return None;
        }
        let total: f64 = pieces
            .iter()
            .map(|&(a, b)| {
                let share = ((grid_points - 1) as f64 * (b - a) / t_end).round() as usize;
                let intervals = share.max(2);
                let points = if intervals % 2 == 0 { intervals + 1 } else { intervals + 2 };
                simpson_over(&sq, a, b, points)
            })
            .sum();
        Some(total / len)
    };
    Ok((component(&zero), component(&rest)))
}

/// Everything reported for one evaluated model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mcr: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub fdr: Option<f64>,
    pub miss_rate: Option<f64>,
    pub pmse: Option<f64>,
    pub ise0: Option<f64>,
    pub ise1: Option<f64>,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl MetricsReport {
    pub fn new(cls: &ClassificationMetrics, pmse: Option<f64>, ise: (Option<f64>, Option<f64>)) -> Self {
        Self {
            mcr: cls.mcr,
            sensitivity: cls.sensitivity,
            specificity: cls.specificity,
            fdr: cls.fdr,
            miss_rate: cls.miss_rate,
            pmse,
            ise0: ise.0,
            ise1: ise.1,
            tp: cls.counts.tp,
            fp: cls.counts.fp,
            tn: cls.counts.tn,
            fn_: cls.counts.fn_,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
