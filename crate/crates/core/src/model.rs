//! A fitted model: coefficient-function evaluation, prediction and null regions.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::bspline::BSplineBasis;
use crate::design::{compute_u, FunctionalDataset};
use crate::error::{Result, SflrError};
use crate::solver::{logistic, FitResult};

#[derive(Debug, Clone, PartialEq)]
pub struct SflrModel {
    basis: BSplineBasis,
    b: Vec<f64>,
    alpha: f64,
    null_mask: Vec<bool>,
    lambda: f64,
    gamma: f64,
    m: usize,
}

/// On-disk model document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub domain: [f64; 2],
    pub degree: usize,
    #[serde(rename = "M")]
    pub intervals: usize,
    pub b: Vec<f64>,
    pub alpha: f64,
    pub null_mask: Vec<bool>,
    pub lambda: f64,
    pub gamma: f64,
    pub m: usize,
}

impl SflrModel {
    pub fn from_fit(basis: BSplineBasis, fit: &FitResult, m: usize) -> Result<Self> {
        Self::from_parts(
            basis,
            fit.b.clone(),
            fit.alpha,
            fit.null_mask.clone(),
            fit.lambda,
            fit.gamma,
            m,
        )
    }

    pub fn from_parts(
        basis: BSplineBasis,
        b: Vec<f64>,
        alpha: f64,
        null_mask: Vec<bool>,
        lambda: f64,
        gamma: f64,
        m: usize,
    ) -> Result<Self> {
        if b.len() != basis.len() {
            return Err(SflrError::DimensionMismatch(format!(
                "{} coefficients for a basis of {} functions",
                b.len(),
                basis.len()
            )));
        }
        if null_mask.len() != basis.intervals() {
            return Err(SflrError::DimensionMismatch(format!(
                "null mask has {} entries for {} subintervals",
                null_mask.len(),
                basis.intervals()
            )));
        }
        Ok(Self {
            basis,
            b,
            alpha,
            null_mask,
            lambda,
            gamma,
            m,
        })
    }

    pub fn basis(&self) -> &BSplineBasis {
        &self.basis
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.b
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn null_mask(&self) -> &[bool] {
        &self.null_mask
    }

    /// `β̂(t) = e(t)ᵀ b̂`; exactly zero strictly inside a null subinterval.
    pub fn beta_hat(&self, t: f64) -> Result<f64> {
        let j = self.basis.interval_of(t)?;
        let (lo, hi) = self.basis.interval_bounds(j);
        if self.null_mask[j] && t > lo && t < hi {
            return Ok(0.0);
        }
        self.basis.eval_function(&self.b, t, 0)
    }

    /// Linear predictors `α̂ + U_i·b̂` for new curves.
    pub fn linear_predictor(&self, newdata: &FunctionalDataset) -> Result<Vec<f64>> {
        let u = compute_u(newdata, &self.basis)?;
        let b = DVector::from_column_slice(&self.b);
        Ok((u * b).iter().map(|v| v + self.alpha).collect())
    }

    /// `p̂_i = logistic(α̂ + U_i·b̂)`.
    pub fn predict_proba(&self, newdata: &FunctionalDataset) -> Result<Vec<f64>> {
        Ok(self.linear_predictor(newdata)?.into_iter().map(logistic).collect())
    }

    /// Maximal runs of consecutive null subintervals as `(start, end)`.
    pub fn null_regions(&self) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = Vec::new();
        let mut run_start: Option<usize> = None;
        for j in 0..=self.null_mask.len() {
            let is_null = self.null_mask.get(j).copied().unwrap_or(false);
            match (is_null, run_start) {
                (true, None) => run_start = Some(j),
                (false, Some(s)) => {
                    out.push((self.basis.interval_bounds(s).0, self.basis.interval_bounds(j - 1).1));
                    run_start = None;
                }
                _ => {}
            }
        }
        out
    }

    /// `(t, β̂(t), null?)` on `n_points` equally spaced points.
    pub fn curve(&self, n_points: usize) -> Result<Vec<(f64, f64, bool)>> {
        let (a, b) = self.basis.domain();
        let n = n_points.max(2);
        (0..n)
            .map(|k| {
                let t = a + (b - a) * k as f64 / (n - 1) as f64;
                let j = self.basis.interval_of(t)?;
                Ok((t, self.beta_hat(t)?, self.null_mask[j]))
            })
            .collect()
    }

    pub fn to_file(&self) -> ModelFile {
        let (start, end) = self.basis.domain();
        ModelFile {
            domain: [start, end],
            degree: self.basis.degree(),
            intervals: self.basis.intervals(),
            b: self.b.clone(),
            alpha: self.alpha,
            null_mask: self.null_mask.clone(),
            lambda: self.lambda,
            gamma: self.gamma,
            m: self.m,
        }
    }

    pub fn from_file(file: ModelFile) -> Result<Self> {
        if file.domain[0] != 0.0 {
            return Err(SflrError::Data(format!(
                "model domain must start at 0, got {}",
                file.domain[0]
            )));
        }
        let basis = BSplineBasis::new(file.domain[1], file.degree, file.intervals)?;
        Self::from_parts(
            basis,
            file.b,
            file.alpha,
            file.null_mask,
            file.lambda,
            file.gamma,
            file.m,
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_file(serde_json::from_str(s)?)
    }
}

/// Class 1 iff `p ≥ threshold`.
pub fn classify(probabilities: &[f64], threshold: f64) -> Vec<u8> {
    probabilities.iter().map(|&p| (p >= threshold) as u8).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    fn model_with(b: Vec<f64>, mask: Vec<bool>) -> SflrModel {
        let basis = BSplineBasis::new(1.0, 3, mask.len()).unwrap();
        SflrModel::from_parts(basis, b, 0.0, mask, 1.0, 1e-5, 2).unwrap()
    }

    #[test]
    fn all_null_model_is_zero() {
        let m = model_with(vec![0.0; 33], vec![true; 30]);
        for k in 0..=100 {
            assert_eq!(m.beta_hat(k as f64 / 100.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn unit_coefficient_returns_basis_function() {
        let mut b = vec![0.0; 13];
        b[4] = 1.0;
        let m = model_with(b, vec![false; 10]);
        for t in [0.0, 0.13, 0.37, 0.5, 0.99, 1.0] {
            let e = m.basis().eval(t, 0).unwrap()[4];
            assert_abs_diff_eq!(m.beta_hat(t).unwrap(), e, epsilon = 1e-15);
        }
        assert!(m.beta_hat(1.5).is_err());
    }

    #[test]
    fn classify_tie_and_threshold() {
        assert_eq!(classify(&[0.5], 0.5), vec![1]);
        assert_eq!(classify(&[0.49], 0.5), vec![0]);
        assert_eq!(classify(&[1.0, 1.0, 1.0], 0.5), vec![1, 1, 1]);
    }

    #[test]
    fn null_regions_merge_runs() {
        let m = model_with(vec![0.0; 33], vec![false; 30]);
        assert!(m.null_regions().is_empty());
        let mut mask = vec![false; 30];
        for j in 10..20 {
            mask[j] = true;
        }
        let m = model_with(vec![0.0; 33], mask);
        let r = m.null_regions();
        assert_eq!(r.len(), 1);
        assert_abs_diff_eq!(r[0].0, 10.0 / 30.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r[0].1, 20.0 / 30.0, epsilon = 1e-15);
    }

    #[test]
    fn null_regions_at_domain_ends() {
        let mut mask = vec![false; 10];
        mask[0] = true;
        mask[1] = true;
        mask[9] = true;
        let m = model_with(vec![0.0; 13], mask);
        let r = m.null_regions();
        assert_eq!(r.len(), 2);
        assert_abs_diff_eq!(r[0].1, 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(r[1].0, 0.9, epsilon = 1e-15);
        assert_eq!(r[1].1, 1.0);
    }

    #[test]
    fn predictions_zero_model_and_symmetry() {
        let grid: Vec<f64> = (0..51).map(|k| k as f64 / 50.0).collect();
        let x = DMatrix::from_fn(2, 51, |i, k| {
            let s = (grid[k] * 6.0).sin();
            if i == 0 { s } else { -s }
        });
        let data = FunctionalDataset::new(grid, x, None).unwrap();
        let zero = model_with(vec![0.0; 13], vec![false; 10]);
        assert!(zero.predict_proba(&data).unwrap().iter().all(|&p| p == 0.5));

        let b: Vec<f64> = (0..13).map(|k| k as f64 - 6.0).collect();
        let m = model_with(b, vec![false; 10]);
        let p = m.predict_proba(&data).unwrap();
        assert_abs_diff_eq!(p[0], 1.0 - p[1], epsilon = 1e-14);
    }

    #[test]
    fn json_round_trip() {
        let b: Vec<f64> = (0..13).map(|k| (k as f64 * 0.7).sin() / 3.0).collect();
        let mut mask = vec![false; 10];
        mask[3] = true;
        let basis = BSplineBasis::new(1.0, 3, 10).unwrap();
        let m = SflrModel::from_parts(basis, b, -0.123456789012345, mask, 6.8, 1.5e-5, 2).unwrap();
        let s = m.to_json().unwrap();
        assert!(s.contains("\"M\""));
        assert_eq!(SflrModel::from_json(&s).unwrap(), m);
    }

    #[test]
    fn mismatched_parts_rejected() {
        let basis = BSplineBasis::new(1.0, 3, 10).unwrap();
        assert!(SflrModel::from_parts(basis.clone(), vec![0.0; 12], 0.0, vec![false; 10], 0.0, 0.0, 2).is_err());
        assert!(SflrModel::from_parts(basis, vec![0.0; 13], 0.0, vec![false; 9], 0.0, 0.0, 2).is_err());
    }
}
