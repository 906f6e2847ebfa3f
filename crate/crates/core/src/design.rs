//! Functional datasets and the matrices the penalized likelihood is written in:
//! the integrated design `U`, the roughness Gram `V` and the per-subinterval
//! Gram blocks `W_j`.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::bspline::BSplineBasis;
use crate::error::{Result, SflrError};
use crate::quadrature::trapezoid_weights;

/// Curves sampled on one shared grid, with optional binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalDataset {
    grid: Vec<f64>,
    values: DMatrix<f64>,
    labels: Option<Vec<u8>>,
}

impl FunctionalDataset {
    pub fn new(grid: Vec<f64>, values: DMatrix<f64>, labels: Option<Vec<u8>>) -> Result<Self> {
        if grid.len() < 2 {
            return Err(SflrError::InvalidArgument(
                "sampling grid needs at least two points".into(),
            ));
        }
        if let Some(k) = grid.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(SflrError::InvalidArgument(format!(
                "sampling grid is not strictly increasing at position {}",
                k + 1
            )));
        }
        if values.ncols() != grid.len() {
            return Err(SflrError::DimensionMismatch(format!(
                "values have {} columns but the grid has {} points",
                values.ncols(),
                grid.len()
            )));
        }
        if let Some(y) = &labels {
            if y.len() != values.nrows() {
                return Err(SflrError::DimensionMismatch(format!(
                    "{} labels for {} curves",
                    y.len(),
                    values.nrows()
                )));
            }
            if let Some(i) = y.iter().position(|&v| v > 1) {
                return Err(SflrError::InvalidArgument(format!(
                    "label at row {i} is not 0 or 1"
                )));
            }
        }
        Ok(Self { grid, values, labels })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    /// Number of curves `N`.
    pub fn n_samples(&self) -> usize {
        self.values.nrows()
    }

    /// Number of sampling points `n`.
    pub fn n_points(&self) -> usize {
        self.grid.len()
    }

    pub fn with_labels(self, labels: Vec<u8>) -> Result<Self> {
        Self::new(self.grid, self.values, Some(labels))
    }

    /// Subset of rows, keeping labels aligned.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let values = self.values.select_rows(rows);
        let labels = self
            .labels
            .as_ref()
            .map(|y| rows.iter().map(|&i| y[i]).collect());
        Self {
            grid: self.grid.clone(),
            values,
            labels,
        }
    }
}

/// `U`, `V` and the `W_j` family for one dataset and basis.
#[derive(Debug, Clone)]
pub struct DesignMatrices {
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub w_blocks: Vec<DMatrix<f64>>,
    pub m: usize,
}

impl DesignMatrices {
    pub fn build(data: &FunctionalDataset, basis: &BSplineBasis, m: usize) -> Result<Self> {
        Ok(Self {
            u: compute_u(data, basis)?,
            v: compute_v(basis, m)?,
            w_blocks: compute_w_blocks(basis),
            m,
        })
    }
}

/// Basis values at each grid point, one row per point.
pub fn basis_matrix(grid: &[f64], basis: &BSplineBasis) -> Result<DMatrix<f64>> {
    let l = basis.len();
    let mut e = DMatrix::zeros(grid.len(), l);
    for (k, &t) in grid.iter().enumerate() {
        let (first, vals) = basis.eval_nonzero(t, 0)?;
        for (c, v) in vals.into_iter().enumerate() {
            e[(k, first + c)] = v;
        }
    }
    Ok(e)
}

/// Row `i` is the composite-trapezoid approximation of `∫ x_i(t) e(t) dt`
/// over the sampling grid.
pub fn compute_u(data: &FunctionalDataset, basis: &BSplineBasis) -> Result<DMatrix<f64>> {
    if data.n_samples() == 0 {
        return Err(SflrError::EmptyDataset);
    }
    let weighted = weighted_basis(data.grid(), basis)?;
    let x = data.values();
    let l = basis.len();
    let n = data.n_samples();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = x.row(i);
            (0..l)
                .map(|c| xi.iter().zip(weighted.column(c).iter()).map(|(a, b)| a * b).sum())
                .collect()
        })
        .collect();
    Ok(DMatrix::from_fn(n, l, |i, c| rows[i][c]))
}

// diag(trapezoid weights) * E
fn weighted_basis(grid: &[f64], basis: &BSplineBasis) -> Result<DMatrix<f64>> {
    let mut e = basis_matrix(grid, basis)?;
    for (k, w) in trapezoid_weights(grid).into_iter().enumerate() {
        e.row_mut(k).scale_mut(w);
    }
    Ok(e)
}

/// Roughness Gram `V` with `v_uv = ∫ e_u^{(m)} e_v^{(m)}`.
pub fn compute_v(basis: &BSplineBasis, m: usize) -> Result<DMatrix<f64>> {
    if m < 1 || m >= basis.degree() {
        return Err(SflrError::InvalidArgument(format!(
            "roughness derivative order {m} must lie in 1..={}",
            basis.degree() - 1
        )));
    }
    basis.gram(m)
}

/// Order-0 Gram block for every subinterval, in subinterval order.
pub fn compute_w_blocks(basis: &BSplineBasis) -> Vec<DMatrix<f64>> {
    (1..=basis.intervals())
        .map(|j| basis.gram_block(j, 0).expect("subinterval index in range"))
        .collect()
}
