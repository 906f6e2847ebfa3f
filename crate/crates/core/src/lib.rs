//! Sparse functional logistic regression: a scalar binary response modelled
//! through the integral of a functional predictor against a coefficient
//! function that is exactly zero on subregions of its domain.

pub mod bspline;
pub mod cli;
pub mod design;
pub mod error;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod quadrature;
pub mod simulate;
pub mod solver;
pub mod tuning;

pub use bspline::BSplineBasis;
pub use design::{DesignMatrices, FunctionalDataset};
pub use error::{Result, SflrError};
pub use model::SflrModel;
pub use solver::{fit, FitResult, FitStatus, SolverConfig};
pub use tuning::{tune, Criterion, TuningGrid, TuningResult};
