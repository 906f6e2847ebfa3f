//! Small dense helpers: quadratic forms and symmetric positive-definite solves.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SflrError};

/// Condition estimate above which a Cholesky solve is replaced by a
/// truncated pseudo-solve.
pub const CONDITION_LIMIT: f64 = 1e12;

pub fn quad_form(m: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    v.dot(&(m * v))
}

/// Solution of `A x = rhs` for symmetric positive (semi)definite `A`.
#[derive(Debug, Clone)]
pub struct SpdSolution {
    pub x: DMatrix<f64>,
    /// Condition estimate of the diagonally equilibrated matrix.
    pub condition: f64,
    /// True when the pseudo-solve fallback was used.
    pub pseudo: bool,
}

/// Solves `A X = B` with `A` symmetric PSD.
///
/// `A` is first scaled to unit diagonal (`S A S`, `S = diag(A_ii^{-1/2})`) so that
/// penalty terms with very different magnitudes do not dominate the condition
/// number. The scaled system is Cholesky factored; if that fails or the
/// condition estimate exceeds [`CONDITION_LIMIT`], an SVD pseudo-solve is used.
pub fn solve_spd(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<SpdSolution> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n {
        return Err(SflrError::DimensionMismatch(format!(
            "system matrix {}x{} with right-hand side of {} rows",
            a.nrows(),
            a.ncols(),
            b.nrows()
        )));
    }
    let scale = DVector::from_fn(n, |i, _| {
        let d = a[(i, i)];
        if d > 0.0 && d.is_finite() { 1.0 / d.sqrt() } else { 1.0 }
    });
    let mut scaled = DMatrix::from_fn(n, n, |i, j| scale[i] * a[(i, j)] * scale[j]);
    // exact symmetry for the factorization
    for i in 0..n {
        for j in 0..i {
            let s = 0.5 * (scaled[(i, j)] + scaled[(j, i)]);
            scaled[(i, j)] = s;
            scaled[(j, i)] = s;
        }
    }
    let rhs = DMatrix::from_fn(b.nrows(), b.ncols(), |i, j| scale[i] * b[(i, j)]);

    let unscale = |y: DMatrix<f64>| DMatrix::from_fn(y.nrows(), y.ncols(), |i, j| scale[i] * y[(i, j)]);

    if let Some(chol) = scaled.clone().cholesky() {
        let l = chol.l_dirty();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for i in 0..n {
            let d = l[(i, i)];
            lo = lo.min(d);
            hi = hi.max(d);
        }
        let condition = (hi / lo).powi(2);
        if condition <= CONDITION_LIMIT {
            return Ok(SpdSolution {
                x: unscale(chol.solve(&rhs)),
                condition,
                pseudo: false,
            });
        }
    }

    let svd = scaled.svd(true, true);
    let smax = svd.singular_values.max();
    if !(smax > 0.0) || !smax.is_finite() {
        return Err(SflrError::Singular { condition: f64::INFINITY });
    }
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    log::warn!("ill-conditioned system (condition estimate {condition:.3e}); using pseudo-solve");
    let y = svd
        .solve(&rhs, smax / CONDITION_LIMIT)
        .map_err(|_| SflrError::Singular { condition })?;
    Ok(SpdSolution {
        x: unscale(y),
        condition,
        pseudo: true,
    })
}

pub fn solve_spd_vec(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<(DVector<f64>, SpdSolution)> {
    let sol = solve_spd(a, &DMatrix::from_column_slice(b.len(), 1, b.as_slice()))?;
    let x = sol.x.column(0).into_owned();
    Ok((x, sol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn solves_well_conditioned_system() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let x_true = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let b = &a * &x_true;
        let (x, sol) = solve_spd_vec(&a, &b).unwrap();
        assert!(!sol.pseudo);
        assert!((x - x_true).amax() < 1e-12);
    }

    #[test]
    fn badly_scaled_diagonal_is_handled_by_equilibration() {
        let a = DMatrix::from_row_slice(2, 2, &[1e14, 1.0, 1.0, 1e-3]);
        let x_true = DVector::from_vec(vec![1e-12, 3.0]);
        let b = &a * &x_true;
        let (x, sol) = solve_spd_vec(&a, &b).unwrap();
        assert!(!sol.pseudo);
        assert_abs_diff_eq!(x[1], 3.0, epsilon = 1e-9);
    }

    #[test]
    fn singular_psd_falls_back_to_pseudo_solve() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let b = DVector::from_vec(vec![2.0, 2.0]);
        let (x, sol) = solve_spd_vec(&a, &b).unwrap();
        assert!(sol.pseudo);
        assert_abs_diff_eq!(x[0] + x[1], 2.0, epsilon = 1e-10);
    }

    #[test]
    fn zero_matrix_is_singular() {
        let a = DMatrix::zeros(2, 2);
        let b = DVector::from_vec(vec![1.0, 0.0]);
        assert!(matches!(solve_spd_vec(&a, &b), Err(SflrError::Singular { .. })));
    }

    #[test]
    fn dimension_mismatch() {
        let a = DMatrix::identity(2, 2);
        let b = DVector::from_vec(vec![1.0, 0.0, 1.0]);
        assert!(solve_spd_vec(&a, &b).is_err());
    }
}
