//! Clamped B-spline bases on `[0, T]` with equally spaced interior knots.
//!
//! Evaluation uses the Cox–de Boor triangle together with its derivative
//! recurrence, so that every nonzero basis function and its derivatives at a
//! point come out of one pass. Gram blocks of derivative products are exact:
//! each subinterval is integrated with a Gauss–Legendre rule whose degree of
//! exactness covers the polynomial integrand.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SflrError};
use crate::quadrature::gauss_legendre_on;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BSplineBasis {
    domain_start: f64,
    domain_end: f64,
    degree: usize,
    intervals: usize,
    knots: Vec<f64>,
}

impl BSplineBasis {
    /// Clamped basis of the given degree on `[0, domain_end]` with
    /// `intervals` equal subintervals, i.e. `intervals + degree` functions.
    pub fn new(domain_end: f64, degree: usize, intervals: usize) -> Result<Self> {
        if !(domain_end > 0.0) || !domain_end.is_finite() {
            return Err(SflrError::InvalidArgument(format!(
                "domain end must be positive and finite, got {domain_end}"
            )));
        }
        if degree < 1 {
            return Err(SflrError::InvalidArgument("spline degree must be at least 1".into()));
        }
        if intervals < 1 {
            return Err(SflrError::InvalidArgument("at least one subinterval is required".into()));
        }
        let mut knots = Vec::with_capacity(intervals + 2 * degree + 1);
        knots.extend(std::iter::repeat_n(0.0, degree + 1));
        for k in 1..intervals {
            knots.push(domain_end * k as f64 / intervals as f64);
        }
        knots.extend(std::iter::repeat_n(domain_end, degree + 1));
        Ok(Self {
            domain_start: 0.0,
            domain_end,
            degree,
            intervals,
            knots,
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Number of subintervals `M`.
    pub fn intervals(&self) -> usize {
        self.intervals
    }

    /// Number of basis functions `L = M + d`.
    pub fn len(&self) -> usize {
        self.intervals + self.degree
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.domain_start, self.domain_end)
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Width `T / M` of every subinterval.
    pub fn interval_width(&self) -> f64 {
        (self.domain_end - self.domain_start) / self.intervals as f64
    }

    /// Bounds of the zero-based subinterval `j`.
    pub fn interval_bounds(&self, j: usize) -> (f64, f64) {
        (self.knots[j + self.degree], self.knots[j + self.degree + 1])
    }

    /// Zero-based subinterval containing `t`; the right endpoint belongs to the
    /// last subinterval.
    pub fn interval_of(&self, t: f64) -> Result<usize> {
        self.check_domain(t)?;
        let h = self.interval_width();
        let mut j = ((t - self.domain_start) / h).floor() as usize;
        if j >= self.intervals {
            j = self.intervals - 1;
        }
        // Guard against floating round-off in the division.
        while j > 0 && t < self.knots[j + self.degree] {
            j -= 1;
        }
        while j + 1 < self.intervals && t >= self.knots[j + self.degree + 1] {
            j += 1;
        }
        Ok(j)
    }

    /// Zero-based indices of the basis functions that are nonzero somewhere on
    /// subinterval `j`.
    pub fn active_on_interval(&self, j: usize) -> std::ops::RangeInclusive<usize> {
        j..=j + self.degree
    }

    /// Zero-based subintervals on which basis function `l` is supported.
    pub fn support_intervals(&self, l: usize) -> std::ops::RangeInclusive<usize> {
        let first = l.saturating_sub(self.degree);
        let last = l.min(self.intervals - 1);
        first..=last
    }

    fn check_domain(&self, t: f64) -> Result<()> {
        if !(t >= self.domain_start && t <= self.domain_end) {
            return Err(SflrError::OutOfDomain {
                t,
                start: self.domain_start,
                end: self.domain_end,
            });
        }
        Ok(())
    }

    /// Values of the `d + 1` basis functions that can be nonzero at `t`,
    /// differentiated `order` times. Returns the index of the first one.
    pub fn eval_nonzero(&self, t: f64, order: usize) -> Result<(usize, Vec<f64>)> {
        if order > self.degree {
            return Err(SflrError::DerivativeOrder {
                order,
                degree: self.degree,
            });
        }
        let j = self.interval_of(t)?;
        let ders = self.ders_basis(j + self.degree, t, order);
        Ok((j, ders.into_iter().nth(order).unwrap()))
    }

    /// All `L` basis values (or derivatives) at `t`.
    pub fn eval(&self, t: f64, order: usize) -> Result<Vec<f64>> {
        let (first, vals) = self.eval_nonzero(t, order)?;
        let mut out = vec![0.0; self.len()];
        out[first..first + vals.len()].copy_from_slice(&vals);
        Ok(out)
    }

    /// `Σ_l coef_l e_l^{(order)}(t)`.
    pub fn eval_function(&self, coef: &[f64], t: f64, order: usize) -> Result<f64> {
        if coef.len() != self.len() {
            return Err(SflrError::DimensionMismatch(format!(
                "coefficient vector has length {}, basis has {}",
                coef.len(),
                self.len()
            )));
        }
        let (first, vals) = self.eval_nonzero(t, order)?;
        Ok(vals.iter().zip(&coef[first..]).map(|(v, c)| v * c).sum())
    }

    // Cox–de Boor with derivatives; `span` is the knot index with
    // knots[span] <= t < knots[span + 1]. Row k holds the k-th derivatives.
    fn ders_basis(&self, span: usize, t: f64, n: usize) -> Vec<Vec<f64>> {
        let p = self.degree;
        let u = &self.knots;
        let mut ndu = vec![vec![0.0; p + 1]; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        ndu[0][0] = 1.0;
        for j in 1..=p {
            left[j] = t - u[span + 1 - j];
            right[j] = u[span + j] - t;
            let mut saved = 0.0;
            for r in 0..j {
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }

        let mut ders = vec![vec![0.0; p + 1]; n + 1];
        for j in 0..=p {
            ders[0][j] = ndu[j][p];
        }
        let mut a = [vec![0.0; p + 1], vec![0.0; p + 1]];
        for r in 0..=p {
            let (mut s1, mut s2) = (0usize, 1usize);
            a[0][0] = 1.0;
            for k in 1..=n {
                let mut d = 0.0;
                let rk = r as isize - k as isize;
                let pk = p - k;
                if r >= k {
                    a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                    d = a[s2][0] * ndu[rk as usize][pk];
                }
                let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
                let j2 = if (r as isize) - 1 <= pk as isize { k - 1 } else { p - r };
                for j in j1..=j2 {
                    let idx = (rk + j as isize) as usize;
                    a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                    d += a[s2][j] * ndu[idx][pk];
                }
                if r <= pk {
                    a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                    d += a[s2][k] * ndu[r][pk];
                }
                ders[k][r] = d;
                std::mem::swap(&mut s1, &mut s2);
            }
        }
        let mut factor = p as f64;
        for k in 1..=n {
            for v in ders[k].iter_mut() {
                *v *= factor;
            }
            factor *= (p - k) as f64;
        }
        ders
    }

    /// `∫ e^{(m)}(t) e^{(m)}(t)^T dt` over the one-based subinterval `j`.
    ///
    /// The integrand is a polynomial of degree `2(d - m)` on the subinterval,
    /// so `d - m + 1` Gauss–Legendre nodes integrate it exactly.
    pub fn gram_block(&self, j: usize, m: usize) -> Result<DMatrix<f64>> {
        if j < 1 || j > self.intervals {
            return Err(SflrError::IndexOutOfRange {
                index: j,
                max: self.intervals,
            });
        }
        if m >= self.degree {
            return Err(SflrError::InvalidArgument(format!(
                "derivative order {m} must be below the degree {}",
                self.degree
            )));
        }
        let l = self.len();
        let mut g = DMatrix::zeros(l, l);
        self.accumulate_block(&mut g, j - 1, m);
        Ok(g)
    }

    fn accumulate_block(&self, g: &mut DMatrix<f64>, j0: usize, m: usize) {
        let (a, b) = self.interval_bounds(j0);
        let (nodes, weights) = gauss_legendre_on(self.degree - m + 1, a, b);
        for (&t, &w) in nodes.iter().zip(&weights) {
            let ders = self.ders_basis(j0 + self.degree, t, m);
            let v = &ders[m];
            for (r, &vr) in v.iter().enumerate() {
                for (c, &vc) in v.iter().enumerate() {
                    g[(j0 + r, j0 + c)] += w * vr * vc;
                }
            }
        }
    }

    /// Full-domain Gram matrix of `m`-th derivatives, `Σ_j gram_block(j, m)`.
    pub fn gram(&self, m: usize) -> Result<DMatrix<f64>> {
        if m >= self.degree {
            return Err(SflrError::InvalidArgument(format!(
                "derivative order {m} must be below the degree {}",
                self.degree
            )));
        }
        let l = self.len();
        let mut g = DMatrix::zeros(l, l);
        for j0 in 0..self.intervals {
            self.accumulate_block(&mut g, j0, m);
        }
        Ok(g)
    }

    /// Interval-count rule `M = max(30, 10 n^{2/9})` for `n` sampling points.
    pub fn default_interval_count(n_points: usize) -> usize {
        let rule = 10.0 * (n_points as f64).powf(2.0 / 9.0);
        (rule.round() as usize).max(30)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn basis_counts() {
        let b = BSplineBasis::new(1.0, 3, 30).unwrap();
        assert_eq!(b.len(), 33);
        for k in 1..30 {
            assert_abs_diff_eq!(b.knots()[3 + k], k as f64 / 30.0, epsilon = 1e-15);
        }
        assert_eq!(BSplineBasis::new(1.0, 4, 70).unwrap().len(), 74);
        assert_eq!(BSplineBasis::new(1.0, 3, 2).unwrap().len(), 5);
    }

    #[test]
    fn knot_vector_is_clamped() {
        let b = BSplineBasis::new(2.0, 3, 5).unwrap();
        let k = b.knots();
        assert_eq!(k.len(), 5 + 2 * 3 + 1);
        assert!(k[..4].iter().all(|&x| x == 0.0));
        assert!(k[k.len() - 4..].iter().all(|&x| x == 2.0));
        assert!(k.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn invalid_arguments_rejected() {
        assert!(BSplineBasis::new(0.0, 3, 30).is_err());
        assert!(BSplineBasis::new(-1.0, 3, 30).is_err());
        assert!(BSplineBasis::new(1.0, 0, 30).is_err());
        assert!(BSplineBasis::new(1.0, 3, 0).is_err());
        assert_eq!(BSplineBasis::new(1.0, 3, 2).unwrap().len(), 5);
    }

    #[test]
    fn partition_of_unity_at_interior_point() {
        let b = BSplineBasis::new(1.0, 3, 30).unwrap();
        let s: f64 = b.eval(0.37, 0).unwrap().iter().sum();
        assert_abs_diff_eq!(s, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn clamped_endpoints_interpolate() {
        let b = BSplineBasis::new(1.0, 3, 10).unwrap();
        let v0 = b.eval(0.0, 0).unwrap();
        assert_eq!(v0[0], 1.0);
        assert!(v0[1..].iter().all(|&x| x == 0.0));
        let v1 = b.eval(1.0, 0).unwrap();
        assert_abs_diff_eq!(v1[b.len() - 1], 1.0, epsilon = 1e-14);
        assert!(v1[..b.len() - 1].iter().all(|&x| x.abs() < 1e-14));
    }

    #[test]
    fn out_of_domain_and_high_order_rejected() {
        let b = BSplineBasis::new(1.0, 3, 10).unwrap();
        assert!(matches!(b.eval(1.0001, 0), Err(SflrError::OutOfDomain { .. })));
        assert!(matches!(b.eval(-0.1, 0), Err(SflrError::OutOfDomain { .. })));
        assert!(matches!(b.eval(0.5, 4), Err(SflrError::DerivativeOrder { .. })));
        assert!(b.eval(0.5, 3).is_ok());
    }

    #[test]
    fn degree_one_is_hat_functions() {
        let b = BSplineBasis::new(1.0, 1, 4).unwrap();
        let v = b.eval(0.3, 0).unwrap();
        // hats centred at 0.25 and 0.5
        assert_abs_diff_eq!(v[1], 0.8, epsilon = 1e-14);
        assert_abs_diff_eq!(v[2], 0.2, epsilon = 1e-14);
        let d = b.eval(0.3, 1).unwrap();
        assert_abs_diff_eq!(d[1], -4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d[2], 4.0, epsilon = 1e-12);
    }

    #[test]
    fn gram_block_bad_index() {
        let b = BSplineBasis::new(1.0, 3, 10).unwrap();
        assert!(b.gram_block(0, 0).is_err());
        assert!(b.gram_block(11, 0).is_err());
        assert!(b.gram_block(3, 3).is_err());
    }

    #[test]
    fn gram_block_sparsity_pattern() {
        let b = BSplineBasis::new(1.0, 3, 12).unwrap();
        for j in 1..=12 {
            let g = b.gram_block(j, 0).unwrap();
            let nnz = g.iter().filter(|&&x| x != 0.0).count();
            assert!(nnz <= 16);
            for u in 0..b.len() {
                for v in 0..b.len() {
                    let inside = (j - 1..=j + 2).contains(&u) && (j - 1..=j + 2).contains(&v);
                    if !inside {
                        assert_eq!(g[(u, v)], 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn ones_have_zero_roughness() {
        let b = BSplineBasis::new(1.0, 3, 15).unwrap();
        let v = b.gram(2).unwrap();
        let ones = nalgebra::DVector::from_element(b.len(), 1.0);
        assert!((ones.transpose() * &v * &ones)[(0, 0)].abs() < 1e-10);
    }

    #[test]
    fn support_intervals_match_evaluation() {
        let b = BSplineBasis::new(1.0, 3, 8).unwrap();
        for l in 0..b.len() {
            let sup = b.support_intervals(l);
            for j in 0..8 {
                let (lo, hi) = b.interval_bounds(j);
                let v = b.eval(0.5 * (lo + hi), 0).unwrap()[l];
                assert_eq!(v != 0.0, sup.contains(&j), "l={l} j={j}");
            }
        }
    }

    #[test]
    fn interval_rule() {
        assert_eq!(BSplineBasis::default_interval_count(101), 30);
        assert_eq!(BSplineBasis::default_interval_count(10_000), 77);
    }
}
