#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use sflr::simulate::{simulate, Scenario, ScenarioSpec, SimulatedData};

/// Textbook IRLS for unpenalized logistic regression on the columns of `x`
/// (no clamping, plain LU solves).
pub fn irls(x: &DMatrix<f64>, y: &[u8], tol: f64, max_iter: usize) -> DVector<f64> {
    let p = x.ncols();
    let yv = DVector::from_iterator(y.len(), y.iter().map(|&v| v as f64));
    let mut beta = DVector::zeros(p);
    for _ in 0..max_iter {
        let eta = x * &beta;
        let mu = eta.map(|e| 1.0 / (1.0 + (-e).exp()));
        let w = mu.map(|m| m * (1.0 - m));
        let mut xtwx = DMatrix::zeros(p, p);
        for i in 0..x.nrows() {
            let r = x.row(i);
            xtwx += w[i] * r.transpose() * r;
        }
        let z = x.transpose() * (&yv - &mu);
        let delta = xtwx.lu().solve(&z).expect("IRLS system is singular");
        beta += &delta;
        if delta.amax() < tol {
            break;
        }
    }
    beta
}

/// Cyclic coordinate Newton steps using central finite differences of `f`:
/// a derivative-free generic minimizer for smooth convex objectives.
pub fn coordinate_minimize(f: impl Fn(&DVector<f64>) -> f64, x0: DVector<f64>, sweeps: usize) -> DVector<f64> {
    let mut x = x0;
    let h = 1e-4;
    for _ in 0..sweeps {
        let mut moved: f64 = 0.0;
        for k in 0..x.len() {
            for _ in 0..3 {
                let f0 = f(&x);
                let mut xp = x.clone();
                xp[k] += h;
                let mut xm = x.clone();
                xm[k] -= h;
                let (fp, fm) = (f(&xp), f(&xm));
                let g = (fp - fm) / (2.0 * h);
                let c = (fp - 2.0 * f0 + fm) / (h * h);
                if c <= 0.0 {
                    break;
                }
                let step = -g / c;
                x[k] += step;
                moved = moved.max(step.abs());
            }
        }
        if moved < 1e-10 {
            break;
        }
    }
    x
}

pub fn one_null(n_train: usize, n_test: usize, seed: u64) -> SimulatedData {
    simulate(&ScenarioSpec::new(Scenario::OneNull, n_train, n_test, seed)).unwrap()
}

/// Composite trapezoid Gram matrix `∫ e_k e_l` on a uniform grid.
pub fn trapezoid_gram(basis: &sflr::BSplineBasis, points: usize) -> DMatrix<f64> {
    let (a, b) = basis.domain();
    let grid: Vec<f64> = (0..points).map(|k| a + (b - a) * k as f64 / (points - 1) as f64).collect();
    let w = sflr::quadrature::trapezoid_weights(&grid);
    let e = sflr::design::basis_matrix(&grid, basis).unwrap();
    let mut scaled = e.clone();
    for (i, wi) in w.iter().enumerate() {
        scaled.row_mut(i).scale_mut(*wi);
    }
    e.transpose() * scaled
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigen().eigenvalues.min()
}

/// Coefficients reproducing `t^k` (k ≤ 2) in a clamped basis, by blossoming.
pub fn monomial_coefficients(basis: &sflr::BSplineBasis, k: usize) -> Vec<f64> {
    let d = basis.degree();
    let knots = basis.knots();
    (0..basis.len())
        .map(|l| {
            let t = &knots[l + 1..=l + d];
            match k {
                0 => 1.0,
                1 => t.iter().sum::<f64>() / d as f64,
                2 => {
                    let mut s = 0.0;
                    for i in 0..d {
                        for j in i + 1..d {
                            s += t[i] * t[j];
                        }
                    }
                    s / (d * (d - 1) / 2) as f64
                }
                _ => panic!("unsupported degree"),
            }
        })
        .collect()
}

/// Largest relative disagreement between analytic and central-difference
/// derivatives of the quadratic-approximation objective at `points` random
/// coefficient vectors.
pub fn derivative_check(points: usize, seed: u64) -> (f64, f64) {
    use rand::{Rng, SeedableRng};
    use sflr::solver::{augment_design, lqa_weight_matrix, surrogate_derivatives, surrogate_objective};

    let data = one_null(120, 1, seed);
    let basis = sflr::BSplineBasis::new(1.0, 3, 12).unwrap();
    let design = sflr::DesignMatrices::build(&data.train, &basis, 2).unwrap();
    let u_aug = augment_design(&design.u);
    let y = DVector::from_iterator(120, data.train.labels().unwrap().iter().map(|&v| v as f64));
    let l = basis.len();
    let pad = |m: &DMatrix<f64>| {
        let mut out = DMatrix::zeros(l + 1, l + 1);
        out.view_mut((1, 1), (l, l)).copy_from(m);
        out
    };
    let v_star = pad(&(1e-3 * &design.v));
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let (mut worst_g, mut worst_h) = (0.0f64, 0.0f64);
    for _ in 0..points {
        let theta = DVector::from_fn(l + 1, |_, _| rng.random_range(-0.5..0.5));
        let anchor: Vec<f64> = (0..l).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w_star = pad(&lqa_weight_matrix(&anchor, &design.w_blocks, 2.0, 1.0, 12, 1e-8));
        let f = |t: &DVector<f64>| surrogate_objective(t, &u_aug, &y, &v_star, &w_star, 1e-5);
        let (g, h) = surrogate_derivatives(&theta, &u_aug, &y, &v_star, &w_star, 1e-5).unwrap();
        let step = 1e-5;
        let mut g_fd = DVector::zeros(l + 1);
        let mut h_fd = DMatrix::zeros(l + 1, l + 1);
        for k in 0..=l {
            let mut tp = theta.clone();
            tp[k] += step;
            let mut tm = theta.clone();
            tm[k] -= step;
            g_fd[k] = (f(&tp) - f(&tm)) / (2.0 * step);
            let gp = surrogate_derivatives(&tp, &u_aug, &y, &v_star, &w_star, 1e-5).unwrap().0;
            let gm = surrogate_derivatives(&tm, &u_aug, &y, &v_star, &w_star, 1e-5).unwrap().0;
            h_fd.set_column(k, &((gp - gm) / (2.0 * step)));
        }
        worst_g = worst_g.max((&g - &g_fd).amax() / g.amax().max(1e-12));
        worst_h = worst_h.max((&h - &h_fd).amax() / h.amax().max(1e-12));
    }
    (worst_g, worst_h)
}
