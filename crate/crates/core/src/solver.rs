//! Doubly-penalized logistic likelihood and its Newton–Raphson optimizer.
//!
//! The objective minimized over the spline coefficients `b` and intercept `α` is
//!
//! ```text
//! F(b, α) = -l(b, α) + γ bᵀVb + λ ∫|β(t)| dt,       β(t) = e(t)ᵀb
//! ```
//!
//! The L1 term is handled by a local quadratic approximation around the
//! current iterate `b̃`: with `h = T/M`,
//!
//! ```text
//! λ ∫|β| ≈ λ √h Σ_j ‖β_[j]‖₂ ≤ bᵀW̃*b + const,
//! W̃* = (λ √h / 2) Σ_j W_j / max(‖β̃_[j]‖₂, floor)
//! ```
//!
//! Each iteration takes one Newton step on `-l + bᵀ(V* + W̃*)b` (with
//! `V* = γV`), halving the step until the exact objective `F` does not increase.
//! The intercept is carried as coordinate 0 of an augmented parameter vector
//! `θ = (α, b)`; all penalty matrices get a zero row and column for it.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bspline::BSplineBasis;
use crate::design::DesignMatrices;
use crate::error::{Result, SflrError};
use crate::linalg::{quad_form, solve_spd, solve_spd_vec};
use crate::quadrature::gauss_legendre_on;

/// Gauss–Legendre nodes per subinterval used to evaluate `∫|β|` exactly enough.
pub const L1_NODES_PER_INTERVAL: usize = 20;

/// Re-optimization rounds after coefficient thresholding.
const POLISH_ROUNDS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Sparsity weight λ.
    pub lambda: f64,
    /// Roughness weight γ.
    pub gamma: f64,
    /// Derivative order of the roughness penalty.
    pub m: usize,
    /// Probabilities are clamped to `[δ, 1 - δ]`.
    pub prob_clamp_delta: f64,
    /// Coefficients below this magnitude are zeroed after convergence; also the
    /// scaled-norm threshold for declaring a subinterval null.
    pub coef_threshold_epsilon: f64,
    /// Lower bound on subinterval norms in the LQA weights.
    pub norm_floor: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub step_halving_max: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            gamma: 0.0,
            m: 2,
            prob_clamp_delta: 1e-5,
            coef_threshold_epsilon: 1e-4,
            norm_floor: 1e-8,
            max_iterations: 100,
            tolerance: 1e-6,
            step_halving_max: 20,
        }
    }
}

impl SolverConfig {
    pub fn with_penalties(lambda: f64, gamma: f64) -> Self {
        Self {
            lambda,
            gamma,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let reals = [
            ("lambda", self.lambda),
            ("gamma", self.gamma),
            ("prob_clamp_delta", self.prob_clamp_delta),
            ("coef_threshold_epsilon", self.coef_threshold_epsilon),
            ("norm_floor", self.norm_floor),
            ("tolerance", self.tolerance),
        ];
        for (name, v) in reals {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(SflrError::InvalidArgument(format!(
                    "{name} must be a finite nonnegative number, got {v}"
                )));
            }
        }
        if !(self.tolerance > 0.0) {
            return Err(SflrError::InvalidArgument("tolerance must be positive".into()));
        }
        if !(self.prob_clamp_delta < 0.5) {
            return Err(SflrError::InvalidArgument(
                "prob_clamp_delta must be below 0.5".into(),
            ));
        }
        Ok(())
    }
}

/// How a fit terminated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Converged,
    /// The Newton direction no longer decreases the exact objective, which
    /// had stopped changing (relative decrease at most the tolerance).
    Stalled,
    MaxIterations,
    /// No step-halving produced a non-increasing objective.
    LineSearchFailed,
    /// Only one class present in the labels.
    DegenerateLabels,
}

impl FitStatus {
    pub fn is_converged(self) -> bool {
        matches!(self, FitStatus::Converged | FitStatus::Stalled)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// Spline coefficients `b`.
    pub b: Vec<f64>,
    pub alpha: f64,
    /// One flag per subinterval; `true` when β̂ vanishes on it.
    pub null_mask: Vec<bool>,
    pub iterations: usize,
    pub converged: bool,
    pub status: FitStatus,
    /// Exact penalized objective at the returned coefficients.
    pub final_objective: f64,
    pub loglik: f64,
    /// Effective degrees of freedom, intercept included.
    pub df: f64,
    pub lambda: f64,
    pub gamma: f64,
    /// Clamped fitted probabilities on the training data.
    pub fitted_probabilities: Vec<f64>,
    /// Exact objective at the start of the sparsity iterations and after every
    /// accepted step, up to thresholding.
    pub objective_trace: Vec<f64>,
    /// Linear solves that needed the pseudo-inverse fallback.
    pub pseudo_solves: usize,
}

/// `1 / (1 + e^{-η})` without overflow.
pub fn logistic(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn clamped_probability(eta: f64, delta: f64) -> f64 {
    logistic(eta).clamp(delta, 1.0 - delta)
}

// (log p, log(1-p)) with p clamped to [delta, 1 - delta]
fn clamped_log_probs(eta: f64, delta: f64) -> (f64, f64) {
    let ln_delta = delta.ln();
    let ln_one_minus = (-delta).ln_1p();
    let lp = -softplus(-eta);
    let lq = -softplus(eta);
    if lp < ln_delta {
        (ln_delta, ln_one_minus)
    } else if lq < ln_delta {
        (ln_one_minus, ln_delta)
    } else {
        (lp, lq)
    }
}

fn labels_to_vector(y: &[u8]) -> DVector<f64> {
    DVector::from_iterator(y.len(), y.iter().map(|&v| v as f64))
}

/// Bernoulli log-likelihood `Σ y_i log p_i + (1 - y_i) log(1 - p_i)` with
/// `p_i = logistic(α + U_i·b)` clamped to `[clamp, 1 - clamp]`.
pub fn log_likelihood(b: &[f64], alpha: f64, u: &DMatrix<f64>, y: &[u8], clamp: f64) -> Result<f64> {
    if u.ncols() != b.len() || u.nrows() != y.len() {
        return Err(SflrError::DimensionMismatch(format!(
            "U is {}x{}, b has {} entries, y has {}",
            u.nrows(),
            u.ncols(),
            b.len(),
            y.len()
        )));
    }
    let bv = DVector::from_column_slice(b);
    let eta = u * bv;
    Ok(eta
        .iter()
        .zip(y)
        .map(|(&e, &yi)| {
            let (lp, lq) = clamped_log_probs(e + alpha, clamp);
            if yi == 1 { lp } else { lq }
        })
        .sum())
}

/// LQA weight matrix `W̃* = (λ √(T/M) / 2) Σ_j W_j / max(‖β̃_[j]‖₂, floor)`.
pub fn lqa_weight_matrix(
    b_current: &[f64],
    w_blocks: &[DMatrix<f64>],
    lambda: f64,
    domain_length: f64,
    intervals: usize,
    norm_floor: f64,
) -> DMatrix<f64> {
    let l = b_current.len();
    let mut out = DMatrix::zeros(l, l);
    if lambda == 0.0 {
        return out;
    }
    let b = DVector::from_column_slice(b_current);
    let scale = 0.5 * lambda * (domain_length / intervals as f64).sqrt();
    for w in w_blocks {
        let norm = quad_form(w, &b).max(0.0).sqrt();
        let c = 1.0 / norm.max(norm_floor);
        out += w * (scale * c);
    }
    out
}

fn pad_intercept(m: &DMatrix<f64>) -> DMatrix<f64> {
    let l = m.nrows();
    let mut out = DMatrix::zeros(l + 1, l + 1);
    out.view_mut((1, 1), (l, l)).copy_from(m);
    out
}

/// `[1 | U]`.
pub fn augment_design(u: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, l) = u.shape();
    let mut out = DMatrix::from_element(n, l + 1, 1.0);
    out.view_mut((0, 1), (n, l)).copy_from(u);
    out
}

fn check_newton_dims(
    theta: &DVector<f64>,
    u_aug: &DMatrix<f64>,
    y: &DVector<f64>,
    v_star: &DMatrix<f64>,
    w_star: &DMatrix<f64>,
) -> Result<()> {
    let p = theta.len();
    if u_aug.ncols() != p
        || u_aug.nrows() != y.len()
        || v_star.shape() != (p, p)
        || w_star.shape() != (p, p)
    {
        return Err(SflrError::DimensionMismatch(format!(
            "θ has {p} entries, U_aug is {}x{}, y has {}, penalties are {:?} and {:?}",
            u_aug.nrows(),
            u_aug.ncols(),
            y.len(),
            v_star.shape(),
            w_star.shape()
        )));
    }
    Ok(())
}

/// Gradient and Hessian of the quadratic-approximation objective
/// `J(θ) = -l(θ) + θᵀ(V* + W̃*)θ` (penalties padded for the intercept).
pub fn surrogate_derivatives(
    theta: &DVector<f64>,
    u_aug: &DMatrix<f64>,
    y: &DVector<f64>,
    v_star: &DMatrix<f64>,
    w_star: &DMatrix<f64>,
    clamp: f64,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    check_newton_dims(theta, u_aug, y, v_star, w_star)?;
    let eta = u_aug * theta;
    let c = eta.map(|e| clamped_probability(e, clamp));
    let d = c.map(|p| p * (1.0 - p));
    let penalty = v_star + w_star;
    let grad = -(u_aug.transpose() * (y - &c)) + 2.0 * (&penalty * theta);
    let hess = weighted_gram(u_aug, &d) + 2.0 * penalty;
    Ok((grad, hess))
}

/// `J(θ) = -l(θ) + θᵀ(V* + W̃*)θ`.
pub fn surrogate_objective(
    theta: &DVector<f64>,
    u_aug: &DMatrix<f64>,
    y: &DVector<f64>,
    v_star: &DMatrix<f64>,
    w_star: &DMatrix<f64>,
    clamp: f64,
) -> f64 {
    neg_loglik(theta, u_aug, y, clamp) + quad_form(v_star, theta) + quad_form(w_star, theta)
}

fn neg_loglik(theta: &DVector<f64>, u_aug: &DMatrix<f64>, y: &DVector<f64>, clamp: f64) -> f64 {
    let eta = u_aug * theta;
    -eta.iter()
        .zip(y.iter())
        .map(|(&e, &yi)| {
            let (lp, lq) = clamped_log_probs(e, clamp);
            yi * lp + (1.0 - yi) * lq
        })
        .sum::<f64>()
}

// Uᵀ diag(d) U
fn weighted_gram(u: &DMatrix<f64>, d: &DVector<f64>) -> DMatrix<f64> {
    let mut scaled = u.clone();
    for (i, &di) in d.iter().enumerate() {
        scaled.row_mut(i).scale_mut(di);
    }
    u.transpose() * scaled
}

/// One Newton–Raphson step on the quadratic-approximation objective:
/// `θ + H⁻¹[Uᵀ(y - c) - 2(V* + W̃*)θ]` with `H = UᵀDU + 2(V* + W̃*)`.
///
/// `v_star` and `w_star` are the padded matrices of the quadratic forms
/// `θᵀV*θ` and `θᵀW̃*θ` themselves; the factor 2 is their derivative.
pub fn newton_step(
    theta_old: &DVector<f64>,
    u_aug: &DMatrix<f64>,
    y: &DVector<f64>,
    v_star: &DMatrix<f64>,
    w_star: &DMatrix<f64>,
    clamp: f64,
) -> Result<DVector<f64>> {
    Ok(newton_step_detailed(theta_old, u_aug, y, v_star, w_star, clamp)?.0)
}

fn newton_step_detailed(
    theta_old: &DVector<f64>,
    u_aug: &DMatrix<f64>,
    y: &DVector<f64>,
    v_star: &DMatrix<f64>,
    w_star: &DMatrix<f64>,
    clamp: f64,
) -> Result<(DVector<f64>, bool)> {
    let (grad, hess) = surrogate_derivatives(theta_old, u_aug, y, v_star, w_star, clamp)?;
    let (delta, sol) = solve_spd_vec(&hess, &grad)?;
    Ok((theta_old - delta, sol.pseudo))
}

fn relative_step(old: &DVector<f64>, new: &DVector<f64>) -> f64 {
    (new - old).amax() / old.amax().max(1.0)
}

/// Everything the iterations need, assembled once per fit.
struct Problem<'a> {
    u_aug: DMatrix<f64>,
    y: DVector<f64>,
    v_star: DMatrix<f64>,
    w_blocks: &'a [DMatrix<f64>],
    /// Basis values at the L1 quadrature nodes, one row per node.
    abs_basis: DMatrix<f64>,
    abs_weights: DVector<f64>,
    domain_length: f64,
    intervals: usize,
    config: &'a SolverConfig,
}

impl<'a> Problem<'a> {
    fn new(
        design: &'a DesignMatrices,
        y: &[u8],
        basis: &BSplineBasis,
        config: &'a SolverConfig,
    ) -> Result<Self> {
        let l = basis.len();
        if design.u.ncols() != l || design.v.shape() != (l, l) || design.w_blocks.len() != basis.intervals() {
            return Err(SflrError::DimensionMismatch(
                "design matrices do not match the basis".into(),
            ));
        }
        if design.u.nrows() != y.len() {
            return Err(SflrError::DimensionMismatch(format!(
                "U has {} rows but there are {} labels",
                design.u.nrows(),
                y.len()
            )));
        }
        let (abs_basis, abs_weights) = l1_quadrature(basis)?;
        let (start, end) = basis.domain();
        Ok(Self {
            u_aug: augment_design(&design.u),
            y: labels_to_vector(y),
            v_star: pad_intercept(&(config.gamma * &design.v)),
            w_blocks: &design.w_blocks,
            abs_basis,
            abs_weights,
            domain_length: end - start,
            intervals: basis.intervals(),
            config,
        })
    }

    fn l1_norm(&self, theta: &DVector<f64>) -> f64 {
        let b = theta.rows(1, theta.len() - 1);
        let beta = &self.abs_basis * b;
        beta.iter().zip(self.abs_weights.iter()).map(|(v, w)| w * v.abs()).sum()
    }

    fn exact_objective(&self, theta: &DVector<f64>) -> f64 {
        let mut f = neg_loglik(theta, &self.u_aug, &self.y, self.config.prob_clamp_delta)
            + quad_form(&self.v_star, theta);
        if self.config.lambda > 0.0 {
            f += self.config.lambda * self.l1_norm(theta);
        }
        f
    }

    fn lqa(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let b = theta.rows(1, theta.len() - 1);
        pad_intercept(&lqa_weight_matrix(
            b.as_slice(),
            self.w_blocks,
            self.config.lambda,
            self.domain_length,
            self.intervals,
            self.config.norm_floor,
        ))
    }
}

fn l1_quadrature(basis: &BSplineBasis) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let l = basis.len();
    let k = L1_NODES_PER_INTERVAL * basis.intervals();
    let mut e = DMatrix::zeros(k, l);
    let mut w = DVector::zeros(k);
    let mut row = 0;
    for j in 0..basis.intervals() {
        let (a, b) = basis.interval_bounds(j);
        let (nodes, weights) = gauss_legendre_on(L1_NODES_PER_INTERVAL, a, b);
        for (t, wt) in nodes.into_iter().zip(weights) {
            let (first, vals) = basis.eval_nonzero(t, 0)?;
            for (c, v) in vals.into_iter().enumerate() {
                e[(row, first + c)] = v;
            }
            w[row] = wt;
            row += 1;
        }
    }
    Ok((e, w))
}

/// Outcome of the sparsity-free initialization.
#[derive(Debug, Clone)]
pub struct InitialFit {
    /// `(α, b)`.
    pub theta: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub pseudo_solves: usize,
}

/// Penalized logistic fit without the sparsity term: Newton iterations on
/// `-l + θᵀV*θ` with step halving. `v_star` is `γV` (unpadded).
pub fn fit_initial(
    u: &DMatrix<f64>,
    y: &[u8],
    v_star: &DMatrix<f64>,
    config: &SolverConfig,
) -> Result<InitialFit> {
    config.validate()?;
    if u.nrows() != y.len() || v_star.shape() != (u.ncols(), u.ncols()) {
        return Err(SflrError::DimensionMismatch(format!(
            "U is {}x{}, {} labels, V* is {:?}",
            u.nrows(),
            u.ncols(),
            y.len(),
            v_star.shape()
        )));
    }
    let u_aug = augment_design(u);
    let yv = labels_to_vector(y);
    let v_pad = pad_intercept(v_star);
    let zero = DMatrix::zeros(v_pad.nrows(), v_pad.ncols());
    let clamp = config.prob_clamp_delta;
    let objective = |theta: &DVector<f64>| neg_loglik(theta, &u_aug, &yv, clamp) + quad_form(&v_pad, theta);
    let theta0 = DVector::zeros(u.ncols() + 1);
    let run = newton_loop(
        theta0,
        config,
        objective,
        |theta| newton_step_detailed(theta, &u_aug, &yv, &v_pad, &zero, clamp),
        DVector::clone,
    )?;
    Ok(InitialFit {
        theta: run.theta,
        iterations: run.iterations,
        converged: run.status.is_converged(),
        pseudo_solves: run.pseudo_solves,
    })
}

struct LoopOutcome {
    theta: DVector<f64>,
    iterations: usize,
    status: FitStatus,
    trace: Vec<f64>,
    pseudo_solves: usize,
}

// Newton iterations with step halving on `objective`; `step` returns the full
// Newton iterate and whether the solve needed the pseudo-inverse. The
// convergence test compares successive iterates after `project`.
fn newton_loop(
    mut theta: DVector<f64>,
    config: &SolverConfig,
    objective: impl Fn(&DVector<f64>) -> f64,
    mut step: impl FnMut(&DVector<f64>) -> Result<(DVector<f64>, bool)>,
    project: impl Fn(&DVector<f64>) -> DVector<f64>,
) -> Result<LoopOutcome> {
    let mut f = objective(&theta);
    let mut trace = vec![f];
    let mut pseudo_solves = 0;
    for iter in 1..=config.max_iterations {
        let (full, pseudo) = step(&theta)?;
        pseudo_solves += pseudo as usize;
        let direction = &full - &theta;
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=config.step_halving_max {
            let candidate = &theta + scale * &direction;
            let fc = objective(&candidate);
            if fc <= f {
                accepted = Some((candidate, fc));
                break;
            }
            scale *= 0.5;
        }
        let Some((candidate, fc)) = accepted else {
            // No descent along the Newton direction. Settled if the full step
            // is already small or the objective had stopped moving.
            let settled = match trace.len() {
                n if n >= 2 => (trace[n - 2] - trace[n - 1]) / trace[n - 1].abs().max(1.0) <= config.tolerance,
                _ => false,
            };
            let status = if relative_step(&theta, &full) <= config.tolerance.sqrt() {
                FitStatus::Converged
            } else if settled {
                FitStatus::Stalled
            } else {
                FitStatus::LineSearchFailed
            };
            return Ok(LoopOutcome {
                theta,
                iterations: iter,
                status,
                trace,
                pseudo_solves,
            });
        };
        let rel = relative_step(&project(&theta), &project(&candidate));
        theta = candidate;
        f = fc;
        trace.push(f);
        if rel < config.tolerance {
            return Ok(LoopOutcome {
                theta,
                iterations: iter,
                status: FitStatus::Converged,
                trace,
                pseudo_solves,
            });
        }
    }
    Ok(LoopOutcome {
        theta,
        iterations: config.max_iterations,
        status: FitStatus::MaxIterations,
        trace,
        pseudo_solves,
    })
}

/// Full estimator: initialization without the sparsity penalty, LQA Newton
/// iterations, coefficient thresholding and null-region detection.
pub fn fit(
    design: &DesignMatrices,
    y: &[u8],
    basis: &BSplineBasis,
    config: &SolverConfig,
) -> Result<FitResult> {
    fit_from(design, y, basis, config, None)
}

/// As [`fit`], but Step 2 starts from `start = (b, α)` instead of the
/// sparsity-free initialization.
pub fn fit_from(
    design: &DesignMatrices,
    y: &[u8],
    basis: &BSplineBasis,
    config: &SolverConfig,
    start: Option<(&[f64], f64)>,
) -> Result<FitResult> {
    config.validate()?;
    if y.len() < 2 {
        return Err(SflrError::InvalidArgument("at least two samples are needed".into()));
    }
    if let Some(i) = y.iter().position(|&v| v > 1) {
        return Err(SflrError::InvalidArgument(format!("label at row {i} is not 0 or 1")));
    }
    let problem = Problem::new(design, y, basis, config)?;
    let clamp = config.prob_clamp_delta;
    let degenerate = y.iter().all(|&v| v == y[0]);

    let (theta0, init_iterations, mut pseudo_solves) = match start {
        Some((b, alpha)) => {
            if b.len() != basis.len() {
                return Err(SflrError::DimensionMismatch(format!(
                    "starting coefficients have length {}, basis has {}",
                    b.len(),
                    basis.len()
                )));
            }
            let mut theta = DVector::zeros(b.len() + 1);
            theta[0] = alpha;
            theta.rows_mut(1, b.len()).copy_from_slice(b);
            (theta, 0, 0)
        }
        None => {
            let init = fit_initial(&design.u, y, &(config.gamma * &design.v), config)?;
            (init.theta, init.iterations, init.pseudo_solves)
        }
    };

    // Converged once the thresholded estimate stops changing: coefficients
    // on their way to zero need not reach it within the tolerance.
    let eps = config.coef_threshold_epsilon;
    let thresholded = |theta: &DVector<f64>| {
        let mut t = theta.clone();
        threshold(&mut t, basis, design, eps);
        t
    };
    let run = newton_loop(
        theta0,
        config,
        |theta| problem.exact_objective(theta),
        |theta| {
            let w_star = problem.lqa(theta);
            newton_step_detailed(theta, &problem.u_aug, &problem.y, &problem.v_star, &w_star, clamp)
        },
        thresholded,
    )?;
    pseudo_solves += run.pseudo_solves;
    let mut iterations = init_iterations + run.iterations;
    let mut status = run.status;

    // Thresholding moves the estimate off the stationary point; re-optimize
    // the remaining coefficients and threshold again until nothing changes.
    let mut theta = run.theta;
    let mut null_mask = threshold(&mut theta, basis, design, eps);
    for _ in 0..POLISH_ROUNDS {
        if !status.is_converged() {
            break;
        }
        let before = theta.clone();
        let polish = newton_loop(
            theta,
            config,
            |theta| problem.exact_objective(theta),
            |theta| {
                let w_star = problem.lqa(theta);
                newton_step_detailed(theta, &problem.u_aug, &problem.y, &problem.v_star, &w_star, clamp)
            },
            thresholded,
        )?;
        pseudo_solves += polish.pseudo_solves;
        iterations += polish.iterations;
        // Rejecting the very first step leaves the settled point unchanged.
        let unmoved = polish.trace.len() == 1 && polish.status != FitStatus::MaxIterations;
        if !unmoved {
            status = polish.status;
        }
        theta = polish.theta;
        null_mask = threshold(&mut theta, basis, design, eps);
        if relative_step(&before, &theta) < config.tolerance {
            break;
        }
    }

    // Effective degrees of freedom at the returned coefficients.
    let eta = &problem.u_aug * &theta;
    let c = eta.map(|e| clamped_probability(e, clamp));
    let d = c.map(|p| p * (1.0 - p));
    let info = weighted_gram(&problem.u_aug, &d);
    let w_star = problem.lqa(&theta);
    let hess = &info + 2.0 * (&problem.v_star + &w_star);
    let sol = solve_spd(&hess, &info)?;
    pseudo_solves += sol.pseudo as usize;
    let df = sol.x.trace();

    let b: Vec<f64> = theta.rows(1, basis.len()).iter().copied().collect();
    let alpha = theta[0];
    let loglik = -neg_loglik(&theta, &problem.u_aug, &problem.y, clamp);
    let final_objective = problem.exact_objective(&theta);
    let status = if degenerate { FitStatus::DegenerateLabels } else { status };
    Ok(FitResult {
        b,
        alpha,
        null_mask,
        iterations,
        converged: status.is_converged(),
        status,
        final_objective,
        loglik,
        df,
        lambda: config.lambda,
        gamma: config.gamma,
        fitted_probabilities: c.iter().copied().collect(),
        objective_trace: run.trace,
        pseudo_solves,
    })
}

fn threshold(theta: &mut DVector<f64>, basis: &BSplineBasis, design: &DesignMatrices, eps: f64) -> Vec<bool> {
    for v in theta.rows_mut(1, basis.len()).iter_mut() {
        if v.abs() < eps {
            *v = 0.0;
        }
    }
    settle_null_mask(theta, basis, design, eps)
}

// A subinterval is null when the RMS of β̂ over it is below `eps`; every
// coefficient touching a null subinterval is then zeroed, which may make
// neighbours null as well, so iterate to a fixed point.
fn settle_null_mask(
    theta: &mut DVector<f64>,
    basis: &BSplineBasis,
    design: &DesignMatrices,
    eps: f64,
) -> Vec<bool> {
    let h = basis.interval_width();
    let l = basis.len();
    let mut mask = vec![false; basis.intervals()];
    loop {
        let b = theta.rows(1, l).into_owned();
        let mut changed = false;
        for (j, w) in design.w_blocks.iter().enumerate() {
            if mask[j] {
                continue;
            }
            let rms = (quad_form(w, &b).max(0.0) / h).sqrt();
            if rms < eps {
                mask[j] = true;
                changed = true;
                for k in basis.active_on_interval(j) {
                    theta[1 + k] = 0.0;
                }
            }
        }
        if !changed {
            return mask;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn loglik_at_zero_is_n_log_half() {
        let u = DMatrix::from_fn(7, 3, |i, j| (i + j) as f64 * 0.1);
        let y = [1, 0, 1, 1, 0, 0, 1];
        let ll = log_likelihood(&[0.0; 3], 0.0, &u, &y, 1e-5).unwrap();
        assert_abs_diff_eq!(ll, 7.0 * 0.5f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn loglik_clamps_extreme_probability() {
        let u = DMatrix::from_element(1, 1, 1.0);
        let ll = log_likelihood(&[40.0], 0.0, &u, &[1], 1e-5).unwrap();
        assert_abs_diff_eq!(ll, (1.0 - 1e-5f64).ln(), epsilon = 1e-15);
        let ll0 = log_likelihood(&[40.0], 0.0, &u, &[0], 1e-5).unwrap();
        assert_abs_diff_eq!(ll0, 1e-5f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn loglik_matches_direct_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let u = DMatrix::from_fn(6, 4, |_, _| rng.random_range(-1.0..1.0));
            let b: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
            let alpha = rng.random_range(-1.0..1.0);
            let y: Vec<u8> = (0..6).map(|_| rng.random_range(0..2)).collect();
            let direct: f64 = (0..6)
                .map(|i| {
                    let eta = alpha + (0..4).map(|j| u[(i, j)] * b[j]).sum::<f64>();
                    y[i] as f64 * eta - (1.0 + eta.exp()).ln()
                })
                .sum();
            let ll = log_likelihood(&b, alpha, &u, &y, 1e-5).unwrap();
            assert_abs_diff_eq!(ll, direct, epsilon = 1e-10);
        }
    }

    #[test]
    fn loglik_dimension_mismatch() {
        let u = DMatrix::zeros(3, 2);
        assert!(log_likelihood(&[0.0; 3], 0.0, &u, &[0, 1, 0], 1e-5).is_err());
        assert!(log_likelihood(&[0.0; 2], 0.0, &u, &[0, 1], 1e-5).is_err());
    }

    #[test]
    fn loglik_is_overflow_safe() {
        let u = DMatrix::from_element(2, 1, 1.0);
        let ll = log_likelihood(&[1e6], 0.0, &u, &[1, 0], 1e-5).unwrap();
        assert!(ll.is_finite());
    }

    #[test]
    fn lqa_zero_lambda_is_zero() {
        let basis = BSplineBasis::new(1.0, 3, 6).unwrap();
        let w = crate::design::compute_w_blocks(&basis);
        let m = lqa_weight_matrix(&[1.0; 9], &w, 0.0, 1.0, 6, 1e-8);
        assert_eq!(m.amax(), 0.0);
    }

    #[test]
    fn lqa_constant_function_gives_scaled_gram() {
        let basis = BSplineBasis::new(1.0, 3, 8).unwrap();
        let w = crate::design::compute_w_blocks(&basis);
        let lambda = 3.0;
        let m = lqa_weight_matrix(&[1.0; 11], &w, lambda, 1.0, 8, 1e-8);
        let gram = basis.gram(0).unwrap();
        assert!((m - (lambda / 2.0) * gram).amax() < 1e-12);
    }

    #[test]
    fn lqa_zero_coefficients_use_floor() {
        let basis = BSplineBasis::new(1.0, 3, 5).unwrap();
        let w = crate::design::compute_w_blocks(&basis);
        let m = lqa_weight_matrix(&[0.0; 8], &w, 2.0, 1.0, 5, 1e-8);
        let expected = 0.5 * 2.0 * (0.2f64).sqrt() * 1e8 * basis.gram(0).unwrap();
        assert!(m.iter().all(|v| v.is_finite()));
        assert!((m - &expected).amax() <= 1e-9 * expected.amax());
    }

    fn irls_step(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>) -> DVector<f64> {
        // textbook IRLS: β_new = (XᵀWX)⁻¹ XᵀW z, z = Xβ + W⁻¹(y - p)
        let eta = x * beta;
        let p = eta.map(|e| 1.0 / (1.0 + (-e).exp()));
        let w = p.map(|pi| pi * (1.0 - pi));
        let z = DVector::from_fn(y.len(), |i, _| eta[i] + (y[i] - p[i]) / w[i]);
        let mut xw = x.clone();
        for i in 0..x.nrows() {
            xw.row_mut(i).scale_mut(w[i]);
        }
        let lhs = x.transpose() * &xw;
        let rhs = xw.transpose() * z;
        lhs.lu().solve(&rhs).unwrap()
    }

    #[test]
    fn newton_step_matches_irls_without_penalty() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 30;
        let x = DMatrix::from_fn(n, 2, |_, j| if j == 0 { 1.0 } else { rng.random_range(-2.0..2.0) });
        let y = DVector::from_fn(n, |_, _| rng.random_range(0..2) as f64);
        let theta = DVector::from_vec(vec![0.3, -0.4]);
        let zero = DMatrix::zeros(2, 2);
        let ours = newton_step(&theta, &x, &y, &zero, &zero, 1e-5).unwrap();
        let oracle = irls_step(&x, &y, &theta);
        assert!((ours - oracle).amax() < 1e-10);
    }

    #[test]
    fn newton_step_fixed_point_at_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 40;
        let u = DMatrix::from_fn(n, 3, |_, _| rng.random_range(-1.0..1.0));
        let y: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        let v = DMatrix::from_fn(3, 3, |i, j| if i == j { 0.2 } else { 0.05 });
        let cfg = SolverConfig { tolerance: 1e-14, ..SolverConfig::default() };
        let init = fit_initial(&u, &y, &v, &cfg).unwrap();
        let u_aug = augment_design(&u);
        let yv = labels_to_vector(&y);
        let v_pad = pad_intercept(&v);
        let zero = DMatrix::zeros(4, 4);
        let next = newton_step(&init.theta, &u_aug, &yv, &v_pad, &zero, 1e-5).unwrap();
        assert!((next - &init.theta).amax() < 1e-10);
    }

    #[test]
    fn newton_step_dimension_mismatch() {
        let theta = DVector::zeros(3);
        let u = DMatrix::zeros(4, 2);
        let y = DVector::zeros(4);
        let z = DMatrix::zeros(3, 3);
        assert!(newton_step(&theta, &u, &y, &z, &z, 1e-5).is_err());
    }

    #[test]
    fn balanced_labels_with_zero_design_give_zero_fit() {
        let u = DMatrix::zeros(10, 4);
        let y = [0, 1, 0, 1, 0, 1, 0, 1, 0, 1];
        let v = DMatrix::identity(4, 4);
        let init = fit_initial(&u, &y, &v, &SolverConfig::default()).unwrap();
        assert!(init.converged);
        assert!(init.theta.amax() < 1e-12);
    }

    #[test]
    fn single_class_runs_to_iteration_limit() {
        let u = DMatrix::from_fn(10, 2, |i, j| ((i * 3 + j) % 5) as f64 * 0.1);
        let y = [1u8; 10];
        let v = DMatrix::identity(2, 2);
        let cfg = SolverConfig { max_iterations: 30, ..SolverConfig::default() };
        let init = fit_initial(&u, &y, &v, &cfg).unwrap();
        assert!(!init.converged);
        assert_eq!(init.iterations, 30);
        assert!(init.theta[0] > 5.0);
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        assert!(SolverConfig::with_penalties(-1.0, 0.0).validate().is_err());
        assert!(SolverConfig { tolerance: 0.0, ..SolverConfig::default() }.validate().is_err());
        assert!(SolverConfig { prob_clamp_delta: 0.5, ..SolverConfig::default() }.validate().is_err());
        assert!(SolverConfig::with_penalties(f64::NAN, 0.0).validate().is_err());
    }
}
