use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::config::OlsConfig;
use crate::error::{Error, Result};
use crate::rng::{kfold_assignment, SeedSpec};

/// Consecutive objective increases that count as divergence.
const DIVERGENCE_STREAK: usize = 10;
const LASSO_TOL: f64 = 1e-8;
const LASSO_MAX_SWEEPS: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct OlsSolution {
    pub beta: Array1<f64>,
    /// `‖R − Xβ‖²` at the returned β.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn check_finite(x: ArrayView2<f64>, r: ArrayView1<f64>) -> Result<()> {
    if x.iter().chain(r.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite entry in design matrix or targets".into()));
    }
    Ok(())
}

fn check_shapes(x: ArrayView2<f64>, r: ArrayView1<f64>) -> Result<()> {
    if x.nrows() != r.len() {
        return Err(Error::Shape(format!(
            "design matrix has {} rows but there are {} targets",
            x.nrows(),
            r.len()
        )));
    }
    Ok(())
}

/// Largest eigenvalue of a symmetric positive semi-definite matrix by power iteration.
pub(crate) fn max_eigenvalue(gram: &Array2<f64>) -> f64 {
    let n = gram.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut v = Array1::from_elem(n, 1.0 / (n as f64).sqrt());
    // a fixed non-symmetric start avoids landing orthogonal to the top eigenvector
    for (i, e) in v.iter_mut().enumerate() {
        *e *= 1.0 + 0.01 * (i % 7) as f64;
    }
    let mut lambda = 0.0;
    for _ in 0..500 {
        let w = gram.dot(&v);
        let norm = w.dot(&w).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let next = v.dot(&w);
        v = w / norm;
        if (next - lambda).abs() <= 1e-10 * next.abs() {
            lambda = next;
            break;
        }
        lambda = next;
    }
    lambda
}

/// Gradient descent on a quadratic given through its Gram form:
/// `f(β) = ‖R‖² − 2βᵀb + βᵀGβ`, `∇f = 2(Gβ − b)`.
pub(crate) struct QuadraticGd<'a> {
    pub gram: &'a Array2<f64>,
    pub rhs: &'a Array1<f64>,
    pub target_sq: f64,
}

impl QuadraticGd<'_> {
    pub fn objective(&self, beta: &Array1<f64>) -> f64 {
        (self.target_sq - 2.0 * beta.dot(self.rhs) + beta.dot(&self.gram.dot(beta))).max(0.0)
    }

    /// Step `1 / (2.02 λmax(G))`, inside the monotone-descent region.
    pub fn default_step(&self) -> f64 {
        let lambda = max_eigenvalue(self.gram);
        if lambda > 0.0 {
            1.0 / (2.02 * lambda)
        } else {
            1.0
        }
    }

    /// Returns `(β, iterations, converged)`; `tol` bounds the gradient ∞-norm or
    /// 2-norm depending on `inf_norm`.
    pub fn run(&self, mut beta: Array1<f64>, step: f64, max_iters: usize, tol: f64, inf_norm: bool) -> Result<(Array1<f64>, usize, bool)> {
        let mut previous = self.objective(&beta);
        let mut streak = 0;
        for iter in 0..max_iters {
            let grad = (self.gram.dot(&beta) - self.rhs) * 2.0;
            let size = if inf_norm {
                grad.iter().fold(0.0f64, |m, g| m.max(g.abs()))
            } else {
                grad.dot(&grad).sqrt()
            };
            if !size.is_finite() {
                return Err(Error::Numeric(format!(
                    "gradient became non-finite at iteration {iter}; use a smaller learning rate"
                )));
            }
            if size < tol {
                return Ok((beta, iter, true));
            }
            beta.scaled_add(-step, &grad);
            let current = self.objective(&beta);
            if current > previous {
                streak += 1;
                if streak >= DIVERGENCE_STREAK {
                    return Err(Error::Numeric(format!(
                        "objective increased for {DIVERGENCE_STREAK} consecutive iterations (learning rate {step:e}); use a smaller learning rate"
                    )));
                }
            } else {
                streak = 0;
            }
            previous = current;
        }
        Ok((beta, max_iters, false))
    }
}

/// Least squares `min ‖R − Xβ‖²` by gradient descent from `β = 0`.
pub fn solve_ols(x: ArrayView2<f64>, r: ArrayView1<f64>, config: &OlsConfig) -> Result<OlsSolution> {
    check_shapes(x, r)?;
    check_finite(x, r)?;
    let gram = x.t().dot(&x);
    let rhs = x.t().dot(&r);
    let problem = QuadraticGd {
        gram: &gram,
        rhs: &rhs,
        target_sq: r.dot(&r),
    };
    let step = config.learning_rate.unwrap_or_else(|| problem.default_step());
    let (beta, iterations, converged) =
        problem.run(Array1::zeros(x.ncols()), step, config.max_iters, config.tol, false)?;
    if !converged {
        log::warn!("least squares stopped after {iterations} iterations without reaching tolerance {}", config.tol);
    }
    let fitted = x.dot(&beta);
    let residual = (&r - &fitted).mapv(|e| e * e).sum();
    Ok(OlsSolution {
        beta,
        residual,
        iterations,
        converged,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoSolution {
    pub beta: Array1<f64>,
    pub sweeps: usize,
    pub converged: bool,
}

pub fn lasso_objective(x: ArrayView2<f64>, r: ArrayView1<f64>, beta: &Array1<f64>, lambda: f64) -> f64 {
    let resid = &r - &x.dot(beta);
    resid.dot(&resid) + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
}

fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

/// `min ‖R − Xβ‖² + λ‖β‖₁` by cyclic coordinate descent from `β = 0`.
pub fn solve_lasso(x: ArrayView2<f64>, r: ArrayView1<f64>, lambda: f64) -> Result<LassoSolution> {
    solve_lasso_with_history(x, r, lambda, None)
}

/// As [`solve_lasso`], optionally recording the objective after every sweep.
pub fn solve_lasso_with_history(
    x: ArrayView2<f64>,
    r: ArrayView1<f64>,
    lambda: f64,
    mut history: Option<&mut Vec<f64>>,
) -> Result<LassoSolution> {
    check_shapes(x, r)?;
    check_finite(x, r)?;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidInput(format!("λ must be finite and non-negative, got {lambda}")));
    }
    let n = x.ncols();
    let col_sq: Vec<f64> = x.columns().into_iter().map(|c| c.dot(&c)).collect();
    let mut beta = Array1::<f64>::zeros(n);
    let mut resid = r.to_owned();
    let half = lambda / 2.0;
    if let Some(h) = history.as_deref_mut() {
        h.push(lasso_objective(x, r, &beta, lambda));
    }
    for sweep in 1..=LASSO_MAX_SWEEPS {
        let mut max_change = 0.0f64;
        for j in 0..n {
            if col_sq[j] == 0.0 {
                continue;
            }
            let col = x.column(j);
            let old = beta[j];
            let rho = col.dot(&resid) + col_sq[j] * old;
            let new = soft_threshold(rho, half) / col_sq[j];
            if new != old {
                resid.scaled_add(old - new, &col);
                beta[j] = new;
                max_change = max_change.max((new - old).abs());
            }
        }
        if let Some(h) = history.as_deref_mut() {
            h.push(lasso_objective(x, r, &beta, lambda));
        }
        if max_change < LASSO_TOL {
            return Ok(LassoSolution {
                beta,
                sweeps: sweep,
                converged: true,
            });
        }
    }
    log::warn!("coordinate descent hit the sweep cap at λ = {lambda}");
    Ok(LassoSolution {
        beta,
        sweeps: LASSO_MAX_SWEEPS,
        converged: false,
    })
}

/// `size` log-spaced values spanning four decades below `2‖XᵀR‖∞`, the smallest
/// λ at which the LASSO solution is identically zero.
pub fn default_lambda_grid(x: ArrayView2<f64>, r: ArrayView1<f64>, size: usize) -> Vec<f64> {
    let lambda_max = 2.0 * x.t().dot(&r).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if lambda_max == 0.0 || size == 0 {
        return vec![0.0];
    }
    if size == 1 {
        return vec![lambda_max];
    }
    (0..size)
        .map(|t| lambda_max * 10f64.powf(-4.0 * t as f64 / (size - 1) as f64))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LambdaSelection {
    pub lambda: f64,
    /// `(λ, mean held-out squared error)` in ascending λ order.
    pub cv_errors: Vec<(f64, f64)>,
}

/// Picks λ by k-fold cross-validation over the rows; ties go to the smallest λ.
pub fn select_lambda_cv(
    x: ArrayView2<f64>,
    r: ArrayView1<f64>,
    lambda_grid: &[f64],
    folds: usize,
    seed: &SeedSpec,
) -> Result<LambdaSelection> {
    check_shapes(x, r)?;
    if lambda_grid.is_empty() {
        return Err(Error::InvalidInput("λ grid is empty".into()));
    }
    if let Some(bad) = lambda_grid.iter().find(|l| !(**l >= 0.0) || !l.is_finite()) {
        return Err(Error::InvalidInput(format!("λ grid contains invalid value {bad}")));
    }
    if folds < 2 {
        return Err(Error::InvalidInput("cross-validation needs at least 2 folds".into()));
    }
    let m = x.nrows();
    if m < folds {
        return Err(Error::InvalidInput(format!("{m} rows cannot be split into {folds} folds")));
    }
    let mut grid = lambda_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    let assignment = kfold_assignment(m, folds, seed);
    let splits: Vec<(Vec<usize>, Vec<usize>)> = (0..folds)
        .map(|k| {
            let (held, kept): (Vec<usize>, Vec<usize>) = (0..m).partition(|&row| assignment[row] == k);
            (kept, held)
        })
        .collect();

    let mut cv_errors = Vec::with_capacity(grid.len());
    for &lambda in &grid {
        let mut total = 0.0;
        for (kept, held) in &splits {
            let x_fit = x.select(Axis(0), kept);
            let r_fit = r.select(Axis(0), kept);
            let fit = solve_lasso(x_fit.view(), r_fit.view(), lambda)?;
            let pred = x.select(Axis(0), held).dot(&fit.beta);
            let err = (&r.select(Axis(0), held) - &pred).mapv(|e| e * e).mean().unwrap_or(0.0);
            total += err;
        }
        cv_errors.push((lambda, total / folds as f64));
    }
    let mut best = cv_errors[0];
    for &(lambda, err) in &cv_errors[1..] {
        if err < best.1 {
            best = (lambda, err);
        }
    }
    Ok(LambdaSelection {
        lambda: best.0,
        cv_errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::{Rng, SeedableRng};

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
    }

    /// Independent oracle: normal equations solved by Cholesky in nalgebra.
    fn normal_equations(x: &Array2<f64>, r: &Array1<f64>) -> Vec<f64> {
        let xm = nalgebra::DMatrix::from_row_slice(x.nrows(), x.ncols(), x.as_slice().unwrap());
        let rv = nalgebra::DVector::from_column_slice(r.as_slice().unwrap());
        let gram = xm.transpose() * &xm;
        let rhs = xm.transpose() * rv;
        gram.cholesky().unwrap().solve(&rhs).iter().copied().collect()
    }

    #[test]
    fn ols_identity() {
        let x = Array2::<f64>::eye(2);
        let r = array![3.0, -1.0];
        let sol = solve_ols(x.view(), r.view(), &OlsConfig::default()).unwrap();
        assert_abs_diff_eq!(sol.beta[0], 3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.beta[1], -1.0, epsilon = 1e-9);
        assert!(sol.converged);
    }

    #[test]
    fn ols_zero_targets() {
        let x = random_matrix(10, 4, 1);
        let sol = solve_ols(x.view(), Array1::zeros(10).view(), &OlsConfig::default()).unwrap();
        assert!(sol.beta.iter().all(|b| *b == 0.0));
    }

    #[test]
    fn ols_matches_normal_equations() {
        let x = random_matrix(60, 20, 2);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let r = Array1::from_shape_fn(60, |_| rng.random_range(-2.0..2.0));
        let sol = solve_ols(x.view(), r.view(), &OlsConfig::default()).unwrap();
        let oracle = normal_equations(&x, &r);
        for (a, b) in sol.beta.iter().zip(&oracle) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-6);
        }
    }

    #[test]
    fn ols_detects_divergence() {
        let x = random_matrix(30, 5, 4);
        let r = Array1::ones(30);
        let config = OlsConfig {
            learning_rate: Some(10.0),
            ..OlsConfig::default()
        };
        assert!(matches!(solve_ols(x.view(), r.view(), &config), Err(Error::Numeric(_))));
    }

    #[test]
    fn lasso_scalar_case() {
        // minimize (3 − β)² + 2|β|: a fine scalar search agrees with β = 2
        let search = (0..=60_000)
            .map(|k| -1.0 + k as f64 * 1e-4)
            .min_by(|a, b| {
                let f = |t: f64| (3.0 - t).powi(2) + 2.0 * t.abs();
                f(*a).total_cmp(&f(*b))
            })
            .unwrap();
        let sol = solve_lasso(array![[1.0]].view(), array![3.0].view(), 2.0).unwrap();
        assert_abs_diff_eq!(sol.beta[0], search, epsilon = 1e-4);
        assert_abs_diff_eq!(sol.beta[0], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn lasso_without_penalty_is_least_squares() {
        let x = random_matrix(50, 10, 5);
        let r = Array1::from_shape_fn(50, |i| (i as f64 * 0.37).sin());
        let lasso = solve_lasso(x.view(), r.view(), 0.0).unwrap();
        let ols = solve_ols(x.view(), r.view(), &OlsConfig::default()).unwrap();
        for (a, b) in lasso.beta.iter().zip(ols.beta.iter()) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-6);
        }
    }

    #[test]
    fn lasso_is_zero_above_lambda_max() {
        let x = random_matrix(40, 8, 6);
        let r = Array1::from_shape_fn(40, |i| (i % 3) as f64 - 1.0);
        let lambda_max = 2.0 * x.t().dot(&r).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let sol = solve_lasso(x.view(), r.view(), lambda_max).unwrap();
        assert!(sol.beta.iter().all(|b| *b == 0.0));
        // subgradient optimality at zero: |2 X_jᵀ R| ≤ λ for every coordinate
        for g in x.t().dot(&r) {
            assert!(2.0 * g.abs() <= lambda_max + 1e-12);
        }
        let below = solve_lasso(x.view(), r.view(), 0.9 * lambda_max).unwrap();
        assert!(below.beta.iter().any(|b| *b != 0.0));
    }

    #[test]
    fn lasso_objective_never_increases() {
        let x = random_matrix(30, 60, 7);
        let r = Array1::from_shape_fn(30, |i| (i as f64).cos());
        let mut history = Vec::new();
        solve_lasso_with_history(x.view(), r.view(), 0.5, Some(&mut history)).unwrap();
        assert!(history.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn lasso_rejects_bad_input() {
        let x = array![[1.0, f64::NAN]];
        assert!(solve_lasso(x.view(), array![1.0].view(), 1.0).is_err());
        assert!(solve_lasso(array![[1.0]].view(), array![1.0].view(), -1.0).is_err());
    }

    #[test]
    fn cv_singleton_and_duplicates() {
        let x = random_matrix(20, 4, 8);
        let r = Array1::from_shape_fn(20, |i| i as f64 / 10.0);
        let seed = SeedSpec::new(1);
        assert_eq!(select_lambda_cv(x.view(), r.view(), &[0.0], 5, &seed).unwrap().lambda, 0.0);
        let sel = select_lambda_cv(x.view(), r.view(), &[0.1, 0.1, 1.0, 0.1], 5, &seed).unwrap();
        assert_eq!(sel.cv_errors.len(), 2);
        assert!(select_lambda_cv(x.view(), r.view(), &[], 5, &seed).is_err());
        let tiny = random_matrix(4, 2, 9);
        assert!(select_lambda_cv(tiny.view(), Array1::zeros(4).view(), &[0.1], 5, &seed).is_err());
    }

    #[test]
    fn default_grid_spans_four_decades() {
        let x = random_matrix(20, 4, 10);
        let r = Array1::ones(20);
        let grid = default_lambda_grid(x.view(), r.view(), 9);
        assert_eq!(grid.len(), 9);
        assert_abs_diff_eq!(grid[0] / grid[8], 1e4, epsilon = 1e-6);
    }

    #[test]
    fn power_iteration_matches_known_spectrum() {
        let g = array![[4.0, 1.0], [1.0, 3.0]];
        let expected = (7.0 + 5f64.sqrt()) / 2.0;
        assert_abs_diff_eq!(max_eigenvalue(&g), expected, epsilon = 1e-8);
    }
}
