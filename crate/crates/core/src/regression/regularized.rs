//! Ridge and LASSO on internally z-scored predictors with a centred response.
//!
//! Penalties follow the unnormalised convention `SSE + lambda * penalty`, with
//! the penalty applied to slopes on the standardized scale (population sd).
//! LASSO coordinate descent runs on `1/(2n) * SSE + alpha * |b|_1`, so
//! `alpha = lambda / (2n)`. Reported coefficients are back-transformed to
//! original predictor units; the intercept is never penalized.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{named, summarize, DesignMatrix, RegressionMethod, RegressionReport};
use crate::error::{Error, Result};
use crate::linalg::{least_squares, with_intercept};
use crate::stats::{mean, population_sd, sample_sd};

/// Convergence threshold on the largest coordinate change per sweep, relative to the response sd.
pub const LASSO_TOL: f64 = 1e-8;
pub const LASSO_MAX_SWEEPS: usize = 100_000;

struct Standardized {
    z: DMatrix<f64>,
    means: Vec<f64>,
    sds: Vec<f64>,
    y_mean: f64,
    y_centered: DVector<f64>,
}

fn standardize(x: &DesignMatrix) -> Result<Standardized> {
    let (n, p) = (x.n_obs(), x.n_predictors());
    let mut means = Vec::with_capacity(p);
    let mut sds = Vec::with_capacity(p);
    for j in 0..p {
        let col = x.column(j);
        let sd = population_sd(&col);
        if !(sd > 0.0) {
            return Err(Error::ZeroVariancePredictor(x.names()[j].clone()));
        }
        means.push(mean(&col));
        sds.push(sd);
    }
    let z = DMatrix::from_fn(n, p, |i, j| (x.x()[(i, j)] - means[j]) / sds[j]);
    let y_mean = x.y().mean();
    let y_centered = x.y().map(|v| v - y_mean);
    Ok(Standardized {
        z,
        means,
        sds,
        y_mean,
        y_centered,
    })
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda must be a finite non-negative number, got {lambda}")));
    }
    Ok(())
}

/// Assembles a report from slopes on the standardized scale.
fn build_report(
    x: &DesignMatrix,
    st: &Standardized,
    slopes_std: &[f64],
    leverage: DVector<f64>,
    n_params: usize,
    method: RegressionMethod,
    lambda: f64,
    sweeps: Option<usize>,
) -> Result<RegressionReport> {
    let p = x.n_predictors();
    let slopes: Vec<f64> = (0..p).map(|j| slopes_std[j] / st.sds[j]).collect();
    let intercept = st.y_mean - (0..p).map(|j| slopes[j] * st.means[j]).sum::<f64>();
    let fitted = x.x() * DVector::from_row_slice(&slopes) + DVector::from_element(x.n_obs(), intercept);
    let summary = summarize(x.y(), &fitted, &leverage, n_params);
    let sd_y = sample_sd(x.y().as_slice());
    let standardized = (0..p).map(|j| {
        if sd_y > 0.0 {
            slopes[j] * sample_sd(&x.column(j)) / sd_y
        } else {
            0.0
        }
    });
    let vif_values = if p >= 2 { super::vif(x)? } else { Vec::new() };
    let residuals = x.y() - &fitted;
    Ok(RegressionReport {
        method,
        n_obs: x.n_obs(),
        intercept,
        coefficients: named(x.names(), slopes.iter().copied()),
        standardized_coefficients: named(x.names(), standardized),
        r_squared: summary.r_squared,
        rmse: summary.rmse,
        vif: named(x.names(), vif_values),
        fitted: fitted.iter().copied().collect(),
        residuals: residuals.iter().copied().collect(),
        standardized_residuals: summary.standardized_residuals,
        leverage: leverage.iter().copied().collect(),
        selected_features: x
            .names()
            .iter()
            .zip(&slopes)
            .filter(|(_, b)| **b != 0.0)
            .map(|(n, _)| n.clone())
            .collect(),
        lambda: Some(lambda),
        sweeps,
    })
}

/// Ridge regression minimising `SSE + lambda * sum(b_std^2)`.
///
/// Solved as least squares on the augmented system `[Z; sqrt(lambda) I] b = [y_c; 0]`,
/// which reduces to the OLS QR solve at `lambda = 0`.
pub fn fit_ridge(x: &DesignMatrix, lambda: f64) -> Result<RegressionReport> {
    check_lambda(lambda)?;
    let (n, p) = (x.n_obs(), x.n_predictors());
    if n < 2 {
        return Err(Error::InsufficientData(format!("{n} observations")));
    }
    if lambda == 0.0 && n <= p + 1 {
        return Err(Error::InsufficientData(format!(
            "{n} observations for {p} predictors plus intercept"
        )));
    }
    let st = standardize(x)?;
    let root = lambda.sqrt();
    let a = DMatrix::from_fn(n + p, p, |i, j| {
        if i < n {
            st.z[(i, j)]
        } else if i - n == j {
            root
        } else {
            0.0
        }
    });
    let mut rhs = DVector::zeros(n + p);
    rhs.rows_mut(0, n).copy_from(&st.y_centered);
    let ls = least_squares(&a, &rhs, x.names())?;
    let leverage = DVector::from_iterator(n, ls.leverage.iter().take(n).map(|h| h + 1.0 / n as f64));
    let n_params = leverage.sum().round().max(1.0) as usize;
    let slopes: Vec<f64> = ls.coef.iter().copied().collect();
    build_report(x, &st, &slopes, leverage, n_params, RegressionMethod::Ridge, lambda, None)
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

struct CdProblem {
    gram: DMatrix<f64>,
    corr: DVector<f64>,
    y_ss: f64,
    alpha: f64,
}

impl CdProblem {
    fn new(st: &Standardized, lambda: f64) -> Self {
        let n = st.z.nrows() as f64;
        CdProblem {
            gram: st.z.transpose() * &st.z / n,
            corr: st.z.transpose() * &st.y_centered / n,
            y_ss: st.y_centered.norm_squared() / n,
            alpha: lambda / (2.0 * n),
        }
    }

    /// `1/(2n) * SSE + alpha * |b|_1` on the standardized problem.
    fn objective(&self, b: &DVector<f64>) -> f64 {
        let quad = 0.5 * self.y_ss - self.corr.dot(b) + 0.5 * b.dot(&(&self.gram * b));
        quad + self.alpha * b.iter().map(|v| v.abs()).sum::<f64>()
    }

    /// Cyclic coordinate descent from zero. Returns slopes, sweep count and the
    /// objective after each sweep (entry 0 is the starting point).
    fn solve(&self, tol: f64, record: bool) -> Result<(DVector<f64>, usize, Vec<f64>)> {
        let p = self.corr.len();
        let mut b = DVector::zeros(p);
        let mut trace = vec![self.objective(&b)];
        for sweep in 1..=LASSO_MAX_SWEEPS {
            let mut max_delta = 0.0f64;
            for j in 0..p {
                let gjj = self.gram[(j, j)];
                let rho = self.corr[j] - self.gram.column(j).dot(&b) + gjj * b[j];
                let new = soft_threshold(rho, self.alpha) / gjj;
                max_delta = max_delta.max((new - b[j]).abs());
                b[j] = new;
            }
            if record {
                trace.push(self.objective(&b));
            }
            if max_delta < tol {
                return Ok((b, sweep, trace));
            }
        }
        Err(Error::Unconverged {
            what: "lasso coordinate descent",
            iterations: LASSO_MAX_SWEEPS,
            trace,
        })
    }
}

fn lasso_tolerance(x: &DesignMatrix) -> f64 {
    let sd = population_sd(x.y().as_slice());
    LASSO_TOL * if sd > 0.0 { sd } else { 1.0 }
}

/// LASSO minimising `SSE + lambda * sum(|b_std|)` by cyclic coordinate descent.
pub fn fit_lasso(x: &DesignMatrix, lambda: f64) -> Result<RegressionReport> {
    check_lambda(lambda)?;
    let n = x.n_obs();
    if n < 2 {
        return Err(Error::InsufficientData(format!("{n} observations")));
    }
    let st = standardize(x)?;
    let problem = CdProblem::new(&st, lambda);
    let (b, sweeps, _) = problem.solve(lasso_tolerance(x), false)?;
    let slopes: Vec<f64> = b.iter().copied().collect();

    let active: Vec<usize> = (0..slopes.len()).filter(|&j| slopes[j] != 0.0).collect();
    let leverage = active_set_leverage(x, &active);
    build_report(x, &st, &slopes, leverage, active.len() + 1, RegressionMethod::Lasso, lambda, Some(sweeps))
}

/// Hat diagonal of the OLS fit on intercept plus the given columns.
fn active_set_leverage(x: &DesignMatrix, active: &[usize]) -> DVector<f64> {
    let n = x.n_obs();
    let uniform = DVector::from_element(n, 1.0 / n as f64);
    if active.is_empty() {
        return uniform;
    }
    let a = with_intercept(&x.x().select_columns(active));
    let names: Vec<String> = (0..a.ncols()).map(|j| j.to_string()).collect();
    least_squares(&a, x.y(), &names).map_or(uniform, |ls| ls.leverage)
}

/// Smallest `lambda` at which every LASSO slope is zero: `2 * max_j |z_j' (y - ybar)|`.
pub fn lasso_lambda_max(x: &DesignMatrix) -> Result<f64> {
    let st = standardize(x)?;
    let c = st.z.transpose() * &st.y_centered;
    Ok(2.0 * c.amax())
}

/// Objective value (normalised form) before the first sweep and after every sweep.
pub fn lasso_objective_trace(x: &DesignMatrix, lambda: f64) -> Result<Vec<f64>> {
    check_lambda(lambda)?;
    let st = standardize(x)?;
    let problem = CdProblem::new(&st, lambda);
    problem.solve(lasso_tolerance(x), true).map(|(_, _, t)| t)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Penalty {
    Ridge,
    Lasso,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub penalty: Penalty,
    pub lambda: f64,
    /// `(lambda, leave-one-out RMSE)` for every grid point, in grid order.
    pub cv_scores: Vec<(f64, f64)>,
}

/// Picks the grid `lambda` with the lowest leave-one-out RMSE; ties go to the larger `lambda`.
pub fn calibrate_lambda(x: &DesignMatrix, penalty: Penalty, grid: &[f64]) -> Result<Calibration> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("lambda grid is empty".into()));
    }
    for &l in grid {
        check_lambda(l)?;
    }
    let n = x.n_obs();
    if n < 3 {
        return Err(Error::InsufficientData(format!("{n} observations for cross-validation")));
    }
    let fit = |d: &DesignMatrix, l: f64| match penalty {
        Penalty::Ridge => fit_ridge(d, l),
        Penalty::Lasso => fit_lasso(d, l),
    };
    let folds: Vec<(DesignMatrix, Vec<f64>, f64)> = (0..n)
        .map(|i| {
            let row: Vec<f64> = x.x().row(i).iter().copied().collect();
            Ok((x.without_row(i)?, row, x.y()[i]))
        })
        .collect::<Result<_>>()?;

    let mut cv_scores = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let mut ss = 0.0;
        for (train, row, target) in &folds {
            let report = fit(train, lambda)?;
            ss += (report.predict(row) - target).powi(2);
        }
        cv_scores.push((lambda, (ss / n as f64).sqrt()));
    }

    let mut best = cv_scores[0];
    for &(lambda, score) in &cv_scores[1..] {
        let tie = (score - best.1).abs() <= 1e-12 * best.1.abs().max(f64::MIN_POSITIVE);
        if score < best.1 && !tie || tie && lambda > best.0 {
            best = (lambda, score);
        }
    }
    Ok(Calibration {
        penalty,
        lambda: best.0,
        cv_scores,
    })
}
