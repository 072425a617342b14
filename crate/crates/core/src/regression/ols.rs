use nalgebra::DVector;

use super::{named, summarize, DesignMatrix, RegressionMethod, RegressionReport};
use crate::error::{Error, Result};
use crate::linalg::{least_squares, with_intercept};
use crate::stats::sample_sd;

fn param_names(x: &DesignMatrix) -> Vec<String> {
    std::iter::once("intercept".to_string())
        .chain(x.names().iter().cloned())
        .collect()
}

/// Ordinary least squares with intercept, solved by QR.
pub fn fit_ols(x: &DesignMatrix) -> Result<RegressionReport> {
    fit_linear(x, x.y(), RegressionMethod::Ols)
}

/// OLS on `ln(y)`; R² and RMSE are on the log scale.
pub fn fit_log_glm(x: &DesignMatrix) -> Result<RegressionReport> {
    let log_y = log_response(x)?;
    fit_linear(x, &log_y, RegressionMethod::LogGlm)
}

pub(crate) fn log_response(x: &DesignMatrix) -> Result<DVector<f64>> {
    if let Some((row, &value)) = x.y().iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::NonPositiveResponse { row, value });
    }
    Ok(x.y().map(f64::ln))
}

fn fit_linear(x: &DesignMatrix, y: &DVector<f64>, method: RegressionMethod) -> Result<RegressionReport> {
    let (n, p) = (x.n_obs(), x.n_predictors());
    if n <= p + 1 {
        return Err(Error::InsufficientData(format!(
            "{n} observations for {p} predictors plus intercept"
        )));
    }
    let a = with_intercept(x.x());
    let ls = least_squares(&a, y, &param_names(x))?;
    let summary = summarize(y, &ls.fitted, &ls.leverage, p + 1);
    let slopes: Vec<f64> = ls.coef.iter().skip(1).copied().collect();
    let sd_y = sample_sd(y.as_slice());
    let standardized = (0..p).map(|j| {
        if sd_y > 0.0 {
            slopes[j] * sample_sd(&x.column(j)) / sd_y
        } else {
            0.0
        }
    });
    let vif_values = if p >= 2 { vif(x)? } else { Vec::new() };
    Ok(RegressionReport {
        method,
        n_obs: n,
        intercept: ls.coef[0],
        coefficients: named(x.names(), slopes.iter().copied()),
        standardized_coefficients: named(x.names(), standardized),
        r_squared: summary.r_squared,
        rmse: summary.rmse,
        vif: named(x.names(), vif_values),
        fitted: ls.fitted.iter().copied().collect(),
        residuals: ls.residuals.iter().copied().collect(),
        standardized_residuals: summary.standardized_residuals,
        leverage: ls.leverage.iter().copied().collect(),
        selected_features: x
            .names()
            .iter()
            .zip(&slopes)
            .filter(|(_, b)| **b != 0.0)
            .map(|(n, _)| n.clone())
            .collect(),
        lambda: None,
        sweeps: None,
    })
}

/// `b'_j = b_j * S_xj / S_y`, with `S_y` taken on the scale the report was fit on.
pub fn standardize_coefficients(report: &RegressionReport, x: &DesignMatrix) -> Result<Vec<f64>> {
    let y = match report.method {
        RegressionMethod::LogGlm => log_response(x)?,
        _ => x.y().clone(),
    };
    let sd_y = sample_sd(y.as_slice());
    if !(sd_y > 0.0) {
        return Err(Error::ZeroVariance);
    }
    x.names()
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let sd = sample_sd(&x.column(j));
            if !(sd > 0.0) {
                return Err(Error::ZeroVariancePredictor(name.clone()));
            }
            let b = report.coefficients.get(name).copied().unwrap_or(0.0);
            Ok(b * sd / sd_y)
        })
        .collect()
}

/// Variance inflation factor of each predictor: `1 / (1 - R²_k)` where `R²_k`
/// comes from regressing predictor `k` on the others (with intercept).
/// Perfect collinearity yields `f64::INFINITY`.
pub fn vif(x: &DesignMatrix) -> Result<Vec<f64>> {
    let p = x.n_predictors();
    if p < 2 {
        return Err(Error::InvalidArgument("VIF needs at least two predictors".into()));
    }
    (0..p)
        .map(|k| {
            let aux = x.auxiliary(k)?;
            let y = aux.y();
            let ybar = y.mean();
            let sst: f64 = y.iter().map(|v| (v - ybar).powi(2)).sum();
            if sst == 0.0 {
                return Err(Error::ZeroVariancePredictor(x.names()[k].clone()));
            }
            let a = with_intercept(aux.x());
            match least_squares(&a, y, &param_names(&aux)) {
                Ok(ls) => {
                    let r2 = 1.0 - ls.residuals.norm_squared() / sst;
                    Ok(if r2 >= 1.0 { f64::INFINITY } else { 1.0 / (1.0 - r2) })
                }
                Err(Error::SingularDesign { .. }) => Ok(f64::INFINITY),
                Err(e) => Err(e),
            }
        })
        .collect()
}
