use serde::{Deserialize, Serialize};

use super::{DesignMatrix, RegressionReport};
use crate::linalg::{least_squares, with_intercept};
use crate::stats::{normal_quantile, pearson};

/// Data behind the usual four residual plots plus the predictor/residual correlogram.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsBundle {
    /// `(fitted, residual)` per observation.
    pub residual_vs_fitted: Vec<(f64, f64)>,
    /// `(theoretical normal quantile, sorted standardized residual)`.
    pub normal_qq: Vec<(f64, f64)>,
    /// `(fitted, sqrt(|standardized residual|))`.
    pub scale_location: Vec<(f64, f64)>,
    pub leverage: Vec<f64>,
    /// Predictor names followed by `residual`.
    pub correlation_labels: Vec<String>,
    /// Pearson correlations; `None` where a series is constant.
    pub correlation: Vec<Vec<Option<f64>>>,
}

pub fn diagnostics(report: &RegressionReport, x: &DesignMatrix) -> DiagnosticsBundle {
    let n = report.residuals.len();
    let residual_vs_fitted = report
        .fitted
        .iter()
        .copied()
        .zip(report.residuals.iter().copied())
        .collect();

    let mut sorted = report.standardized_residuals.clone();
    sorted.sort_by(f64::total_cmp);
    let normal_qq = sorted
        .into_iter()
        .enumerate()
        .map(|(i, r)| (normal_quantile((i as f64 + 0.5) / n as f64), r))
        .collect();

    let scale_location = report
        .fitted
        .iter()
        .zip(&report.standardized_residuals)
        .map(|(f, r)| (*f, r.abs().sqrt()))
        .collect();

    let a = with_intercept(x.x());
    let names: Vec<String> = (0..a.ncols()).map(|j| j.to_string()).collect();
    let leverage = least_squares(&a, x.y(), &names)
        .map(|ls| ls.leverage.iter().copied().collect())
        .unwrap_or_else(|_| report.leverage.clone());

    let mut series: Vec<Vec<f64>> = (0..x.n_predictors()).map(|j| x.column(j)).collect();
    series.push(report.residuals.clone());
    let mut correlation_labels = x.names().to_vec();
    correlation_labels.push("residual".into());
    let k = series.len();
    let correlation = (0..k)
        .map(|i| (0..k).map(|j| pearson(&series[i], &series[j])).collect())
        .collect();

    DiagnosticsBundle {
        residual_vs_fitted,
        normal_qq,
        scale_location,
        leverage,
        correlation_labels,
        correlation,
    }
}
