//! GDP regression on flow features: OLS, log-response GLM, Ridge, LASSO,
//! collinearity diagnostics and residual diagnostics.

mod diagnostics;
mod ols;
mod regularized;

use std::collections::BTreeSet;

use indexmap::IndexMap;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CityId, FeatureTable, RegionDataset, FEATURE_NAMES};

pub use diagnostics::{diagnostics, DiagnosticsBundle};
pub use ols::{fit_log_glm, fit_ols, standardize_coefficients, vif};
pub use regularized::{
    calibrate_lambda, fit_lasso, fit_ridge, lasso_lambda_max, lasso_objective_trace, Calibration, Penalty,
    LASSO_MAX_SWEEPS, LASSO_TOL,
};

/// Predictor matrix (without intercept column) plus response.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignMatrix {
    names: Vec<String>,
    x: DMatrix<f64>,
    y: DVector<f64>,
    /// Observation labels, e.g. `city/year`. Same length as `y`.
    labels: Vec<String>,
}

impl DesignMatrix {
    pub fn new(names: Vec<String>, x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        let labels = (0..y.len()).map(|i| i.to_string()).collect();
        Self::with_labels(names, x, y, labels)
    }

    pub fn with_labels(
        names: Vec<String>,
        x: DMatrix<f64>,
        y: DVector<f64>,
        labels: Vec<String>,
    ) -> Result<Self> {
        if names.len() != x.ncols() {
            return Err(Error::InvalidArgument(format!(
                "{} names for {} columns",
                names.len(),
                x.ncols()
            )));
        }
        if y.len() != x.nrows() || labels.len() != y.len() {
            return Err(Error::InvalidArgument(format!(
                "response length {} does not match {} rows",
                y.len(),
                x.nrows()
            )));
        }
        let unique: BTreeSet<&String> = names.iter().collect();
        if unique.len() != names.len() {
            return Err(Error::InvalidArgument("predictor names must be unique".into()));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("design contains non-finite values".into()));
        }
        Ok(DesignMatrix { names, x, y, labels })
    }

    /// Row-major convenience constructor.
    pub fn from_rows(names: &[&str], rows: &[Vec<f64>], y: &[f64]) -> Result<Self> {
        let p = names.len();
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::InvalidArgument("ragged rows".into()));
        }
        let x = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
        Self::new(
            names.iter().map(|s| s.to_string()).collect(),
            x,
            DVector::from_row_slice(y),
        )
    }

    /// GDP on the eight flow features. Rows with an undefined in/out ratio or
    /// without a GDP record are skipped and returned separately.
    pub fn from_features(
        table: &FeatureTable,
        dataset: &RegionDataset,
    ) -> Result<(Self, Vec<(CityId, i32)>)> {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        let mut labels = Vec::new();
        let mut excluded = Vec::new();
        for row in &table.rows {
            match (row.values(), dataset.gdp_of(&row.city, row.year)) {
                (Some(v), Some(g)) => {
                    rows.push(v);
                    y.push(g);
                    labels.push(format!("{}/{}", row.city, row.year));
                }
                _ => excluded.push((row.city.clone(), row.year)),
            }
        }
        let x = DMatrix::from_fn(rows.len(), 8, |i, j| rows[i][j]);
        let design = Self::with_labels(
            FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            x,
            DVector::from_vec(y),
            labels,
        )?;
        Ok((design, excluded))
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn n_obs(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_predictors(&self) -> usize {
        self.x.ncols()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.x.column(j).iter().copied().collect()
    }

    /// Same predictors with a different response.
    pub fn with_response(&self, y: DVector<f64>) -> Result<Self> {
        Self::with_labels(self.names.clone(), self.x.clone(), y, self.labels.clone())
    }

    /// Predictor `k` regressed on the remaining predictors.
    pub fn auxiliary(&self, k: usize) -> Result<Self> {
        let keep: Vec<usize> = (0..self.n_predictors()).filter(|&j| j != k).collect();
        let x = self.x.select_columns(&keep);
        let names = keep.iter().map(|&j| self.names[j].clone()).collect();
        Self::with_labels(names, x, self.x.column(k).into_owned(), self.labels.clone())
    }

    /// Drops observation `i`.
    pub fn without_row(&self, i: usize) -> Result<Self> {
        let x = self.x.clone().remove_row(i);
        let y = self.y.clone().remove_row(i);
        let mut labels = self.labels.clone();
        labels.remove(i);
        Self::with_labels(self.names.clone(), x, y, labels)
    }

    /// Multiplies predictor `j` by `factor` and adds `shift`.
    pub fn rescale_column(&self, j: usize, factor: f64, shift: f64) -> Self {
        let mut out = self.clone();
        out.x.column_mut(j).apply(|v| *v = *v * factor + shift);
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressionMethod {
    Ols,
    #[serde(rename = "glm", alias = "log_glm")]
    LogGlm,
    Ridge,
    Lasso,
}

impl RegressionMethod {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ols" => Some(Self::Ols),
            "glm" | "log_glm" => Some(Self::LogGlm),
            "ridge" => Some(Self::Ridge),
            "lasso" => Some(Self::Lasso),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Ols => "ols",
            Self::LogGlm => "glm",
            Self::Ridge => "ridge",
            Self::Lasso => "lasso",
        }
    }
}

/// Fitted linear model. Coefficients are in original predictor units; for
/// [`RegressionMethod::LogGlm`] the response scale is `ln(y)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressionReport {
    pub method: RegressionMethod,
    pub n_obs: usize,
    pub intercept: f64,
    pub coefficients: IndexMap<String, f64>,
    pub standardized_coefficients: IndexMap<String, f64>,
    pub r_squared: f64,
    pub rmse: f64,
    /// Variance inflation factors; `inf` for perfectly collinear predictors.
    #[serde(with = "crate::report::inf_map")]
    pub vif: IndexMap<String, f64>,
    pub fitted: Vec<f64>,
    pub residuals: Vec<f64>,
    pub standardized_residuals: Vec<f64>,
    /// Hat-matrix diagonal (OLS hat matrix of the intercept plus selected predictors for LASSO).
    pub leverage: Vec<f64>,
    pub selected_features: Vec<String>,
    /// Penalty in the unnormalised `SSE + lambda * penalty` convention.
    pub lambda: Option<f64>,
    /// Coordinate-descent sweeps (LASSO only).
    pub sweeps: Option<usize>,
}

impl RegressionReport {
    pub fn slopes(&self) -> Vec<f64> {
        self.coefficients.values().copied().collect()
    }

    /// Predicts the response (on the model scale) for one row of predictors.
    pub fn predict(&self, row: &[f64]) -> f64 {
        self.intercept + self.coefficients.values().zip(row).map(|(b, x)| b * x).sum::<f64>()
    }
}

/// Per-observation quantities shared by all fit kinds.
pub(crate) struct FitSummary {
    pub r_squared: f64,
    pub rmse: f64,
    pub standardized_residuals: Vec<f64>,
}

pub(crate) fn summarize(y: &DVector<f64>, fitted: &DVector<f64>, leverage: &DVector<f64>, n_params: usize) -> FitSummary {
    let n = y.len();
    let residuals = y - fitted;
    let sse = residuals.norm_squared();
    let ybar = y.mean();
    let sst: f64 = y.iter().map(|v| (v - ybar).powi(2)).sum();
    let r_squared = if sst > 0.0 {
        (1.0 - sse / sst).clamp(0.0, 1.0)
    } else if sse == 0.0 {
        1.0
    } else {
        0.0
    };
    let dof = n.saturating_sub(n_params).max(1) as f64;
    let s = (sse / dof).sqrt();
    let standardized_residuals = residuals
        .iter()
        .zip(leverage.iter())
        .map(|(e, h)| {
            let denom = s * (1.0 - h).max(0.0).sqrt();
            if denom > 0.0 {
                e / denom
            } else {
                0.0
            }
        })
        .collect();
    FitSummary {
        r_squared,
        rmse: (sse / n as f64).sqrt(),
        standardized_residuals,
    }
}

pub(crate) fn named(names: &[String], values: impl IntoIterator<Item = f64>) -> IndexMap<String, f64> {
    names.iter().cloned().zip(values).collect()
}
