use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::{GravityFit, GravityMethod};
use crate::error::{Error, Result};
use crate::model::{DistanceMatrix, FlowMatrix};

/// How the flow ratio is regressed on distance.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NullRegression {
    /// `ln R_ij` on `ln d_ij`; the slope is minus a power-law exponent.
    #[default]
    LogLog,
    /// `R_ij` on `d_ij` in raw units.
    Raw,
}

/// Null-model estimate with the default log-log regression.
pub fn fit_nullmodel(flows: &FlowMatrix, distances: &DistanceMatrix) -> Result<GravityFit> {
    fit_nullmodel_with(flows, distances, NullRegression::LogLog)
}

/// Compares observed flows with the distance-free expectation
/// `G_null = W_i W_j F / N` and takes `beta` as minus the slope of the ratio
/// `G / G_null` against distance.
pub fn fit_nullmodel_with(
    flows: &FlowMatrix,
    distances: &DistanceMatrix,
    mode: NullRegression,
) -> Result<GravityFit> {
    let cities = flows.cities();
    let g = flows.to_dense(&cities);
    let n = cities.len();
    let offdiag = |i: usize, j: usize| if i == j { 0.0 } else { g[(i, j)] };

    let w: Vec<f64> = (0..n).map(|i| (0..n).map(|j| offdiag(i, j)).sum()).collect();
    let active = w.iter().filter(|v| **v > 0.0).count();
    if active < 3 {
        return Err(Error::InsufficientData(format!(
            "{active} cities with positive total flow, need at least 3"
        )));
    }
    let total: f64 = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| offdiag(i, j)).sum();
    let w_sum: f64 = w.iter().sum();
    let w_sq: f64 = w.iter().map(|v| v * v).sum();
    let norm = w_sum * w_sum - w_sq;

    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut excluded = 0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let gij = g[(i, j)];
            if !(gij > 0.0) {
                excluded += 1;
                continue;
            }
            let km = distances
                .get(&cities[i], &cities[j])
                .ok_or_else(|| Error::InsufficientData(format!("no distance for {}-{}", cities[i], cities[j])))?;
            if !(km > 0.0) {
                return Err(Error::DomainError(format!("distance {}-{} is {km}", cities[i], cities[j])));
            }
            let expected = w[i] * w[j] * total / norm;
            let ratio = gij / expected;
            match mode {
                NullRegression::LogLog => {
                    xs.push(km.ln());
                    ys.push(ratio.ln());
                }
                NullRegression::Raw => {
                    xs.push(km);
                    ys.push(ratio);
                }
            }
        }
    }

    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if !(sxx > 1e-24 * m * (1.0 + mx * mx)) {
        return Err(Error::InsufficientVariation("distances of positive flows".into()));
    }
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    // A ratio that is constant up to rounding carries no distance signal.
    let degenerate = syy <= 1e-24 * m * (1.0 + my * my);
    let (slope, r_squared) = if degenerate {
        (0.0, 0.0)
    } else {
        let slope = sxy / sxx;
        (slope, (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0))
    };

    Ok(GravityFit {
        method: GravityMethod::NullModel,
        beta: -slope,
        attractions: IndexMap::new(),
        ln_k: my - slope * mx,
        fit_metric: r_squared,
        excluded_zero_flows: excluded,
        n_observations: xs.len(),
    })
}
