use nalgebra::{DMatrix, DVector};

use super::{collect, GravityFit, GravityMethod};
use crate::error::{Error, Result};
use crate::linalg::least_squares;
use crate::model::{DistanceMatrix, FlowMatrix};

/// Least squares on `ln G_ij = ln k + X_i + X_j - beta * ln d_ij`.
///
/// Each observation row carries a 1 in the indicator column of its origin and
/// its destination. The sum-to-zero constraint is imposed by eliminating the
/// last city (`X_n = -sum of the others`), which leaves an ordinary regression
/// with intercept `ln k`.
pub fn fit_loglinear(flows: &FlowMatrix, distances: &DistanceMatrix) -> Result<GravityFit> {
    let data = collect(flows, distances, 4)?;
    let n = data.cities.len();
    let m = data.obs.len();
    let free = n - 1;
    let cols = 1 + free + 1;
    let mut a = DMatrix::zeros(m, cols);
    let mut y = DVector::zeros(m);
    for (r, o) in data.obs.iter().enumerate() {
        a[(r, 0)] = 1.0;
        for c in [o.origin, o.destination] {
            if c < free {
                a[(r, 1 + c)] += 1.0;
            } else {
                for k in 0..free {
                    a[(r, 1 + k)] -= 1.0;
                }
            }
        }
        a[(r, cols - 1)] = -o.ln_distance;
        y[r] = o.ln_flow;
    }
    let mut names = vec!["ln_k".to_string()];
    names.extend(data.cities[..free].iter().map(|c| c.to_string()));
    names.push("beta".into());
    if m < cols {
        return Err(Error::InsufficientData(format!(
            "{m} positive flows for {cols} parameters"
        )));
    }
    let ls = least_squares(&a, &y, &names)?;

    let mut x: Vec<f64> = ls.coef.rows(1, free).iter().copied().collect();
    x.push(-x.iter().sum::<f64>());
    let ybar = y.mean();
    let sst: f64 = y.iter().map(|v| (v - ybar).powi(2)).sum();
    let sse = ls.residuals.norm_squared();
    let r_squared = if sst > 0.0 { 1.0 - sse / sst } else { 1.0 };

    Ok(GravityFit {
        method: GravityMethod::LogLinear,
        beta: ls.coef[cols - 1],
        attractions: data.cities.iter().map(|c| c.to_string()).zip(x).collect(),
        ln_k: ls.coef[0],
        fit_metric: r_squared,
        excluded_zero_flows: data.excluded_zero,
        n_observations: m,
    })
}
