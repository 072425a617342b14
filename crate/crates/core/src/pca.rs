//! Principal components of the OD flow matrix and dominant sub-network extraction.
//!
//! Rows of the flow matrix are origins (observations) and columns are
//! destinations (features). Components come from the SVD of the centred,
//! optionally z-scored, matrix. Each component's sign is fixed so that its
//! largest-magnitude loading is positive.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CityId, FlowMatrix};
use crate::stats::{mean, sample_sd};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PcaOptions {
    /// Z-score each destination column (correlation-matrix PCA).
    pub standardize: bool,
    /// Keep intracity flows on the diagonal instead of zeroing them.
    pub include_diagonal: bool,
}

impl Default for PcaOptions {
    fn default() -> Self {
        PcaOptions {
            standardize: true,
            include_diagonal: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PcaResult {
    pub cities: Vec<String>,
    pub options: PcaOptions,
    /// `loadings[destination][component]`; columns are orthonormal.
    pub loadings: Vec<Vec<f64>>,
    /// `scores[origin][component]`, each component scaled to unit sample variance.
    pub scores: Vec<Vec<f64>>,
    /// Variance of each component's raw scores.
    pub explained_variance: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
    pub column_means: Vec<f64>,
    /// Divisor applied after centring (1 when not standardizing).
    pub column_scales: Vec<f64>,
}

impl PcaResult {
    pub fn n_components(&self) -> usize {
        self.explained_variance.len()
    }

    pub fn loading_matrix(&self) -> DMatrix<f64> {
        let (m, k) = (self.loadings.len(), self.n_components());
        DMatrix::from_fn(m, k, |i, j| self.loadings[i][j])
    }

    /// Centred (and scaled) data rebuilt from the kept components.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let n = self.scores.len();
        let k = self.n_components();
        let raw = DMatrix::from_fn(n, k, |i, j| self.scores[i][j] * self.explained_variance[j].sqrt());
        raw * self.loading_matrix().transpose()
    }
}

/// Centred (and optionally z-scored) flow matrix in sorted city order.
pub fn prepared_matrix(flows: &FlowMatrix, options: PcaOptions) -> Result<(Vec<CityId>, DMatrix<f64>, Vec<f64>, Vec<f64>)> {
    let cities = flows.cities();
    let n = cities.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!("{n} cities in flow matrix")));
    }
    let mut f = flows.to_dense(&cities);
    if !options.include_diagonal {
        f.fill_diagonal(0.0);
    }
    let mut means = Vec::with_capacity(n);
    let mut scales = Vec::with_capacity(n);
    for j in 0..n {
        let col: Vec<f64> = f.column(j).iter().copied().collect();
        let mu = mean(&col);
        let scale = if options.standardize {
            let sd = sample_sd(&col);
            if !(sd > 0.0) {
                return Err(Error::ZeroVarianceColumn(cities[j].to_string()));
            }
            sd
        } else {
            1.0
        };
        f.column_mut(j).apply(|v| *v = (*v - mu) / scale);
        means.push(mu);
        scales.push(scale);
    }
    Ok((cities, f, means, scales))
}

pub fn pca_flows(flows: &FlowMatrix, options: PcaOptions) -> Result<PcaResult> {
    let (cities, x, column_means, column_scales) = prepared_matrix(flows, options)?;
    let (n, m) = x.shape();
    let k = (n - 1).min(m);
    let svd = x.clone().svd(true, true);
    let u = svd.u.as_ref().expect("left singular vectors requested");
    let vt = svd.v_t.as_ref().expect("right singular vectors requested");

    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]).then(a.cmp(&b)));
    order.truncate(k);

    let dof = (n - 1) as f64;
    let total_ss: f64 = x.iter().map(|v| v * v).sum();
    let mut loadings = vec![vec![0.0; k]; m];
    let mut scores = vec![vec![0.0; k]; n];
    let mut explained_variance = Vec::with_capacity(k);
    let mut explained_variance_ratio = Vec::with_capacity(k);
    for (c, &idx) in order.iter().enumerate() {
        let s = svd.singular_values[idx];
        let phi: Vec<f64> = vt.row(idx).iter().copied().collect();
        let pivot = (0..m)
            .max_by(|&a, &b| phi[a].abs().total_cmp(&phi[b].abs()).then(b.cmp(&a)))
            .unwrap_or(0);
        let sign = if phi[pivot] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..m {
            loadings[j][c] = sign * phi[j];
        }
        // Raw scores are u * s with sample sd s / sqrt(n - 1); standardized scores are u * sqrt(n - 1).
        let has_variance = s > 1e-12 * total_ss.sqrt().max(f64::MIN_POSITIVE);
        for i in 0..n {
            scores[i][c] = if has_variance { sign * u[(i, idx)] * dof.sqrt() } else { 0.0 };
        }
        explained_variance.push(s * s / dof);
        explained_variance_ratio.push(if total_ss > 0.0 { s * s / total_ss } else { 0.0 });
    }

    Ok(PcaResult {
        cities: cities.iter().map(|c| c.to_string()).collect(),
        options,
        loadings,
        scores,
        explained_variance,
        explained_variance_ratio,
        column_means,
        column_scales,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    /// Compare `|value|` with the threshold.
    #[default]
    Magnitude,
    /// Compare the signed value with the threshold.
    Signed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubNetworkEdge {
    pub origin: String,
    pub destination: String,
    pub flow: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubNetwork {
    /// 1-based component number.
    pub component_index: usize,
    pub loading_threshold: f64,
    pub score_threshold: f64,
    pub mode: ThresholdMode,
    pub origins: Vec<String>,
    pub destinations: Vec<String>,
    pub edges: Vec<SubNetworkEdge>,
}

pub const DEFAULT_LOADING_THRESHOLD: f64 = 0.3;
pub const DEFAULT_SCORE_THRESHOLD: f64 = 1.0;

/// Origins with a strong component score linked to destinations with a strong
/// loading, keeping only pairs with positive observed flow.
pub fn extract_subnetwork(
    pca: &PcaResult,
    flows: &FlowMatrix,
    component: usize,
    loading_threshold: f64,
    score_threshold: f64,
    mode: ThresholdMode,
) -> Result<SubNetwork> {
    if component == 0 || component > pca.n_components() {
        return Err(Error::InvalidArgument(format!(
            "component {component} outside 1..={}",
            pca.n_components()
        )));
    }
    let c = component - 1;
    let passes = |v: f64, t: f64| match mode {
        ThresholdMode::Magnitude => v.abs() > t,
        ThresholdMode::Signed => v > t,
    };
    let destinations: Vec<String> = pca
        .cities
        .iter()
        .zip(&pca.loadings)
        .filter(|(_, l)| passes(l[c], loading_threshold))
        .map(|(city, _)| city.clone())
        .collect();
    let origins: Vec<String> = pca
        .cities
        .iter()
        .zip(&pca.scores)
        .filter(|(_, s)| passes(s[c], score_threshold))
        .map(|(city, _)| city.clone())
        .collect();
    let mut edges = Vec::new();
    for o in &origins {
        for d in &destinations {
            if o == d && !pca.options.include_diagonal {
                continue;
            }
            let flow = flows.volume(&CityId::new(o.as_str())?, &CityId::new(d.as_str())?);
            if flow > 0.0 {
                edges.push(SubNetworkEdge {
                    origin: o.clone(),
                    destination: d.clone(),
                    flow,
                });
            }
        }
    }
    Ok(SubNetwork {
        component_index: component,
        loading_threshold,
        score_threshold,
        mode,
        origins,
        destinations,
        edges,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::VehicleClass;

    fn matrix(values: &[&[f64]]) -> FlowMatrix {
        let n = values.len();
        let ids: Vec<CityId> = (0..n).map(|i| CityId::new(format!("c{i}")).unwrap()).collect();
        let m = DMatrix::from_fn(n, n, |i, j| values[i][j]);
        FlowMatrix::from_dense(2014, VehicleClass::CarsBuses, &ids, &m)
    }

    #[test]
    fn zero_variance_column_named() {
        let f = matrix(&[&[0.0, 1.0, 5.0], &[2.0, 0.0, 5.0], &[3.0, 1.0, 0.0]]);
        // Column c2 holds 5, 5 and a zeroed diagonal, so it varies; c1 holds 1, 0 (diag), 1.
        assert!(pca_flows(&f, PcaOptions::default()).is_ok());
        let g = matrix(&[&[0.0, 4.0, 5.0], &[2.0, 0.0, 5.0], &[3.0, 4.0, 0.0]]);
        let opts = PcaOptions {
            standardize: true,
            include_diagonal: true,
        };
        let g = {
            let mut g = g;
            g.set("c1", "c1", 4.0);
            g
        };
        match pca_flows(&g, opts) {
            Err(Error::ZeroVarianceColumn(c)) => assert_eq!(c, "c1"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn vacuous_thresholds_give_empty_subnetwork() {
        let f = matrix(&[
            &[0.0, 9.0, 1.0, 4.0],
            &[3.0, 0.0, 7.0, 2.0],
            &[5.0, 1.0, 0.0, 8.0],
            &[2.0, 6.0, 3.0, 0.0],
        ]);
        let p = pca_flows(&f, PcaOptions::default()).unwrap();
        let s = extract_subnetwork(&p, &f, 1, 10.0, 100.0, ThresholdMode::Magnitude).unwrap();
        assert!(s.origins.is_empty() && s.destinations.is_empty() && s.edges.is_empty());
        assert!(extract_subnetwork(&p, &f, 4, 0.3, 1.0, ThresholdMode::Magnitude).is_err());
    }

    #[test]
    fn sign_convention_is_deterministic() {
        let f = matrix(&[
            &[0.0, 9.0, 1.0, 4.0],
            &[3.0, 0.0, 7.0, 2.0],
            &[5.0, 1.0, 0.0, 8.0],
            &[2.0, 6.0, 3.0, 0.0],
        ]);
        let a = pca_flows(&f, PcaOptions::default()).unwrap();
        let b = pca_flows(&f, PcaOptions::default()).unwrap();
        assert_eq!(a, b);
        for c in 0..a.n_components() {
            let col: Vec<f64> = a.loadings.iter().map(|r| r[c]).collect();
            let max = col.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
            assert!(max > 0.0);
        }
    }
}
