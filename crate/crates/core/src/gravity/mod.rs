//! Gravity-model calibration: `G_ij = k * P_i * P_j / d_ij^beta`.
//!
//! Three estimators are provided: least squares on the log-linear form with
//! city indicator columns, a MINIMAX linear program on the same residuals, and
//! the distance-free null model. Attractions are reported as `X_i = ln P_i`
//! under the gauge `sum_i X_i = 0`, with `ln k` absorbing the offset.
//! Intracity (diagonal) flows never enter a gravity fit.

mod generate;
mod loglinear;
mod minimax;
mod nullmodel;
pub mod simplex;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CityId, DistanceMatrix, FlowMatrix};

pub use generate::generate_gravity;
pub use loglinear::fit_loglinear;
pub use minimax::{fit_minimax, minimax_lp};
pub use nullmodel::{fit_nullmodel, fit_nullmodel_with, NullRegression};
pub use simplex::{solve_lp, Constraint, ConstraintKind, LinearProgram, LpSolution, LpStatus};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum GravityMethod {
    #[serde(rename = "loglinear")]
    LogLinear,
    #[serde(rename = "minimax")]
    Minimax,
    #[serde(rename = "null")]
    NullModel,
}

impl GravityMethod {
    pub const ALL: [GravityMethod; 3] = [GravityMethod::LogLinear, GravityMethod::Minimax, GravityMethod::NullModel];

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "loglinear" => Some(Self::LogLinear),
            "minimax" => Some(Self::Minimax),
            "null" | "nullmodel" => Some(Self::NullModel),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::LogLinear => "loglinear",
            Self::Minimax => "minimax",
            Self::NullModel => "null",
        }
    }

    pub fn fit(self, flows: &FlowMatrix, distances: &DistanceMatrix) -> Result<GravityFit> {
        match self {
            Self::LogLinear => fit_loglinear(flows, distances),
            Self::Minimax => fit_minimax(flows, distances),
            Self::NullModel => fit_nullmodel(flows, distances),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GravityFit {
    pub method: GravityMethod,
    /// Distance-decay exponent.
    pub beta: f64,
    /// `X_i = ln P_i`, normalised to sum to zero. Empty for the null model.
    pub attractions: IndexMap<String, f64>,
    /// `ln k` under the same normalisation.
    pub ln_k: f64,
    /// R² (log-linear, null model) or the maximum absolute deviation `M` (MINIMAX).
    pub fit_metric: f64,
    pub excluded_zero_flows: usize,
    pub n_observations: usize,
}

impl GravityFit {
    /// Model flow `exp(ln_k + X_i + X_j - beta * ln d)`.
    pub fn predict(&self, origin: &CityId, destination: &CityId, distance: f64) -> Option<f64> {
        let xi = self.attractions.get(origin.as_str())?;
        let xj = self.attractions.get(destination.as_str())?;
        Some((self.ln_k + xi + xj - self.beta * distance.ln()).exp())
    }
}

/// One directed intercity flow used in a log-space fit.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Observation {
    pub origin: usize,
    pub destination: usize,
    pub ln_flow: f64,
    pub ln_distance: f64,
}

pub(crate) struct Observations {
    pub cities: Vec<CityId>,
    pub obs: Vec<Observation>,
    pub excluded_zero: usize,
}

/// Positive off-diagonal flows with their log distances. Requires at least `min_cities` cities.
pub(crate) fn collect(flows: &FlowMatrix, distances: &DistanceMatrix, min_cities: usize) -> Result<Observations> {
    let cities = flows.cities();
    if cities.len() < min_cities {
        return Err(Error::InsufficientData(format!(
            "{} cities in flow matrix, need at least {min_cities}",
            cities.len()
        )));
    }
    let mut obs = Vec::new();
    let mut excluded_zero = 0;
    for (i, o) in cities.iter().enumerate() {
        for (j, d) in cities.iter().enumerate() {
            if i == j {
                continue;
            }
            let g = flows.volume(o, d);
            if !(g > 0.0) {
                excluded_zero += 1;
                continue;
            }
            let km = distances
                .get(o, d)
                .ok_or_else(|| Error::InsufficientData(format!("no distance for {o}-{d}")))?;
            if !(km > 0.0) || !km.is_finite() {
                return Err(Error::DomainError(format!("distance {o}-{d} is {km}")));
            }
            obs.push(Observation {
                origin: i,
                destination: j,
                ln_flow: g.ln(),
                ln_distance: km.ln(),
            });
        }
    }
    if obs.is_empty() {
        return Err(Error::InsufficientData("all intercity flows are zero".into()));
    }
    Ok(Observations {
        cities,
        obs,
        excluded_zero,
    })
}

/// Shifts attractions to sum to zero, moving the offset into `ln k`.
pub(crate) fn normalize_gauge(x: &mut [f64], ln_k: &mut f64) {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    x.iter_mut().for_each(|v| *v -= mean);
    *ln_k += 2.0 * mean;
}
