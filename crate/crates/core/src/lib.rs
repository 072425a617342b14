//! Inter-city origin-destination flow analysis: feature extraction, GDP
//! regression, gravity-model estimation, weighted network metrics, flow PCA
//! and distribution fitting.

pub mod distfit;
pub mod error;
pub mod gravity;
pub mod io;
mod linalg;
pub mod model;
pub mod network;
pub mod pca;
pub mod pipeline;
pub mod regression;
pub mod report;
pub mod stats;

pub use error::{Error, Result};
pub use model::{
    extract_features, validate, City, CityId, DistanceMatrix, FeatureRow, FeatureTable, FlowEntry, FlowMatrix,
    GdpRecord, RegionDataset, ValidationReport, VehicleClass,
};
