//! Seeded synthetic regions with planted gravity parameters and GDP coefficients.

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gravity::generate_gravity;
use crate::model::{
    extract_features, City, CityId, DistanceMatrix, FlowMatrix, GdpRecord, RegionDataset, VehicleClass, FEATURE_NAMES,
};

const EARTH_RADIUS_KM: f64 = 6371.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthOptions {
    pub n_cities: usize,
    pub years: Vec<i32>,
    /// Car and bus decay exponent per year.
    pub beta_per_year: Vec<f64>,
    pub seed: u64,
    /// Truck exponent as a multiple of the car and bus exponent.
    pub truck_beta_factor: f64,
    /// Every directed pair is scaled by `exp(+skew)` one way and `exp(-skew)` the other.
    pub directional_skew: f64,
    /// Log-normal noise sigma on intercity flows.
    pub flow_noise: f64,
    /// Normal noise sd on GDP, in billion CNY.
    pub gdp_noise: f64,
}

impl SynthOptions {
    pub fn new(n_cities: usize, years: Vec<i32>, beta_per_year: Vec<f64>, seed: u64) -> Self {
        SynthOptions {
            n_cities,
            years,
            beta_per_year,
            seed,
            truck_beta_factor: 0.85,
            directional_skew: 0.2,
            flow_noise: 0.0,
            gdp_noise: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantedGravity {
    pub year: i32,
    pub class: VehicleClass,
    pub beta: f64,
    /// `ln P_i` shifted to sum to zero.
    pub attractions: IndexMap<String, f64>,
    pub ln_k: f64,
}

/// Parameters used to build a synthetic dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruth {
    pub options: SynthOptions,
    pub gravity: Vec<PlantedGravity>,
    pub gdp_intercept: f64,
    pub gdp_coefficients: IndexMap<String, f64>,
}

impl GroundTruth {
    pub fn beta(&self, year: i32, class: VehicleClass) -> Option<f64> {
        self.gravity
            .iter()
            .find(|g| g.year == year && g.class == class)
            .map(|g| g.beta)
    }
}

fn haversine_km(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (lon1, lat1) = (a.0.to_radians(), a.1.to_radians());
    let (lon2, lat2) = (b.0.to_radians(), b.1.to_radians());
    let h = ((lat2 - lat1) / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * ((lon2 - lon1) / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().asin()
}

fn place_cities(n: usize, rng: &mut ChaCha8Rng) -> Vec<City> {
    let mut cities: Vec<City> = Vec::with_capacity(n);
    while cities.len() < n {
        let lon = rng.random_range(107.0..111.0);
        let lat = rng.random_range(32.5..37.0);
        let crowded = cities
            .iter()
            .any(|c| haversine_km((c.lon.unwrap(), c.lat.unwrap()), (lon, lat)) < 25.0);
        if crowded {
            continue;
        }
        let k = cities.len() + 1;
        cities.push(City {
            id: CityId::new(format!("C{k:02}")).expect("non-empty id"),
            name: format!("City {k:02}"),
            lon: Some(lon),
            lat: Some(lat),
        });
    }
    cities
}

/// Builds a complete dataset: city coordinates, road distances (great-circle
/// distance times a detour factor), gravity flows for both vehicle classes and
/// GDP as a planted linear function of the eight flow features.
pub fn synth_dataset(options: &SynthOptions) -> Result<(RegionDataset, GroundTruth)> {
    let n = options.n_cities;
    if n < 4 {
        return Err(Error::InvalidArgument(format!("{n} cities, need at least 4")));
    }
    if options.years.is_empty() || options.years.len() != options.beta_per_year.len() {
        return Err(Error::InvalidArgument(format!(
            "{} years but {} beta values",
            options.years.len(),
            options.beta_per_year.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let cities = place_cities(n, &mut rng);
    let ids: Vec<CityId> = cities.iter().map(|c| c.id.clone()).collect();

    let mut distances = DistanceMatrix::new();
    for i in 0..n {
        for j in i + 1..n {
            let a = (cities[i].lon.unwrap(), cities[i].lat.unwrap());
            let b = (cities[j].lon.unwrap(), cities[j].lat.unwrap());
            let km = haversine_km(a, b) * rng.random_range(1.15..1.6);
            distances.insert_symmetric(ids[i].clone(), ids[j].clone(), km);
        }
    }

    // Fixed per-pair direction of the skew, shared by all years and classes.
    let mut orientation = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let s = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            orientation[i][j] = s;
            orientation[j][i] = -s;
        }
    }

    let base: Vec<f64> = (0..n).map(|_| rng.random_range(3e3f64.ln()..3e4f64.ln())).collect();
    let growth: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..0.12)).collect();
    let truck_share: Vec<f64> = (0..n).map(|_| rng.random_range(0.3f64.ln()..0.8f64.ln())).collect();

    let mut flows = Vec::new();
    let mut gravity = Vec::new();
    for (t, (&year, &beta_c)) in options.years.iter().zip(&options.beta_per_year).enumerate() {
        for class in VehicleClass::ALL {
            let (beta, ln_p): (f64, Vec<f64>) = match class {
                VehicleClass::CarsBuses => (beta_c, (0..n).map(|i| base[i] + t as f64 * growth[i]).collect()),
                VehicleClass::Trucks => (
                    beta_c * options.truck_beta_factor,
                    (0..n).map(|i| base[i] + truck_share[i] + t as f64 * growth[i]).collect(),
                ),
            };
            let p: Vec<f64> = ln_p.iter().map(|v| v.exp()).collect();
            let raw = generate_gravity(&ids, &p, beta, &distances, options.flow_noise, rng.random())?;
            let (payload_lo, payload_hi) = match class {
                VehicleClass::CarsBuses => (2.0, 4.0),
                VehicleClass::Trucks => (5.0, 15.0),
            };
            let mut fm = FlowMatrix::new(year, class);
            for i in 0..n {
                for j in 0..n {
                    let vehicles = if i == j {
                        0.02 * p[i].powf(1.5) * rng.random_range(0.7..1.3)
                    } else {
                        raw.volume(&ids[i], &ids[j]) * (options.directional_skew * orientation[i][j]).exp()
                    };
                    let payload = vehicles * rng.random_range(payload_lo..payload_hi);
                    fm.insert(ids[i].clone(), ids[j].clone(), vehicles, Some(payload));
                }
            }
            flows.push(fm);

            let mean = ln_p.iter().sum::<f64>() / n as f64;
            gravity.push(PlantedGravity {
                year,
                class,
                beta,
                attractions: ids.iter().map(|c| c.to_string()).zip(ln_p.iter().map(|v| v - mean)).collect(),
                ln_k: 2.0 * mean,
            });
        }
    }

    let mut dataset = RegionDataset {
        cities,
        gdp: Vec::new(),
        distances,
        flows,
    };

    let mut rows = Vec::new();
    for &year in &options.years {
        for row in extract_features(&dataset, year)?.rows {
            let values = row
                .values()
                .ok_or_else(|| Error::InvalidArgument(format!("undefined ratio for {} in {year}", row.city)))?;
            rows.push((row.city, year, values));
        }
    }
    let feature_means: Vec<f64> = (0..FEATURE_NAMES.len())
        .map(|j| rows.iter().map(|r| r.2[j]).sum::<f64>() / rows.len() as f64)
        .collect();
    let gdp_intercept = rng.random_range(20.0..80.0);
    let coefficients: Vec<f64> = feature_means
        .iter()
        .map(|m| rng.random_range(0.5..2.0) * 100.0 / m)
        .collect();
    let noise = Normal::new(0.0, options.gdp_noise).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    for (city, year, values) in rows {
        let planted = gdp_intercept + coefficients.iter().zip(&values).map(|(b, x)| b * x).sum::<f64>();
        let eps = if options.gdp_noise > 0.0 { noise.sample(&mut rng) } else { 0.0 };
        dataset.gdp.push(GdpRecord {
            city,
            year,
            gdp: planted + eps,
        });
    }

    let truth = GroundTruth {
        options: options.clone(),
        gravity,
        gdp_intercept,
        gdp_coefficients: FEATURE_NAMES.iter().map(|s| s.to_string()).zip(coefficients).collect(),
    };
    Ok((dataset, truth))
}
