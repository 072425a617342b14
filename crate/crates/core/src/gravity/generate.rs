use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::model::{CityId, DistanceMatrix, FlowMatrix, VehicleClass};

/// Synthetic flows `G_ij = P_i P_j / d_ij^beta * exp(eps_ij)` with
/// `eps ~ Normal(0, noise_sigma^2)`. The diagonal is left empty.
///
/// The returned matrix has year 0 and class cars & buses; callers set those fields as needed.
pub fn generate_gravity(
    cities: &[CityId],
    attractions: &[f64],
    beta: f64,
    distances: &DistanceMatrix,
    noise_sigma: f64,
    seed: u64,
) -> Result<FlowMatrix> {
    let n = cities.len();
    if n < 2 {
        return Err(Error::InvalidArgument("need at least two cities".into()));
    }
    if attractions.len() != n {
        return Err(Error::InvalidArgument(format!("{} attractions for {n} cities", attractions.len())));
    }
    if attractions.iter().any(|p| !(*p > 0.0)) {
        return Err(Error::InvalidArgument("attractions must be positive".into()));
    }
    if !(noise_sigma >= 0.0) {
        return Err(Error::InvalidArgument("noise sigma must be non-negative".into()));
    }
    let noise = Normal::new(0.0, noise_sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fm = FlowMatrix::new(0, VehicleClass::CarsBuses);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let d = distances
                .get(&cities[i], &cities[j])
                .ok_or_else(|| Error::InvalidArgument(format!("no distance for {}-{}", cities[i], cities[j])))?;
            let eps = if noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            let g = attractions[i] * attractions[j] / d.powf(beta) * eps.exp();
            fm.insert(cities[i].clone(), cities[j].clone(), g, None);
        }
    }
    Ok(fm)
}
