use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::probability::{GaussianDepthMap, DEFAULT_SIGMA_MIN};

/// Noisy single-view prior: `mu = gt * (1 + eps)`, `eps ~ N(0, mu_noise^2)`,
/// `sigma = max(sigma_a + sigma_b * gt, sigma_min)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorModel {
    pub mu_noise: f64,
    pub sigma_a: f64,
    pub sigma_b: f64,
    pub sigma_min: f64,
    pub seed: u64,
}

impl Default for PriorModel {
    fn default() -> Self {
        PriorModel {
            mu_noise: 0.1,
            sigma_a: 0.0,
            sigma_b: 0.15,
            sigma_min: DEFAULT_SIGMA_MIN,
            seed: 0,
        }
    }
}

/// Lower bound on `1 + eps` so a large negative draw cannot flip the sign.
const MIN_SCALE: f64 = 0.01;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-pixel stream key; independent of evaluation order.
fn pixel_seed(seed: u64, stream: u64, pixel: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ stream) ^ pixel)
}

impl PriorModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu_noise >= 0.0 && self.mu_noise.is_finite()) {
            return Err(Error::config("prior.mu_noise", "must be finite and non-negative"));
        }
        if !(self.sigma_min > 0.0 && self.sigma_min.is_finite()) {
            return Err(Error::config("prior.sigma_min", "must be positive"));
        }
        if !self.sigma_a.is_finite() {
            return Err(Error::config("prior.sigma_a", "must be finite"));
        }
        if !(self.sigma_b >= 0.0 && self.sigma_b.is_finite()) {
            return Err(Error::config("prior.sigma_b", "must be finite and non-negative"));
        }
        Ok(())
    }

    pub fn sigma_for(&self, gt: f64) -> f64 {
        (self.sigma_a + self.sigma_b * gt).max(self.sigma_min)
    }
}

/// Prior for one frame. `stream` separates frames of the same window.
pub fn make_prior(gt: &Grid<f64>, model: &PriorModel, stream: u64) -> Result<GaussianDepthMap> {
    model.validate()?;
    if let Some(bad) = gt.as_slice().iter().find(|g| !(**g > 0.0 && g.is_finite())) {
        return Err(Error::Data(format!("ground truth depth {bad} is not positive")));
    }
    let mu: Vec<f64> = gt
        .as_slice()
        .par_iter()
        .enumerate()
        .map(|(i, &g)| {
            if model.mu_noise == 0.0 {
                return g;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(pixel_seed(model.seed, stream, i as u64));
            let eps: f64 = StandardNormal.sample(&mut rng);
            g * (1.0 + model.mu_noise * eps).max(MIN_SCALE)
        })
        .collect();
    let sigma = gt.map(|&g| model.sigma_for(g));
    GaussianDepthMap::new(Grid::from_vec(gt.width(), gt.height(), mu)?, sigma)
}
