//! Per-pixel Gaussian depth distributions.
//!
//! Every stage of the pipeline reads and writes a [`GaussianDepthMap`]: the
//! single-view prior, each refinement iterate, and the final output.

mod sampling;
pub mod special;

pub use sampling::{sample_candidates, BinCoefficients, DepthCandidateGrid};
pub use special::{erf, erfc, normal_cdf, probit};

use crate::error::{Error, Result};
use crate::grid::Grid;
use special::SQRT_2PI;

/// Default floor applied to every stored standard deviation, in meters.
pub const DEFAULT_SIGMA_MIN: f64 = 1e-3;

/// Per-pixel depth distribution `N(mu, sigma^2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianDepthMap {
    mu: Grid<f64>,
    sigma: Grid<f64>,
}

impl GaussianDepthMap {
    /// Validates shapes and positivity. Use [`GaussianDepthMap::with_floor`]
    /// to also clamp sigma.
    pub fn new(mu: Grid<f64>, sigma: Grid<f64>) -> Result<Self> {
        if !mu.same_shape(&sigma) {
            return Err(Error::Data(format!(
                "mu is {}x{} but sigma is {}x{}",
                mu.width(),
                mu.height(),
                sigma.width(),
                sigma.height()
            )));
        }
        if let Some(bad) = mu.as_slice().iter().find(|m| !(**m > 0.0 && m.is_finite())) {
            return Err(Error::Data(format!(
                "mean depth must be positive and finite, got {bad}"
            )));
        }
        if let Some(bad) = sigma.as_slice().iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(Error::Data(format!("sigma must be positive and finite, got {bad}")));
        }
        Ok(GaussianDepthMap { mu, sigma })
    }

    pub fn with_floor(mu: Grid<f64>, sigma: Grid<f64>, sigma_min: f64) -> Result<Self> {
        if !(sigma_min > 0.0) {
            return Err(Error::config("sigma_min", "must be positive"));
        }
        let sigma = sigma.map(|&s| if s.is_nan() { s } else { s.max(sigma_min) });
        GaussianDepthMap::new(mu, sigma)
    }

    pub fn constant(width: usize, height: usize, mu: f64, sigma: f64) -> Result<Self> {
        GaussianDepthMap::new(Grid::filled(width, height, mu), Grid::filled(width, height, sigma))
    }

    pub fn width(&self) -> usize {
        self.mu.width()
    }

    pub fn height(&self) -> usize {
        self.mu.height()
    }

    pub fn mu(&self) -> &Grid<f64> {
        &self.mu
    }

    pub fn sigma(&self) -> &Grid<f64> {
        &self.sigma
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> (f64, f64) {
        (*self.mu.get(x, y), *self.sigma.get(x, y))
    }

    /// Bilinearly interpolated `(mu, sigma)` at a continuous pixel position.
    pub fn sample_bilinear(&self, u: f64, v: f64) -> Result<(f64, f64)> {
        let taps = crate::grid::bilinear_taps(u, v, self.width(), self.height())?;
        let mu = self.mu.as_slice();
        let sigma = self.sigma.as_slice();
        let mut m = 0.0;
        let mut s = 0.0;
        for (i, w) in taps {
            m += w * mu[i];
            s += w * sigma[i];
        }
        Ok((m, s))
    }

    pub fn into_parts(self) -> (Grid<f64>, Grid<f64>) {
        (self.mu, self.sigma)
    }
}

/// Gaussian density `N(d; mu, sigma^2)` in 1/m.
pub fn gaussian_pdf(d: f64, mu: f64, sigma: f64) -> f64 {
    let z = (d - mu) / sigma;
    (-0.5 * z * z).exp() / (sigma * SQRT_2PI)
}

/// Density at the edge of the `kappa`-sigma interval: `exp(-kappa^2/2) / (sigma sqrt(2 pi))`.
///
/// `gaussian_pdf(d, mu, sigma) > consistency_threshold(sigma, kappa)` holds
/// exactly when `|d - mu| < kappa * sigma`.
pub fn consistency_threshold(sigma: f64, kappa: f64) -> f64 {
    (-0.5 * kappa * kappa).exp() / (sigma * SQRT_2PI)
}

/// Whether `d` lies strictly inside the `kappa`-sigma interval of `N(mu, sigma^2)`.
///
/// Same predicate as comparing [`gaussian_pdf`] against
/// [`consistency_threshold`], evaluated on the exponents so that it stays
/// exact when both densities underflow (large `kappa`, far-off `d`).
#[inline]
pub fn within_kappa_sigma(d: f64, mu: f64, sigma: f64, kappa: f64) -> bool {
    (d - mu).abs() < kappa * sigma
}

/// Negative log-likelihood `1/2 log sigma^2 + (d - mu)^2 / (2 sigma^2)`,
/// without the constant `1/2 log 2 pi`.
pub fn nll(d_gt: f64, mu: f64, sigma: f64) -> f64 {
    let var = sigma * sigma;
    0.5 * var.ln() + (d_gt - mu) * (d_gt - mu) / (2.0 * var)
}
