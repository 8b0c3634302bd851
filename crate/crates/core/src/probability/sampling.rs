//! Equal-probability-mass depth candidate sampling.
//!
//! The interval `[mu - beta sigma, mu + beta sigma]` carries mass
//! `P* = erf(beta / sqrt 2)`. It is split into `N_s` bins of mass `P*/N_s`
//! each, and the bin midpoints (in standard-normal units) become the
//! offsets `b_k`, so that candidate `k` sits at `mu + b_k sigma`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use super::special::{erf, normal_cdf, probit};
use super::GaussianDepthMap;
use crate::error::{Error, Result};

/// Offsets `b_k` for a given `(N_s, beta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinCoefficients {
    b: Vec<f64>,
    beta: f64,
    p_star: f64,
}

impl BinCoefficients {
    pub fn new(n_samples: usize, beta: f64) -> Result<Self> {
        if n_samples == 0 {
            return Err(Error::config("n_samples", "must be at least 1"));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::config("beta", "must be positive and finite"));
        }
        let p_star = erf(beta / std::f64::consts::SQRT_2);
        let edges = lower_edges(n_samples, beta, p_star)?;
        let mut b = vec![0.0; n_samples];
        // The construction is symmetric about zero: compute the lower half
        // and mirror it so antisymmetry holds bit-exactly.
        for k in 0..n_samples / 2 {
            let mid = 0.5 * (edges[k] + edges[k + 1]);
            b[k] = mid;
            b[n_samples - 1 - k] = -mid;
        }
        Ok(BinCoefficients { b, beta, p_star })
    }

    /// Shared instance for `(n_samples, beta)`; computed on first use.
    pub fn cached(n_samples: usize, beta: f64) -> Result<Arc<Self>> {
        type Cache = Mutex<HashMap<(usize, u64), Arc<BinCoefficients>>>;
        static CACHE: OnceLock<Cache> = OnceLock::new();
        let cache = CACHE.get_or_init(Default::default);
        let key = (n_samples, beta.to_bits());
        if let Some(c) = cache.lock().expect("coefficient cache poisoned").get(&key) {
            return Ok(Arc::clone(c));
        }
        let fresh = Arc::new(BinCoefficients::new(n_samples, beta)?);
        let mut guard = cache.lock().expect("coefficient cache poisoned");
        Ok(Arc::clone(guard.entry(key).or_insert(fresh)))
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn n_samples(&self) -> usize {
        self.b.len()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn p_star(&self) -> f64 {
        self.p_star
    }

    /// The `N_s + 1` bin edges in standard-normal units, from `-beta` to `beta`.
    pub fn edges(&self) -> Vec<f64> {
        let n = self.n_samples();
        let lower = lower_edges(n, self.beta, self.p_star).expect("validated at construction");
        let mut edges = vec![0.0; n + 1];
        for j in 0..=n / 2 {
            edges[j] = lower[j];
            edges[n - j] = -lower[j];
        }
        edges
    }

    /// Ratio `sigma_new / sigma` produced by a flat score profile:
    /// `sqrt(sum b_k^2 / N_s)`.
    pub fn flat_sigma_ratio(&self) -> f64 {
        (self.b.iter().map(|b| b * b).sum::<f64>() / self.n_samples() as f64).sqrt()
    }
}

/// Edges `j = 0 ..= n/2` (the half at or below the median).
fn lower_edges(n: usize, beta: f64, p_star: f64) -> Result<Vec<f64>> {
    // (1 - P*)/2 equals Phi(-beta); evaluating it directly keeps full
    // relative precision when P* is close to one.
    let tail = normal_cdf(-beta);
    (0..=n / 2)
        .map(|j| {
            if j == 0 {
                Ok(-beta)
            } else if 2 * j == n {
                Ok(0.0)
            } else {
                probit(tail + j as f64 / n as f64 * p_star)
            }
        })
        .collect()
}

/// `N_s` candidate depths per pixel, stored `[y][x][k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthCandidateGrid {
    width: usize,
    height: usize,
    n_samples: usize,
    depths: Vec<f64>,
    clamped: Vec<bool>,
}

impl DepthCandidateGrid {
    /// Builds a grid from raw depths; each pixel's slice must be strictly increasing and positive.
    pub fn from_depths(width: usize, height: usize, n_samples: usize, depths: Vec<f64>) -> Result<Self> {
        if n_samples == 0 || depths.len() != width * height * n_samples {
            return Err(Error::Data("candidate grid has inconsistent dimensions".into()));
        }
        for px in depths.chunks(n_samples) {
            if px[0] <= 0.0 || px.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::Data(
                    "candidate depths must be positive and strictly increasing".into(),
                ));
            }
        }
        Ok(DepthCandidateGrid {
            width,
            height,
            n_samples,
            clamped: vec![false; width * height],
            depths,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.width + x) * self.n_samples;
        &self.depths[i..i + self.n_samples]
    }

    /// True when at least one candidate at this pixel was raised to the depth floor.
    #[inline]
    pub fn is_clamped(&self, x: usize, y: usize) -> bool {
        self.clamped[y * self.width + x]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.depths
    }
}

/// Candidates `mu + b_k sigma` for every pixel of the prior.
///
/// Candidates below `d_floor` are raised onto the ladder
/// `d_floor * (1 + k * 1e-6)`, which keeps them positive and strictly increasing.
pub fn sample_candidates(
    prior: &GaussianDepthMap,
    coeffs: &BinCoefficients,
    d_floor: f64,
) -> Result<DepthCandidateGrid> {
    if !(d_floor > 0.0) {
        return Err(Error::config("d_floor", "must be positive"));
    }
    let (w, h, n) = (prior.width(), prior.height(), coeffs.n_samples());
    let mut depths = Vec::with_capacity(w * h * n);
    let mut clamped = Vec::with_capacity(w * h);
    for (&mu, &sigma) in prior.mu().as_slice().iter().zip(prior.sigma().as_slice()) {
        let mut any = false;
        for (k, &b) in coeffs.b().iter().enumerate() {
            let d = mu + b * sigma;
            let rung = d_floor * (1.0 + k as f64 * 1e-6);
            if d < rung {
                any = true;
                depths.push(rung);
            } else {
                depths.push(d);
            }
        }
        clamped.push(any);
    }
    Ok(DepthCandidateGrid {
        width: w,
        height: h,
        n_samples: n,
        depths,
        clamped,
    })
}
