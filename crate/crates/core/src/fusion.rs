//! Iterative refinement of the per-pixel depth distribution.
//!
//! Each iteration samples candidates from the current distribution, scores
//! them against the neighbour views and converts the scores into a new
//! `(mu, sigma)` by softmax moment matching:
//!
//! ```text
//! p_k       = softmax_k(s_k / tau)
//! r         = sum_k p_k b_k                    (normalised residual)
//! mu_new    = mu + r sigma
//! sigma_new = sigma * sqrt(sum_k p_k (b_k - r)^2), floored at sigma_min
//! ```
//!
//! A one-hot score moves the mean onto that candidate and collapses the
//! spread; a flat score leaves the mean in place and widens sigma by
//! `sqrt(sum b_k^2 / N_s)`.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::io;
use crate::matching::{build_cost_volume, uniform_candidates, CostSummary, Window};
use crate::metrics::{compute_metrics, MetricsReport};
use crate::probability::{sample_candidates, BinCoefficients, DepthCandidateGrid, GaussianDepthMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    Probabilistic,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    pub n_samples: usize,
    pub n_iter: usize,
    pub beta: f64,
    pub kappa: f64,
    /// Iteration loss weight; carried for completeness, not used by the analytic update.
    pub gamma: f64,
    /// Softmax temperature applied to normalised scores.
    pub temperature: f64,
    pub sigma_min: f64,
    pub d_floor: f64,
    pub weighting_enabled: bool,
    pub sampling_mode: SamplingMode,
    pub d_min: f64,
    pub d_max: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            n_samples: 5,
            n_iter: 3,
            beta: 3.0,
            kappa: 5.0,
            gamma: 0.8,
            temperature: DEFAULT_TEMPERATURE,
            sigma_min: crate::probability::DEFAULT_SIGMA_MIN,
            d_floor: 0.1,
            weighting_enabled: true,
            sampling_mode: SamplingMode::Probabilistic,
            d_min: 0.5,
            d_max: 10.0,
        }
    }
}

/// Default softmax temperature for scores in [-1, 1].
pub const DEFAULT_TEMPERATURE: f64 = 0.1;

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        let field = |name: &str, msg: &str| Err(Error::config(format!("fusion.{name}"), msg));
        if self.n_samples == 0 {
            return field("n_samples", "must be at least 1");
        }
        if self.n_iter == 0 {
            return field("n_iter", "must be at least 1");
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return field("beta", "must be positive and finite");
        }
        if !(self.kappa > 0.0) {
            return field("kappa", "must be positive");
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return field("gamma", "must lie in (0, 1)");
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return field("temperature", "must be positive and finite");
        }
        if !(self.sigma_min > 0.0 && self.sigma_min.is_finite()) {
            return field("sigma_min", "must be positive and finite");
        }
        if !(self.d_floor > 0.0 && self.d_floor.is_finite()) {
            return field("d_floor", "must be positive and finite");
        }
        if self.sampling_mode == SamplingMode::Uniform {
            if !(self.d_min > 0.0) {
                return field("d_min", "must be positive");
            }
            if !(self.d_max > self.d_min && self.d_max.is_finite()) {
                return field("d_max", "must be finite and greater than d_min");
            }
        }
        Ok(())
    }

    pub fn coefficients(&self) -> Result<std::sync::Arc<BinCoefficients>> {
        BinCoefficients::cached(self.n_samples, self.beta)
    }
}

/// Softmax of `scores / temperature`, stabilised by subtracting the maximum.
///
/// Candidates are assumed to be already penalised for missing views (see
/// [`penalize_unobserved`]); `view_counts` only has to match in length.
pub fn softmax_weights(scores: &[f64], view_counts: &[u16], temperature: f64) -> Vec<f64> {
    debug_assert_eq!(scores.len(), view_counts.len());
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = scores.iter().map(|s| ((s - max) / temperature).exp()).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    w
}

/// Replaces the score of every zero-count candidate by the minimum observed
/// score minus one temperature unit. Returns `None` when nothing was observed.
pub fn penalize_unobserved(scores: &[f64], view_counts: &[u16], temperature: f64) -> Option<Vec<f64>> {
    let floor = scores
        .iter()
        .zip(view_counts)
        .filter(|(_, &c)| c > 0)
        .map(|(s, _)| *s)
        .fold(f64::INFINITY, f64::min);
    if floor == f64::INFINITY {
        return None;
    }
    Some(
        scores
            .iter()
            .zip(view_counts)
            .map(|(&s, &c)| if c > 0 { s } else { floor - temperature })
            .collect(),
    )
}

/// `sum_k p_k d_k`.
pub fn expected_depth(weights: &[f64], candidates: &[f64]) -> f64 {
    weights.iter().zip(candidates).map(|(p, d)| p * d).sum()
}

/// Moment update from explicit candidate weights, in normalised units.
pub fn update_from_weights(
    weights: &[f64],
    prior_mu: f64,
    prior_sigma: f64,
    coeffs: &BinCoefficients,
    sigma_min: f64,
) -> (f64, f64) {
    let b = coeffs.b();
    let r: f64 = weights.iter().zip(b).map(|(p, b)| p * b).sum();
    let spread: f64 = weights.iter().zip(b).map(|(p, b)| p * (b - r) * (b - r)).sum();
    let mu = prior_mu + r * prior_sigma;
    let var = (spread * prior_sigma * prior_sigma).max(sigma_min * sigma_min);
    (mu, var.sqrt())
}

/// Moment update directly on candidate depths; used for uniform candidates
/// and for pixels whose candidates hit the depth floor.
pub fn update_from_depths(weights: &[f64], depths: &[f64], sigma_min: f64) -> (f64, f64) {
    let mu = expected_depth(weights, depths);
    let var: f64 = weights.iter().zip(depths).map(|(p, d)| p * (d - mu) * (d - mu)).sum();
    (mu, var.max(sigma_min * sigma_min).sqrt())
}

/// Updated `(mu, sigma)` for one pixel from its scores.
///
/// Pixels without any contributing view keep the prior unchanged.
pub fn analytic_update(
    pixel_scores: &[f64],
    view_counts: &[u16],
    prior_mu: f64,
    prior_sigma: f64,
    coeffs: &BinCoefficients,
    config: &FusionConfig,
) -> (f64, f64) {
    match penalize_unobserved(pixel_scores, view_counts, config.temperature) {
        None => (prior_mu, prior_sigma),
        Some(scores) => {
            let p = softmax_weights(&scores, view_counts, config.temperature);
            update_from_weights(&p, prior_mu, prior_sigma, coeffs, config.sigma_min)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationSnapshot {
    pub iteration: usize,
    pub map: GaussianDepthMap,
    pub cost: CostSummary,
    pub metrics: Option<MetricsReport>,
}

/// One snapshot per refinement iteration.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct IterationTrace {
    pub iterations: Vec<IterationSnapshot>,
}

impl IterationTrace {
    pub fn len(&self) -> usize {
        self.iterations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterations.is_empty()
    }

    /// Writes `iter_NN_mu.pfm` / `iter_NN_sigma.pfm` per iteration and `trace.csv`.
    pub fn export(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for snap in &self.iterations {
            io::write_gaussian_map(dir, &format!("iter_{:02}", snap.iteration), &snap.map)?;
        }
        let mut w = csv::Writer::from_path(dir.join("trace.csv"))?;
        let mut header = vec![
            "iteration",
            "mean_score",
            "observed_fraction",
            "unobserved_pixel_fraction",
        ];
        header.extend(MetricsReport::CSV_HEADER);
        w.write_record(&header)?;
        for snap in &self.iterations {
            let mut row = vec![
                snap.iteration.to_string(),
                snap.cost.mean_score.to_string(),
                snap.cost.observed_fraction.to_string(),
                snap.cost.unobserved_pixel_fraction.to_string(),
            ];
            match &snap.metrics {
                Some(m) => row.extend(m.csv_record()),
                None => row.extend(std::iter::repeat_n(String::new(), MetricsReport::CSV_HEADER.len())),
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn candidates_for(
    current: &GaussianDepthMap,
    config: &FusionConfig,
    coeffs: &BinCoefficients,
) -> Result<DepthCandidateGrid> {
    match config.sampling_mode {
        SamplingMode::Probabilistic => sample_candidates(current, coeffs, config.d_floor),
        SamplingMode::Uniform => uniform_candidates(
            config.d_min,
            config.d_max,
            config.n_samples,
            current.width(),
            current.height(),
        ),
    }
}

/// One sample → match → update pass.
pub fn refine_step(
    window: &Window,
    current: &GaussianDepthMap,
    config: &FusionConfig,
    coeffs: &BinCoefficients,
) -> Result<(GaussianDepthMap, CostSummary)> {
    let candidates = candidates_for(current, config, coeffs)?;
    let volume = build_cost_volume(window, &candidates, config.kappa, config.weighting_enabled)?;
    let (w, h) = (current.width(), current.height());
    let updated: Vec<(f64, f64)> = (0..w * h)
        .into_par_iter()
        .map(|i| {
            let (x, y) = (i % w, i / w);
            let (mu, sigma) = current.at(x, y);
            let scores = volume.scores(x, y);
            let counts = volume.view_counts(x, y);
            let direct = config.sampling_mode == SamplingMode::Uniform || candidates.is_clamped(x, y);
            if !direct {
                return analytic_update(scores, counts, mu, sigma, coeffs, config);
            }
            match penalize_unobserved(scores, counts, config.temperature) {
                None => (mu, sigma),
                Some(s) => {
                    let p = softmax_weights(&s, counts, config.temperature);
                    update_from_depths(&p, candidates.pixel(x, y), config.sigma_min)
                }
            }
        })
        .collect();
    let (mu, sigma): (Vec<f64>, Vec<f64>) = updated.into_iter().unzip();
    let map = GaussianDepthMap::new(Grid::from_vec(w, h, mu)?, Grid::from_vec(w, h, sigma)?)?;
    Ok((map, volume.summary()))
}

/// Runs `config.n_iter` iterations starting from the reference prior.
pub fn refine(
    window: &Window,
    config: &FusionConfig,
    coeffs: &BinCoefficients,
) -> Result<(GaussianDepthMap, IterationTrace)> {
    refine_from(window, &window.reference().prior, config, coeffs, None)
}

/// Runs `config.n_iter` iterations starting from `start`. When `gt` is
/// given, each snapshot carries whole-image metrics against it.
pub fn refine_from(
    window: &Window,
    start: &GaussianDepthMap,
    config: &FusionConfig,
    coeffs: &BinCoefficients,
    gt: Option<&Grid<f64>>,
) -> Result<(GaussianDepthMap, IterationTrace)> {
    config.validate()?;
    if coeffs.n_samples() != config.n_samples {
        return Err(Error::config(
            "fusion.n_samples",
            format!(
                "coefficients built for {} samples, config asks for {}",
                coeffs.n_samples(),
                config.n_samples
            ),
        ));
    }
    let reference = window.reference();
    if start.width() != reference.intrinsics.width || start.height() != reference.intrinsics.height {
        return Err(Error::Data("starting map does not match the reference frame".into()));
    }
    let mut current = start.clone();
    let mut trace = IterationTrace::default();
    for iteration in 1..=config.n_iter {
        let (next, cost) = refine_step(window, &current, config, coeffs)?;
        let metrics = gt
            .map(|g| compute_metrics(&next, g, None, None, &format!("iter_{iteration:02}")))
            .transpose()?;
        trace.iterations.push(IterationSnapshot {
            iteration,
            map: next.clone(),
            cost,
            metrics,
        });
        current = next;
    }
    Ok((current, trace))
}

/// Bilinear upsampling of `mu` and `sigma` by an integer factor.
///
/// Output is `factor * width` by `factor * height`, with corners aligned to
/// the input corners; sigma is re-floored at `sigma_min`.
pub fn upsample_bilinear(map: &GaussianDepthMap, factor: usize, sigma_min: f64) -> Result<GaussianDepthMap> {
    if factor == 0 {
        return Err(Error::domain("upsampling factor must be at least 1"));
    }
    let (w, h) = (map.width(), map.height());
    let (ow, oh) = (w * factor, h * factor);
    let src = |o: usize, out_len: usize, in_len: usize| -> f64 {
        if out_len <= 1 {
            0.0
        } else {
            (o * (in_len - 1)) as f64 / (out_len - 1) as f64
        }
    };
    let mut mu = Vec::with_capacity(ow * oh);
    let mut sigma = Vec::with_capacity(ow * oh);
    for y in 0..oh {
        let v = src(y, oh, h);
        for x in 0..ow {
            let u = src(x, ow, w);
            let (m, s) = map.sample_bilinear(u, v)?;
            mu.push(m);
            sigma.push(s);
        }
    }
    GaussianDepthMap::with_floor(Grid::from_vec(ow, oh, mu)?, Grid::from_vec(ow, oh, sigma)?, sigma_min)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coeffs5() -> BinCoefficients {
        BinCoefficients::new(5, 3.0).unwrap()
    }

    #[test]
    fn softmax_examples() {
        let w = softmax_weights(&[0.3; 4], &[1; 4], 1.0);
        assert!(w.iter().all(|p| (p - 0.25).abs() < 1e-15));
        let w = softmax_weights(&[3f64.ln(), 0.0], &[1, 1], 1.0);
        assert!((w[0] - 0.75).abs() < 1e-15 && (w[1] - 0.25).abs() < 1e-15);
        let w = softmax_weights(&[1000.0, 0.0, 0.0], &[1; 3], 1.0);
        assert_eq!(w, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn expected_depth_examples() {
        assert_eq!(expected_depth(&[0.5, 0.5], &[1.0, 3.0]), 2.0);
        assert_eq!(expected_depth(&[0.0, 0.0, 1.0], &[1.0, 2.0, 3.5]), 3.5);
        assert_eq!(expected_depth(&[0.75, 0.25], &[1.0, 3.0]), 1.5);
    }

    #[test]
    fn penalty_and_fallback() {
        let s = penalize_unobserved(&[0.2, 0.0, 0.5], &[2, 0, 1], 0.1).unwrap();
        assert_eq!(s, vec![0.2, 0.2 - 0.1, 0.5]);
        assert!(penalize_unobserved(&[0.0; 3], &[0; 3], 0.1).is_none());
        let cfg = FusionConfig::default();
        let c = coeffs5();
        assert_eq!(analytic_update(&[0.0; 5], &[0; 5], 2.0, 0.3, &c, &cfg), (2.0, 0.3));
    }

    #[test]
    fn one_hot_moves_to_candidate() {
        let c = coeffs5();
        let cfg = FusionConfig::default();
        for k in 0..5 {
            let mut w = [0.0; 5];
            w[k] = 1.0;
            let (mu, sigma) = update_from_weights(&w, 2.0, 0.3, &c, cfg.sigma_min);
            assert_eq!(mu, 2.0 + c.b()[k] * 0.3);
            assert_eq!(sigma, cfg.sigma_min);
            // A score gap of 2 at temperature 1e-3 underflows every other weight.
            let mut scores = [-1.0; 5];
            scores[k] = 1.0;
            let sharp = FusionConfig {
                temperature: 1e-3,
                ..cfg.clone()
            };
            assert_eq!(analytic_update(&scores, &[4; 5], 2.0, 0.3, &c, &sharp), (mu, sigma));
        }
    }

    #[test]
    fn flat_scores_widen() {
        let c = coeffs5();
        let cfg = FusionConfig::default();
        let (mu, sigma) = analytic_update(&[0.4; 5], &[3; 5], 2.0, 0.3, &c, &cfg);
        assert_eq!(mu, 2.0);
        assert!((sigma / 0.3 - 1.262_021_062_710_263_8).abs() < 1e-12);
    }

    #[test]
    fn peaked_weights_narrow() {
        let c = coeffs5();
        let (mu, sigma) = update_from_weights(&[0.1, 0.1, 0.6, 0.1, 0.1], 2.0, 0.3, &c, 1e-3);
        assert!((mu - 2.0).abs() < 1e-15);
        // sqrt(0.2 * (1.919..^2 + 0.5457..^2)) = 0.89238...
        assert!((sigma / 0.3 - 0.892_383_651_442_680_7).abs() < 1e-12);
    }

    #[test]
    fn depth_moments_match_normalised_moments() {
        let c = coeffs5();
        let p = [0.05, 0.2, 0.4, 0.3, 0.05];
        let (mu, sigma) = (3.0, 0.25);
        let depths: Vec<f64> = c.b().iter().map(|b| mu + b * sigma).collect();
        let a = update_from_weights(&p, mu, sigma, &c, 1e-3);
        let b = update_from_depths(&p, &depths, 1e-3);
        assert!((a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(FusionConfig::default().validate().is_ok());
        let bad = FusionConfig {
            n_iter: 0,
            ..Default::default()
        };
        match bad.validate() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "fusion.n_iter"),
            other => panic!("unexpected {other:?}"),
        }
        let bad = FusionConfig {
            sampling_mode: SamplingMode::Uniform,
            d_min: 5.0,
            d_max: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn upsample_examples() {
        let map = GaussianDepthMap::new(
            Grid::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap(),
            Grid::filled(2, 2, 0.2),
        )
        .unwrap();
        assert_eq!(upsample_bilinear(&map, 1, 1e-3).unwrap(), map);
        let up = upsample_bilinear(&map, 2, 1e-3).unwrap();
        assert_eq!((up.width(), up.height()), (4, 4));
        assert_eq!(up.at(0, 0).0, 1.0);
        assert_eq!(up.at(3, 0).0, 2.0);
        assert_eq!(up.at(0, 3).0, 3.0);
        assert_eq!(up.at(3, 3).0, 4.0);
        let mid = up.at(1, 1).0;
        assert!(mid > 1.0 && mid < 4.0);
        assert!((up.at(1, 1).0 - (1.0 + 1.0 / 3.0 + 2.0 / 3.0)).abs() < 1e-12);

        let flat = GaussianDepthMap::constant(3, 2, 2.5, 1e-4).unwrap();
        let up = upsample_bilinear(&flat, 3, 1e-3).unwrap();
        assert!(up.mu().as_slice().iter().all(|&m| m == 2.5));
        assert!(up.sigma().as_slice().iter().all(|&s| s == 1e-3));
        assert!(upsample_bilinear(&flat, 0, 1e-3).is_err());
    }
}
