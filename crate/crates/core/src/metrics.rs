//! Depth accuracy metrics and distribution NLL.

use std::fmt;

use crate::error::{Error, Result};
use crate::grid::{Grid, Mask};
use crate::probability::{nll, GaussianDepthMap};

/// Standard depth metrics over a set of pixels. Deltas are percentages.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub abs_diff: f64,
    pub rmse: f64,
    pub rmse_log: f64,
    pub delta_1: f64,
    pub delta_2: f64,
    pub delta_3: f64,
    pub nll: f64,
    pub pixel_count: usize,
    pub region_label: String,
}

impl MetricsReport {
    pub const CSV_HEADER: [&'static str; 11] = [
        "abs_rel",
        "sq_rel",
        "abs_diff",
        "rmse",
        "rmse_log",
        "delta_1",
        "delta_2",
        "delta_3",
        "nll",
        "pixel_count",
        "region_label",
    ];

    pub fn csv_record(&self) -> Vec<String> {
        vec![
            self.abs_rel.to_string(),
            self.sq_rel.to_string(),
            self.abs_diff.to_string(),
            self.rmse.to_string(),
            self.rmse_log.to_string(),
            self.delta_1.to_string(),
            self.delta_2.to_string(),
            self.delta_3.to_string(),
            self.nll.to_string(),
            self.pixel_count.to_string(),
            self.region_label.clone(),
        ]
    }

    /// Writes reports as CSV with [`MetricsReport::CSV_HEADER`].
    pub fn write_csv<'a>(reports: impl IntoIterator<Item = &'a MetricsReport>, w: impl std::io::Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(Self::CSV_HEADER)?;
        for r in reports {
            out.write_record(r.csv_record())?;
        }
        out.flush()?;
        Ok(())
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<18} n={:<6} abs_rel={:.4} sq_rel={:.4} abs_diff={:.4} rmse={:.4} rmse_log={:.4} \
             d1={:.2}% d2={:.2}% d3={:.2}% nll={:.4}",
            self.region_label,
            self.pixel_count,
            self.abs_rel,
            self.sq_rel,
            self.abs_diff,
            self.rmse,
            self.rmse_log,
            self.delta_1,
            self.delta_2,
            self.delta_3,
            self.nll
        )
    }
}

/// Pairwise (tree) summation; fixed association order, so the result is
/// reproducible and more accurate than a running sum.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

fn selected_pixels(
    shape: (usize, usize),
    gt: &Grid<f64>,
    mask: Option<&Mask>,
    depth_cap: Option<f64>,
) -> Result<Vec<usize>> {
    if gt.width() != shape.0 || gt.height() != shape.1 {
        return Err(Error::Data(format!(
            "prediction is {}x{} but ground truth is {}x{}",
            shape.0,
            shape.1,
            gt.width(),
            gt.height()
        )));
    }
    if let Some(m) = mask {
        if !m.same_shape(gt) {
            return Err(Error::Data("mask does not match ground truth".into()));
        }
    }
    let mut idx = Vec::new();
    for (i, &g) in gt.as_slice().iter().enumerate() {
        if mask.is_some_and(|m| !m.as_slice()[i]) {
            continue;
        }
        if !(g > 0.0 && g.is_finite()) {
            return Err(Error::Data(format!(
                "ground truth depth {g} at pixel {i} is not positive"
            )));
        }
        if depth_cap.is_some_and(|cap| g > cap) {
            continue;
        }
        idx.push(i);
    }
    if idx.is_empty() {
        return Err(Error::Data("no pixels selected for evaluation".into()));
    }
    Ok(idx)
}

/// Metrics of `pred.mu` against `gt` over `mask` (all pixels when `None`),
/// excluding ground truth beyond `depth_cap`.
pub fn compute_metrics(
    pred: &GaussianDepthMap,
    gt: &Grid<f64>,
    mask: Option<&Mask>,
    depth_cap: Option<f64>,
    label: &str,
) -> Result<MetricsReport> {
    let idx = selected_pixels((pred.width(), pred.height()), gt, mask, depth_cap)?;
    let mu = pred.mu().as_slice();
    let sigma = pred.sigma().as_slice();
    let g = gt.as_slice();
    let n = idx.len() as f64;
    let mean = |f: &dyn Fn(usize) -> f64| pairwise_sum(&idx.iter().map(|&i| f(i)).collect::<Vec<_>>()) / n;

    let abs_rel = mean(&|i| (mu[i] - g[i]).abs() / g[i]);
    let sq_rel = mean(&|i| (mu[i] - g[i]).powi(2) / g[i]);
    let abs_diff = mean(&|i| (mu[i] - g[i]).abs());
    let rmse = mean(&|i| (mu[i] - g[i]).powi(2)).sqrt();
    let rmse_log = mean(&|i| (mu[i].ln() - g[i].ln()).powi(2)).sqrt();
    let nll_mean = mean(&|i| nll(g[i], mu[i], sigma[i]));
    let mut hits = [0usize; 3];
    for &i in &idx {
        let ratio = (mu[i] / g[i]).max(g[i] / mu[i]);
        for (t, hit) in DELTA_THRESHOLDS.iter().zip(hits.iter_mut()) {
            if ratio < *t {
                *hit += 1;
            }
        }
    }
    let pct = |h: usize| 100.0 * h as f64 / n;
    Ok(MetricsReport {
        abs_rel,
        sq_rel,
        abs_diff,
        rmse,
        rmse_log,
        delta_1: pct(hits[0]),
        delta_2: pct(hits[1]),
        delta_3: pct(hits[2]),
        nll: nll_mean,
        pixel_count: idx.len(),
        region_label: label.to_string(),
    })
}

/// 1.25, 1.25^2, 1.25^3.
pub const DELTA_THRESHOLDS: [f64; 3] = [1.25, 1.5625, 1.953125];

/// Mean NLL over the selected pixels and the per-pixel NLL map (NaN outside the mask).
pub fn nll_map(pred: &GaussianDepthMap, gt: &Grid<f64>, mask: Option<&Mask>) -> Result<(f64, Grid<f64>)> {
    let idx = selected_pixels((pred.width(), pred.height()), gt, mask, None)?;
    let mut map = Grid::filled(gt.width(), gt.height(), f64::NAN);
    let mu = pred.mu().as_slice();
    let sigma = pred.sigma().as_slice();
    let g = gt.as_slice();
    let mut vals = Vec::with_capacity(idx.len());
    for &i in &idx {
        let v = nll(g[i], mu[i], sigma[i]);
        map.as_mut_slice()[i] = v;
        vals.push(v);
    }
    Ok((pairwise_sum(&vals) / idx.len() as f64, map))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map_from(mu: Vec<f64>, w: usize, h: usize) -> GaussianDepthMap {
        GaussianDepthMap::new(Grid::from_vec(w, h, mu).unwrap(), Grid::filled(w, h, 1.0)).unwrap()
    }

    #[test]
    fn perfect_prediction() {
        let gt = Grid::from_fn(4, 3, |x, y| 1.0 + x as f64 + 0.5 * y as f64);
        let pred = map_from(gt.as_slice().to_vec(), 4, 3);
        let m = compute_metrics(&pred, &gt, None, None, "all").unwrap();
        assert_eq!(
            (m.abs_rel, m.sq_rel, m.abs_diff, m.rmse, m.rmse_log),
            (0.0, 0.0, 0.0, 0.0, 0.0)
        );
        assert_eq!((m.delta_1, m.delta_2, m.delta_3), (100.0, 100.0, 100.0));
        assert_eq!(m.nll, 0.0);
        assert_eq!(m.pixel_count, 12);
    }

    #[test]
    fn uniform_scale_errors() {
        let gt = Grid::from_fn(3, 3, |x, y| 2.0 + x as f64 + y as f64);
        let pred = map_from(gt.as_slice().iter().map(|g| 1.2 * g).collect(), 3, 3);
        let m = compute_metrics(&pred, &gt, None, None, "all").unwrap();
        assert!((m.abs_rel - 0.2).abs() < 1e-12);
        assert_eq!(m.delta_1, 100.0);

        let pred = map_from(gt.as_slice().iter().map(|g| 2.0 * g).collect(), 3, 3);
        let m = compute_metrics(&pred, &gt, None, None, "all").unwrap();
        // 2 exceeds 1.25^3 = 1.953125.
        assert_eq!((m.delta_1, m.delta_2, m.delta_3), (0.0, 0.0, 0.0));
    }

    #[test]
    fn mask_and_cap() {
        let gt = Grid::from_vec(3, 1, vec![1.0, 5.0, 20.0]).unwrap();
        let pred = map_from(vec![1.5, 5.0, 10.0], 3, 1);
        let capped = compute_metrics(&pred, &gt, None, Some(10.0), "cap").unwrap();
        assert_eq!(capped.pixel_count, 2);
        assert!((capped.abs_diff - 0.25).abs() < 1e-15);
        let mask = Grid::from_vec(3, 1, vec![false, true, false]).unwrap();
        let m = compute_metrics(&pred, &gt, Some(&mask), None, "m").unwrap();
        assert_eq!((m.pixel_count, m.rmse), (1, 0.0));
    }

    #[test]
    fn bad_ground_truth() {
        let gt = Grid::from_vec(2, 1, vec![1.0, 0.0]).unwrap();
        let pred = map_from(vec![1.0, 1.0], 2, 1);
        assert!(matches!(
            compute_metrics(&pred, &gt, None, None, ""),
            Err(Error::Data(_))
        ));
        // Outside the mask the bad value is ignored.
        let mask = Grid::from_vec(2, 1, vec![true, false]).unwrap();
        assert!(compute_metrics(&pred, &gt, Some(&mask), None, "").is_ok());
        let empty = Grid::filled(2, 1, false);
        assert!(compute_metrics(&pred, &gt, Some(&empty), None, "").is_err());
    }

    #[test]
    fn nll_map_halving_sigma() {
        let gt = Grid::filled(3, 2, 2.0);
        let a = GaussianDepthMap::constant(3, 2, 2.0, 1.0).unwrap();
        let b = GaussianDepthMap::constant(3, 2, 2.0, 0.5).unwrap();
        let (na, map) = nll_map(&a, &gt, None).unwrap();
        let (nb, _) = nll_map(&b, &gt, None).unwrap();
        assert_eq!(na, 0.0);
        assert!(map.as_slice().iter().all(|&v| v == 0.0));
        assert!((na - nb - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn pairwise_sum_matches_naive() {
        let v: Vec<f64> = (0..1000).map(|i| (i as f64).sin()).collect();
        let naive: f64 = v.iter().sum();
        assert!((pairwise_sum(&v) - naive).abs() < 1e-12);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }
}
