//! Consistency-weighted multi-view matching.
//!
//! For each reference pixel and depth candidate the 3-D point is projected
//! into every neighbour view. The neighbour feature is bilinearly sampled
//! and dotted with the reference feature. When weighting is enabled a view
//! only contributes if the projected depth falls inside the `kappa`-sigma
//! interval of that view's own prior, sampled at the same location.

use std::io::{Read, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{
    back_project, project_camera_point, relative_pose, CameraIntrinsics, CameraPose, PixelProjection,
};
use crate::grid::bilinear_taps;
use crate::probability::{within_kappa_sigma, DepthCandidateGrid, GaussianDepthMap};

/// Per-pixel unit-length descriptors, stored `[y][x][c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    /// L2-normalises every descriptor. Zero or non-finite descriptors are rejected.
    pub fn new(width: usize, height: usize, channels: usize, mut data: Vec<f64>) -> Result<Self> {
        if channels == 0 || data.len() != width * height * channels {
            return Err(Error::Data(format!(
                "feature data length {} does not match {width}x{height}x{channels}",
                data.len()
            )));
        }
        for f in data.chunks_mut(channels) {
            let norm = f.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !(norm > 0.0 && norm.is_finite()) {
                return Err(Error::Data("feature vector has zero or non-finite norm".into()));
            }
            f.iter_mut().for_each(|x| *x /= norm);
        }
        Ok(FeatureMap {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    /// Bilinearly interpolated descriptor written into `out` (not re-normalised).
    pub fn sample_into(&self, u: f64, v: f64, out: &mut [f64]) -> Result<()> {
        if out.len() != self.channels {
            return Err(Error::domain("output buffer has wrong channel count"));
        }
        let taps = bilinear_taps(u, v, self.width, self.height)?;
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, w) in taps {
            let f = &self.data[i * self.channels..(i + 1) * self.channels];
            for (o, x) in out.iter_mut().zip(f) {
                *o += w * x;
            }
        }
        Ok(())
    }

    /// Dot product of `f_ref` with the interpolated descriptor, re-normalised
    /// to unit length. Interpolation between pixel centres shrinks the
    /// descriptor; without the rescaling, candidates landing on pixel nodes
    /// would be favoured over the true sub-pixel match.
    #[inline]
    fn dot_bilinear(&self, f_ref: &[f64], taps: &[(usize, f64); 4]) -> f64 {
        let mut acc = [0.0; MAX_INLINE_CHANNELS];
        let mut heap;
        let sample: &mut [f64] = if self.channels <= MAX_INLINE_CHANNELS {
            &mut acc[..self.channels]
        } else {
            heap = vec![0.0; self.channels];
            &mut heap
        };
        for &(i, w) in taps {
            if w == 0.0 {
                continue;
            }
            let f = &self.data[i * self.channels..(i + 1) * self.channels];
            for (s, x) in sample.iter_mut().zip(f) {
                *s += w * x;
            }
        }
        let norm = dot(sample, sample).sqrt();
        if norm > 0.0 {
            (dot(f_ref, sample) / norm).clamp(-1.0, 1.0)
        } else {
            0.0
        }
    }
}

const MAX_INLINE_CHANNELS: usize = 32;

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One image of the local window, at matching resolution.
#[derive(Debug, Clone)]
pub struct Frame {
    pub id: usize,
    pub intrinsics: CameraIntrinsics,
    pub pose: CameraPose,
    pub features: FeatureMap,
    pub prior: GaussianDepthMap,
}

impl Frame {
    pub fn new(
        id: usize,
        intrinsics: CameraIntrinsics,
        pose: CameraPose,
        features: FeatureMap,
        prior: GaussianDepthMap,
    ) -> Result<Self> {
        let (w, h) = (intrinsics.width, intrinsics.height);
        if features.width() != w || features.height() != h {
            return Err(Error::Data(format!(
                "frame {id}: features are {}x{} but camera is {w}x{h}",
                features.width(),
                features.height()
            )));
        }
        if prior.width() != w || prior.height() != h {
            return Err(Error::Data(format!(
                "frame {id}: prior is {}x{} but camera is {w}x{h}",
                prior.width(),
                prior.height()
            )));
        }
        Ok(Frame {
            id,
            intrinsics,
            pose,
            features,
            prior,
        })
    }
}

/// Ordered frames with a designated reference.
#[derive(Debug, Clone)]
pub struct Window {
    frames: Vec<Frame>,
    reference: usize,
}

impl Window {
    pub fn new(frames: Vec<Frame>, reference: usize) -> Result<Self> {
        if frames.len() < 2 {
            return Err(Error::config("window", "needs at least two frames"));
        }
        if reference >= frames.len() {
            return Err(Error::config(
                "reference",
                format!("index {reference} out of range for {} frames", frames.len()),
            ));
        }
        let channels = frames[0].features.channels();
        if frames.iter().any(|f| f.features.channels() != channels) {
            return Err(Error::Data("frames disagree on feature channel count".into()));
        }
        Ok(Window { frames, reference })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn reference_index(&self) -> usize {
        self.reference
    }

    pub fn reference(&self) -> &Frame {
        &self.frames[self.reference]
    }

    pub fn neighbours(&self) -> impl Iterator<Item = &Frame> {
        let r = self.reference;
        self.frames
            .iter()
            .enumerate()
            .filter(move |(i, _)| *i != r)
            .map(|(_, f)| f)
    }

    /// Same window with every pose right-multiplied by `g.inverse()`,
    /// i.e. the world frame moved by the rigid transform `g`.
    pub fn regauged(&self, g: &CameraPose) -> Window {
        let g_inv = g.inverse();
        let frames = self
            .frames
            .iter()
            .map(|f| Frame {
                pose: f.pose.compose(&g_inv),
                ..f.clone()
            })
            .collect();
        Window {
            frames,
            reference: self.reference,
        }
    }
}

/// Normalised matching scores and contributing-view counts, `[y][x][k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostVolume {
    width: usize,
    height: usize,
    n_samples: usize,
    scores: Vec<f64>,
    view_counts: Vec<u16>,
}

/// Aggregate statistics of a cost volume, recorded per iteration.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CostSummary {
    /// Mean score over observed (count > 0) cells.
    pub mean_score: f64,
    /// Fraction of cells with at least one contributing view.
    pub observed_fraction: f64,
    /// Fraction of pixels where no candidate was observed.
    pub unobserved_pixel_fraction: f64,
}

impl CostVolume {
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
    pub fn scores(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.width + x) * self.n_samples;
        &self.scores[i..i + self.n_samples]
    }

    #[inline]
    pub fn view_counts(&self, x: usize, y: usize) -> &[u16] {
        let i = (y * self.width + x) * self.n_samples;
        &self.view_counts[i..i + self.n_samples]
    }

    pub fn summary(&self) -> CostSummary {
        let cells = self.scores.len();
        let mut observed = 0usize;
        let mut sum = 0.0;
        for (s, c) in self.scores.iter().zip(&self.view_counts) {
            if *c > 0 {
                observed += 1;
                sum += s;
            }
        }
        let unobserved_pixels = self
            .view_counts
            .chunks(self.n_samples)
            .filter(|px| px.iter().all(|&c| c == 0))
            .count();
        CostSummary {
            mean_score: if observed > 0 { sum / observed as f64 } else { 0.0 },
            observed_fraction: observed as f64 / cells.max(1) as f64,
            unobserved_pixel_fraction: unobserved_pixels as f64 / (self.width * self.height).max(1) as f64,
        }
    }

    /// Binary dump: `u32` width, height, N_s (little-endian), then scores as
    /// `f32` and view counts as `u16`, both `[y][x][k]`.
    pub fn write_dump(&self, mut w: impl Write) -> Result<()> {
        for dim in [self.width, self.height, self.n_samples] {
            let dim = u32::try_from(dim).map_err(|_| Error::Format("dimension exceeds u32".into()))?;
            w.write_all(&dim.to_le_bytes())?;
        }
        for s in &self.scores {
            w.write_all(&(*s as f32).to_le_bytes())?;
        }
        for c in &self.view_counts {
            w.write_all(&c.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads a dump written by [`CostVolume::write_dump`]; scores come back at `f32` precision.
    pub fn read_dump(mut r: impl Read) -> Result<Self> {
        let mut word = [0u8; 4];
        let mut dims = [0usize; 3];
        for d in &mut dims {
            r.read_exact(&mut word)?;
            *d = u32::from_le_bytes(word) as usize;
        }
        let [width, height, n_samples] = dims;
        let cells = width
            .checked_mul(height)
            .and_then(|c| c.checked_mul(n_samples))
            .ok_or_else(|| Error::Format("cost volume dimensions overflow".into()))?;
        let mut buf = vec![0u8; cells * 4];
        r.read_exact(&mut buf)?;
        let scores = buf
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        let mut buf = vec![0u8; cells * 2];
        r.read_exact(&mut buf)?;
        let view_counts = buf.chunks_exact(2).map(|b| u16::from_le_bytes([b[0], b[1]])).collect();
        Ok(CostVolume {
            width,
            height,
            n_samples,
            scores,
            view_counts,
        })
    }
}

/// Dot product of two descriptors.
pub fn match_score(f_ref: &[f64], f_nbr: &[f64]) -> Result<f64> {
    if f_ref.len() != f_nbr.len() {
        return Err(Error::domain(format!(
            "channel mismatch: {} vs {}",
            f_ref.len(),
            f_nbr.len()
        )));
    }
    Ok(dot(f_ref, f_nbr))
}

/// Binary depth-consistency weight of a projected candidate.
///
/// Returns 1 when the projected depth lies strictly inside the
/// `kappa`-sigma interval of the neighbour prior interpolated at the
/// projected pixel, 0 otherwise.
pub fn consistency_weight(projection: &PixelProjection, nbr_prior: &GaussianDepthMap, kappa: f64) -> Result<f64> {
    if !projection.in_frustum {
        return Err(Error::domain(
            "consistency weight requested for an out-of-frustum projection",
        ));
    }
    let (mu, sigma) = nbr_prior.sample_bilinear(projection.u, projection.v)?;
    Ok(if within_kappa_sigma(projection.depth, mu, sigma, kappa) {
        1.0
    } else {
        0.0
    })
}

/// Builds the thin cost volume for the reference frame of `window`.
///
/// Pixels are processed in parallel; each output cell is written once and
/// views are accumulated in window order, so results do not depend on the
/// thread count.
pub fn build_cost_volume(
    window: &Window,
    candidates: &DepthCandidateGrid,
    kappa: f64,
    weighting_enabled: bool,
) -> Result<CostVolume> {
    let reference = window.reference();
    let k_ref = reference.intrinsics;
    let (w, h, n) = (k_ref.width, k_ref.height, candidates.n_samples());
    if candidates.width() != w || candidates.height() != h {
        return Err(Error::Data(format!(
            "candidate grid is {}x{} but reference frame is {w}x{h}",
            candidates.width(),
            candidates.height()
        )));
    }
    if weighting_enabled && !(kappa > 0.0) {
        return Err(Error::config("kappa", "must be positive"));
    }
    let views: Vec<(&Frame, CameraPose)> = window
        .neighbours()
        .map(|f| (f, relative_pose(&reference.pose, &f.pose)))
        .collect();
    if views.len() > u16::MAX as usize {
        return Err(Error::config("window", "too many frames"));
    }

    let mut scores = vec![0.0; w * h * n];
    let mut view_counts = vec![0u16; w * h * n];
    scores
        .par_chunks_mut(w * n)
        .zip(view_counts.par_chunks_mut(w * n))
        .enumerate()
        .for_each(|(y, (score_row, count_row))| {
            for x in 0..w {
                let f_ref = reference.features.at(x, y);
                let cands = candidates.pixel(x, y);
                for (k, &d) in cands.iter().enumerate() {
                    let x_ref = back_project(x as f64, y as f64, d, &k_ref).expect("candidate depths are positive");
                    let mut sum = 0.0;
                    let mut count = 0u16;
                    for (frame, rel) in &views {
                        let proj = project_camera_point(&rel.transform_point(&x_ref), &frame.intrinsics);
                        if !proj.in_frustum {
                            continue;
                        }
                        if weighting_enabled {
                            let weight =
                                consistency_weight(&proj, &frame.prior, kappa).expect("projection is in frustum");
                            if weight == 0.0 {
                                continue;
                            }
                        }
                        let taps = bilinear_taps(proj.u, proj.v, frame.intrinsics.width, frame.intrinsics.height)
                            .expect("projection is in frustum");
                        sum += frame.features.dot_bilinear(f_ref, &taps);
                        count += 1;
                    }
                    let cell = x * n + k;
                    score_row[cell] = if count > 0 { sum / count as f64 } else { 0.0 };
                    count_row[cell] = count;
                }
            }
        });

    Ok(CostVolume {
        width: w,
        height: h,
        n_samples: n,
        scores,
        view_counts,
    })
}

/// The same `n_samples` depths, evenly spaced on `[d_min, d_max]`, at every pixel.
pub fn uniform_candidates(
    d_min: f64,
    d_max: f64,
    n_samples: usize,
    width: usize,
    height: usize,
) -> Result<DepthCandidateGrid> {
    if !(d_min > 0.0) {
        return Err(Error::config("d_min", "must be positive"));
    }
    if !(d_max > d_min && d_max.is_finite()) {
        return Err(Error::config("d_max", "must be finite and greater than d_min"));
    }
    if n_samples == 0 {
        return Err(Error::config("n_samples", "must be at least 1"));
    }
    let ladder: Vec<f64> = if n_samples == 1 {
        vec![0.5 * (d_min + d_max)]
    } else {
        let step = (d_max - d_min) / (n_samples - 1) as f64;
        (0..n_samples)
            .map(|k| {
                if k == n_samples - 1 {
                    d_max
                } else {
                    d_min + k as f64 * step
                }
            })
            .collect()
    };
    let mut depths = Vec::with_capacity(width * height * n_samples);
    for _ in 0..width * height {
        depths.extend_from_slice(&ladder);
    }
    DepthCandidateGrid::from_depths(width, height, n_samples, depths)
}
