//! Ray casting of synthetic scenes: depth, descriptors and primitive labels.

use nalgebra::Vector3;
use rayon::prelude::*;

use super::scene::{Primitive, SyntheticScene};
use super::texture::CHANNELS;
use crate::error::Result;
use crate::geometry::{CameraIntrinsics, CameraPose};
use crate::grid::Grid;
use crate::matching::FeatureMap;

/// What a ray hit: a primitive index or the background plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Surface {
    Primitive(usize),
    Background,
}

#[derive(Debug, Clone, Copy)]
pub struct Hit {
    pub t: f64,
    pub point: Vector3<f64>,
    pub normal: Vector3<f64>,
    pub surface: Surface,
}

impl SyntheticScene {
    fn surface(&self, s: Surface) -> &Primitive {
        match s {
            Surface::Primitive(i) => &self.primitives[i],
            Surface::Background => &self.background,
        }
    }

    /// Nearest hit along `origin + t * dir`, skipping `exclude`.
    pub fn trace(&self, origin: &Vector3<f64>, dir: &Vector3<f64>, exclude: Option<usize>) -> Option<Hit> {
        let mut best: Option<Hit> = None;
        let candidates = self
            .primitives
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != exclude)
            .map(|(i, p)| (Surface::Primitive(i), p))
            .chain(std::iter::once((Surface::Background, &self.background)));
        for (surface, p) in candidates {
            if let Some((t, normal)) = p.intersect(origin, dir) {
                if best.is_none_or(|b| t < b.t) {
                    best = Some(Hit {
                        t,
                        point: origin + dir * t,
                        normal,
                        surface,
                    });
                }
            }
        }
        best
    }

    /// Raw descriptor of a surface at world point `p`.
    pub fn descriptor(&self, surface: Surface, p: &Vector3<f64>, out: &mut [f64]) {
        let prim = self.surface(surface);
        prim.texture.eval(&(p - prim.texture_origin), out);
    }

    /// Descriptor seen along a ray that hit `hit`, following one mirror bounce.
    fn shade(&self, hit: &Hit, dir: &Vector3<f64>, out: &mut [f64]) {
        if let Surface::Primitive(i) = hit.surface {
            if self.primitives[i].reflective {
                let n = hit.normal;
                let r = dir - n * (2.0 * dir.dot(&n));
                match self.trace(&hit.point, &r, Some(i)) {
                    Some(second) => self.descriptor(second.surface, &second.point, out),
                    // Nothing behind the mirror: use the background texture at
                    // a virtual point one background depth along the bounce.
                    None => self.descriptor(
                        Surface::Background,
                        &(hit.point + r.normalize() * self.background_depth),
                        out,
                    ),
                }
                return;
            }
        }
        self.descriptor(hit.surface, &hit.point, out);
    }
}

/// Depth, unit-norm descriptors and hit labels for one camera.
#[derive(Debug, Clone)]
pub struct RenderOutput {
    pub depth: Grid<f64>,
    pub features: FeatureMap,
    pub labels: Grid<Surface>,
}

/// Casts the ray through pixel `(u, v)`. `t` of the result is camera depth
/// because the ray is scaled to unit camera `z`.
pub fn cast_pixel(scene: &SyntheticScene, intrinsics: &CameraIntrinsics, pose: &CameraPose, u: f64, v: f64) -> Hit {
    let origin = pose.center();
    let dir = pose.inverse().transform_vector(&intrinsics.ray(u, v));
    scene.trace(&origin, &dir, None).unwrap_or_else(|| {
        // Camera looking away from the background plane: use a far plane in
        // the camera frame so every ray still terminates.
        let t = scene.background_depth;
        Hit {
            t,
            point: origin + dir * t,
            normal: -dir.normalize(),
            surface: Surface::Background,
        }
    })
}

/// Renders depth, features and labels in one pass over the pixels.
pub fn render(scene: &SyntheticScene, intrinsics: &CameraIntrinsics, pose: &CameraPose) -> Result<RenderOutput> {
    intrinsics.validate()?;
    let (w, h) = (intrinsics.width, intrinsics.height);
    let inv = pose.inverse();
    let rows: Vec<(Vec<f64>, Vec<f64>, Vec<Surface>)> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut depth = Vec::with_capacity(w);
            let mut feats = vec![0.0; w * CHANNELS];
            let mut labels = Vec::with_capacity(w);
            for x in 0..w {
                let hit = cast_pixel(scene, intrinsics, pose, x as f64, y as f64);
                let dir = inv.transform_vector(&intrinsics.ray(x as f64, y as f64));
                scene.shade(&hit, &dir, &mut feats[x * CHANNELS..(x + 1) * CHANNELS]);
                depth.push(hit.t);
                labels.push(hit.surface);
            }
            (depth, feats, labels)
        })
        .collect();
    let mut depth = Vec::with_capacity(w * h);
    let mut feats = Vec::with_capacity(w * h * CHANNELS);
    let mut labels = Vec::with_capacity(w * h);
    for (d, f, l) in rows {
        depth.extend(d);
        feats.extend(f);
        labels.extend(l);
    }
    Ok(RenderOutput {
        depth: Grid::from_vec(w, h, depth)?,
        features: FeatureMap::new(w, h, CHANNELS, feats)?,
        labels: Grid::from_vec(w, h, labels)?,
    })
}

pub fn render_depth(scene: &SyntheticScene, intrinsics: &CameraIntrinsics, pose: &CameraPose) -> Result<Grid<f64>> {
    Ok(render(scene, intrinsics, pose)?.depth)
}

pub fn render_features(scene: &SyntheticScene, intrinsics: &CameraIntrinsics, pose: &CameraPose) -> Result<FeatureMap> {
    Ok(render(scene, intrinsics, pose)?.features)
}
