use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::prior::{make_prior, PriorModel};
use super::render::{render, Surface};
use super::scene::{SceneSpec, SyntheticScene};
use super::texture::Texture;
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, CameraPose};
use crate::grid::{Grid, Mask};
use crate::matching::{Frame, Window};

/// Full-resolution camera plus the factor down to the matching grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraSpec {
    pub intrinsics: CameraIntrinsics,
    #[serde(default = "default_downscale")]
    pub downscale: f64,
}

fn default_downscale() -> f64 {
    4.0
}

impl Default for CameraSpec {
    /// 640x480 with a 520 px focal length, matched at 160x120.
    fn default() -> Self {
        CameraSpec {
            intrinsics: CameraIntrinsics {
                fx: 520.0,
                fy: 520.0,
                cx: 320.0,
                cy: 240.0,
                width: 640,
                height: 480,
            },
            downscale: default_downscale(),
        }
    }
}

impl CameraSpec {
    pub fn matching_intrinsics(&self) -> Result<CameraIntrinsics> {
        if !(self.downscale >= 1.0 && self.downscale.is_finite()) {
            return Err(Error::config("camera.downscale", "must be >= 1"));
        }
        self.intrinsics.validate().map_err(|e| match e {
            Error::Config { field, message } => Error::config(format!("camera.intrinsics.{field}"), message),
            other => other,
        })?;
        self.intrinsics.scaled(1.0 / self.downscale)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrajectorySpec {
    /// `count` cameras with identity orientation, centres spaced `spacing`
    /// meters apart along `direction`, the reference at the origin.
    Lateral {
        count: usize,
        spacing: f64,
        reference: usize,
        #[serde(default = "default_direction")]
        direction: [f64; 3],
    },
    /// World-to-camera poses as row-major `[R | t]` (12 numbers each).
    Explicit { poses: Vec<Vec<f64>>, reference: usize },
}

fn default_direction() -> [f64; 3] {
    [1.0, 0.0, 0.0]
}

impl TrajectorySpec {
    /// Standard window: five views, 0.1 m apart, the middle one as reference.
    pub fn standard() -> Self {
        TrajectorySpec::Lateral {
            count: 5,
            spacing: 0.1,
            reference: 2,
            direction: default_direction(),
        }
    }

    pub fn poses(&self) -> Result<(Vec<CameraPose>, usize)> {
        let (poses, reference) = match self {
            TrajectorySpec::Lateral {
                count,
                spacing,
                reference,
                direction,
            } => {
                let dir = Vector3::from(*direction);
                if !(dir.norm() > 0.0) {
                    return Err(Error::config("trajectory.direction", "must be non-zero"));
                }
                if !(spacing.is_finite() && *spacing != 0.0) {
                    return Err(Error::config("trajectory.spacing", "must be finite and non-zero"));
                }
                let dir = dir.normalize();
                let poses = (0..*count)
                    .map(|i| {
                        let c = dir * ((i as f64 - *reference as f64) * spacing);
                        CameraPose::from_translation(-c)
                    })
                    .collect();
                (poses, *reference)
            }
            TrajectorySpec::Explicit { poses, reference } => {
                let poses = poses
                    .iter()
                    .enumerate()
                    .map(|(i, p)| {
                        CameraPose::from_row_major(p)
                            .map_err(|e| Error::config(format!("trajectory.poses[{i}]"), e.to_string()))
                    })
                    .collect::<Result<Vec<_>>>()?;
                (poses, *reference)
            }
        };
        if poses.len() < 2 {
            return Err(Error::config("trajectory", "need at least two poses"));
        }
        if reference >= poses.len() {
            return Err(Error::config(
                "trajectory.reference",
                format!("index {reference} out of range for {} poses", poses.len()),
            ));
        }
        Ok((poses, reference))
    }
}

/// Scene corruption applied consistently to every frame. The region is the
/// set of reference pixels whose nearest hit is `primitive`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CorruptionSpec {
    /// Constant descriptor over the primitive.
    TextureLess { primitive: usize },
    /// The primitive becomes a mirror.
    Reflective { primitive: usize },
    /// The primitive moves by `(i - reference) * motion` in frame `i`.
    MovingObject { primitive: usize, motion: [f64; 3] },
}

impl CorruptionSpec {
    pub fn primitive(&self) -> usize {
        match *self {
            CorruptionSpec::TextureLess { primitive }
            | CorruptionSpec::Reflective { primitive }
            | CorruptionSpec::MovingObject { primitive, .. } => primitive,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            CorruptionSpec::TextureLess { .. } => "texture_less",
            CorruptionSpec::Reflective { .. } => "reflective",
            CorruptionSpec::MovingObject { .. } => "moving_object",
        }
    }
}

/// A rendered window with the reference frame's ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticWindow {
    pub window: Window,
    pub gt: Grid<f64>,
    /// Corrupted region of the reference image, if any.
    pub region: Option<Mask>,
}

pub fn make_window(
    scene: &SceneSpec,
    camera: &CameraSpec,
    trajectory: &TrajectorySpec,
    corruption: Option<&CorruptionSpec>,
    prior: &PriorModel,
) -> Result<SyntheticWindow> {
    let k = camera.matching_intrinsics()?;
    let (poses, reference) = trajectory.poses()?;
    prior.validate()?;
    let mut base = SyntheticScene::build(scene)?;
    if let Some(c) = corruption {
        let idx = c.primitive();
        match c {
            CorruptionSpec::TextureLess { .. } => base.replace_texture(idx, Texture::Constant)?,
            CorruptionSpec::Reflective { .. } => base.set_reflective(idx)?,
            CorruptionSpec::MovingObject { motion, .. } => {
                if motion.iter().any(|m| !m.is_finite()) {
                    return Err(Error::config("corruption.motion", "must be finite"));
                }
                if idx >= base.primitives().len() {
                    return Err(Error::config("corruption.primitive", format!("no primitive {idx}")));
                }
            }
        }
    }

    let mut frames = Vec::with_capacity(poses.len());
    let mut gt = None;
    let mut labels = None;
    for (i, pose) in poses.iter().enumerate() {
        let mut scene_i = base.clone();
        if let Some(CorruptionSpec::MovingObject { primitive, motion }) = corruption {
            let delta = Vector3::from(*motion) * (i as f64 - reference as f64);
            scene_i.translate_primitive(*primitive, &delta)?;
        }
        let out = render(&scene_i, &k, pose)?;
        let p = make_prior(&out.depth, prior, i as u64)?;
        if i == reference {
            gt = Some(out.depth.clone());
            labels = Some(out.labels.clone());
        }
        frames.push(Frame::new(i, k, *pose, out.features, p)?);
    }
    let gt = gt.expect("reference index validated");
    let labels = labels.expect("reference index validated");

    let region = match corruption {
        None => None,
        Some(c) => {
            let target = Surface::Primitive(c.primitive());
            let mask: Mask = labels.map(|l| *l == target);
            if mask.count() == 0 {
                return Err(Error::config(
                    "corruption.primitive",
                    format!("primitive {} is not visible in the reference view", c.primitive()),
                ));
            }
            Some(mask)
        }
    };
    Ok(SyntheticWindow {
        window: Window::new(frames, reference)?,
        gt,
        region,
    })
}
