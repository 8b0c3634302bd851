//! Pinhole cameras, rigid poses and the candidate projection pipeline.
//!
//! Conventions used throughout the crate:
//!
//! * A [`CameraPose`] maps world coordinates into camera coordinates,
//!   `X_c = R * X_w + t`. Use [`CameraPose::inverse`] for camera-to-world.
//! * Pixel centres sit on integer coordinates; pixel `(0, 0)` covers
//!   `[-0.5, 0.5]^2`.
//! * Depth is the camera-frame `z` coordinate, not the ray length.

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ORTHONORMAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let k = CameraIntrinsics {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fx.is_finite()) {
            return Err(Error::config("fx", "focal length must be positive"));
        }
        if !(self.fy > 0.0 && self.fy.is_finite()) {
            return Err(Error::config("fy", "focal length must be positive"));
        }
        if !self.cx.is_finite() || !self.cy.is_finite() {
            return Err(Error::config("cx/cy", "principal point must be finite"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::config("width/height", "image must be at least 1x1"));
        }
        Ok(())
    }

    /// Scale every parameter, including the image size, by `factor`.
    ///
    /// Image dimensions are rounded to the nearest integer. `scaled(0.25)`
    /// is the full-resolution to matching-grid conversion.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0) {
            return Err(Error::domain("intrinsics scale factor must be positive"));
        }
        CameraIntrinsics::new(
            self.fx * factor,
            self.fy * factor,
            self.cx * factor,
            self.cy * factor,
            ((self.width as f64) * factor).round() as usize,
            ((self.height as f64) * factor).round() as usize,
        )
    }

    /// Unit-depth ray direction through pixel `(u, v)`: `((u-cx)/fx, (v-cy)/fy, 1)`.
    #[inline]
    pub fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    #[inline]
    pub fn contains(&self, u: f64, v: f64) -> bool {
        let tol = crate::grid::BORDER_TOLERANCE;
        u >= -tol && v >= -tol && u <= (self.width - 1) as f64 + tol && v <= (self.height - 1) as f64 + tol
    }
}

/// World-to-camera rigid transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Default for CameraPose {
    fn default() -> Self {
        Self::identity()
    }
}

impl CameraPose {
    pub fn identity() -> Self {
        CameraPose {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a pose, rejecting rotations that are not orthonormal with
    /// determinant +1 (tolerance 1e-9).
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let gram_err = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        if !(gram_err <= ORTHONORMAL_TOL) {
            return Err(Error::domain(format!(
                "rotation is not orthonormal (|R^T R - I| = {gram_err:e})"
            )));
        }
        let det = rotation.determinant();
        if !((det - 1.0).abs() <= ORTHONORMAL_TOL) {
            return Err(Error::domain(format!("rotation determinant is {det}, expected +1")));
        }
        if !translation.iter().all(|t| t.is_finite()) {
            return Err(Error::domain("translation must be finite"));
        }
        Ok(CameraPose { rotation, translation })
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        CameraPose {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// Rotation of `angle` radians about `axis`, followed by `translation`.
    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64, translation: Vector3<f64>) -> Self {
        let rotation = if axis.norm() > 0.0 {
            *Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle).matrix()
        } else {
            Matrix3::identity()
        };
        CameraPose { rotation, translation }
    }

    /// Pose of a camera at world position `center` with the given
    /// camera-to-world rotation (columns are the camera axes in world frame).
    pub fn from_center(camera_to_world: Matrix3<f64>, center: Vector3<f64>) -> Result<Self> {
        let r = camera_to_world.transpose();
        CameraPose::new(r, -(r * center))
    }

    /// Parses 12 numbers: row-major 3x3 rotation followed by translation.
    pub fn from_row_major(values: &[f64]) -> Result<Self> {
        if values.len() != 12 {
            return Err(Error::Data(format!("pose needs 12 numbers, got {}", values.len())));
        }
        let r = Matrix3::from_row_slice(&values[..9]);
        CameraPose::new(r, Vector3::new(values[9], values[10], values[11]))
    }

    pub fn to_row_major(&self) -> [f64; 12] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
            t.x,
            t.y,
            t.z,
        ]
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn inverse(&self) -> CameraPose {
        let rt = self.rotation.transpose();
        CameraPose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &CameraPose) -> CameraPose {
        CameraPose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    #[inline]
    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    #[inline]
    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    /// Camera centre in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelProjection {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
    pub in_frustum: bool,
}

/// Lifts pixel `(u, v)` at depth `d` into camera coordinates.
pub fn back_project(u: f64, v: f64, d: f64, intrinsics: &CameraIntrinsics) -> Result<Vector3<f64>> {
    if !(d > 0.0) {
        return Err(Error::domain(format!(
            "back-projection depth must be positive, got {d}"
        )));
    }
    Ok(intrinsics.ray(u, v) * d)
}

/// Projects a camera-frame point through the intrinsics.
#[inline]
pub fn project_camera_point(p: &Vector3<f64>, intrinsics: &CameraIntrinsics) -> PixelProjection {
    let depth = p.z;
    let u = intrinsics.fx * p.x / depth + intrinsics.cx;
    let v = intrinsics.fy * p.y / depth + intrinsics.cy;
    let in_frustum = depth > 0.0 && intrinsics.contains(u, v);
    PixelProjection {
        u,
        v,
        depth,
        in_frustum,
    }
}

pub fn project_to_view(
    point_world: &Vector3<f64>,
    pose: &CameraPose,
    intrinsics: &CameraIntrinsics,
) -> PixelProjection {
    project_camera_point(&pose.transform_point(point_world), intrinsics)
}

/// Relative transform taking reference-camera coordinates into neighbour-camera coordinates.
pub fn relative_pose(ref_pose: &CameraPose, nbr_pose: &CameraPose) -> CameraPose {
    nbr_pose.compose(&ref_pose.inverse())
}

/// Back-projects `(u, v, d)` from the reference camera and projects the
/// resulting world point into the neighbour camera.
pub fn roundtrip_candidate(
    u: f64,
    v: f64,
    d: f64,
    ref_pose: &CameraPose,
    ref_intrinsics: &CameraIntrinsics,
    nbr_pose: &CameraPose,
    nbr_intrinsics: &CameraIntrinsics,
) -> Result<PixelProjection> {
    let x_cam = back_project(u, v, d, ref_intrinsics)?;
    let x_world = ref_pose.inverse().transform_point(&x_cam);
    Ok(project_to_view(&x_world, nbr_pose, nbr_intrinsics))
}

/// Bilinear lookup in a scalar grid; see [`crate::grid::bilinear_taps`].
pub fn bilinear_sample(grid: &crate::grid::Grid<f64>, u: f64, v: f64) -> Result<f64> {
    grid.sample_bilinear(u, v)
}
