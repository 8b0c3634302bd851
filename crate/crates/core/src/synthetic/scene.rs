use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::texture::{Texture, TextureSpec};
use crate::error::{Error, Result};

const HIT_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ShapeSpec {
    /// Plane through `point` with unit `normal`. With `half_extent` it is a
    /// rectangle of half sizes `[a, b]` along in-plane axes derived from `up`.
    Plane {
        point: [f64; 3],
        normal: [f64; 3],
        #[serde(default)]
        half_extent: Option<[f64; 2]>,
        #[serde(default)]
        up: Option<[f64; 3]>,
    },
    Sphere {
        center: [f64; 3],
        radius: f64,
    },
    /// Axis-aligned box.
    Box {
        center: [f64; 3],
        half_extents: [f64; 3],
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrimitiveSpec {
    pub shape: ShapeSpec,
    pub texture: TextureSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    /// World-space depth of the background plane `z = background_depth`.
    pub background_depth: f64,
    pub background_texture: TextureSpec,
    #[serde(default)]
    pub primitives: Vec<PrimitiveSpec>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum Shape {
    Plane {
        point: Vector3<f64>,
        normal: Vector3<f64>,
        axes: Option<(Vector3<f64>, Vector3<f64>, f64, f64)>,
    },
    Sphere {
        center: Vector3<f64>,
        radius: f64,
    },
    Box {
        center: Vector3<f64>,
        half: Vector3<f64>,
    },
}

#[derive(Debug, Clone)]
pub struct Primitive {
    pub(crate) shape: Shape,
    pub(crate) texture: Texture,
    /// Texture coordinates are `point - texture_origin`; moving a primitive
    /// moves its texture with it.
    pub(crate) texture_origin: Vector3<f64>,
    /// Mirror: the descriptor comes from the reflected ray's hit.
    pub(crate) reflective: bool,
}

fn vec3(a: [f64; 3]) -> Vector3<f64> {
    Vector3::new(a[0], a[1], a[2])
}

impl Primitive {
    pub fn build(spec: &PrimitiveSpec, index: usize) -> Result<Self> {
        let field = |f: &str| format!("scene.primitives[{index}].{f}");
        let shape = match spec.shape {
            ShapeSpec::Plane {
                point,
                normal,
                half_extent,
                up,
            } => {
                let n = vec3(normal);
                if !(n.norm() > 0.0) {
                    return Err(Error::config(field("normal"), "must be non-zero"));
                }
                let n = n.normalize();
                let axes = match half_extent {
                    None => None,
                    Some([a, b]) => {
                        if !(a > 0.0 && b > 0.0) {
                            return Err(Error::config(field("half_extent"), "must be positive"));
                        }
                        let up = up
                            .map(vec3)
                            .unwrap_or_else(|| if n.y.abs() < 0.9 { Vector3::y() } else { Vector3::z() });
                        let u = up.cross(&n);
                        if !(u.norm() > 1e-9) {
                            return Err(Error::config(field("up"), "must not be parallel to the normal"));
                        }
                        let u = u.normalize();
                        Some((u, n.cross(&u), a, b))
                    }
                };
                Shape::Plane {
                    point: vec3(point),
                    normal: n,
                    axes,
                }
            }
            ShapeSpec::Sphere { center, radius } => {
                if !(radius > 0.0) {
                    return Err(Error::config(field("radius"), "must be positive"));
                }
                Shape::Sphere {
                    center: vec3(center),
                    radius,
                }
            }
            ShapeSpec::Box { center, half_extents } => {
                if half_extents.iter().any(|h| !(*h > 0.0)) {
                    return Err(Error::config(field("half_extents"), "must be positive"));
                }
                Shape::Box {
                    center: vec3(center),
                    half: vec3(half_extents),
                }
            }
        };
        Ok(Primitive {
            shape,
            texture: Texture::build(&spec.texture)?,
            texture_origin: Vector3::zeros(),
            reflective: false,
        })
    }

    pub fn translated(&self, delta: &Vector3<f64>) -> Primitive {
        let shape = match self.shape {
            Shape::Plane { point, normal, axes } => Shape::Plane {
                point: point + delta,
                normal,
                axes,
            },
            Shape::Sphere { center, radius } => Shape::Sphere {
                center: center + delta,
                radius,
            },
            Shape::Box { center, half } => Shape::Box {
                center: center + delta,
                half,
            },
        };
        Primitive {
            shape,
            texture: self.texture.clone(),
            texture_origin: self.texture_origin + delta,
            reflective: self.reflective,
        }
    }

    /// Nearest intersection with `t > eps` as `(t, outward normal)`.
    pub fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<(f64, Vector3<f64>)> {
        match self.shape {
            Shape::Plane { point, normal, axes } => {
                let denom = normal.dot(dir);
                if denom.abs() < 1e-15 {
                    return None;
                }
                let t = normal.dot(&(point - origin)) / denom;
                if !(t > HIT_EPS) {
                    return None;
                }
                if let Some((u, v, a, b)) = axes {
                    let rel = origin + dir * t - point;
                    if rel.dot(&u).abs() > a || rel.dot(&v).abs() > b {
                        return None;
                    }
                }
                let facing = if denom > 0.0 { -normal } else { normal };
                Some((t, facing))
            }
            Shape::Sphere { center, radius } => {
                let oc = origin - center;
                let a = dir.dot(dir);
                let half_b = oc.dot(dir);
                let c = oc.dot(&oc) - radius * radius;
                let disc = half_b * half_b - a * c;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                let t = [(-half_b - sq) / a, (-half_b + sq) / a]
                    .into_iter()
                    .find(|t| *t > HIT_EPS)?;
                Some((t, (origin + dir * t - center) / radius))
            }
            Shape::Box { center, half } => {
                let lo = center - half;
                let hi = center + half;
                let mut t_near = f64::NEG_INFINITY;
                let mut t_far = f64::INFINITY;
                let mut near_axis = 0;
                let mut far_axis = 0;
                for i in 0..3 {
                    if dir[i].abs() < 1e-15 {
                        if origin[i] < lo[i] || origin[i] > hi[i] {
                            return None;
                        }
                        continue;
                    }
                    let t1 = (lo[i] - origin[i]) / dir[i];
                    let t2 = (hi[i] - origin[i]) / dir[i];
                    let (a, b) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
                    if a > t_near {
                        t_near = a;
                        near_axis = i;
                    }
                    if b < t_far {
                        t_far = b;
                        far_axis = i;
                    }
                }
                if t_near > t_far {
                    return None;
                }
                let (t, axis) = if t_near > HIT_EPS {
                    (t_near, near_axis)
                } else if t_far > HIT_EPS {
                    (t_far, far_axis)
                } else {
                    return None;
                };
                let mut n = Vector3::zeros();
                n[axis] = if dir[axis] > 0.0 { -1.0 } else { 1.0 };
                Some((t, n))
            }
        }
    }

    /// Implicit-surface residual: zero for points on the primitive.
    pub fn surface_residual(&self, p: &Vector3<f64>) -> f64 {
        match self.shape {
            Shape::Plane { point, normal, .. } => normal.dot(&(p - point)),
            Shape::Sphere { center, radius } => (p - center).norm() - radius,
            Shape::Box { center, half } => {
                let d = (p - center).abs() - half;
                d.max()
            }
        }
    }
}

/// Built scene: primitives plus a textured background plane.
#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub(crate) primitives: Vec<Primitive>,
    pub(crate) background: Primitive,
    pub(crate) background_depth: f64,
}

impl SyntheticScene {
    pub fn build(spec: &SceneSpec) -> Result<Self> {
        if !(spec.background_depth > 0.0 && spec.background_depth.is_finite()) {
            return Err(Error::config("scene.background_depth", "must be positive and finite"));
        }
        let primitives = spec
            .primitives
            .iter()
            .enumerate()
            .map(|(i, p)| Primitive::build(p, i))
            .collect::<Result<Vec<_>>>()?;
        let background = Primitive {
            shape: Shape::Plane {
                point: Vector3::new(0.0, 0.0, spec.background_depth),
                normal: -Vector3::z(),
                axes: None,
            },
            texture: Texture::build(&spec.background_texture)?,
            texture_origin: Vector3::zeros(),
            reflective: false,
        };
        Ok(SyntheticScene {
            primitives,
            background,
            background_depth: spec.background_depth,
        })
    }

    pub fn primitives(&self) -> &[Primitive] {
        &self.primitives
    }

    pub fn background_depth(&self) -> f64 {
        self.background_depth
    }

    pub(crate) fn replace_texture(&mut self, index: usize, texture: Texture) -> Result<()> {
        let p = self
            .primitives
            .get_mut(index)
            .ok_or_else(|| Error::config("corruption.primitive", format!("no primitive {index}")))?;
        p.texture = texture;
        Ok(())
    }

    pub(crate) fn set_reflective(&mut self, index: usize) -> Result<()> {
        let p = self
            .primitives
            .get_mut(index)
            .ok_or_else(|| Error::config("corruption.primitive", format!("no primitive {index}")))?;
        p.reflective = true;
        Ok(())
    }

    pub(crate) fn translate_primitive(&mut self, index: usize, delta: &Vector3<f64>) -> Result<()> {
        let p = self
            .primitives
            .get_mut(index)
            .ok_or_else(|| Error::config("corruption.primitive", format!("no primitive {index}")))?;
        *p = p.translated(delta);
        Ok(())
    }
}
