//! Analytic test scenes: ray-cast ground truth, view-independent procedural
//! descriptors, noisy per-frame priors and corruption models.

mod prior;
mod render;
mod scene;
mod texture;
mod window;

pub use prior::{make_prior, PriorModel};
pub use render::{cast_pixel, render, render_depth, render_features, Hit, RenderOutput, Surface};
pub use scene::{Primitive, PrimitiveSpec, SceneSpec, ShapeSpec, SyntheticScene};
pub use texture::{Texture, TextureSpec, Wave, CHANNELS};
pub use window::{make_window, CameraSpec, CorruptionSpec, SyntheticWindow, TrajectorySpec};
