//! Built-in scenes: the clean standard suite and the three corruption scenes.

use super::config::{Arm, ExperimentConfig};
use crate::fusion::FusionConfig;
use crate::synthetic::{
    CameraSpec, CorruptionSpec, PrimitiveSpec, PriorModel, SceneSpec, ShapeSpec, TextureSpec, TrajectorySpec,
};

pub const STANDARD_SEED: u64 = 7;

fn base(name: &str, scene: SceneSpec) -> ExperimentConfig {
    ExperimentConfig {
        name: name.to_string(),
        scene,
        camera: CameraSpec::default(),
        trajectory: TrajectorySpec::standard(),
        prior: PriorModel {
            mu_noise: 0.1,
            sigma_a: 0.0,
            sigma_b: 0.15,
            ..PriorModel::default()
        },
        corruption: None,
        fusion: FusionConfig::default(),
        output_dir: format!("out/{name}").into(),
        seed: STANDARD_SEED,
        arm: Arm::PsCw,
        depth_cap: None,
        png: false,
    }
}

fn plane(point: [f64; 3], normal: [f64; 3], half_extent: Option<[f64; 2]>, seed: u64) -> PrimitiveSpec {
    PrimitiveSpec {
        shape: ShapeSpec::Plane {
            point,
            normal,
            half_extent,
            up: None,
        },
        texture: TextureSpec::sinusoid(seed),
    }
}

/// Textured fronto-parallel wall at 2.5 m.
pub fn fronto_plane() -> ExperimentConfig {
    base(
        "fronto_plane",
        SceneSpec {
            background_depth: 2.5,
            background_texture: TextureSpec::sinusoid(11),
            primitives: vec![],
        },
    )
}

/// Plane tilted about the x and y axes, 3 m deep at the image centre.
pub fn tilted_plane() -> ExperimentConfig {
    base(
        "tilted_plane",
        SceneSpec {
            background_depth: 8.0,
            background_texture: TextureSpec::sinusoid(12),
            primitives: vec![plane([0.0, 0.0, 3.0], [0.35, -0.25, -1.0], None, 13)],
        },
    )
}

/// Sphere and box in front of a wall at 4 m.
pub fn objects() -> ExperimentConfig {
    base(
        "objects",
        SceneSpec {
            background_depth: 4.0,
            background_texture: TextureSpec::sinusoid(14),
            primitives: vec![
                PrimitiveSpec {
                    shape: ShapeSpec::Sphere {
                        center: [-0.45, 0.05, 2.6],
                        radius: 0.45,
                    },
                    texture: TextureSpec::sinusoid(15),
                },
                PrimitiveSpec {
                    shape: ShapeSpec::Box {
                        center: [0.55, -0.1, 3.0],
                        half_extents: [0.35, 0.3, 0.3],
                    },
                    texture: TextureSpec::sinusoid(16),
                },
            ],
        },
    )
}

pub fn standard_suite() -> Vec<ExperimentConfig> {
    vec![fronto_plane(), tilted_plane(), objects()]
}

/// Mirror floor below the cameras reflecting the wall at 4 m.
pub fn reflective_floor() -> ExperimentConfig {
    let mut c = base(
        "reflective_floor",
        SceneSpec {
            background_depth: 4.0,
            background_texture: TextureSpec::sinusoid(21),
            primitives: vec![plane([0.0, 0.6, 0.0], [0.0, -1.0, 0.0], None, 22)],
        },
    );
    c.corruption = Some(CorruptionSpec::Reflective { primitive: 0 });
    c
}

/// Untextured panel at 2 m in front of a textured wall at 4 m.
pub fn texture_less_panel() -> ExperimentConfig {
    let mut c = base(
        "texture_less_panel",
        SceneSpec {
            background_depth: 4.0,
            background_texture: TextureSpec::sinusoid(31),
            primitives: vec![plane([0.0, 0.0, 2.0], [0.0, 0.0, -1.0], Some([0.5, 0.35]), 32)],
        },
    );
    c.corruption = Some(CorruptionSpec::TextureLess { primitive: 0 });
    c
}

/// Box moving along the baseline at half the camera speed.
pub fn moving_box() -> ExperimentConfig {
    let mut c = base(
        "moving_box",
        SceneSpec {
            background_depth: 4.0,
            background_texture: TextureSpec::sinusoid(41),
            primitives: vec![PrimitiveSpec {
                shape: ShapeSpec::Box {
                    center: [0.0, 0.0, 2.5],
                    half_extents: [0.4, 0.35, 0.2],
                },
                texture: TextureSpec::sinusoid(42),
            }],
        },
    );
    c.corruption = Some(CorruptionSpec::MovingObject {
        primitive: 0,
        motion: [0.05, 0.0, 0.0],
    });
    c
}

pub fn corruption_suite() -> Vec<ExperimentConfig> {
    vec![reflective_floor(), texture_less_panel(), moving_box()]
}
