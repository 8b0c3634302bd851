use std::f64::consts::TAU;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Descriptor length produced by every texture.
pub const CHANNELS: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TextureSpec {
    /// Bank of `CHANNELS` plane waves with random directions and phases and
    /// log-uniform wavelengths in `[min_wavelength, max_wavelength]` (meters).
    Sinusoid {
        seed: u64,
        #[serde(default = "default_min_wavelength")]
        min_wavelength: f64,
        #[serde(default = "default_max_wavelength")]
        max_wavelength: f64,
    },
    /// Same descriptor everywhere.
    Constant,
}

fn default_min_wavelength() -> f64 {
    0.08
}

fn default_max_wavelength() -> f64 {
    0.6
}

impl TextureSpec {
    pub fn sinusoid(seed: u64) -> Self {
        TextureSpec::Sinusoid {
            seed,
            min_wavelength: default_min_wavelength(),
            max_wavelength: default_max_wavelength(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Wave {
    k: Vector3<f64>,
    phase: f64,
}

/// Solid texture evaluated in primitive-local coordinates.
#[derive(Debug, Clone)]
pub enum Texture {
    Waves(Vec<Wave>),
    Constant,
}

impl Texture {
    pub fn build(spec: &TextureSpec) -> Result<Self> {
        match *spec {
            TextureSpec::Constant => Ok(Texture::Constant),
            TextureSpec::Sinusoid {
                seed,
                min_wavelength,
                max_wavelength,
            } => {
                if !(min_wavelength > 0.0 && max_wavelength >= min_wavelength && max_wavelength.is_finite()) {
                    return Err(Error::config(
                        "texture.min_wavelength/max_wavelength",
                        "need 0 < min_wavelength <= max_wavelength",
                    ));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let (lo, hi) = (min_wavelength.ln(), max_wavelength.ln());
                let waves = (0..CHANNELS)
                    .map(|_| {
                        let wavelength = (lo + (hi - lo) * rng.random::<f64>()).exp();
                        let z: f64 = rng.random_range(-1.0..1.0);
                        let theta: f64 = rng.random_range(0.0..TAU);
                        let r = (1.0 - z * z).sqrt();
                        let dir = Vector3::new(r * theta.cos(), r * theta.sin(), z);
                        Wave {
                            k: dir * (TAU / wavelength),
                            phase: rng.random_range(0.0..TAU),
                        }
                    })
                    .collect();
                Ok(Texture::Waves(waves))
            }
        }
    }

    /// Raw (unnormalised) descriptor at a local point.
    pub fn eval(&self, p: &Vector3<f64>, out: &mut [f64]) {
        match self {
            Texture::Constant => out.iter_mut().for_each(|o| *o = 1.0),
            Texture::Waves(waves) => {
                for (o, w) in out.iter_mut().zip(waves) {
                    *o = (w.k.dot(p) + w.phase).sin();
                }
            }
        }
    }
}
